"""OBJ mesh input, binary PGM quicklooks and ``.meta`` sidecars."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .geometry import TriangleMesh


class ObjError(ValueError):
    pass


class PgmError(ValueError):
    pass


def load_obj(path) -> TriangleMesh:
    """Read ``v`` and ``f`` records; polygons are fan-triangulated.

    Texture/normal indices (``f 1/2/3``) and every other record type are
    ignored. Negative indices count back from the latest vertex.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"OBJ file not found: {path}")
    verts, faces = [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "v":
                if len(tok) < 4:
                    raise ObjError(f"{path}:{lineno}: vertex needs three coordinates")
                try:
                    verts.append([float(t) for t in tok[1:4]])
                except ValueError:
                    raise ObjError(f"{path}:{lineno}: bad vertex coordinate") from None
            elif tok[0] == "f":
                idx = []
                for t in tok[1:]:
                    head = t.split("/", 1)[0]
                    try:
                        k = int(head)
                    except ValueError:
                        raise ObjError(f"{path}:{lineno}: bad face index {t!r}") from None
                    if k == 0:
                        raise ObjError(f"{path}:{lineno}: face index 0 is invalid")
                    k = k - 1 if k > 0 else len(verts) + k
                    if not 0 <= k < len(verts):
                        raise ObjError(f"{path}:{lineno}: face index {t} out of range")
                    idx.append(k)
                if len(idx) < 3:
                    raise ObjError(f"{path}:{lineno}: face with {len(idx)} vertices cannot be triangulated")
                for i in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[i], idx[i + 1]])
    if not faces:
        raise ObjError(f"{path}: no faces")
    return TriangleMesh(np.array(verts), np.array(faces))


def quantize(intensity) -> np.ndarray:
    """Log-compress to 8 bits: round(255 * log1p(I) / log1p(I_max))."""
    arr = np.asarray(intensity, dtype=float)
    top = float(arr.max()) if arr.size else 0.0
    if top <= 0:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.rint(255.0 * np.log1p(arr) / np.log1p(top)).astype(np.uint8)


def write_pgm(image, path) -> np.ndarray:
    """Write a binary P5 image; float grids are log-quantised first.

    Returns the 8-bit grid that was written.
    """
    grid = getattr(image, "intensity", image)
    grid = np.asarray(grid)
    if grid.dtype != np.uint8:
        grid = quantize(grid)
    if grid.ndim != 2:
        raise PgmError("PGM images must be 2-D")
    h, w = grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(grid).tobytes())
    return grid


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise PgmError(f"{path}: expected P5 magic, found {tokens[0][:8]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise PgmError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise PgmError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pos += 1  # single whitespace after maxval
    body = data[pos:]
    if len(body) < w * h:
        raise PgmError(f"{path}: truncated pixel data ({len(body)} of {w * h} bytes)")
    return np.frombuffer(body[:w * h], dtype=np.uint8).reshape(h, w).copy()


def meta_path(image_path) -> Path:
    return Path(os.fspath(image_path)).with_suffix(".meta")


def write_meta(path, alpha: float, beta: float, seed: int, **extra) -> None:
    lines = [f"alpha={alpha!r}", f"beta={beta!r}", f"seed={int(seed)}"]
    lines += [f"{k}={v}" for k, v in extra.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_meta(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    for k in ("alpha", "beta"):
        if k in out:
            out[k] = float(out[k])
    if "seed" in out:
        out["seed"] = int(out["seed"])
    return out


def save_image(image, path) -> np.ndarray:
    """PGM quicklook plus ``.meta`` sidecar; raw intensities go to ``.npy``."""
    grid = write_pgm(image, path)
    write_meta(meta_path(path), image.alpha, image.beta, image.seed)
    np.save(Path(path).with_suffix(".npy"), image.intensity)
    return grid
