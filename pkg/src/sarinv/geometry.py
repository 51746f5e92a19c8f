"""Angle arithmetic, the radar coordinate system and triangle meshes.

All public angles are in degrees. The world frame is right-handed with
the vertical along +Y; this is the frame in which the radar rotation below
yields an incidence angle measured from the vertical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometric input (bad angles, degenerate meshes)."""


def wrap_azimuth(beta: float) -> float:
    """Map an azimuth to the canonical interval [0, 360)."""
    b = math.fmod(float(beta), 360.0)
    if b < 0.0:
        b += 360.0
    # fmod of a tiny negative number can round up to exactly 360
    if b >= 360.0:
        b = 0.0
    return b


def angular_error(estimate: float, truth: float, circular: bool = False) -> float:
    """Absolute angle difference, optionally measured on the circle."""
    if not circular:
        return abs(float(estimate) - float(truth))
    d = abs(wrap_azimuth(estimate) - wrap_azimuth(truth))
    return min(d, 360.0 - d)


def angular_error_array(estimate, truth, circular: bool = False) -> np.ndarray:
    """Vectorised :func:`angular_error`."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if not circular:
        return np.abs(estimate - truth)
    d = np.abs(np.mod(estimate, 360.0) - np.mod(truth, 360.0))
    return np.minimum(d, 360.0 - d)


def signed_azimuth_delta(target: float, origin: float) -> float:
    """Shortest signed arc from ``origin`` to ``target``, in (-180, 180]."""
    d = math.fmod(float(target) - float(origin), 360.0)
    if d > 180.0:
        d -= 360.0
    elif d <= -180.0:
        d += 360.0
    return d


@dataclass(frozen=True)
class ViewAngles:
    """Radar incidence ``alpha`` and azimuth ``beta`` in degrees.

    ``beta`` is stored wrapped to [0, 360); ``alpha`` is validated and
    never wrapped.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise GeometryError(f"non-finite view angles ({a}, {b})")
        if not -90.0 <= a <= 90.0:
            raise GeometryError(f"incidence angle {a} outside [-90, 90]")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", wrap_azimuth(b))

    def as_tuple(self) -> tuple[float, float]:
        return (self.alpha, self.beta)


def rotation_matrix(angles: ViewAngles) -> np.ndarray:
    """World-to-radar rotation for the given view angles.

    Columns are the radar azimuth, cross-range and slant-range axes
    expressed in world coordinates, so ``R.T @ v`` gives radar-frame
    coordinates.
    """
    a = math.radians(angles.alpha)
    b = math.radians(wrap_azimuth(angles.beta))
    sa, ca = math.sin(a), math.cos(a)
    sb, cb = math.sin(b), math.cos(b)
    return np.array(
        [
            [-cb, -ca * sb, -sa * sb],
            [0.0, sa, -ca],
            [sb, -ca * cb, -sa * cb],
        ]
    )


def look_direction(angles: ViewAngles) -> np.ndarray:
    """Unit vector along increasing slant range (radar towards scene)."""
    return rotation_matrix(angles)[:, 2].copy()


def antenna_position(angles: ViewAngles, distance: float) -> np.ndarray:
    """Far-field antenna position on the viewing ray through the origin."""
    return -float(distance) * look_direction(angles)


def projection_units(n_mapping: int, alpha: float) -> int:
    """Number of projection-plane units paired with ``n_mapping`` mapping units.

    Rounded half-to-even. Only defined for 0 < alpha < 90.
    """
    if n_mapping < 0:
        raise GeometryError("n_mapping must be non-negative")
    if not 0.0 < alpha < 90.0:
        raise GeometryError(f"projection_units undefined for alpha={alpha}")
    return int(round(n_mapping * math.tan(math.radians(alpha))))


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with one scattering coefficient per face."""

    vertices: np.ndarray
    faces: np.ndarray
    face_texture: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.face_texture is None:
            self.face_texture = np.ones(len(self.faces))
        else:
            self.face_texture = np.asarray(self.face_texture, dtype=float).reshape(-1)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """Face corner coordinates, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    def face_normals(self) -> np.ndarray:
        """Unit normals from counter-clockwise winding, shape (F, 3)."""
        t = self.triangles()
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    def face_areas(self) -> np.ndarray:
        t = self.triangles()
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def validate(self) -> "TriangleMesh":
        if not np.all(np.isfinite(self.vertices)):
            raise GeometryError("mesh has non-finite vertices")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise GeometryError("face index out of range")
        if len(self.face_texture) != len(self.faces):
            raise GeometryError("face_texture length does not match face count")
        if np.any(self.face_texture < 0):
            raise GeometryError("negative face texture")
        if len(self.faces) and np.any(self.face_areas() <= 0):
            raise GeometryError("degenerate face with zero area")
        return self

    def with_texture(self, texture) -> "TriangleMesh":
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), np.asarray(texture, dtype=float))

    def transformed(self, fn) -> "TriangleMesh":
        return TriangleMesh(fn(self.vertices), self.faces.copy(), self.face_texture.copy())

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def to_radar_frame(mesh: TriangleMesh, angles: ViewAngles, antenna) -> TriangleMesh:
    """Express every vertex in the radar frame: ``R.T @ (v - A_p)``."""
    r = rotation_matrix(angles)
    ap = np.asarray(antenna, dtype=float).reshape(3)
    return mesh.transformed(lambda v: (v - ap) @ r)


def merge_meshes(*meshes: TriangleMesh) -> TriangleMesh:
    verts, faces, tex = [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        tex.append(m.face_texture)
        offset += len(m.vertices)
    return TriangleMesh(np.vstack(verts), np.vstack(faces), np.concatenate(tex))


def subdivide(mesh: TriangleMesh, max_edge: float) -> TriangleMesh:
    """Split faces at edge midpoints until no edge exceeds ``max_edge``.

    Each face is refined independently (children inherit the parent's
    texture), so shared edges may carry T-junctions.
    """
    if max_edge <= 0:
        raise GeometryError("max_edge must be positive")
    tris = mesh.triangles()
    tex = mesh.face_texture
    out_tris, out_tex = [], []
    for tri, s in zip(tris, tex):
        longest = max(np.linalg.norm(tri[1] - tri[0]), np.linalg.norm(tri[2] - tri[1]),
                      np.linalg.norm(tri[0] - tri[2]))
        levels = max(0, math.ceil(math.log2(longest / max_edge))) if longest > max_edge else 0
        pieces = [tri]
        for _ in range(levels):
            nxt = []
            for p in pieces:
                m01, m12, m20 = (p[0] + p[1]) / 2, (p[1] + p[2]) / 2, (p[2] + p[0]) / 2
                nxt += [np.array([p[0], m01, m20]), np.array([m01, p[1], m12]),
                        np.array([m20, m12, p[2]]), np.array([m01, m12, m20])]
            pieces = nxt
        out_tris.extend(pieces)
        out_tex.extend([s] * len(pieces))
    tris = np.array(out_tris)
    verts = tris.reshape(-1, 3)
    faces = np.arange(len(verts)).reshape(-1, 3)
    return TriangleMesh(verts, faces, np.array(out_tex))
