"""Non-coherent SAR image synthesis by mapping and projection.

Facets are point-sampled; samples are tested for visibility against a
depth buffer on the projection plane (azimuth x cross-range) and the
visible ones deposit backscatter into the mapping plane (slant range x
azimuth), which is the image. Occluded ground leaves a shadow behind the
target in range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .geometry import (
    GeometryError,
    TriangleMesh,
    ViewAngles,
    merge_meshes,
    projection_units,
    rotation_matrix,
    subdivide,
    wrap_azimuth,
)


class RenderError(ValueError):
    """Invalid render request (angle out of bounds, bad configuration)."""


class SceneError(ValueError):
    """Scene cannot be built from the given mesh."""


@dataclass(frozen=True)
class GammaTexture:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"gamma parameters must be positive, got k={self.shape}, scale={self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale ** 2


# Fitted to MSTAR target/background clutter.
TARGET_TEXTURE = GammaTexture(2.311, 0.162)
BACKGROUND_TEXTURE = GammaTexture(2.867, 0.029)


def sample_gamma(texture: GammaTexture, n: int, seed=None) -> np.ndarray:
    """``n`` i.i.d. Gamma(shape, scale) draws from a seeded generator."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.gamma(texture.shape, texture.scale, size=n)


# ---------------------------------------------------------------- primitives

def _box(x0, x1, y0, y1, z0, z1) -> TriangleMesh:
    v = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y0, z1], [x0, y0, z1],
        [x0, y1, z0], [x1, y1, z0], [x1, y1, z1], [x0, y1, z1],
    ], dtype=float)
    # outward-facing counter-clockwise winding
    f = [
        [0, 1, 2], [0, 2, 3],  # bottom (-y)
        [4, 7, 6], [4, 6, 5],  # top (+y)
        [0, 4, 5], [0, 5, 1],  # -z
        [3, 2, 6], [3, 6, 7],  # +z
        [0, 3, 7], [0, 7, 4],  # -x
        [1, 5, 6], [1, 6, 2],  # +x
    ]
    return TriangleMesh(v, f)


def _wedge(length, width, height) -> TriangleMesh:
    hl, hw = length / 2, width / 2
    v = np.array([
        [-hl, 0, -hw], [hl, 0, -hw], [-hl, height, -hw],
        [-hl, 0, hw], [hl, 0, hw], [-hl, height, hw],
    ], dtype=float)
    f = [
        [0, 2, 1], [3, 4, 5],              # triangular ends
        [0, 1, 4], [0, 4, 3],              # bottom
        [0, 3, 5], [0, 5, 2],              # back wall at -x
        [1, 2, 5], [1, 5, 4],              # slope
    ]
    return TriangleMesh(v, f)


def primitive_mesh(kind: str, dims=(1.0, 1.0, 1.0)) -> TriangleMesh:
    """Closed triangulated primitive resting on y=0, centred on the y axis.

    ``dims`` is (length along x, width along z, height along y). The
    ``tank_like`` kind adds a rear-offset turret and a forward barrel to a
    hull of the given dims so that azimuth is identifiable.
    """
    dims = tuple(float(d) for d in dims)
    if len(dims) != 3 or min(dims) <= 0:
        raise GeometryError(f"primitive dims must be three positive numbers, got {dims}")
    length, width, height = dims
    if kind == "box":
        return _box(-length / 2, length / 2, 0, height, -width / 2, width / 2).validate()
    if kind == "wedge":
        return _wedge(length, width, height).validate()
    if kind == "tank_like":
        hl, hw = length / 2, width / 2
        hull = _box(-hl, hl, 0, height, -hw, hw)
        tl, tw, th = 0.45 * length, 0.7 * width, 0.55 * height
        tx = -0.15 * length
        turret = _box(tx - tl / 2, tx + tl / 2, height, height + th, -tw / 2, tw / 2)
        bore = 0.08 * width
        by = height + 0.5 * th
        barrel = _box(tx, hl + 0.4 * length, by - bore / 2, by + bore / 2, -bore / 2, bore / 2)
        mesh = merge_meshes(hull, turret, barrel)
        lo, hi = mesh.bounds()
        shift = np.array([(lo[0] + hi[0]) / 2, 0.0, (lo[2] + hi[2]) / 2])
        return mesh.transformed(lambda v: v - shift).validate()
    raise GeometryError(f"unknown primitive kind {kind!r}")


TANK_DIMS = (6.5, 3.3, 1.5)


def ground_mesh(half_size: float, cells: int) -> TriangleMesh:
    """Square grid of ``cells`` x ``cells`` quads on y=0 with +y normals."""
    xs = np.linspace(-half_size, half_size, cells + 1)
    gx, gz = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([gx.ravel(), np.zeros(gx.size), gz.ravel()], axis=1)
    idx = np.arange((cells + 1) ** 2).reshape(cells + 1, cells + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    # (x, z) winding chosen so the normal is +y
    faces = np.concatenate([np.stack([a, d, c], 1), np.stack([a, c, b], 1)])
    return TriangleMesh(verts, faces)


# -------------------------------------------------------------------- scene

@dataclass
class Scene:
    """Textured target plus ground; ``window`` is the auto-fitted image extent."""

    target: TriangleMesh
    ground: TriangleMesh
    window: float
    seed: int
    alpha_range: tuple = (30.0, 75.0)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def mesh(self) -> TriangleMesh:
        return merge_meshes(self.target, self.ground)

    @property
    def n_target_faces(self) -> int:
        return self.target.n_faces

    def radius(self) -> float:
        v = np.vstack([self.target.vertices, self.ground.vertices])
        return float(np.linalg.norm(v, axis=1).max())

    def scaled(self, factor: float) -> "Scene":
        """Copy with every face texture multiplied by ``factor``."""
        return Scene(self.target.with_texture(self.target.face_texture * factor),
                     self.ground.with_texture(self.ground.face_texture * factor),
                     self.window, self.seed, self.alpha_range)


def auto_window(target: TriangleMesh, alpha_max: float = 75.0, margin: float = 1.1) -> float:
    """Square image extent (m) holding the target and its longest shadow."""
    v = target.vertices
    r = float(np.hypot(v[:, 0], v[:, 2]).max())
    h = float(max(v[:, 1].max(), 0.0))
    a = math.radians(alpha_max)
    return 2.0 * margin * (r + max(h * math.tan(a) * math.sin(a), h))


def build_scene(target: TriangleMesh, target_tex: GammaTexture = TARGET_TEXTURE,
                bg_tex: GammaTexture = BACKGROUND_TEXTURE, seed: int = 0,
                ground_cells: int = 48, alpha_range=(30.0, 75.0),
                window: float | None = None) -> Scene:
    """Assign one gamma texture draw per facet and lay out the ground.

    Target draws come first from the seeded stream, then ground draws, so
    the target consumes exactly one draw per face.
    """
    if target.n_faces == 0:
        raise SceneError("target mesh has no faces")
    target.validate()
    if target.vertices[:, 1].min() < -1e-9:
        raise SceneError("target extends below the ground plane y=0")
    rng = np.random.default_rng(seed)
    ttex = sample_gamma(target_tex, target.n_faces, rng)
    if window is None:
        window = auto_window(target, alpha_range[1])
    extent = float(np.ptp(target.vertices[:, [0, 2]], axis=0).max())
    a_min = math.radians(alpha_range[0])
    half = max(0.5 * window * math.sqrt(1.0 + 1.0 / math.sin(a_min) ** 2) * 1.05, 2.0 * extent)
    ground = ground_mesh(half, ground_cells)
    gtex = sample_gamma(bg_tex, ground.n_faces, rng)
    return Scene(target.with_texture(ttex), ground.with_texture(gtex), float(window), int(seed),
                 tuple(alpha_range))


def default_scene(kind: str = "tank_like", seed: int = 0, max_edge: float = 1.0,
                  dims=None, **kwargs) -> Scene:
    """Refined primitive target on textured ground; the standard lab scene."""
    if dims is None:
        dims = TANK_DIMS if kind == "tank_like" else (1.0, 1.0, 1.0)
    mesh = primitive_mesh(kind, dims)
    if max_edge:
        mesh = subdivide(mesh, max_edge)
    return build_scene(mesh, seed=seed, **kwargs)


# ------------------------------------------------------------------- render

@dataclass(frozen=True)
class RenderConfig:
    image_size: int = 128
    samples_per_facet: int = 64
    window: float | None = None          # square azimuth/range extent, metres
    speckle: bool = False
    seed: int = 0
    alpha_bounds: tuple = (30.0, 75.0)
    range_factor: float = 10.0           # antenna distance / scene radius
    depth_tolerance: float = 1e-3        # fraction of scene diameter

    def __post_init__(self):
        if self.image_size < 16:
            raise RenderError("image_size must be >= 16")
        if self.samples_per_facet < 1:
            raise RenderError("samples_per_facet must be >= 1")
        if self.window is not None and not self.window > 0:
            raise RenderError("image window must have positive extent")

    def with_(self, **kw) -> "RenderConfig":
        return replace(self, **kw)


@dataclass
class SarImage:
    intensity: np.ndarray               # (range, azimuth) bins
    alpha: float
    beta: float
    seed: int
    occluded: np.ndarray | None = None  # weight removed by occlusion per bin

    @property
    def height(self) -> int:
        return self.intensity.shape[0]

    @property
    def width(self) -> int:
        return self.intensity.shape[1]

    def shadow_mask(self) -> np.ndarray:
        if self.occluded is None:
            raise RenderError("image carries no occlusion record")
        return (self.occluded > 0) & (self.intensity == 0)


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def facet_samples(tris: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` stratified points per triangle, shape (F * n, 3).

    A rank-1 lattice in the unit square, shifted randomly per facet and
    warped area-uniformly onto each triangle.
    """
    f = len(tris)
    i = np.arange(n)
    shift = rng.random((f, 2))
    u = np.mod((i[None, :] + 0.5) / n + shift[:, :1], 1.0)
    v = np.mod(i[None, :] * _GOLDEN + shift[:, 1:], 1.0)
    r = np.sqrt(u)
    b0, b1, b2 = 1.0 - r, r * (1.0 - v), r * v
    pts = (b0[..., None] * tris[:, None, 0] + b1[..., None] * tris[:, None, 1]
           + b2[..., None] * tris[:, None, 2])
    return pts.reshape(-1, 3)


def _prepared(scene: Scene, spf: int) -> dict:
    key = ("samples", spf)
    if key not in scene._cache:
        mesh = scene.mesh
        tris = mesh.triangles()
        rng = np.random.default_rng([scene.seed, 0x5A4D])
        pts = facet_samples(tris, spf, rng)
        scene._cache[key] = {
            "points_t": np.ascontiguousarray(pts.T),
            "fid": np.repeat(np.arange(mesh.n_faces, dtype=np.int64), spf),
            "tris": tris,
            "normals": mesh.face_normals(),
            "areas": mesh.face_areas(),
            "texture": mesh.face_texture,
            "radius": scene.radius(),
        }
    return scene._cache[key]


def _check_angles(angles: ViewAngles, config: RenderConfig) -> ViewAngles:
    lo, hi = config.alpha_bounds
    if not lo <= angles.alpha <= hi:
        raise RenderError(f"incidence {angles.alpha} outside [{lo}, {hi}]")
    return ViewAngles(angles.alpha, wrap_azimuth(angles.beta))


def render(scene: Scene, angles: ViewAngles, config: RenderConfig = RenderConfig()) -> SarImage:
    """Render ``scene`` at ``angles``; bit-reproducible for fixed inputs."""
    angles = _check_angles(angles, config)
    prep = _prepared(scene, config.samples_per_facet)
    n = config.image_size
    window = config.window if config.window is not None else scene.window
    if not window > 0:
        raise RenderError("degenerate image window")

    rot = rotation_matrix(angles)
    dist = config.range_factor * prep["radius"]
    q = rot.T @ prep["points_t"]
    sx, sy = q[0], q[1]
    sz = q[2] + dist

    cell = window / n
    a0, r0 = -window / 2.0, dist - window / 2.0

    # facet weights: texture x area x cos+(local incidence), per unit bin area
    nrm = prep["normals"] @ rot
    cos_inc = np.maximum(-nrm[:, 2], 0.0)
    geom = prep["areas"] * cos_inc / (config.samples_per_facet * cell * cell)
    face_weight = prep["texture"] * geom

    lo, hi, count = kernels.image_span(sx, sy, sz, a0, cell, n, r0, cell, n)
    if count == 0:
        img = np.zeros((n, n))
        occ = np.zeros((n, n))
    else:
        ny = max(projection_units(n, angles.alpha), 1)
        span = max(hi - lo, cell)
        dy = span * (1.0 + 1e-9) / ny
        y0 = lo - 0.5 * (ny * dy - (hi - lo))
        # slope-scaled depth bias: depth change of a facet across one cell
        nz = np.maximum(np.abs(nrm[:, 2]), 0.05)
        face_bias = np.ascontiguousarray(
            (np.abs(nrm[:, 0]) * cell + np.abs(nrm[:, 1]) * dy) / nz)
        tq = prep["tris"] @ rot
        px = np.ascontiguousarray(tq[:, :, 0])
        py = np.ascontiguousarray(tq[:, :, 1])
        pz = np.ascontiguousarray(tq[:, :, 2] + dist)
        depth = kernels.rasterize_min_depth(px, py, pz, a0, cell, n, y0, dy, ny,
                                            1e-9 * cell * dy)
        tol = config.depth_tolerance * 2.0 * prep["radius"]
        img, occ = kernels.deposit(sx, sy, sz, prep["fid"], np.ascontiguousarray(face_weight),
                                   face_bias, depth, a0, cell, y0, dy, a0, cell, n, r0, cell, n, tol)

    if config.speckle:
        ss = np.random.SeedSequence([config.seed, int(round(angles.alpha * 1e6)),
                                     int(round(angles.beta * 1e6))])
        img = img * np.random.default_rng(ss).exponential(1.0, size=img.shape)
    return SarImage(img, angles.alpha, angles.beta, config.seed, occ)
