"""Dumbbell domains, nested structured triangulations and the cutoff function.

All domains are unions of axis-aligned rectangles whose corners lie on a
uniform grid of pitch ``h``.  Every grid cell is split into two triangles
by a diagonal whose direction depends only on the global cell parity, so the
triangulation of the two-component base
domain is literally a subset of the triangulation of any dumbbell built on
the same grid.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GridMisaligned, MeshMismatch, NoBoundaryBallFound, TubeTooWide

Rect = tuple[float, float, float, float]
Point = tuple[float, float]

LABELS = ("omega", "omega_tilde", "tube")
_SNAP_TOL = 1e-9


def _snap(value: float, pitch: float, what: str) -> int:
    q = value / pitch
    k = round(q)
    if abs(q - k) > _SNAP_TOL * max(1.0, abs(q)):
        raise GridMisaligned(f"{what}={value!r} is not a multiple of {pitch!r}")
    return int(k)


@dataclass(frozen=True)
class DomainSpec:
    """Geometry of a dumbbell: two rectangles joined by a straight tube.

    Rectangles are ``(x0, y0, x1, y1)``.  ``p1`` lies on the boundary of
    ``omega`` and ``p2`` on the boundary of ``omega_tilde``; the segment
    ``p1 -> p2`` is axis-aligned and has length ``tube_length``.
    """

    omega: Rect
    omega_tilde: Rect
    p1: Point
    p2: Point
    tube_length: float
    d_exponent: float = 1.0
    n: int = 2
    m: int = 1

    def __post_init__(self):
        for name in ("omega", "omega_tilde"):
            r = tuple(float(v) for v in getattr(self, name))
            if len(r) != 4 or not (r[0] < r[2] and r[1] < r[3]):
                raise GridMisaligned(f"{name} must be (x0, y0, x1, y1) with x0<x1, y0<y1")
            object.__setattr__(self, name, r)
        object.__setattr__(self, "p1", tuple(float(v) for v in self.p1))
        object.__setattr__(self, "p2", tuple(float(v) for v in self.p2))
        object.__setattr__(self, "tube_length", float(self.tube_length))
        object.__setattr__(self, "d_exponent", float(self.d_exponent))
        if self.n != 2:
            raise ValueError("only n = 2 is supported")
        if not 0 < self.d_exponent <= self.n:
            raise ValueError("d_exponent must lie in (0, n]")
        if self.tube_length <= 0:
            raise ValueError("tube_length must be positive")
        dx = self.p2[0] - self.p1[0]
        dy = self.p2[1] - self.p1[1]
        if dx != 0 and dy != 0:
            raise ValueError("segment p1-p2 must be axis-aligned")
        if not math.isclose(abs(dx) + abs(dy), self.tube_length, rel_tol=1e-12):
            raise ValueError("|p2 - p1| must equal tube_length")
        if not _on_boundary(self.omega, self.p1) or not _on_boundary(self.omega_tilde, self.p2):
            raise ValueError("p1 must lie on the boundary of omega, p2 on that of omega_tilde")
        mid = ((self.p1[0] + self.p2[0]) / 2, (self.p1[1] + self.p2[1]) / 2)
        if _in_open(self.omega, mid) or _in_open(self.omega_tilde, mid):
            raise ValueError("tube segment must run outside both rectangles")
        if _rects_overlap(self.omega, self.omega_tilde):
            raise ValueError("omega and omega_tilde must be disjoint")

    @property
    def axis(self) -> int:
        """0 if the tube runs along x, 1 if along y."""
        return 0 if self.p1[1] == self.p2[1] else 1

    def tube_rect(self, epsilon: float) -> Rect:
        a = self.axis
        lo = min(self.p1[a], self.p2[a])
        hi = max(self.p1[a], self.p2[a])
        c = self.p1[1 - a]
        if a == 0:
            return (lo, c - epsilon / 2, hi, c + epsilon / 2)
        return (c - epsilon / 2, lo, c + epsilon / 2, hi)

    def to_dict(self) -> dict:
        return {
            "omega": list(self.omega),
            "omega_tilde": list(self.omega_tilde),
            "p1": list(self.p1),
            "p2": list(self.p2),
            "tube_length": self.tube_length,
            "d_exponent": self.d_exponent,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DomainSpec":
        return cls(
            omega=tuple(data["omega"]),
            omega_tilde=tuple(data["omega_tilde"]),
            p1=tuple(data["p1"]),
            p2=tuple(data["p2"]),
            tube_length=data["tube_length"],
            d_exponent=data.get("d_exponent", 1.0),
            m=data.get("m", 1),
        )

    @classmethod
    def symmetric(cls, side: float = 1.0, tube_length: float = 0.25) -> "DomainSpec":
        """Two congruent squares side by side, tube attached at mid-height."""
        return cls(
            omega=(0.0, 0.0, side, side),
            omega_tilde=(side + tube_length, 0.0, 2 * side + tube_length, side),
            p1=(side, side / 2),
            p2=(side + tube_length, side / 2),
            tube_length=tube_length,
        )


def _on_boundary(r: Rect, p: Point) -> bool:
    x, y = p
    inside_x = r[0] <= x <= r[2]
    inside_y = r[1] <= y <= r[3]
    return (inside_x and y in (r[1], r[3])) or (inside_y and x in (r[0], r[2]))


def _in_open(r: Rect, p: Point) -> bool:
    return r[0] < p[0] < r[2] and r[1] < p[1] < r[3]


def _rects_overlap(a: Rect, b: Rect) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured P1 triangulation of a union of grid-aligned rectangles.

    ``grid`` holds the integer grid coordinates of each vertex
    (``vertices == grid * h``); vertex identity across nested meshes is
    decided on these integers.
    """

    h: float
    vertices: np.ndarray
    grid: np.ndarray
    triangles: np.ndarray
    interior_nodes: np.ndarray
    labels: np.ndarray
    spec: DomainSpec | None = None
    epsilon: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return self._cache["areas"]

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.interior_nodes] = True
        return mask

    def boundary_edges(self) -> np.ndarray:
        """Edges used by exactly one triangle, as sorted vertex pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]

    def to_dict(self) -> dict:
        return {
            "h": self.h,
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "interior_nodes": self.interior_nodes.tolist(),
            "labels": self.labels.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def build_rectangles(
    rects: Sequence[tuple[Rect, str]],
    h: float,
    spec: DomainSpec | None = None,
    epsilon: float | None = None,
) -> Mesh:
    """Triangulate the interior of the union of closed, labelled rectangles."""
    if h <= 0:
        raise ValueError("h must be positive")
    cells = []
    cell_labels = []
    for rect, label in rects:
        i0, j0, i1, j1 = (_snap(v, h, "rectangle coordinate") for v in rect)
        ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="xy")
        cells.append(np.column_stack([ii.ravel(), jj.ravel()]))
        cell_labels.append(np.full(ii.size, LABELS.index(label), dtype=np.int8))
    cells = np.concatenate(cells)
    cell_labels = np.concatenate(cell_labels)
    # row-major cell order, y first
    order = np.lexsort((cells[:, 0], cells[:, 1]))
    cells = cells[order]
    cell_labels = cell_labels[order]
    if len(np.unique(cells, axis=0)) != len(cells):
        raise ValueError("rectangles overlap")

    corners = np.concatenate([cells, cells + [1, 0], cells + [1, 1], cells + [0, 1]])
    grid = np.unique(corners, axis=0)
    grid = grid[np.lexsort((grid[:, 0], grid[:, 1]))]

    lo = grid.min(axis=0)
    shape = grid.max(axis=0) - lo + 1
    index = np.full((shape[1], shape[0]), -1, dtype=np.int64)
    index[grid[:, 1] - lo[1], grid[:, 0] - lo[0]] = np.arange(len(grid))
    occ = np.zeros((shape[1] + 1, shape[0] + 1), dtype=bool)
    occ[cells[:, 1] - lo[1] + 1, cells[:, 0] - lo[0] + 1] = True

    def vid(offset):
        g = cells + offset - lo
        return index[g[:, 1], g[:, 0]]

    v00, v10, v11, v01 = vid([0, 0]), vid([1, 0]), vid([1, 1]), vid([0, 1])
    # union-jack split: the diagonal direction alternates with the parity of
    # the global cell index, which keeps the full symmetry of the square
    even = ((cells[:, 0] + cells[:, 1]) % 2 == 0)[:, None]
    tri = np.empty((2 * len(cells), 3), dtype=np.int64)
    tri[0::2] = np.where(even, np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    tri[1::2] = np.where(even, np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    labels = np.repeat(np.array(LABELS)[cell_labels], 2)

    # a vertex is interior iff all four surrounding cells are present
    gx = grid[:, 0] - lo[0] + 1
    gy = grid[:, 1] - lo[1] + 1
    interior = occ[gy, gx] & occ[gy - 1, gx] & occ[gy, gx - 1] & occ[gy - 1, gx - 1]

    return Mesh(
        h=float(h),
        vertices=grid.astype(float) * h,
        grid=grid,
        triangles=tri,
        interior_nodes=np.flatnonzero(interior),
        labels=labels,
        spec=spec,
        epsilon=epsilon,
    )


def build_rectangle(rect: Rect, h: float) -> Mesh:
    """Single-rectangle mesh (e.g. the unit square)."""
    return build_rectangles([(rect, "omega")], h)


def _check_spec_grid(spec: DomainSpec, h: float) -> None:
    for v in spec.omega + spec.omega_tilde:
        _snap(v, 2 * h, "rectangle coordinate")
    for v in spec.p1 + spec.p2:
        _snap(v, h, "attachment point coordinate")


def build_base(spec: DomainSpec, h: float) -> Mesh:
    """Mesh of the two-component domain without tube."""
    _check_spec_grid(spec, h)
    return build_rectangles(
        [(spec.omega, "omega"), (spec.omega_tilde, "omega_tilde")], h, spec=spec
    )


def check_epsilon(spec: DomainSpec, epsilon: float, h: float) -> None:
    """Raise unless ``epsilon`` is an admissible tube width on pitch ``h``."""
    if epsilon <= 0:
        raise GridMisaligned("epsilon must be positive")
    k = _snap(epsilon, 2 * h, "epsilon")
    if k < 2:
        raise GridMisaligned(f"epsilon={epsilon!r} must be at least 4h={4 * h!r}")
    a = spec.axis
    c = spec.p1[1 - a]
    for rect in (spec.omega, spec.omega_tilde):
        side_lo, side_hi = (rect[1], rect[3]) if a == 0 else (rect[0], rect[2])
        if epsilon > min(rect[2] - rect[0], rect[3] - rect[1]):
            raise TubeTooWide(f"epsilon={epsilon!r} exceeds a rectangle side")
        if c - epsilon / 2 < side_lo or c + epsilon / 2 > side_hi:
            raise TubeTooWide(f"tube of width {epsilon!r} overhangs the facing side")


def build_dumbbell(spec: DomainSpec, epsilon: float, h: float) -> Mesh:
    """Mesh of omega, omega_tilde and the tube of width ``epsilon``."""
    _check_spec_grid(spec, h)
    check_epsilon(spec, epsilon, h)
    return build_rectangles(
        [
            (spec.omega, "omega"),
            (spec.omega_tilde, "omega_tilde"),
            (spec.tube_rect(epsilon), "tube"),
        ],
        h,
        spec=spec,
        epsilon=float(epsilon),
    )


def vertex_correspondence(src: Mesh, dst: Mesh) -> np.ndarray:
    """Index in ``dst`` of every vertex of ``src`` (-1 where absent)."""
    if not math.isclose(src.h, dst.h, rel_tol=1e-12):
        return np.full(src.n_vertices, -1, dtype=np.int64)
    lo = np.minimum(src.grid.min(axis=0), dst.grid.min(axis=0))
    span = np.maximum(src.grid.max(axis=0), dst.grid.max(axis=0)) - lo + 1
    key_dst = (dst.grid[:, 1] - lo[1]) * span[0] + (dst.grid[:, 0] - lo[0])
    key_src = (src.grid[:, 1] - lo[1]) * span[0] + (src.grid[:, 0] - lo[0])
    order = np.argsort(key_dst)
    pos = np.searchsorted(key_dst[order], key_src)
    pos = np.clip(pos, 0, len(order) - 1)
    hit = key_dst[order][pos] == key_src
    return np.where(hit, order[pos], -1)


def is_nested(base: Mesh, mesh: Mesh) -> bool:
    """True if ``base`` is ``mesh`` with its tube triangles removed."""
    corr = vertex_correspondence(base, mesh)
    if (corr < 0).any():
        return False
    keep = mesh.labels != "tube"
    if keep.sum() != base.n_triangles:
        return False
    if not np.array_equal(corr[base.triangles], mesh.triangles[keep]):
        return False
    inner = np.zeros(mesh.n_vertices, dtype=bool)
    inner[mesh.interior_nodes] = True
    return bool(inner[corr[base.interior_nodes]].all())


def tube_measure(spec: DomainSpec, epsilon: float) -> float:
    """Lebesgue measure of the tube, ``tube_length * epsilon``."""
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return spec.tube_length * epsilon


def domain_contains(spec: DomainSpec, epsilon: float, pts: np.ndarray) -> np.ndarray:
    """Membership of points in the closure of the dumbbell."""
    pts = np.atleast_2d(pts)
    out = np.zeros(len(pts), dtype=bool)
    rects = [spec.omega, spec.omega_tilde]
    if epsilon > 0:
        rects.append(spec.tube_rect(epsilon))
    for r in rects:
        out |= (pts[:, 0] >= r[0]) & (pts[:, 0] <= r[2]) & (pts[:, 1] >= r[1]) & (pts[:, 1] <= r[3])
    return out


def complement_ratio(
    inside: Callable[[np.ndarray], np.ndarray],
    center: Point,
    r: float,
    resolution: float | None = None,
) -> float:
    """``|B_{2r} minus domain| / r**2`` by counting sample cells of pitch ``resolution``."""
    g = resolution if resolution is not None else r / 40
    k = int(math.ceil(2 * r / g))
    offs = (np.arange(-k, k) + 0.5) * g
    dx, dy = np.meshgrid(offs, offs)
    keep = dx**2 + dy**2 < (2 * r) ** 2
    pts = np.column_stack([center[0] + dx[keep], center[1] + dy[keep]])
    outside = ~inside(pts)
    return float(outside.sum() * g * g / r**2)


def _boundary_segments(spec: DomainSpec, epsilon: float) -> list[tuple[Point, Point]]:
    segs = []
    tube = spec.tube_rect(epsilon) if epsilon > 0 else None
    a = spec.axis
    for rect in (spec.omega, spec.omega_tilde):
        x0, y0, x1, y1 = rect
        edges = [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))]
        for p, q in edges:
            if tube is None:
                segs.append((p, q))
                continue
            # cut the tube mouth out of the facing edge
            along = 1 - a
            fixed = a
            if p[fixed] == q[fixed] and tube[fixed] <= p[fixed] <= tube[fixed + 2]:
                lo, hi = sorted((p[along], q[along]))
                m_lo, m_hi = tube[along], tube[along + 2]
                for s_lo, s_hi in ((lo, min(hi, m_lo)), (max(lo, m_hi), hi)):
                    if s_hi > s_lo:
                        u = [0.0, 0.0]
                        v = [0.0, 0.0]
                        u[fixed] = v[fixed] = p[fixed]
                        u[along], v[along] = s_lo, s_hi
                        segs.append((tuple(u), tuple(v)))
            else:
                segs.append((p, q))
    if tube is not None:
        x0, y0, x1, y1 = tube
        if a == 0:
            segs += [((x0, y0), (x1, y0)), ((x0, y1), (x1, y1))]
        else:
            segs += [((x0, y0), (x0, y1)), ((x1, y0), (x1, y1))]
    return segs


def check_corkscrew(
    spec: DomainSpec,
    epsilon: float,
    r_samples: Iterable[float],
    center_samples: int,
    seed: int = 0,
    resolution: float | None = None,
) -> float:
    """Empirical lower bound of the measure-density constant of the dumbbell.

    Ball centres are drawn uniformly on the boundary of the domain (these
    balls always meet the complement); the minimum of
    ``|B_{2r} minus domain| / r**2`` over all samples is returned.
    """
    radii = np.asarray(list(r_samples), dtype=float)
    if (radii <= 0).any():
        raise ValueError("radii must be positive")
    segs = _boundary_segments(spec, epsilon)
    if center_samples < 1 or not segs:
        raise NoBoundaryBallFound("no boundary centres to sample")
    lengths = np.array([math.dist(p, q) for p, q in segs])
    rng = np.random.default_rng(seed)
    which = rng.choice(len(segs), size=center_samples, p=lengths / lengths.sum())
    t = rng.random(center_samples)
    starts = np.array([segs[i][0] for i in which])
    ends = np.array([segs[i][1] for i in which])
    centers = starts + t[:, None] * (ends - starts)

    def inside(pts):
        return domain_contains(spec, epsilon, pts)

    best = math.inf
    for c in centers:
        for r in radii:
            # B_r must meet the complement: its complement measure is the B_{2(r/2)} count
            if complement_ratio(inside, (c[0], c[1]), r / 2, resolution) == 0:
                continue
            best = min(best, complement_ratio(inside, (c[0], c[1]), r, resolution))
    if best == math.inf:
        raise NoBoundaryBallFound("no sampled ball meets the complement")
    return best


@dataclass(frozen=True)
class CutoffField:
    epsilon: float
    values: np.ndarray
    gradient_bound: float


def cutoff_values(spec: DomainSpec, epsilon: float, pts: np.ndarray) -> np.ndarray:
    """Cutoff at arbitrary points: 0 on the closed tube, radial ramp near p1, p2."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    vals = np.ones(len(pts))
    for p in (spec.p1, spec.p2):
        d = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])
        vals = np.minimum(vals, np.clip(2.0 * d / epsilon - 1.0, 0.0, 1.0))
    x0, y0, x1, y1 = spec.tube_rect(epsilon)
    in_tube = (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)
    vals[in_tube] = 0.0
    return vals


def cutoff_eta(spec: DomainSpec, epsilon: float, mesh: Mesh) -> CutoffField:
    """Nodal cutoff field on ``mesh`` (a dumbbell or base mesh of ``spec``)."""
    if mesh.spec is not None and mesh.spec != spec:
        raise MeshMismatch("mesh was built from a different DomainSpec")
    if mesh.epsilon is not None and not math.isclose(mesh.epsilon, epsilon, rel_tol=1e-12):
        raise MeshMismatch(f"mesh was built for epsilon={mesh.epsilon!r}, not {epsilon!r}")
    if mesh.spec is None and not domain_contains(spec, epsilon, mesh.centroids).all():
        raise MeshMismatch("mesh geometry does not match spec")
    return CutoffField(
        epsilon=float(epsilon),
        values=cutoff_values(spec, epsilon, mesh.vertices),
        gradient_bound=2.0 / epsilon,
    )
