"""Coefficient tensors a^{ab}_{ij}(x), ellipticity validators and strain.

A tensor evaluated at ``N`` points is an array of shape ``(N, m*n, m*n)``
whose row index is ``alpha*n + i`` and column index ``beta*n + j``, so the
quadratic form on a gradient ``xi`` (shape ``(m, n)``) is
``xi.ravel() @ A @ xi.ravel()``.  The symmetry a^{ab}_{ij} = a^{ba}_{ji}
is exactly the symmetry of this matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np

from .errors import ComponentMismatch, NonPositiveMu, UnknownPreset

if TYPE_CHECKING:
    from .geometry import Mesh

N_DIM = 2

PRESETS = ("laplacian", "lame_const", "lame_checkerboard", "general_const", "lh_null_lagrangian")
REGIMES = ("strong_legendre", "lame", "legendre_hadamard")

_SAMPLE_BOX = (-4.0, -4.0, 4.0, 4.0)


def _sample_points(count: int = 1000, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = _SAMPLE_BOX
    return np.column_stack([rng.uniform(x0, x1, count), rng.uniform(y0, y1, count)])


@dataclass(frozen=True, eq=False)
class CoefficientTensor:
    """Bounded symmetric coefficient field for an m-component system."""

    m: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    regime: str
    name: str = "custom"
    params: dict = field(default_factory=dict)
    theta: float | None = None
    delta: float | None = None
    upsilon: Callable[[np.ndarray], np.ndarray] | None = None
    mu: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def size(self) -> int:
        return self.m * N_DIM

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return self.evaluate(np.atleast_2d(np.asarray(pts, dtype=float)))

    @property
    def tau(self) -> float | None:
        return None if self.delta is None else 2.0 * self.delta

    def sup_bound(self, pts: np.ndarray | None = None) -> float:
        """M = max |a^{ab}_{ij}| over the sample points."""
        pts = _sample_points() if pts is None else pts
        return float(np.abs(self(pts)).max())

    def symmetry_defect(self, pts: np.ndarray | None = None) -> float:
        pts = _sample_points() if pts is None else pts
        a = self(pts)
        return float(np.abs(a - a.transpose(0, 2, 1)).max())

    def to_dict(self) -> dict:
        return {"preset": self.name, **self.params}


def _constant(matrix: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    matrix = np.asarray(matrix, dtype=float)

    def evaluate(pts):
        return np.broadcast_to(matrix, (len(pts),) + matrix.shape).copy()

    return evaluate


def _lame_basis() -> tuple[np.ndarray, np.ndarray]:
    """Constant arrays multiplying upsilon and mu in the Lame tensor."""
    d = np.eye(N_DIM)
    # indices (alpha, i, beta, j)
    ups = np.einsum("ia,jb->aibj", d, d)
    mu = np.einsum("ij,ab->aibj", d, d) + np.einsum("ib,ja->aibj", d, d)
    s = N_DIM * N_DIM
    return ups.reshape(s, s), mu.reshape(s, s)


def lame_tensor(
    upsilon: float | Callable[[np.ndarray], np.ndarray],
    mu: float | Callable[[np.ndarray], np.ndarray],
    sample_points: np.ndarray | None = None,
) -> CoefficientTensor:
    """Lame tensor a = ups d_{ia} d_{jb} + mu d_{ij} d_{ab} + mu d_{ib} d_{ja}.

    ``upsilon`` and ``mu`` are constants or vectorised functions of the
    points.  Raises :class:`NonPositiveMu` if ``inf mu <= 0`` and
    ``ValueError`` if ``upsilon < 0`` on the samples.
    """
    ups_f = upsilon if callable(upsilon) else (lambda p, v=float(upsilon): np.full(len(p), v))
    mu_f = mu if callable(mu) else (lambda p, v=float(mu): np.full(len(p), v))
    pts = _sample_points() if sample_points is None else sample_points
    mu_inf = float(np.min(mu_f(pts)))
    if mu_inf <= 0:
        raise NonPositiveMu(f"inf mu = {mu_inf} must be positive")
    if float(np.min(ups_f(pts))) < 0:
        raise ValueError("upsilon must be non-negative")
    b_ups, b_mu = _lame_basis()

    def evaluate(p):
        return ups_f(p)[:, None, None] * b_ups + mu_f(p)[:, None, None] * b_mu

    params = {}
    if not callable(upsilon) and not callable(mu):
        params = {"upsilon": float(upsilon), "mu": float(mu)}
    return CoefficientTensor(
        m=N_DIM,
        evaluate=evaluate,
        regime="lame",
        name="lame_const" if params else "lame",
        params=params,
        delta=mu_inf,
        upsilon=ups_f,
        mu=mu_f,
    )


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Continuous piecewise-linear m-vector field given by nodal values.

    Fields built with ``zero_boundary=True`` vanish at every non-interior
    vertex and hence lie in H^1_0 of the meshed domain (extension by zero).
    """

    mesh: "Mesh"
    values: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_function(cls, mesh, func, zero_boundary: bool = True) -> "DiscreteField":
        vals = np.asarray(func(mesh.vertices), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        vals = vals.copy()
        if zero_boundary:
            vals[~mesh.interior_mask()] = 0.0
        return cls(mesh, vals)

    @classmethod
    def from_dofs(cls, mesh, vec: np.ndarray, m: int) -> "DiscreteField":
        """Inverse of :meth:`to_dofs` (dof = interior index * m + component)."""
        vals = np.zeros((mesh.n_vertices, m))
        vals[mesh.interior_nodes] = np.asarray(vec, dtype=float).reshape(-1, m)
        return cls(mesh, vals)

    def to_dofs(self) -> np.ndarray:
        return self.values[self.mesh.interior_nodes].ravel().copy()

    def gradients(self) -> np.ndarray:
        """Per-triangle constant gradient, shape ``(T, m, 2)``."""
        from . import _kernels

        grads, _ = _kernels.p1_gradients(self.mesh.vertices, self.mesh.triangles)
        return _kernels.field_gradients(self.values, self.mesh.triangles, grads)


def strain(u) -> np.ndarray:
    """Symmetrised gradient per triangle, for a field or gradients ``(T, m, n)``."""
    grad = u.gradients() if isinstance(u, DiscreteField) else np.asarray(u)
    if grad.shape[-2] != grad.shape[-1]:
        raise ComponentMismatch(f"strain needs m == n, got m={grad.shape[-2]}")
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def quadratic_form(tensor_values: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """a^{ab}_{ij} u^a_i u^b_j per triangle for gradients ``(T, m, n)``."""
    g = grad.reshape(len(grad), -1)
    return np.einsum("tk,tkl,tl->t", g, tensor_values, g)


def check_strong_ellipticity(
    tensor: CoefficientTensor, sample_points: np.ndarray | None = None, trial_count: int = 1
) -> float:
    """Smallest eigenvalue of the m*n x m*n form over the sample points.

    This is ``inf |xi|^-2 a xi xi`` exactly; a negative value means the
    strong Legendre condition fails.  ``trial_count`` is accepted for
    interface compatibility; the eigen-decomposition needs no trials.
    """
    if trial_count < 1:
        raise ValueError("trial_count must be >= 1")
    pts = _sample_points(100) if sample_points is None else np.atleast_2d(sample_points)
    a = tensor(pts)
    a = 0.5 * (a + a.transpose(0, 2, 1))
    return float(np.linalg.eigvalsh(a)[:, 0].min())


def _unit_directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.ones((1, 1))
    if dim != 2:
        raise ValueError("direction grids are implemented for dimension 1 and 2")
    # the form is even in each direction, so half a circle suffices
    ang = np.arange(count) * np.pi / count
    return np.column_stack([np.cos(ang), np.sin(ang)])


def check_legendre_hadamard(
    tensor: CoefficientTensor,
    sample_points: np.ndarray | None = None,
    direction_grid: int = 720,
) -> float:
    """Minimum of a^{ab}_{ij} xi_a xi_b psi_i psi_j over unit xi, psi on a grid."""
    pts = _sample_points(20) if sample_points is None else np.atleast_2d(sample_points)
    xi = _unit_directions(tensor.m, direction_grid)
    psi = _unit_directions(N_DIM, direction_grid)
    best = np.inf
    for a in tensor(pts):
        a4 = a.reshape(tensor.m, N_DIM, tensor.m, N_DIM)
        # w[s, i, j] = a^{ab}_{ij} xi_a xi_b for each xi sample s
        w = np.einsum("aibj,sa,sb->sij", a4, xi, xi)
        vals = np.einsum("sij,ri,rj->sr", w, psi, psi)
        best = min(best, float(vals.min()))
    return best


def _laplacian(m: int = 1) -> CoefficientTensor:
    eye = np.eye(m * N_DIM)
    return CoefficientTensor(
        m=m, evaluate=_constant(eye), regime="strong_legendre", name="laplacian",
        params={"m": m}, theta=1.0,
    )


def _null_lagrangian(gamma: float = 3.0) -> CoefficientTensor:
    # |xi|^2 + gamma * det(xi), det = xi^1_1 xi^2_2 - xi^1_2 xi^2_1
    a = np.eye(4)
    a[0, 3] = a[3, 0] = gamma / 2
    a[1, 2] = a[2, 1] = -gamma / 2
    return CoefficientTensor(
        m=2, evaluate=_constant(a), regime="legendre_hadamard", name="lh_null_lagrangian",
        params={"gamma": float(gamma)}, theta=1.0,
    )


_GENERAL_DEFAULT = [
    [2.0, 0.3, 0.2, 0.5],
    [0.3, 1.5, 0.4, 0.1],
    [0.2, 0.4, 1.8, 0.3],
    [0.5, 0.1, 0.3, 2.2],
]


def _general(matrix=None) -> CoefficientTensor:
    a = np.asarray(_GENERAL_DEFAULT if matrix is None else matrix, dtype=float)
    if a.shape != (4, 4):
        raise ValueError("general_const needs a 4x4 matrix")
    if not np.allclose(a, a.T, atol=0, rtol=0):
        raise ValueError("general_const matrix must be symmetric")
    theta = float(np.linalg.eigvalsh(a)[0])
    return CoefficientTensor(
        m=2, evaluate=_constant(a), regime="strong_legendre", name="general_const",
        params={"matrix": a.tolist()}, theta=theta,
    )


def _checkerboard(upsilon=(0.0, 1.0), mu=(1.0, 2.0), cell: float = 0.5) -> CoefficientTensor:
    u0, u1 = (float(v) for v in upsilon)
    m0, m1 = (float(v) for v in mu)

    def parity(p):
        return (np.floor(p[:, 0] / cell) + np.floor(p[:, 1] / cell)).astype(np.int64) % 2

    t = lame_tensor(lambda p: np.where(parity(p) == 0, u0, u1), lambda p: np.where(parity(p) == 0, m0, m1))
    return CoefficientTensor(
        m=2, evaluate=t.evaluate, regime="lame", name="lame_checkerboard",
        params={"upsilon": [u0, u1], "mu": [m0, m1], "cell": cell},
        delta=min(m0, m1), upsilon=t.upsilon, mu=t.mu,
    )


def preset(name: str, **params) -> CoefficientTensor:
    """Instantiate one of :data:`PRESETS` by name."""
    if name == "laplacian":
        return _laplacian(int(params.get("m", 1)))
    if name == "lame_const":
        return lame_tensor(params.get("upsilon", 1.0), params.get("mu", 1.0))
    if name == "lame_checkerboard":
        return _checkerboard(
            params.get("upsilon", (0.0, 1.0)), params.get("mu", (1.0, 2.0)), float(params.get("cell", 0.5))
        )
    if name == "general_const":
        return _general(params.get("matrix"))
    if name == "lh_null_lagrangian":
        return _null_lagrangian(float(params.get("gamma", 3.0)))
    raise UnknownPreset(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def preset_from_dict(data: dict) -> CoefficientTensor:
    """``{"preset": "lame_const", "upsilon": 1.0, "mu": 1.0}`` -> tensor."""
    data = dict(data)
    try:
        name = data.pop("preset")
    except KeyError:
        raise UnknownPreset("missing 'preset' key") from None
    return preset(name, **data)
