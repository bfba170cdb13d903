"""Empirical checks of eigenfunction and domain inequalities.

Every check returns an :class:`InequalityRecord` holding the measured left
side, the itemised right side and the smallest constant that makes the
inequality hold on the sample.  Constants are compared against a
configurable budget; only the eigenvalue monotonicity check is exact.

Ball integrals keep a triangle iff its centroid lies in the ball.  Integrals
of gradient powers are exact (P1 gradients are constant per triangle);
integrals of powers of the field use a degree-5 triangle rule, exact for
the even powers 2 and 4.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import DiscreteField, strain
from .eigensolve import EigenPair
from .errors import BadSubset, DegenerateBasis, EmptyBall, NotNested
from .fem import gradient_magnitude
from .geometry import CutoffField, Mesh, is_nested, vertex_correspondence

DEFAULT_BUDGET = 1e3
MONOTONE_RTOL = 1e-10

# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_S15 = math.sqrt(15.0)
_B1 = (6.0 - _S15) / 21.0
_B2 = (6.0 + _S15) / 21.0
QUAD_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [1 - 2 * _B1, _B1, _B1],
        [_B1, 1 - 2 * _B1, _B1],
        [_B1, _B1, 1 - 2 * _B1],
        [1 - 2 * _B2, _B2, _B2],
        [_B2, 1 - 2 * _B2, _B2],
        [_B2, _B2, 1 - 2 * _B2],
    ]
)
QUAD_WEIGHTS = np.array([9 / 40] + [(155 - _S15) / 1200] * 3 + [(155 + _S15) / 1200] * 3)


@dataclass
class InequalityRecord:
    name: str
    epsilon: float | None
    lhs: float
    rhs_components: dict
    empirical_constant: float
    budget: float
    passed: bool
    parameters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _record(name, epsilon, lhs, rhs, constant, budget, parameters=None, passed=None):
    if passed is None:
        passed = bool(constant <= budget)
    return InequalityRecord(
        name=name,
        epsilon=None if epsilon is None else float(epsilon),
        lhs=float(lhs),
        rhs_components={k: float(v) for k, v in rhs.items()},
        empirical_constant=float(constant),
        budget=float(budget),
        passed=bool(passed),
        parameters=parameters or {},
    )


def _ratio(num: float, den: float) -> float:
    if num <= 0:
        return 0.0
    return num / den if den > 0 else math.inf


def field_from_pair(mesh: Mesh, pair: EigenPair | np.ndarray, m: int) -> DiscreteField:
    vec = pair.vector if isinstance(pair, EigenPair) else pair
    return DiscreteField.from_dofs(mesh, vec, m)


def quadrature_values(u: DiscreteField) -> np.ndarray:
    """Field values at the quadrature points, shape ``(T, Q, m)``."""
    return np.einsum("qa,tam->tqm", QUAD_BARY, u.values[u.mesh.triangles])


def power_integrals(u: DiscreteField, p: float, shift: np.ndarray | None = None) -> np.ndarray:
    """Per-triangle int_T |u - shift|^p."""
    v = quadrature_values(u)
    if shift is not None:
        v = v - shift
    mag = np.sqrt((v**2).sum(axis=2)) ** p
    return u.mesh.areas * (mag @ QUAD_WEIGHTS)


def ball_mask(mesh: Mesh, center, radius: float) -> np.ndarray:
    c = mesh.centroids
    return (c[:, 0] - center[0]) ** 2 + (c[:, 1] - center[1]) ** 2 < radius**2


# ---------------------------------------------------------------- eigenvalues


def check_monotonicity(
    sigma_eps: Sequence[float],
    sigma_0: Sequence[float],
    k_max: int,
    mesh_eps: Mesh | None = None,
    mesh_0: Mesh | None = None,
    h_eps: float | None = None,
    h_0: float | None = None,
    epsilon: float | None = None,
) -> InequalityRecord:
    """sigma_k^eps <= sigma_k^0 (to 1e-10 relative) for k <= k_max.

    Exact on nested meshes: the base space embeds by zero extension into
    the dumbbell space.  Raises :class:`NotNested` if the supplied meshes
    (or mesh sizes) show the two spectra are not comparable.
    """
    if h_eps is not None and h_0 is not None and not math.isclose(h_eps, h_0, rel_tol=1e-12):
        raise NotNested(f"spectra computed at different h ({h_eps} vs {h_0})")
    if mesh_eps is not None and mesh_0 is not None and not is_nested(mesh_0, mesh_eps):
        raise NotNested("base mesh is not the dumbbell mesh minus its tube")
    se = np.asarray(sigma_eps[:k_max], dtype=float)
    s0 = np.asarray(sigma_0[:k_max], dtype=float)
    if len(se) < k_max or len(s0) < k_max:
        raise ValueError("not enough eigenvalues for k_max")
    excess = (se - s0) / np.abs(s0)
    worst = int(np.argmax(excess))
    return _record(
        "monotonicity", epsilon, se[worst], {"sigma_0": s0[worst]},
        float(np.max(se / s0)), 1.0 + MONOTONE_RTOL,
        {"k_max": k_max, "max_relative_excess": float(excess.max()), "worst_k": worst + 1},
        passed=bool((se <= s0 + MONOTONE_RTOL * np.abs(s0)).all()),
    )


# ---------------------------------------------------------------- ball inequalities


def _korn_terms(mesh, grad, usq, center, radius):
    mask = ball_mask(mesh, center, radius)
    if not mask.any():
        raise EmptyBall(f"no triangle centroid within {radius} of {tuple(center)}")
    areas = mesh.areas[mask]
    g = grad[mask]
    lhs = float((areas * (g**2).sum(axis=(1, 2))).sum())
    kap = float((areas * (strain(g) ** 2).sum(axis=(1, 2))).sum())
    low = float(usq[mask].sum()) / radius**2
    return lhs, kap, low


def _korn_record(lhs, kap, low, center, radius, budget, epsilon):
    return _record(
        "korn_ball", epsilon, lhs, {"strain": kap, "lower_order": low},
        _ratio(lhs, kap + low), budget,
        {"center": [float(c) for c in center], "radius": float(radius)},
    )


def check_korn_ball(
    mesh: Mesh, u: DiscreteField, center, radius: float, budget: float = DEFAULT_BUDGET,
    epsilon: float | None = None,
) -> InequalityRecord:
    """||grad u||^2 <= C (||kappa(u)||^2 + r^-2 ||u||^2) on B_r."""
    lhs, kap, low = _korn_terms(mesh, u.gradients(), power_integrals(u, 2), center, radius)
    return _korn_record(lhs, kap, low, center, radius, budget, epsilon)


def korn_ball_sample(
    mesh: Mesh,
    u: DiscreteField,
    balls: Iterable[tuple[Sequence[float], float]],
    budget: float = DEFAULT_BUDGET,
    epsilon: float | None = None,
) -> InequalityRecord | None:
    """The worst :func:`check_korn_ball` record over ``balls``.

    Balls holding no triangle centroid are skipped; ``None`` if all are.
    """
    grad = u.gradients()
    usq = power_integrals(u, 2)
    worst = None
    for center, r in balls:
        try:
            terms = _korn_terms(mesh, grad, usq, center, r)
        except EmptyBall:
            continue
        rec = _korn_record(*terms, center, r, budget, epsilon)
        if worst is None or rec.empirical_constant > worst.empirical_constant:
            worst = rec
    return worst


def check_sobolev_poincare(
    mesh: Mesh,
    u: DiscreteField,
    center,
    radius: float,
    s_fraction: float = 1.0,
    p: float = 4.0 / 3.0,
    q: float = 4.0,
    c0: float = 0.1,
    budget: float = DEFAULT_BUDGET,
    epsilon: float | None = None,
) -> InequalityRecord:
    """int_{B_r} |u - u_S|^q <= C (int_{B_r} |grad u|^p)^{q/p}.

    ``S`` is the concentric ball holding ``s_fraction`` of the area of
    ``B_r``; ``(p, q) = (4/3, 4)`` is an admissible two-dimensional pair.
    """
    if not 0 < s_fraction <= 1:
        raise BadSubset("s_fraction must lie in (0, 1]")
    mask = ball_mask(mesh, center, radius)
    if not mask.any():
        raise EmptyBall(f"no triangle centroid within {radius} of {tuple(center)}")
    s_mask = ball_mask(mesh, center, radius * math.sqrt(s_fraction))
    s_area = float(mesh.areas[s_mask].sum())
    if s_area < c0 * radius**2 or not s_mask.any():
        raise BadSubset(f"|S| = {s_area:.3g} below {c0} r^2")
    tri_mean = u.values[mesh.triangles[s_mask]].mean(axis=1)  # exact P1 mean per triangle
    u_s = (mesh.areas[s_mask, None] * tri_mean).sum(axis=0) / s_area
    lhs = float(power_integrals(u, q, shift=u_s)[mask].sum())
    # subtracting the mean of a constant field leaves round-off, not signal
    scale = float(power_integrals(u, q)[mask].sum())
    if lhs <= (64 * np.finfo(float).eps) ** q * scale:
        lhs = 0.0
    grad_p = float((mesh.areas[mask] * gradient_magnitude(u)[mask] ** p).sum())
    rhs = grad_p ** (q / p)
    return _record(
        "sobolev_poincare", epsilon, lhs, {"gradient_term": rhs}, _ratio(lhs, rhs), budget,
        {"center": [float(c) for c in center], "radius": float(radius), "p": p, "q": q,
         "s_fraction": s_fraction},
    )


def _ball_averages(mesh, grad_mag, u_sq, center, r):
    mask = ball_mask(mesh, center, r)
    vol = math.pi * r * r
    a = mesh.areas[mask]
    g = grad_mag[mask]
    return (
        float((a * g * g).sum()) / vol,
        float((a * g).sum()) / vol,
        float(u_sq[mask].sum()) / vol,
    )


def check_caccioppoli(
    mesh: Mesh,
    pair: EigenPair,
    balls: Iterable[tuple[Sequence[float], float]],
    m: int,
    c3_budget: float = 0.5,
    budget: float = DEFAULT_BUDGET,
    epsilon: float | None = None,
) -> InequalityRecord:
    """Caccioppoli inequality for an eigenfunction extended by zero.

    For each ball ``B_r``::

        avg_{B_r}|grad u|^2 <= C1 (avg_{B_2r}|grad u|)^2
                               + C2 |sigma| avg_{B_2r}|u|^2 + C3 avg_{B_2r}|grad u|^2

    With ``C3 = c3_budget`` fixed, the smallest common ``C1 = C2`` over all
    balls is reported.  Averages divide by the full ball area because ``u``
    vanishes outside the domain.
    """
    balls = list(balls)
    if not balls:
        raise EmptyBall("no balls supplied")
    u = field_from_pair(mesh, pair, m)
    gm = gradient_magnitude(u)
    usq = power_integrals(u, 2)
    sigma = abs(pair.sigma)
    best = 0.0
    worst = (0.0, 0.0, 0.0, 0.0)
    for center, r in balls:
        lhs, _, _ = _ball_averages(mesh, gm, usq, center, r)
        g2, g1, u2 = _ball_averages(mesh, gm, usq, center, 2 * r)
        t1, t2, t3 = g1**2, sigma * u2, g2
        need = _ratio(lhs - c3_budget * t3, t1 + t2)
        if need >= best:
            best, worst = need, (lhs, t1, t2, t3)
    return _record(
        "caccioppoli", epsilon, worst[0],
        {"gradient_l1_term": worst[1], "eigenvalue_term": worst[2], "gradient_l2_term": worst[3]},
        best, budget, {"balls": len(balls), "c3": c3_budget, "sigma": pair.sigma},
    )


# ---------------------------------------------------------------- global integrability


def check_reverse_holder(
    mesh: Mesh, pair: EigenPair, m: int, p_tilde: float = 2.25, budget: float = DEFAULT_BUDGET,
    epsilon: float | None = None,
) -> InequalityRecord:
    """avg|grad u|^p <= C [ (avg|grad u|^2)^{p/2} + |sigma|^{p/2} avg|u|^p ]."""
    if not 2 <= p_tilde <= 2.5:
        raise ValueError("p_tilde must lie in [2, 2.5]")
    u = field_from_pair(mesh, pair, m)
    vol = mesh.area
    gm = gradient_magnitude(u)
    lhs = float((mesh.areas * gm**p_tilde).sum()) / vol
    energy = float((mesh.areas * gm**2).sum()) / vol
    low = float(power_integrals(u, p_tilde).sum()) / vol
    t1 = energy ** (p_tilde / 2)
    t2 = abs(pair.sigma) ** (p_tilde / 2) * low
    return _record(
        "reverse_holder", epsilon, lhs, {"gradient_term": t1, "eigenvalue_term": t2},
        _ratio(lhs, t1 + t2), budget, {"p_tilde": p_tilde, "sigma": pair.sigma},
    )


def gradient_lp_budget(sigma_0: float, p_tilde: float, q: float = 1.9) -> float:
    """|s|^{(q p + 2(p - q)) / (2q)} + |s|^{p/2} + 1, the two-dimensional growth budget."""
    s = abs(sigma_0)
    return s ** ((q * p_tilde + 2 * (p_tilde - q)) / (2 * q)) + s ** (p_tilde / 2) + 1.0


def check_gradient_lp(
    mesh: Mesh,
    pair: EigenPair,
    m: int,
    p_tilde: float,
    sigma_0_k: float,
    q: float = 1.9,
    budget: float = DEFAULT_BUDGET,
    epsilon: float | None = None,
) -> InequalityRecord:
    """int |grad phi|^p against the eigenvalue-power budget."""
    if p_tilde < 2:
        raise ValueError("p_tilde must be >= 2")
    if not 1 < q < 2:
        raise ValueError("q must lie in (1, 2)")
    u = field_from_pair(mesh, pair, m)
    lhs = float((mesh.areas * gradient_magnitude(u) ** p_tilde).sum())
    rhs = gradient_lp_budget(sigma_0_k, p_tilde, q)
    return _record(
        "gradient_lp", epsilon, lhs, {"budget": rhs}, _ratio(lhs, rhs), budget,
        {"p_tilde": p_tilde, "q": q, "sigma_0": sigma_0_k},
    )


# ---------------------------------------------------------------- quasimodes


def weighted_gram(mesh: Mesh, eta: CutoffField | np.ndarray, fields: Sequence[DiscreteField]) -> np.ndarray:
    """G_kl = int eta^2 phi_k . phi_l (exact: the integrand has degree 4)."""
    eta_vals = eta.values if isinstance(eta, CutoffField) else np.asarray(eta)
    eq = QUAD_BARY @ eta_vals[mesh.triangles].T  # (Q, T)
    w = (eq.T**2) * QUAD_WEIGHTS * mesh.areas[:, None]  # (T, Q)
    vals = [quadrature_values(f) for f in fields]
    k = len(fields)
    gram = np.empty((k, k))
    for a in range(k):
        for b in range(a, k):
            gram[a, b] = gram[b, a] = float((w * (vals[a] * vals[b]).sum(axis=2)).sum())
    return gram


def check_near_orthonormality(
    mesh_eps: Mesh,
    eta: CutoffField | np.ndarray,
    pairs: Sequence[EigenPair],
    m: int,
    p_tilde: float = 2.25,
    d: float = 1.0,
    epsilon: float | None = None,
    budget: float = DEFAULT_BUDGET,
) -> InequalityRecord:
    """Gram deficiencies of the cut-off cluster eigenfunctions.

    ``diag_def_k = 1 - int eta^2 |phi_k|^2`` and
    ``offdiag_kl = |int eta^2 phi_k . phi_l|``; the constant is the larger
    deficiency divided by ``eps^{d (p - 2) / p}``.
    """
    if epsilon is None and isinstance(eta, CutoffField):
        epsilon = eta.epsilon
    gram = weighted_gram(mesh_eps, eta, [field_from_pair(mesh_eps, p, m) for p in pairs])
    diag = 1.0 - np.diag(gram)
    off = np.abs(gram - np.diag(np.diag(gram)))
    diag_max = float(diag.max())
    off_max = float(off.max()) if len(pairs) > 1 else 0.0
    rate = epsilon ** (d * (p_tilde - 2) / p_tilde) if epsilon else 1.0
    return _record(
        "near_orthonormality", epsilon, diag_max, {"offdiag_max": off_max, "rate": rate},
        _ratio(max(diag_max, off_max), rate), budget,
        {"gram": gram.tolist(), "diag_def": diag.tolist(), "p_tilde": p_tilde, "d": d},
    )


def transfer_to_base(
    mesh_eps: Mesh, base: Mesh, vector: np.ndarray, m: int, eta: CutoffField | np.ndarray
) -> np.ndarray:
    """Dofs on ``base`` of the nodal product eta * phi (J_0 of the cut-off field)."""
    if not is_nested(base, mesh_eps):
        raise NotNested("base mesh is not nested in the dumbbell mesh")
    eta_vals = eta.values if isinstance(eta, CutoffField) else np.asarray(eta)
    u = DiscreteField.from_dofs(mesh_eps, vector, m)
    corr = vertex_correspondence(base, mesh_eps)
    prod = eta_vals[:, None] * u.values
    return prod[corr[base.interior_nodes]].ravel()


def check_quasimode_residual(
    stiff_0,
    mass_0,
    eta_phi: np.ndarray,
    sigma_eps: float,
    trial_basis: np.ndarray | None = None,
) -> float:
    """max_w |q(f, w) - sigma <f, w>| / (||f||_L2 ||w||_1) with f = eta*phi.

    Without ``trial_basis`` the maximum runs over the whole discrete space
    and equals the dual norm ``sqrt(r^T (M + B)^{-1} r) / ||f||`` with
    ``r = B f - sigma M f``.
    """
    f = np.asarray(eta_phi, dtype=float)
    r = stiff_0 @ f - sigma_eps * (mass_0 @ f)
    f_norm = math.sqrt(float(f @ (mass_0 @ f)))
    if f_norm == 0:
        raise DegenerateBasis("cut-off field vanishes")
    if trial_basis is None:
        gram = sp.csc_matrix(stiff_0 + mass_0)
        z = spla.splu(gram).solve(r)
        return math.sqrt(max(float(r @ z), 0.0)) / f_norm
    w = np.atleast_2d(np.asarray(trial_basis, dtype=float).T).T
    num = np.abs(w.T @ r)
    den = np.sqrt(np.einsum("ij,ij->j", w, mass_0 @ w) + np.einsum("ij,ij->j", w, stiff_0 @ w))
    return float(np.max(num / den)) / f_norm


def check_diag_dominance(gram: np.ndarray) -> bool:
    """True iff every row is strictly diagonally dominant."""
    a = np.abs(np.asarray(gram, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("gram must be square")
    off = a.sum(axis=1) - np.diag(a)
    return bool((off < np.diag(a)).all())


def _m_orthonormal(basis: np.ndarray, mass) -> np.ndarray:
    basis = np.atleast_2d(np.asarray(basis, dtype=float).T).T
    g = basis.T @ (mass @ basis)
    g = 0.5 * (g + g.T)
    w, v = np.linalg.eigh(g)
    if w.min() <= 1e-12 * max(w.max(), 1e-300):
        raise DegenerateBasis("basis is numerically rank deficient")
    return basis @ (v / np.sqrt(w))


def projector_distance(basis_a: np.ndarray, basis_b: np.ndarray, mass) -> float:
    """||P_A - P_B|| in the M inner product for M-orthogonal projectors."""
    qa = _m_orthonormal(basis_a, mass)
    qb = _m_orthonormal(basis_b, mass)
    joint = np.column_stack([qa, qb])
    g = joint.T @ (mass @ joint)
    w, v = np.linalg.eigh(0.5 * (g + g.T))
    keep = w > 1e-12 * w.max()
    z = joint @ (v[:, keep] / np.sqrt(w[keep]))  # M-orthonormal basis of the joint span
    ca = z.T @ (mass @ qa)
    cb = z.T @ (mass @ qb)
    diff = ca @ ca.T - cb @ cb.T
    return float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.T))).max())


def is_decreasing(
    values: Sequence[float], jitter: float = 0.05, strict: bool = False, floor: float = 0.0
) -> bool:
    """Non-increasing along the sequence, allowing ``jitter`` relative growth per step.

    Steps where both values are at most ``floor`` (round-off level) are
    accepted whatever their order.
    """
    v = list(values)
    for a, b in zip(v, v[1:]):
        if abs(a) <= floor and abs(b) <= floor:
            continue
        if strict:
            if not b < a:
                return False
        elif b > a + jitter * abs(a):
            return False
    return True


def check_garding(
    stiffness,
    gradient_gram,
    delta: float,
    trials: int = 1000,
    seed: int = 0,
    slack: float = 1e-8,
    c2: float = 0.0,
    mass=None,
    epsilon: float | None = None,
) -> InequalityRecord:
    """Coercivity ``u^T B u >= delta |grad u|^2 - c2 |u|^2`` on random fields.

    ``gradient_gram`` is the matrix of ``int grad u : grad v`` (the vector
    Laplacian stiffness), so ``u^T G u`` is the squared H1 seminorm.  A
    trial fails when the defect exceeds ``slack * |grad u|^2``.  The
    constant reported is the smallest ``delta`` consistent with the sample.
    """
    if c2 and mass is None:
        raise ValueError("c2 > 0 needs the mass matrix")
    rng = np.random.default_rng(seed)
    failures = 0
    worst = math.inf
    for _ in range(trials):
        u = rng.standard_normal(stiffness.shape[0])
        energy = float(u @ (stiffness @ u))
        grad_sq = float(u @ (gradient_gram @ u))
        lower = c2 * float(u @ (mass @ u)) if c2 else 0.0
        ratio = (energy + lower) / grad_sq
        worst = min(worst, ratio)
        if energy + lower < (delta - slack) * grad_sq:
            failures += 1
    return _record(
        "garding", epsilon, worst, {"delta": delta, "c2": c2, "failures": failures},
        worst, delta - slack, {"trials": trials, "seed": seed}, passed=failures == 0,
    )
