import math

import numpy as np
import pytest

from spectral_perturb import inequalities as ineq
from spectral_perturb.coefficients import DiscreteField, preset
from spectral_perturb.eigensolve import EigenPair, smallest_eigenpairs
from spectral_perturb.errors import BadSubset, DegenerateBasis, EmptyBall, NotNested
from spectral_perturb.fem import assemble_mass, assemble_stiffness
from spectral_perturb.geometry import DomainSpec, build_base, build_dumbbell, build_rectangle, cutoff_eta


def _solve(mesh, name="laplacian", k=6):
    t = preset(name)
    B, M = assemble_stiffness(mesh, t), assemble_mass(mesh, t.m)
    return B, M, smallest_eigenpairs(B, M, k)


@pytest.fixture(scope="module")
def nested32():
    spec = DomainSpec.symmetric()
    base = build_base(spec, 1 / 32)
    mesh = build_dumbbell(spec, 0.125, 1 / 32)
    return base, _solve(base), mesh, _solve(mesh)


def _smooth_field(rng, modes=3):
    """Random sine series vanishing on the boundary of the left unit square."""
    a = rng.standard_normal((2, modes, modes))

    def f(p):
        x, y = p[:, 0], p[:, 1]
        out = np.zeros((len(p), 2))
        for k in range(modes):
            for l in range(modes):
                s = np.sin((k + 1) * np.pi * x) * np.sin((l + 1) * np.pi * y)
                out += a[:, k, l] * s[:, None]
        out[x > 1] = 0.0
        return out

    return f


# -- quadrature ------------------------------------------------------------

def test_quadrature_exact_for_even_powers(rng):
    mesh = build_rectangle((0.0, 0.0, 1.0, 1.0), 0.25)
    u = DiscreteField(mesh, rng.standard_normal((mesh.n_vertices, 2)))
    from spectral_perturb.fem import l2_squared_per_triangle
    np.testing.assert_allclose(ineq.power_integrals(u, 2), l2_squared_per_triangle(u), rtol=1e-13)
    # quartic of a linear function on one triangle, by exact symbolic moments
    tri = mesh.vertices[mesh.triangles[0]]
    vals = u.values[mesh.triangles[0], 0]
    single = DiscreteField(mesh, np.zeros((mesh.n_vertices, 1)))
    single.values[mesh.triangles[0], 0] = vals
    area = mesh.areas[0]
    # int_T (sum l_i v_i)^4 = 2 A * 4! / 6! * sum over multi-indices |a|=4 of v^a
    from itertools import combinations_with_replacement
    total = sum(np.prod([vals[i] for i in idx]) for idx in combinations_with_replacement(range(3), 4))
    oracle = 2 * area * 24 / 720 * total
    assert ineq.power_integrals(single, 4)[0] == pytest.approx(oracle, rel=1e-12)


# -- monotonicity ----------------------------------------------------------

def test_monotonicity_same_mesh(nested32):
    base, (_, _, pairs0), _, _ = nested32
    s = [p.sigma for p in pairs0]
    rec = ineq.check_monotonicity(s, s, 6, mesh_eps=base, mesh_0=base)
    assert rec.passed and rec.empirical_constant == 1.0


def test_monotonicity_strict(nested32):
    base, (_, _, p0), mesh, (_, _, pe) = nested32
    s0, se = [p.sigma for p in p0], [p.sigma for p in pe]
    rec = ineq.check_monotonicity(se, s0, 6, mesh_eps=mesh, mesh_0=base, epsilon=0.125)
    assert rec.passed
    assert all(a < b for a, b in zip(se, s0))


def test_monotonicity_not_nested(nested32):
    base, (_, _, p0), _, (_, _, pe) = nested32
    s0, se = [p.sigma for p in p0], [p.sigma for p in pe]
    with pytest.raises(NotNested):
        ineq.check_monotonicity(se, s0, 6, h_eps=1 / 32, h_0=1 / 64)
    other = build_dumbbell(DomainSpec.symmetric(), 0.25, 1 / 16)
    with pytest.raises(NotNested):
        ineq.check_monotonicity(se, s0, 6, mesh_eps=other, mesh_0=base)


# -- Korn on a ball --------------------------------------------------------

def test_korn_rotation():
    mesh = build_rectangle((0.0, 0.0, 1.0, 1.0), 1 / 32)
    u = DiscreteField.from_function(mesh, lambda p: np.column_stack([p[:, 1], -p[:, 0]]), zero_boundary=False)
    r = 0.25
    rec = ineq.check_korn_ball(mesh, u, (0.5, 0.5), r)
    assert rec.rhs_components["strain"] == pytest.approx(0.0, abs=1e-20)
    mask = ineq.ball_mask(mesh, (0.5, 0.5), r)
    grad_sq = 2 * mesh.areas[mask].sum()
    l2 = ineq.power_integrals(u, 2)[mask].sum()
    assert rec.empirical_constant == pytest.approx(grad_sq * r**2 / l2, rel=1e-12)
    assert math.isfinite(rec.empirical_constant)


def test_korn_identity_field():
    mesh = build_rectangle((0.0, 0.0, 1.0, 1.0), 1 / 32)
    u = DiscreteField.from_function(mesh, lambda p: p.copy(), zero_boundary=False)
    rec = ineq.check_korn_ball(mesh, u, (0.5, 0.5), 0.25)
    assert rec.lhs == pytest.approx(rec.rhs_components["strain"], rel=1e-12)
    assert rec.empirical_constant <= 1.0


def test_korn_empty_ball(small_dumbbell):
    u = DiscreteField(small_dumbbell, np.zeros((small_dumbbell.n_vertices, 2)))
    with pytest.raises(EmptyBall):
        ineq.check_korn_ball(small_dumbbell, u, (10.0, 10.0), 0.1)


@pytest.mark.slow
def test_korn_refinement_stability():
    spec = DomainSpec.symmetric()
    rng = np.random.default_rng(11)
    fields = [_smooth_field(rng) for _ in range(200)]
    balls = [(tuple(rng.uniform(0, 1, 2)), float(rng.choice([0.1, 0.2, 0.3]))) for _ in range(20)]
    worst = []
    for h in (1 / 32, 1 / 64):
        mesh = build_dumbbell(spec, 0.25, h)
        recs = [ineq.korn_ball_sample(mesh, DiscreteField.from_function(mesh, f), balls) for f in fields]
        worst.append(max(r.empirical_constant for r in recs))
    assert all(math.isfinite(w) for w in worst)
    assert worst[1] == pytest.approx(worst[0], rel=0.2)


def test_korn_sample_matches_single(small_dumbbell, rng):
    u = DiscreteField.from_function(small_dumbbell, _smooth_field(rng))
    balls = [((0.3, 0.4), 0.2), ((0.7, 0.6), 0.1), ((9.0, 9.0), 0.1)]
    best = ineq.korn_ball_sample(small_dumbbell, u, balls)
    singles = [ineq.check_korn_ball(small_dumbbell, u, c, r).empirical_constant for c, r in balls[:2]]
    assert best.empirical_constant == max(singles)


# -- Sobolev-Poincare ------------------------------------------------------

def test_sobolev_constant_field():
    mesh = build_rectangle((0.0, 0.0, 1.0, 1.0), 1 / 16)
    u = DiscreteField.from_function(mesh, lambda p: np.full(len(p), 3.0), zero_boundary=False)
    rec = ineq.check_sobolev_poincare(mesh, u, (0.5, 0.5), 0.25)
    assert rec.lhs == pytest.approx(0.0, abs=1e-25)
    assert rec.passed and rec.empirical_constant == 0.0


def test_sobolev_linear_ramp_closed_form():
    mesh = build_rectangle((0.0, 0.0, 1.0, 1.0), 1 / 128)
    u = DiscreteField.from_function(mesh, lambda p: p[:, 0], zero_boundary=False)
    r = 0.25
    rec = ineq.check_sobolev_poincare(mesh, u, (0.5, 0.5), r)
    # int_B (x - 1/2)^4 = pi r^6 / 8 ; (int_B |grad u|^{4/3})^3 = (pi r^2)^3
    assert rec.lhs == pytest.approx(math.pi * r**6 / 8, rel=0.01)
    assert rec.rhs_components["gradient_term"] == pytest.approx((math.pi * r**2) ** 3, rel=0.01)


def test_sobolev_errors(small_dumbbell):
    u = DiscreteField(small_dumbbell, np.ones((small_dumbbell.n_vertices, 1)))
    with pytest.raises(EmptyBall):
        ineq.check_sobolev_poincare(small_dumbbell, u, (10.0, 10.0), 0.1)
    with pytest.raises(BadSubset):
        ineq.check_sobolev_poincare(small_dumbbell, u, (0.5, 0.5), 0.25, s_fraction=0.01)


@pytest.mark.slow
def test_sobolev_refinement_stability():
    spec = DomainSpec.symmetric()
    rng = np.random.default_rng(12)
    fields = [_smooth_field(rng) for _ in range(100)]
    balls = [((0.5, 0.5), 0.3), ((0.3, 0.6), 0.2)]
    worst = []
    for h in (1 / 32, 1 / 64):
        mesh = build_dumbbell(spec, 0.25, h)
        worst.append(max(
            ineq.check_sobolev_poincare(mesh, DiscreteField.from_function(mesh, f), c, r).empirical_constant
            for f in fields for c, r in balls
        ))
    assert worst[1] == pytest.approx(worst[0], rel=0.2)


# -- Caccioppoli -----------------------------------------------------------

@pytest.fixture(scope="module")
def lame_ground():
    spec = DomainSpec.symmetric()
    out = {}
    for h in (1 / 32, 1 / 64):
        mesh = build_dumbbell(spec, 0.25, h)
        out[h] = (mesh, _solve(mesh, "lame_const", k=1)[2][0])
    return out


def test_caccioppoli_outside_ball(lame_ground):
    mesh, pair = lame_ground[1 / 32]
    rec = ineq.check_caccioppoli(mesh, pair, [((10.0, 10.0), 0.1)], 2)
    assert rec.lhs == 0.0 and rec.empirical_constant == 0.0 and rec.passed


def test_caccioppoli_containing_ball(lame_ground):
    mesh, pair = lame_ground[1 / 32]
    rec = ineq.check_caccioppoli(mesh, pair, [((1.125, 0.5), 1.5)], 2)
    assert math.isfinite(rec.empirical_constant)
    assert rec.passed


def test_caccioppoli_no_balls(lame_ground):
    mesh, pair = lame_ground[1 / 32]
    with pytest.raises(EmptyBall):
        ineq.check_caccioppoli(mesh, pair, [], 2)


def test_caccioppoli_refinement(lame_ground):
    rng = np.random.default_rng(3)
    centers = [tuple(c) for c in rng.uniform([0, 0], [2.25, 1], (50, 2))]
    scaled, fixed = [], []
    for h, (mesh, pair) in sorted(lame_ground.items(), reverse=True):
        balls = [(c, (2 * h, 4 * h, 8 * h)[i % 3]) for i, c in enumerate(centers)]
        scaled.append(ineq.check_caccioppoli(mesh, pair, balls, 2).empirical_constant)
        balls = [(c, (1 / 16, 1 / 8, 1 / 4)[i % 3]) for i, c in enumerate(centers)]
        fixed.append(ineq.check_caccioppoli(mesh, pair, balls, 2).empirical_constant)
    assert all(math.isfinite(c) and c > 0 for c in scaled + fixed)
    # the same physical balls give the same constant on the finer mesh
    assert fixed[1] == pytest.approx(fixed[0], rel=0.2)


# -- reverse Holder and gradient L^p ---------------------------------------

def test_reverse_holder_p2(nested32):
    _, _, mesh, (_, _, pairs) = nested32
    rec = ineq.check_reverse_holder(mesh, pairs[0], 1, p_tilde=2.0)
    assert rec.lhs == pytest.approx(rec.rhs_components["gradient_term"], rel=1e-12)
    assert rec.empirical_constant <= 1.0


def test_reverse_holder_window(nested32):
    _, _, mesh, (_, _, pairs) = nested32
    with pytest.raises(ValueError):
        ineq.check_reverse_holder(mesh, pairs[0], 1, p_tilde=3.0)


@pytest.mark.parametrize("fixture", ["laplacian_sweep", "lame_sweep"])
def test_reverse_holder_uniform(fixture, request):
    report = request.getfixturevalue(fixture)
    consts = [r.reverse_holder for r in report.per_epsilon]
    assert max(consts) / min(consts) < 3.0


def test_gradient_lp_zero_field(small_dumbbell):
    n = len(small_dumbbell.interior_nodes)
    zero = EigenPair(10.0, np.zeros(n), 0.0)
    rec = ineq.check_gradient_lp(small_dumbbell, zero, 1, 2.25, 10.0)
    assert rec.lhs == 0.0 and rec.passed


def test_gradient_lp_budget_formula():
    s, p, q = 20.0, 2.25, 1.9
    assert ineq.gradient_lp_budget(s, p, q) == pytest.approx(
        s ** ((q * p + 2 * (p - q)) / (2 * q)) + s ** (p / 2) + 1
    )


def test_gradient_lp_sweep(laplacian_sweep):
    recs = [r for r in laplacian_sweep.records if r.name == "gradient_lp"]
    ground = [r.empirical_constant for r in recs if r.parameters["k"] == 1]
    assert max(ground) / min(ground) < 3.0
    # constants over k stay bounded: the budget grows at least as fast as the lhs
    for eps in {r.epsilon for r in recs}:
        by_k = [r.empirical_constant for r in recs if r.epsilon == eps]
        assert max(by_k) <= 2 * by_k[0]


# -- near-orthonormality, quasimodes, projectors ---------------------------

def test_near_orthonormality_unit_cutoff(nested32):
    _, _, mesh, (_, _, pairs) = nested32
    rec = ineq.check_near_orthonormality(mesh, np.ones(mesh.n_vertices), pairs[:3], 1, epsilon=0.125)
    assert rec.lhs == pytest.approx(0.0, abs=1e-12)
    assert rec.rhs_components["offdiag_max"] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("fixture", ["laplacian_sweep", "lame_sweep"])
def test_near_orthonormality_sweep(fixture, request):
    report = request.getfixturevalue(fixture)
    diag = [r.diag_max for r in report.per_epsilon]
    off = [r.offdiag_max for r in report.per_epsilon]
    assert all(b < a for a, b in zip(diag, diag[1:]))
    for d, o in zip(diag, off):
        assert o <= 10 * d


def test_quasimode_exact_eigenfunction(nested32):
    base, (B0, M0, pairs0), _, _ = nested32
    for p in pairs0[:3]:
        assert ineq.check_quasimode_residual(B0, M0, p.vector, p.sigma) <= 1e-9


def test_quasimode_trial_basis_below_dual_norm(nested32, rng):
    base, (B0, M0, pairs0), mesh, (_, _, pairs) = nested32
    eta = cutoff_eta(DomainSpec.symmetric(), 0.125, mesh)
    f = ineq.transfer_to_base(mesh, base, pairs[0].vector, 1, eta)
    full = ineq.check_quasimode_residual(B0, M0, f, pairs[0].sigma)
    trial = rng.standard_normal((B0.shape[0], 50))
    sampled = ineq.check_quasimode_residual(B0, M0, f, pairs[0].sigma, trial_basis=trial)
    assert 0 < sampled <= full * (1 + 1e-12)


def test_quasimode_sweep(laplacian_sweep):
    res = [r.quasimode for r in laplacian_sweep.per_epsilon]
    eps = [r.epsilon for r in laplacian_sweep.per_epsilon]
    assert all(b < a for a, b in zip(res, res[1:]))
    rate = (2.25 - 2) / (2 * 2.25) * 2
    consts = [q / e**rate for q, e in zip(res, eps)]
    assert max(consts) <= consts[0] * 1.05


def test_transfer_not_nested(nested32):
    base, _, mesh, (_, _, pairs) = nested32
    small_base = build_base(DomainSpec.symmetric(), 1 / 16)
    with pytest.raises(NotNested):
        ineq.transfer_to_base(mesh, small_base, pairs[0].vector, 1, np.ones(mesh.n_vertices))


def test_diag_dominance_examples(laplacian_sweep):
    assert ineq.check_diag_dominance(np.eye(3))
    assert not ineq.check_diag_dominance(np.ones((2, 2)))
    assert ineq.check_diag_dominance(np.array(laplacian_sweep.per_epsilon[-1].cluster_gram))


def test_projector_distance_examples(rng):
    M = np.diag(rng.uniform(0.5, 2.0, 6))
    A = rng.standard_normal((6, 2))
    assert ineq.projector_distance(A, A @ np.array([[2.0, 1.0], [0.0, 3.0]]), M) == pytest.approx(0.0, abs=1e-12)
    e1, e2 = np.eye(6)[:, :1], np.eye(6)[:, 1:2]
    assert ineq.projector_distance(e1, e2, M) == pytest.approx(1.0)
    with pytest.raises(DegenerateBasis):
        ineq.projector_distance(np.column_stack([e1, e1]), e2, M)


def test_projector_distance_sweep(laplacian_sweep):
    d = [r.projector for r in laplacian_sweep.per_epsilon]
    assert all(b < a for a, b in zip(d, d[1:]))


def test_is_decreasing():
    assert ineq.is_decreasing([3, 2, 1], strict=True)
    assert not ineq.is_decreasing([3, 3, 1], strict=True)
    assert ineq.is_decreasing([1.0, 1.04, 0.5])
    assert not ineq.is_decreasing([1.0, 1.06])
    assert ineq.is_decreasing([1e-16, 2e-16], floor=1e-12)


# -- Garding ---------------------------------------------------------------

def test_garding_lame(small_dumbbell):
    t = preset("lame_const")
    B = assemble_stiffness(small_dumbbell, t)
    G = assemble_stiffness(small_dumbbell, preset("laplacian", m=2))
    rec = ineq.check_garding(B, G, 1.0, trials=300, seed=1)
    assert rec.passed and rec.rhs_components["failures"] == 0
    assert rec.empirical_constant >= 1.0 - 1e-8


def test_garding_detects_violation(small_dumbbell):
    B = assemble_stiffness(small_dumbbell, preset("laplacian", m=2))
    rec = ineq.check_garding(0.5 * B, B, 1.0, trials=20)
    assert not rec.passed and rec.rhs_components["failures"] == 20
    M = assemble_mass(small_dumbbell, 2)
    with pytest.raises(ValueError):
        ineq.check_garding(B, B, 1.0, c2=1.0)
    assert ineq.check_garding(B, B, 1.0, c2=1.0, mass=M, trials=5).passed


def test_record_serialises(laplacian_sweep):
    import json
    for r in laplacian_sweep.records:
        d = json.loads(json.dumps(r.to_dict()))
        assert {"name", "epsilon", "lhs", "rhs_components", "empirical_constant", "passed"} <= set(d)
        assert d["empirical_constant"] >= 0
