import numpy as np
import pytest
import scipy.stats.qmc as qmc
from hypothesis import given, settings
from hypothesis import strategies as st

from okoc import exprlang, kernels, oracle
from okoc.assembly import (
    AssemblyError,
    CenterSet,
    apply_total_derivative,
    assemble,
    dump_program,
    generate_centers,
    grid,
    halton,
    load_program,
    trajectory_centers,
)
from okoc.kernels import Family, KernelConfig
from okoc.occupation import inner_with_function
from okoc.solver import solve

from conftest import make_spec


def test_grid_endpoints():
    assert grid(3, 1)[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_halton_first_point():
    assert halton(1, 2)[0].tolist() == [0.5, 1 / 3]


def test_halton_matches_reference_generator():
    ref = qmc.Halton(d=5, scramble=False).random(65)[1:]
    assert np.allclose(halton(64, 5), ref, atol=1e-15)


def test_first_sigma_center_after_pinned():
    spec = make_spec(["u1"], X=((0.0,), (1.0,)), x0=(0.2,))
    c = generate_centers(spec, 4, 2, 3)
    assert c.sigma_centers[0].tolist() == [0.0, 0.2]
    assert c.sigma_centers[1].tolist() == [0.5, 1 / 3]


def test_grid_strategy_sigma_centers_distinct():
    spec = make_spec(["u1"], X=((0.0,), (1.0,)), x0=(0.0,))
    c = generate_centers(spec, 9, 3, 4, strategy="grid")
    sig = c.sigma_centers
    assert sig.shape == (4, 2)
    gaps = np.max(np.abs(sig[:, None] - sig[None]), axis=-1) + np.eye(4)
    assert gaps.min() > 1e-9


def test_centers_in_boxes():
    spec = make_spec(["-x1 + u1"], X=((-1.0,), (3.0,)), U=((-2.0,), (0.5,)), T=2.0)
    c = generate_centers(spec, 50, 10, 20, seed=3)
    assert spec.S_box.contains(c.s_centers).all()
    assert spec.D.contains(c.d_centers).all()
    assert spec.Sigma_box.contains(c.sigma_centers).all()


def test_centers_deterministic():
    spec = make_spec(["u1"])
    a, b = generate_centers(spec, 30, 5, 10, seed=4), generate_centers(spec, 30, 5, 10, seed=4)
    for f in ("s_centers", "d_centers", "sigma_centers"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = generate_centers(spec, 30, 5, 10, seed=5)
    assert not np.array_equal(a.s_centers, c.s_centers)


@pytest.mark.parametrize("counts", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 3)])
def test_bad_counts(counts):
    with pytest.raises(ValueError):
        generate_centers(make_spec(["u1"]), *counts)


def test_shapes_and_base_constraint():
    spec = make_spec(["u1"], running="x1^2 + u1^2")
    p = assemble(spec, generate_centers(spec, 2, 1, 1))
    assert p.A.shape == (1, 3) and p.c.shape == (3,) and p.b.shape == (1,)
    assert p.b[0] == 1.0
    assert p.r_S == 1.0 and p.r_D == 1.0


def test_program_entries_match_definitions(rng):
    spec = make_spec(["-x1 + u1"], running="x1^2 + t*u1", terminal="3*x1", T=2.0)
    c = generate_centers(spec, 7, 3, 4, seed=1)
    p = assemble(spec, c)
    for i, s in enumerate(c.s_centers):
        assert p.c[i] == exprlang.evaluate(spec.h, s[0], s[1:2], s[2:])
        for mrow, sig in enumerate(c.sigma_centers):
            assert p.A[mrow, i] == pytest.approx(-apply_total_derivative(spec.kernel_Sigma, sig, s, spec.f), abs=1e-15)
    for i, d in enumerate(c.d_centers):
        assert p.c[7 + i] == 3 * d[0]
        for mrow, sig in enumerate(c.sigma_centers):
            assert p.A[mrow, 7 + i] == kernels.eval(spec.kernel_Sigma, [2.0, d[0]], sig)
    assert np.allclose(p.G_S, p.G_S.T) and np.allclose(p.G_D, p.G_D.T)
    assert p.r_S == 4.0


def test_total_derivative_drift_free():
    k = KernelConfig(Family.GAUSSIAN, 2, shape=1.0)
    f = [exprlang.parse("0", 1, 1)]
    g = kernels.grad_first(k, [0.3, 0.4], [0.1, 0.9])
    assert apply_total_derivative(k, [0.1, 0.9], [0.3, 0.4, 0.7], f) == g[0]


def test_total_derivative_at_center():
    k = KernelConfig(Family.WENDLAND_C4, 2, support_radius=1.0)
    f = [exprlang.parse("x1^3 + 7", 1, 1)]
    assert apply_total_derivative(k, [0.3, 0.4], [0.3, 0.4, -1.0], f) == 0.0


def test_total_derivative_directional_fd():
    k = KernelConfig(Family.GAUSSIAN, 2, shape=1.0)
    f = [exprlang.parse("x1", 1, 0)]
    center = np.array([0.4, 0.7])
    for t, x in [(0.1, 0.5), (0.9, -0.3), (0.5, 1.2)]:
        eps = 1e-5
        # first-order flow of x' = x: (t + e, x e^e)
        fwd = kernels.eval(k, [t + eps, x * np.exp(eps)], center)
        bwd = kernels.eval(k, [t - eps, x * np.exp(-eps)], center)
        assert apply_total_derivative(k, center, [t, x], f) == pytest.approx((fwd - bwd) / (2 * eps), abs=1e-6)


def test_assembly_error_names_center():
    spec = make_spec(["u1"], running="1/x1", X=((-1.0,), (1.0,)), x0=(0.0,))
    centers = CenterSet(np.array([[0.1, 0.5, 0.0], [0.2, 0.0, 0.3]]), np.array([[0.1]]), np.array([[0.0, 0.0]]))
    with pytest.raises(AssemblyError, match=r"\(0\.2, 0\.0, 0\.3\)") as info:
        assemble(spec, centers)
    assert isinstance(info.value.__cause__, exprlang.ExprError)


def test_far_sigma_rows_flagged():
    spec = make_spec(["u1"], families=("gaussian", "wendland_c2", "gaussian"), scale=0.1, X=((0.0,), (5.0,)), x0=(0.0,), T=5.0)
    centers = CenterSet(np.array([[0.05, 0.0, 1.0]]), np.array([[0.0]]), np.array([[0.0, 0.0], [2.5, 2.5]]))
    p = assemble(spec, centers)
    assert len(p.diagnostics) == 1 and "sigma center 1" in p.diagnostics[0]


def _decay_empirical(N, M_b=100):
    spec = make_spec(["-x1"], running="x1^2", m=0, X=((0.0,), (1.0,)))
    traj = oracle.simulate(spec.f, spec.x0, None, spec.T, N)
    centers, z = trajectory_centers(spec, traj, M_b)
    return spec, traj, assemble(spec, centers), z


def test_empirical_feasibility_refines_at_fourth_order():
    _, _, p100, z100 = _decay_empirical(100)
    _, _, p200, z200 = _decay_empirical(200)
    r100 = np.max(np.abs(p100.A @ z100 - p100.b))
    r200 = np.max(np.abs(p200.A @ z200 - p200.b))
    assert r200 <= 5e-3
    assert r100 / r200 >= 8


def test_objective_identity():
    spec, traj, p, z = _decay_empirical(200)
    expected = inner_with_function(spec.h, traj) + oracle.terminal_value(spec.F, traj)
    assert p.c @ z == pytest.approx(expected, rel=1e-12)


def test_dump_round_trip():
    spec = make_spec(["-x1 + u1"], running="x1^2 + u1^2", terminal="x1")
    p = assemble(spec, generate_centers(spec, 6, 2, 3))
    q = load_program(dump_program(p))
    for f in ("c", "A", "b", "G_S", "G_D"):
        assert np.array_equal(getattr(p, f), getattr(q, f))
    assert (q.r_S, q.r_D) == (p.r_S, p.r_D)
    assert dump_program(p).splitlines()[0] == "6 2 3"


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_permutation_invariance(seed):
    spec = make_spec(["-x1 + u1"], running="x1^2 + u1^2", X=((0.0,), (1.5,)), scale=0.5)
    c = generate_centers(spec, 20, 4, 6, seed=2)
    rng = np.random.default_rng(seed)
    ps, pd, pb = rng.permutation(20), rng.permutation(4), np.concatenate([[0], 1 + rng.permutation(5)])
    perm = CenterSet(c.s_centers[ps], c.d_centers[pd], c.sigma_centers[pb])
    p, q = assemble(spec, c), assemble(spec, perm)
    cols = np.concatenate([ps, 20 + pd])
    assert np.array_equal(q.c, p.c[cols])
    assert np.array_equal(q.A, p.A[pb][:, cols])
    assert np.allclose(q.G_S, p.G_S[np.ix_(ps, ps)], rtol=0, atol=1e-15)
    assert solve(q).objective == pytest.approx(solve(p).objective, rel=1e-6, abs=1e-6)
