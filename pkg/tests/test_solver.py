import numpy as np
import pytest

from subpflow import calculus as calc
from subpflow import flux as fx
from subpflow import presets, profiles
from subpflow import solver as sv
from subpflow.calculus import GridSpec, SupportError

BOX = ((-1.0, -1.0, -0.5), (1.0, 1.0, 0.5))


def grid(m, T=0.02, nt=4):
    return GridSpec(1, BOX[0], BOX[1], m, 0.0, T, nt)


def bump(g):
    return presets.bump(g, width=(0.8, 0.8, 0.25), amplitude=0.5)


def test_test_function(g, center=(0.1, -0.1, 0.05), width=(0.5, 0.5, 0.3)):
    X = g.points
    rho2 = sum(((X[..., k] - center[k]) / width[k]) ** 2 for k in range(3))
    space = 1.0 - profiles.smoothstep5(rho2)
    T = g.t1 - g.t0
    tt = np.sin(np.pi * (g.times - g.t0) / T) ** 2
    tt[0] = tt[-1] = 0.0
    return tt[:, None, None, None] * space[None]


test_test_function.__test__ = False


@pytest.mark.parametrize("p,delta", [(2.0, 0.0), (3.0, 0.0), (3.0, 0.5), (4.0, 0.1)])
def test_affine_data_are_fixed_points(p, delta):
    g = grid(17)
    x, y, z = g.coords
    u0 = 2.0 + 0.7 * x - 0.3 * y + 0 * z
    spec = sv.ProblemSpec(g, fx.p_laplacian(1, p, delta), u0)
    u = u0.copy()
    dt = sv.stable_dt(spec, u)
    for _ in range(100):
        u = sv.step(spec, u, dt)
    assert np.max(np.abs(u - u0)) <= 1e-10


def test_stable_dt_closed_form():
    g = grid(17)
    u = presets.linear_horizontal(g, (1.0,))
    spec = sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.0), u)
    # h_min = 1/16, 1 + B^2 = 1.5, (p-1) = 2, weight = 1
    assert sv.stable_dt(spec, u) == pytest.approx(0.25 * (1 / 16) ** 2 / (2 * 1.5), rel=1e-14)
    const = sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.0), np.ones(g.shape))
    assert sv.stable_dt(const, np.ones(g.shape)) == np.inf


def test_constant_slice_with_vacuous_bound_solves():
    g = grid(9)
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.0), np.full(g.shape, 0.25)))
    assert np.all(sol.u == 0.25)
    assert len(sol.dt_history) == g.nt


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_energy_is_non_increasing(p):
    g = grid(17, T=0.02, nt=2)
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, p, 0.0), bump(g)))
    e = np.asarray(sol.diagnostics["energy"])
    assert np.max(np.diff(e)) <= 1e-8 * e[0]
    assert e[-1] < e[0]


def test_solution_lands_on_output_times():
    g = grid(9, T=0.01, nt=5)
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.5), bump(g)))
    assert sol.u.shape == g.spacetime_shape
    np.testing.assert_array_equal(sol.times, g.times)
    assert sum(sol.dt_history) == pytest.approx(0.01, rel=1e-12)
    np.testing.assert_array_equal(sol.u[0], sv.ProblemSpec(g, fx.p_laplacian(1, 3), bump(g)).initial)


def test_boundary_layers_are_frozen():
    g = grid(9, T=0.01)
    u0 = bump(g) + presets.linear_horizontal(g, (0.3, 0.1))
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.5), u0))
    mask = sv.boundary_mask(g)
    for k in range(sol.u.shape[0]):
        np.testing.assert_array_equal(sol.u[k][mask], u0[mask])


def test_fused_update_matches_full_operator():
    g = grid(13)
    u = bump(g) + 0.2 * presets.trig(g, (1, 2, 1))
    for f in (fx.p_laplacian(1, 3, 0.2), fx.lift(fx.p_laplacian(1, 4, 0.1), 0.5)):
        spec = sv.ProblemSpec(g, f, u)
        div, _ = sv._interior_update(spec, u)
        full = sv.operator(spec, u)[(slice(2, -2),) * 3]
        np.testing.assert_allclose(div, full, rtol=1e-12, atol=1e-12)


def test_weak_residual_order():
    res, hs = [], []
    for m, nt in ((9, 8), (17, 32), (33, 128)):
        g = grid(m, T=0.02, nt=nt)
        sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.5), bump(g)))
        res.append(sv.weak_residual(sol, test_test_function(g)))
        hs.append(g.h_min)
    order = np.polyfit(np.log(hs), np.log(res), 1)[0]
    assert order >= 0.9


def _term_scale(sol, phi, l):
    v = calc.horizontal_gradient(sol.grid, sol.u)[l]
    return abs(calc.integrate_spacetime(sol.grid, v * calc.time_derivative(phi, sol.times), times=sol.times))


def test_differentiated_equation_sign():
    # the commutator term changes the residual by O(1) relative amounts; with the
    # wrong sign the ratio below is > 0.1 for both l
    g = grid(17, T=0.02, nt=32)
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 2, 0.0), bump(g)))
    phi = test_test_function(g)
    for l in (0, 1):
        assert sv.differentiated_residual(sol, phi, l) <= 0.05 * _term_scale(sol, phi, l)


def test_vertical_residual_decreases():
    out = []
    for m, nt in ((9, 8), (17, 32), (33, 128)):
        g = grid(m, T=0.02, nt=nt)
        sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.5), bump(g)))
        out.append(sv.vertical_residual(sol, test_test_function(g)))
    assert out[0] > 2 * out[1] > 4 * out[2]


def test_test_function_support_is_checked():
    g = grid(9)
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 2), bump(g)))
    with pytest.raises(SupportError):
        sv.weak_residual(sol, np.ones(g.spacetime_shape))
    phi = test_test_function(g)
    phi[0] = phi[1]
    with pytest.raises(SupportError):
        sv.weak_residual(sol, phi)


def test_derived_fields_on_linear_solution():
    g = grid(9, T=0.01)
    u0 = presets.linear_horizontal(g, (1.0, 0.0))
    sol = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.0), u0))
    d = sv.derived_fields(sol)
    assert np.all(d.ut == 0.0)
    assert np.all(d.zu == 0.0)
    np.testing.assert_allclose(d.grad[0], 1.0, atol=1e-14)
    np.testing.assert_allclose(d.hess_norm, 0.0, atol=1e-12)


def test_instability_is_reported_with_partial_solution():
    # a huge c_stab makes every step span a whole output interval
    g = grid(9, T=1.0, nt=2)
    spec = sv.ProblemSpec(g, fx.p_laplacian(1, 2), presets.trig(g, (3, 3, 3)), c_stab=1e4)
    with pytest.raises(sv.SolverInstabilityError) as info:
        sv.solve(spec)
    part = info.value.partial
    assert part is not None and part.u.shape[0] == part.times.size >= 1
    assert part.diagnostics["instability_threshold"] == pytest.approx(10.0 * np.max(np.abs(spec.initial)))


def test_callable_boundary():
    g = grid(9, T=0.01)
    x, y, z = g.coords
    lin = presets.linear_horizontal(g, (1.0,))
    spec = sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.1), lin, boundary=lambda t: lin * (1.0 + t))
    sol = sv.solve(spec)
    mask = sv.boundary_mask(g)
    np.testing.assert_allclose(sol.u[-1][mask], (lin * 1.01)[mask], rtol=1e-14)
    with pytest.raises(ValueError):
        sv.ProblemSpec(g, fx.p_laplacian(1, 3), lin, boundary=lambda t: lin + 1.0)


def test_problem_validation():
    g = grid(9)
    with pytest.raises(ValueError):
        sv.ProblemSpec(g, fx.p_laplacian(1, 3), np.zeros((3, 3, 3)))
    with pytest.raises(ValueError):
        sv.ProblemSpec(g, fx.p_laplacian(2, 3), np.zeros(g.shape))
    with pytest.raises(ValueError):
        sv.ProblemSpec(g, fx.p_laplacian(1, 3), np.full(g.shape, np.nan))
    with pytest.raises(ValueError):
        sv.ProblemSpec(g, fx.p_laplacian(1, 3), np.zeros(g.shape), boundary="periodic")
    with pytest.raises(ValueError):
        sv.solve_lifted(sv.ProblemSpec(g, fx.p_laplacian(1, 3), np.zeros(g.shape)))


def test_lifted_solve_is_stable_and_dissipative():
    g = grid(13, T=0.01)
    spec = sv.ProblemSpec(g, fx.lift(fx.p_laplacian(1, 3, 0.5), 1.0), bump(g))
    sol = sv.solve_lifted(spec)
    e = np.asarray(sol.diagnostics["energy"])
    assert np.all(np.isfinite(sol.u))
    assert np.max(np.diff(e)) <= 1e-8 * e[0]


def test_step_budget():
    g = grid(9, T=0.05)
    with pytest.raises(sv.SolverError):
        sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 3, 0.5), bump(g)), max_steps=3)
