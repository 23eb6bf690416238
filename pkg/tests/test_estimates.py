import numpy as np
import pytest

from subpflow import calculus as calc
from subpflow import estimates as est
from subpflow import flux as fx
from subpflow import presets
from subpflow import solver as sv
from subpflow.calculus import GridSpec
from subpflow.geometry import CylinderSpec, HeisenbergPoint

O = HeisenbergPoint.identity(1)
T = 0.02


def _grid(m=17, nt=8):
    return GridSpec(1, (-1.0, -1.0, -0.5), (1.0, 1.0, 0.5), m, 0.0, T, nt)


def _solve(u0_fn, p=3.0, delta=0.5, m=17, nt=8):
    g = _grid(m, nt)
    return sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, p, delta), u0_fn(g)))


@pytest.fixture(scope="module")
def bump_sol():
    return _solve(lambda g: presets.bump(g, width=(0.8, 0.8, 0.25), amplitude=0.5))


@pytest.fixture(scope="module")
def linear_sol():
    return _solve(lambda g: presets.linear_horizontal(g, (1.0, 0.0)), delta=0.0)


@pytest.fixture(scope="module")
def zero_sol():
    return _solve(presets.zero, delta=0.5)


def _cyl(r=0.7):
    return CylinderSpec(O, T, r, 0.5 * T / r ** 2)


def test_cutoff_profile_values(bump_sol):
    g = bump_sol.grid
    cut = est.make_cutoff(_cyl(), g)
    eta = cut.eta
    assert eta.shape == g.spacetime_shape
    assert eta.min() >= 0.0 and eta.max() <= 1.0
    centre = tuple(k // 2 for k in g.shape)
    assert eta[(-1,) + centre] == 1.0
    # parabolic boundary: bottom slice, and every node with gauge distance >= r
    assert np.all(eta[g.times <= cut.cylinder.t_start + 1e-15] == 0.0)
    far = np.asarray(calc.cylinder_mask(g, _cyl(), g.times)) == 0
    assert np.all(eta[far] == 0.0)
    half = calc.cylinder_mask(g, CylinderSpec(O, T, 0.35, _cyl().mu), g.times)
    assert np.all(eta[half] == 1.0)
    assert cut.support_volume > 0
    assert all(np.isfinite(v) and v >= 0 for v in cut.norms.values())


def test_cutoff_is_zero_after_t0():
    g = GridSpec(1, (-1.0, -1.0, -0.5), (1.0, 1.0, 0.5), 17, 0.0, 2 * T, 8)
    c = CylinderSpec(O, T, 0.7, 0.5 * T / 0.49)
    eta = est.make_cutoff(c, g).eta
    assert np.all(eta[g.times > T + 1e-12] == 0.0)


def test_cutoff_gradient_scales_like_inverse_radius():
    g = GridSpec(1, (-1.0, -1.0, -0.5), (1.0, 1.0, 0.5), 49, 0.0, 1.0, 2)
    big = est.make_cutoff(CylinderSpec(O, 1.0, 0.8, 1.0), g).norms["grad0_eta"]
    small = est.make_cutoff(CylinderSpec(O, 1.0, 0.4, 1.0), g).norms["grad0_eta"]
    assert 1.7 <= small / big <= 2.3


def test_margin_errors():
    g = _grid()
    with pytest.raises(est.MarginError):
        est.make_cutoff(CylinderSpec(O, T, 0.9, 0.01), g)
    with pytest.raises(est.MarginError):
        est.make_cutoff(CylinderSpec(O, T, 0.5, 1.0), g)  # starts before t = 0
    with pytest.raises(est.MarginError):
        est.make_cutoff(CylinderSpec([0.5, 0.0, 0.0], T, 0.5, 0.01), g)


def test_cylinder_extent_contains_ball():
    c = CylinderSpec([0.3, -0.2, 0.1], 0.0, 0.5)
    lo, hi = est.cylinder_extent(c)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1.5, 1.5, size=(200_000, 3))
    inside = pts[np.asarray(est.gauge_distance(pts, c.center)) < c.r]
    assert inside.size
    assert np.all(inside >= lo) and np.all(inside <= hi)


EXPECTED_EXPONENTS = {
    # hand-coded from the inequalities, p = 3, beta = 1
    "z_caccioppoli": {"lhs_weight": 0.5, "lhs_zu": 1, "lhs_eta": 5, "grad_weight": 0.5, "grad_zu": 3,
                      "grad_eta": 3, "time_zu": 3, "time_eta": 4},
    "horizontal_caccioppoli": {"sup_weight": 1.5, "sup_factor": 1 / 3, "hess_weight": 1.0, "grad_weight": 2.0,
                               "time_weight": 1.5, "time_factor": 1 / 3, "vertical_weight": 1.0,
                               "vertical_factor": 16},
    "interpolation": {"lhs": 4, "R_weight": 2, "M_weight": 0.5, "M_zu": 1, "M_eta": 5, "I2_R": 0.25,
                      "I2_L": 0.75, "I1_M": 0.5, "I1_R": 0.125, "I1_L": 0.375, "prefactor": 4},
    "z_integrability": {"lhs_root": 0.25, "grad_R": 0.25, "time_norm": 0.5, "time_support": 0.125,
                        "time_R": 0.125, "prefactor": 4},
    "main_caccioppoli": {"sup_weight": 1.5, "hess_weight": 1.0, "R_weight": 2.0, "time_support": 0.25,
                         "time_R": 0.75, "prefactor": 4 ** 7},
    "time_derivative": {"lhs": 3, "grad_M": 4, "time_M": 3, "outer": 1.5},
}


@pytest.mark.parametrize("name", est.REPORT_NAMES)
def test_exponent_table(name):
    got = est.exponents(name, 3.0, 1.0)
    assert set(got) == set(EXPECTED_EXPONENTS[name])
    for k, v in EXPECTED_EXPONENTS[name].items():
        assert got[k] == pytest.approx(v, rel=1e-15), k


def test_exponent_identities_at_range_ends():
    assert est.exponents("interpolation", 4.0, 2.0)["I1_R"] == 0.0
    assert est.exponents("z_integrability", 2.0, 1.0)["time_support"] == 0.0
    assert est.exponents("main_caccioppoli", 2.0, 0.0)["time_support"] == 0.0
    with pytest.raises(est.EstimateError):
        est.exponents("nope", 3.0, 0.0)


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_reports_on_bump(bump_sol, beta):
    cut = est.make_cutoff(_cyl(), bump_sol.grid)
    for rep in est.run_reports(bump_sol, cut, betas=(beta,)):
        assert rep.lhs > 0 and np.isfinite(rep.lhs)
        assert all(v >= 0 and np.isfinite(v) for v in rep.rhs_terms.values())
        assert rep.empirical_C == pytest.approx(rep.lhs / rep.rhs_total)
        assert rep.holds_with(rep.normalized_C)
        assert rep.params["p"] == 3.0 and rep.params["cylinder"]["r"] == 0.7


def test_holder_bounds_hold_discretely(bump_sol):
    cut = est.make_cutoff(_cyl(), bump_sol.grid)
    for beta in (0.0, 1.0, 2.0):
        it = est.interpolation_report(bump_sol, cut, beta).intermediates
        assert it["I1"] <= it["I1_bound"] * (1 + 1e-12)
        assert it["I2"] <= it["I2_bound"] * (1 + 1e-12)


def test_p4_interpolation_drops_R(bump_sol):
    g = bump_sol.grid
    sol4 = sv.solve(sv.ProblemSpec(g, fx.p_laplacian(1, 4, 0.5), bump_sol.u[0]))
    it = est.interpolation_report(sol4, est.make_cutoff(_cyl(), g), 0.0).intermediates
    assert it["I1_bound"] == pytest.approx(8 * it["M"] ** 0.5 * it["L"] ** 0.5, rel=1e-12)


def test_steady_linear_zero_cases(linear_sol):
    cut = est.make_cutoff(_cyl(), linear_sol.grid)
    for beta in (0.0, 1.0):
        for name in ("z_caccioppoli", "interpolation", "z_integrability", "time_derivative"):
            assert est.REPORTS[name](linear_sol, cut, beta).lhs == 0.0


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_steady_linear_caccioppoli_oracle(linear_sol, beta):
    g = linear_sol.grid
    cut = est.make_cutoff(_cyl(), g)
    sup_eta2 = np.max(calc.integrate_space(g, cut.eta ** 2))
    hc = est.horizontal_caccioppoli_report(linear_sol, cut, beta)
    assert hc.intermediates["sup_term"] == pytest.approx(sup_eta2 / (beta + 2), rel=1e-12)
    assert hc.intermediates["hessian_term"] <= 1e-20
    assert hc.rhs_terms["vertical"] == 0.0
    assert hc.lhs / hc.rhs_terms["cutoff_space"] < np.inf
    mc = est.main_caccioppoli_report(linear_sol, cut, beta)
    assert mc.lhs == pytest.approx(sup_eta2, rel=1e-12)


def test_zero_solution_delta_powers(zero_sol):
    g = zero_sol.grid
    d = 0.5
    cut = est.make_cutoff(_cyl(), g)
    eta, times = cut.eta, zero_sol.times
    integ = lambda f: calc.integrate_spacetime(g, f, times=times)  # noqa: E731
    geta2 = np.sum(calc.horizontal_gradient(g, eta) ** 2, axis=0)
    zeta = np.abs(calc.apply_Z(g, eta))
    teta = np.abs(calc.time_derivative(eta, times))
    for beta in (0.0, 1.0):
        hc = est.horizontal_caccioppoli_report(zero_sol, cut, beta)
        sup = d ** ((beta + 2) / 2) * np.max(calc.integrate_space(g, eta ** 2)) / (beta + 2)
        assert hc.lhs == pytest.approx(sup, rel=1e-8)
        assert hc.rhs_terms["cutoff_space"] == pytest.approx(d ** ((3 + beta) / 2) * integ(geta2 + zeta * eta), rel=1e-8)
        assert hc.rhs_terms["cutoff_time"] == pytest.approx(d ** ((beta + 2) / 2) * integ(teta * eta) / (beta + 2), rel=1e-8)
        assert hc.rhs_terms["vertical"] == 0.0
        R = d ** ((3 + beta) / 2) * cut.support_volume
        ip = est.interpolation_report(zero_sol, cut, beta)
        assert ip.lhs == 0.0 and ip.rhs_terms["M"] == 0.0
        assert ip.intermediates["R"] == pytest.approx(R, rel=1e-8)
        assert est.z_caccioppoli_report(zero_sol, cut, beta).lhs == 0.0
        assert est.z_integrability_report(zero_sol, cut, beta).lhs == 0.0
        td = est.time_derivative_report(zero_sol, cut, beta)
        assert td.lhs == 0.0 and td.intermediates["M"] == pytest.approx(d ** 0.5, rel=1e-12)


def test_zero_cutoff_gives_zero_reports(bump_sol):
    cut = est.zero_cutoff(_cyl(), bump_sol.grid)
    for rep in est.run_reports(bump_sol, cut, betas=(0.0, 1.0)):
        assert rep.lhs == 0.0
        assert all(v == 0.0 for v in rep.rhs_terms.values())
        assert rep.empirical_C == 0.0


def test_precondition_errors(bump_sol):
    cut = est.make_cutoff(_cyl(), bump_sol.grid)
    with pytest.raises(est.EstimateError):
        est.z_caccioppoli_report(bump_sol, cut, -1.0)
    g = bump_sol.grid
    sol5 = sv.solve(sv.ProblemSpec(g.with_times(0.0, 0.002, 2), fx.p_laplacian(1, 5, 0.5), bump_sol.u[0]))
    cut5 = est.make_cutoff(CylinderSpec(O, 0.002, 0.7, 0.002 / 0.49), sol5.grid)
    for fn in (est.interpolation_report, est.z_integrability_report, est.main_caccioppoli_report):
        with pytest.raises(est.EstimateError):
            fn(sol5, cut5, 0.0)
    assert est.z_caccioppoli_report(sol5, cut5, 0.0).lhs > 0
    with pytest.raises(est.EstimateError):
        est.run_reports(bump_sol, cut, names=("bogus",))


def test_non_finite_integrand(bump_sol):
    u = bump_sol.u.copy()
    u[3, 8, 8, 8] = np.nan
    broken = sv.Solution(bump_sol.problem, u, bump_sol.times)
    cut = est.make_cutoff(_cyl(), bump_sol.grid)
    with pytest.raises(est.EstimateError):
        est.time_derivative_report(broken, cut, 0.0)


def test_empirical_constant_conventions():
    assert est.empirical_constant(0.0, {"a": 0.0}) == 0.0
    assert est.empirical_constant(1.0, {"a": 0.0}) == np.inf
    assert est.empirical_constant(1.0, {"a": 1.0, "b": 3.0}) == 0.25
