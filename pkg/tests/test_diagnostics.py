import math

import numpy as np
import pytest

from nappal import build_erm, build_sharing, convex_qp_params
from nappal import diagnostics as dg
from nappal.bregman import BregmanKernel
from nappal.exceptions import ConfigurationError
from nappal.model import Iterate, ProblemSpec
from nappal.solver import SolverConfig, solve
from nappal.trace import Trace, TraceRecord

from conftest import make_toy

# exact values from tests/oracles/derive_constants.py
C1, C2, C4, C3 = 84.7, 2.8, 1.2, 1 / 30
H_C1 = 664.8


def test_potential_constants_c1(c1spec):
    c = dg.potential_constants(c1spec, 10.0)
    assert (c.c1, c.c2) == (pytest.approx(C1, rel=1e-14), pytest.approx(C2, rel=1e-14))
    assert c.c4 == pytest.approx(C4, rel=1e-13)
    assert c.c3 == pytest.approx(C3, rel=1e-14)


def test_potential_constants_at_bound_rejected(c1spec):
    with pytest.raises(ConfigurationError, match="sqrt\\(57\\)"):
        dg.potential_constants(c1spec, 1 + math.sqrt(57))


def test_potential_constants_zero_moduli():
    toy = make_toy()
    toy.L_theta = 0.0
    assert dg.potential_constants(toy, 1.0).c1 == 0.0


def test_potential():
    consts = dg.PotentialConstants(2.0, 1.0, 0.1, 0.5)
    assert dg.potential(4.0, 1.0, 0.0, 2.0, consts, 2.0) == 7.0
    assert dg.potential(4.0, 0.0, 0.0, 0.0, consts, 2.0) == 4.0
    assert dg.potential(4.0, 0.0, 0.0, 6.0, consts, 2.0) - dg.potential(
        4.0, 0.0, 0.0, 3.0, consts, 2.0) == pytest.approx(0.25 * (36 - 9))


def test_certificate_h_c1(c1spec):
    delta = 5 / 1607
    assert dg.certificate_h(c1spec, 10.0, 0.5, 5.0, delta, 1.0) == pytest.approx(H_C1, rel=1e-13)


def test_certificate_h_branches():
    toy = make_toy()
    toy.L_theta = 0.0
    toy.L_H = 0.7
    # huge delta kills branch 1; branch 3 = ||B|| + 1/gamma = 1.5
    assert dg.certificate_h(toy, 2.0, 0.5, 0.0, 1e12, 1.0) == pytest.approx(1.5)
    hs = [dg.certificate_h(make_toy(), g, 0.5, 1.0, 0.01, 1.0) for g in (1, 2, 4, 8)]
    assert hs == sorted(hs)


def test_residual_xi_fixed_point(toy):
    w = Iterate(1.0, 1.0, 0.0)
    xi = dg.residual_xi(toy, BregmanKernel.euclidean(), 2.0, w, w, 0.1)
    assert all(not x.any() for x in xi)


def test_residual_xi_p_part_is_residual():
    spec = build_sharing(seed=1)
    from nappal.solver import initial_state, iterate, make_context
    config = SolverConfig()
    ctx = make_context(spec, config)
    s0 = initial_state(spec, config, context=ctx)
    s1, info = iterate(spec, config, s0, ctx)
    xi_u, xi_v, xi_p = dg.residual_xi(spec, config.kernel, ctx.gamma, s0.w, s1.w, info.eps)
    assert np.allclose(xi_p, spec.residual(s1.w.u, s1.w.v), rtol=1e-12, atol=1e-15)
    assert math.sqrt(xi_u @ xi_u + xi_v @ xi_v + xi_p @ xi_p) == pytest.approx(
        info.cert.xi_norm, rel=1e-12)


def test_xi_is_a_subgradient_when_smooth():
    # J = 0, free box: dL_gamma is the gradient, so xi must equal it
    spec = build_sharing(convex_qp_params(seed=1))
    from nappal.solver import initial_state, iterate, make_context
    config = SolverConfig()
    ctx = make_context(spec, config)
    s = initial_state(spec, config, context=ctx)
    for _ in range(3):
        s, info = iterate(spec, config, s, ctx)
    prev = s
    s, info = iterate(spec, config, prev, ctx)
    xi = dg.residual_xi(spec, config.kernel, ctx.gamma, prev.w, s.w, info.eps)
    u, v, p, g = s.w.u, s.w.v, s.w.p, ctx.gamma
    r = spec.residual(u, v)
    _, gv = spec.G_grad(u, v)
    J = spec.theta_jac(u)
    assert np.allclose(xi[0], J.T @ (p + g * r), atol=1e-10)
    assert np.allclose(xi[1], gv + spec.B.T @ (p + g * r), atol=1e-10)
    assert np.allclose(xi[2], r, atol=1e-14)


def test_is_epsilon_stationary():
    c0 = dg.CertificateRecord(1.0, 1.0, 0.0)
    c5 = dg.CertificateRecord(1.0, 1.0, 0.5)
    assert dg.is_epsilon_stationary(c0, 0.0)
    assert not dg.is_epsilon_stationary(c5, 0.1)
    assert dg.is_epsilon_stationary(c5, 0.5)


def _synthetic(values):
    return Trace([TraceRecord(k=k, L_gamma=v, Lambda=v, feas_residual=0.0, du_norm=1.0 / (k + 1))
                  for k, v in enumerate(values)])


def test_estimate_rate_geometric():
    est = dg.estimate_rate(_synthetic([1.0 + 0.5 ** k for k in range(61)]))
    assert est.alpha == pytest.approx(0.5, rel=1e-3)
    assert est.r_squared > 0.999 and est.geometric


def test_estimate_rate_sublinear_flagged():
    est = dg.estimate_rate(_synthetic([1.0 / k for k in range(1, 2001)]))
    assert not est.geometric
    assert est.r_squared < 0.99


def test_estimate_rate_constant_below_floor():
    est = dg.estimate_rate(_synthetic([3.0] * 80))
    assert est.below_floor and not est.geometric


def test_estimate_rate_short_trace():
    with pytest.raises(ValueError):
        dg.estimate_rate(_synthetic([1.0] * 49))


def test_sqrt_k_signature():
    s = dg.sqrt_k_signature([9.0, 1.0, 0.5, 0.6, 0.1])
    assert s.tolist() == pytest.approx([1.0, math.sqrt(2) * 0.5, math.sqrt(3) * 0.5, 0.2])
    assert dg.nonincreasing_within([1.0, 1.04, 0.9, 0.94])
    assert not dg.nonincreasing_within([1.0, 1.06])


def _quad_spec(L_G):
    return ProblemSpec(
        blocks=(1,), B=np.array([[-1.0]]), omega=lambda u: 2.0 * u,
        omega_jac=lambda u: np.array([[2.0]]), L_omega_components=[0.0], L_theta=2.0,
        G=lambda u, v: 0.5 * (u[0] ** 2 + v[0] ** 2),
        grad_G=lambda u, v: (u.copy(), v.copy()), L_G=L_G)


def test_descent_check_exact_quadratic():
    rep = dg.check_descent_inequalities(_quad_spec(1.0), sample_count=300)
    assert rep.ok, str(rep)
    assert abs(rep["G joint descent"].value) < 1e-12
    # linear Omega: linearization is exact
    assert abs(rep["Omega descent"].value) < 1e-12


def test_descent_check_halved_constant():
    rep = dg.check_descent_inequalities(_quad_spec(0.5), sample_count=300, seed=3)
    assert rep["G joint descent"].status == "fail"
    # violation is exactly 0.25 ||d||^2; reproduce the worst sampled pair
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(300):
        u, u2, v, v2 = (rng.uniform(-5, 5, size=1) for _ in range(4))
        worst = max(worst, 0.25 * float((u - u2) @ (u - u2) + (v - v2) @ (v - v2)))
        rng.standard_normal(1)  # the unit direction drawn for the Omega check
    assert rep["G joint descent"].value == pytest.approx(worst, rel=1e-9)


@pytest.mark.parametrize("spec", [build_sharing(seed=1), build_erm(seed=1),
                                  build_sharing(convex_qp_params(seed=0))],
                         ids=["sharing", "erm", "qp"])
def test_shipped_instances_pass_checks(spec):
    assert dg.check_descent_inequalities(spec, sample_count=300).ok
    assert dg.finite_difference_check(spec, n_points=20).ok


def test_finite_difference_catches_wrong_gradient():
    spec = build_erm(seed=1)
    spec.grad_H = lambda v: np.zeros_like(v)
    rep = dg.finite_difference_check(spec, n_points=5)
    assert rep["finite differences: grad H"].status == "fail"


def test_run_level_invariants():
    spec = build_sharing(seed=2)
    res = solve(spec, SolverConfig(max_iters=2000))
    tr = res.trace
    assert dg.trace_invariant_violations(tr) == {k: 0 for k in
                                                 ("descent", "certificate", "dual_identity", "tau")}
    lhs, rhs = dg.telescoping_budget(tr, res.constants.c3)
    assert lhs <= rhs + 1e-6
    # Lambda lower bound at the final point
    w = res.final
    lb = dg.lambda_lower_bound(spec, res.gamma, w.u, w.v)
    assert tr["Lambda"][-1] >= lb - 1e-6 * (1 + abs(lb))


def test_injected_descent_fault_counted():
    res = solve(build_erm(seed=1), SolverConfig(max_iters=200))
    recs = list(res.trace)
    recs[100].Lambda += 1.0
    counts = dg.trace_invariant_violations(Trace(recs))
    assert counts["descent"] == 1
