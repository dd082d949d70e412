import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nappal import build_sharing
from nappal.bregman import BregmanKernel
from nappal.exceptions import ConfigurationError
from nappal.prox import (Box, Regularizer, prox_separable, register_block_solver,
                         solve_u_subproblem)
from oracles.prox_oracle import objective, penalty, prox_oracle

from conftest import make_toy

ALL = [Regularizer.zero(), Regularizer.l1(0.7), Regularizer.scad(0.5, 3.7),
       Regularizer.mcp(1.0, 2.0), Regularizer.capped_l1(0.8, 1.2)]


def test_soft_threshold():
    assert prox_separable(Regularizer.l1(1.0), 1.0, 1.5) == 0.5
    assert prox_separable(Regularizer.l1(1.0), 1.0, -1.5) == -0.5


@pytest.mark.parametrize("reg", ALL, ids=lambda r: r.kind)
def test_zero_input_maps_to_zero(reg):
    assert prox_separable(reg, 0.5, 0.0) == 0.0


def test_mcp_flat_region():
    assert prox_separable(Regularizer.mcp(1.0, 2.0), 1.0, 3.0) == 3.0


def test_l1_with_box():
    assert prox_separable(Regularizer.l1(1.0), 1.0, 1.5, (0.0, 0.25)) == 0.25


def test_vectorized_matches_scalar():
    reg = Regularizer.scad(0.4, 3.0)
    x = np.linspace(-3, 3, 41)
    t = np.full_like(x, 0.6)
    vec = prox_separable(reg, t, x, Box.uniform(41, -2, 2.5))
    assert vec.tolist() == [prox_separable(reg, 0.6, xi, (-2, 2.5)) for xi in x]


def test_guards():
    with pytest.raises(ValueError):
        prox_separable(Regularizer.mcp(1.0, 2.0), 2.0, 1.0)
    with pytest.raises(ValueError):
        prox_separable(Regularizer.scad(1.0, 3.0), 2.0, 1.0)
    with pytest.raises(ValueError):
        prox_separable(Regularizer.l1(1.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        prox_separable(Regularizer.l1(1.0), 1.0, 1.0, (1.0, 0.0))


@pytest.mark.parametrize("kind,lam,param", [
    ("nope", 1.0, None), ("l1", -1.0, None), ("scad", 1.0, 2.0), ("mcp", 1.0, 0.0),
    ("capped_l1", 1.0, -1.0)])
def test_invalid_regularizers(kind, lam, param):
    with pytest.raises(ValueError):
        Regularizer(kind, lam, param)


def test_capped_l1_tie_breaks_toward_zero():
    # lam = alpha = 1, t = 2, x = 2: f(0) = x^2 / (2t) = 1 and f(x) = lam * alpha = 1
    reg = Regularizer.capped_l1(1.0, 1.0)
    assert prox_separable(reg, 2.0, 2.0) == 0.0
    assert prox_separable(reg, 2.0, -2.0) == 0.0


@pytest.mark.parametrize("reg", ALL, ids=lambda r: r.kind)
def test_penalty_values_match_oracle(reg):
    for z in np.linspace(-4, 4, 81):
        assert reg.value(z) == pytest.approx(penalty(reg.kind, reg.lam, reg.param, z),
                                             abs=1e-14)


def _draw(rng, kind):
    lam = rng.uniform(0.0, 2.0)
    if kind == "scad":
        param = rng.uniform(2.1, 6.0)
        t = rng.uniform(1e-3, 0.95) * (param - 1)
    elif kind == "mcp":
        param = rng.uniform(0.2, 4.0)
        t = rng.uniform(1e-3, 0.95) * param
    elif kind == "capped_l1":
        param = rng.uniform(0.05, 3.0)
        t = rng.uniform(1e-3, 3.0)
    else:
        param, t = None, rng.uniform(1e-3, 3.0)
    x = rng.uniform(-5, 5)
    if rng.uniform() < 0.5:
        lo, hi = -math.inf, math.inf
    else:
        lo, hi = np.sort(rng.uniform(-5, 5, size=2))
    return lam, param, t, x, lo, hi


def oracle_match(kind, draws, seed):
    """Count draws where the closed form misses the grid+golden oracle."""
    rng = np.random.default_rng(seed)
    misses = []
    for _ in range(draws):
        lam, param, t, x, lo, hi = _draw(rng, kind)
        reg = Regularizer(kind, lam, param)
        z = prox_separable(reg, t, x, (lo, hi))
        zo, fo = prox_oracle(kind, lam, param, t, x, lo, hi, points=801)
        fz = objective(kind, lam, param, t, x, z)
        if not (abs(z - zo) <= 1e-6 or fz <= fo + 1e-10) or not lo <= z <= hi:
            misses.append((lam, param, t, x, lo, hi, z, zo, fz, fo))
    return misses


@pytest.mark.parametrize("kind", ["zero", "l1", "scad", "mcp", "capped_l1"])
def test_oracle_equivalence_sample(kind):
    assert oracle_match(kind, 100, seed=11) == []


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(ALL), st.floats(-6, 6), st.floats(0.01, 0.9))
def test_prox_is_global_minimizer_on_grid(reg, x, t):
    z = prox_separable(reg, t, x)
    grid = np.linspace(-7, 7, 2801)
    f = (grid - x) ** 2 / (2 * t) + reg.value(grid)
    fz = (z - x) ** 2 / (2 * t) + reg.value(z)
    assert fz <= f.min() + 1e-12


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(ALL), st.floats(-6, 6), st.floats(0.01, 0.9))
def test_prox_odd_symmetry_and_shrinkage(reg, x, t):
    z = prox_separable(reg, t, x)
    assert prox_separable(reg, t, -x) == -z
    assert abs(z) <= abs(x) + 1e-15
    assert z * x >= 0


# u-subproblem

def test_u_subproblem_example():
    spec = make_toy()
    spec.regularizers = (Regularizer.l1(1.0),)
    grad_lin = np.array([2.0 + 1.0 * 3.0])  # grad_u G + dOmega^T q
    out = solve_u_subproblem(spec, BregmanKernel.euclidean(), np.array([1.0]), grad_lin, 0.1)
    assert out[0] == pytest.approx(0.4, abs=1e-15)


def test_u_subproblem_fixed_point():
    spec = make_toy()
    out = solve_u_subproblem(spec, BregmanKernel.euclidean(), np.array([0.7]), np.zeros(1), 0.3)
    assert out.tolist() == [0.7]


def test_u_subproblem_box_projection():
    spec = make_toy()
    spec.regularizers = (Regularizer.l1(1.0),)
    spec.boxes = (Box([1.0], [2.0]),)
    out = solve_u_subproblem(spec, BregmanKernel.euclidean(), np.zeros(1), np.zeros(1), 0.5)
    assert out.tolist() == [1.0]


def test_u_subproblem_diagonal_kernel_scales_step():
    spec = make_toy()
    spec.regularizers = (Regularizer.l1(1.0),)
    K = BregmanKernel.diagonal([2.0])
    out = solve_u_subproblem(spec, K, np.array([1.0]), np.array([1.0]), 0.2)
    # t = 0.2 / 2, x = 1 - 0.1, soft-threshold by 0.1
    assert out[0] == pytest.approx(0.8)


def test_parallel_blocks_bit_identical():
    from concurrent.futures import ThreadPoolExecutor
    spec = build_sharing(seed=4)
    rng = np.random.default_rng(0)
    u, g = rng.uniform(-2, 2, spec.n), rng.standard_normal(spec.n)
    K = BregmanKernel.euclidean()
    serial = solve_u_subproblem(spec, K, u, g, 0.05)
    with ThreadPoolExecutor(8) as ex:
        par = solve_u_subproblem(spec, K, u, g, 0.05, executor=ex)
    assert serial.tobytes() == par.tobytes()


def test_block_solver_identity_leaves_block():
    spec = build_sharing(seed=1)
    register_block_solver(spec, 1, lambda ub, gb, q, eps, w: ub)
    u = spec.u0.copy()
    out = solve_u_subproblem(spec, BregmanKernel.euclidean(), u, np.ones(spec.n), 0.01)
    sl = spec.block_slices[1]
    assert out[sl].tolist() == u[sl].tolist()
    assert out[spec.block_slices[0]].tolist() != u[spec.block_slices[0]].tolist()


def test_block_solver_closed_form_equivalent_run():
    from nappal.solver import SolverConfig, solve
    spec = build_sharing(seed=2)
    ref = solve(spec, SolverConfig(max_iters=200)).trace.to_csv()
    spec2 = build_sharing(seed=2)
    for i, (reg, box) in enumerate(zip(spec2.regularizers, spec2.boxes)):
        def closed(ub, gb, q, eps, w, reg=reg, box=box):
            t = eps / w
            return prox_separable(reg, t, ub - t * gb, box)
        register_block_solver(spec2, i, closed)
    assert solve(spec2, SolverConfig(max_iters=200)).trace.to_csv() == ref


def test_block_solver_replacement_warns():
    spec = make_toy()
    register_block_solver(spec, 0, lambda *a: a[0])
    with pytest.warns(UserWarning):
        register_block_solver(spec, 0, lambda *a: a[0])
    with pytest.raises(IndexError):
        register_block_solver(spec, 3, lambda *a: a[0])


def test_phi_without_solver_is_config_error():
    spec = make_toy()
    spec.phi = lambda u: 0.0 * u
    spec.phi_jac = lambda u: np.zeros((1, 1))
    with pytest.raises(ConfigurationError):
        solve_u_subproblem(spec, BregmanKernel.euclidean(), np.zeros(1), np.zeros(1), 0.1)


def test_regularizer_roundtrip():
    for reg in ALL:
        assert Regularizer.from_dict(reg.to_dict()) == reg
    box = Box.uniform(3, -1, 2)
    back = Box.from_dict(box.to_dict())
    assert back.lower.tolist() == box.lower.tolist() and back.upper.tolist() == box.upper.tolist()
