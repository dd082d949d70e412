"""NAPP-AL iteration engine.

One iteration from ``w^k = (u^k, v^k, p^k)``:

1. ``q^k = p^k + gamma (Theta(u^k) + B v^k)``
2. step ceiling ``delta_k`` from the Lipschitz moduli and ``||q^k||``;
   step ``eps^k`` in ``[sigma delta_k, delta_k]``
3. ``u^{k+1}``: Bregman-proximal step on the linearized augmented
   Lagrangian, blockwise (Jacobi) and exact
4. ``v^{k+1} = v^k - (1/gamma) (B^T B)^{-1} (grad_v G + grad H + B^T q^k)``
5. ``p^{k+1} = p^k + gamma (Theta(u^{k+1}) + B v^{k+1})``
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
import time

import numpy as np

from . import diagnostics as dg
from .bregman import BregmanKernel
from .exceptions import ConfigurationError, NumericalBreakdown
from .linalg import image_preimage, solve_gram
from .model import Iterate, validate_problem
from .prox import solve_u_subproblem
from .trace import Trace, TraceRecord

__all__ = [
    "BestIterate",
    "SolveResult",
    "SolverConfig",
    "SolverState",
    "compute_q",
    "default_gamma",
    "initial_state",
    "iterate",
    "solve",
    "step_size_delta",
    "update_p",
    "update_v",
]

logger = logging.getLogger(__name__)

EPS_RULES = ("upper", "lower", "fraction")
CONVERGED, MAX_ITERS, BREAKDOWN = "converged", "max_iters", "breakdown"


@dataclass
class SolverConfig:
    """Solver parameters.

    ``gamma=None`` selects ``default_gamma(spec, gamma_safety)``. ``eps_rule``
    picks ``eps^k = delta_k`` ("upper"), ``sigma delta_k`` ("lower") or
    ``eps_fraction * delta_k`` ("fraction", with the fraction in
    ``[sigma, 1]``). ``p0`` is "consistent" (default; see ``initial_state``)
    or "zero". ``early_stop=False`` always runs the full ``max_iters``.
    """

    gamma: float | None = None
    gamma_safety: float = 1.05
    sigma: float = 0.5
    eps_rule: str = "upper"
    eps_fraction: float = 1.0
    max_iters: int = 20_000
    feas_tol: float = 1e-6
    cert_tol: float = 1e-5
    kernel: BregmanKernel = field(default_factory=BregmanKernel.euclidean)
    workers: int = 1
    seed: int | None = None
    trace_stride: int = 1
    record_wall_time: bool = False
    p0: str = "consistent"
    diagnostics: bool = True
    early_stop: bool = True

    def validate(self):
        if not 0 < self.sigma < 1:
            raise ConfigurationError("sigma must lie in (0, 1)")
        if self.eps_rule not in EPS_RULES:
            raise ConfigurationError(f"eps_rule must be one of {EPS_RULES}")
        if self.eps_rule == "fraction" and not self.sigma <= self.eps_fraction <= 1:
            raise ConfigurationError("eps_fraction must lie in [sigma, 1]")
        if self.feas_tol <= 0 or self.cert_tol <= 0:
            raise ConfigurationError("tolerances must be > 0")
        if self.max_iters < 0 or self.workers < 1 or self.trace_stride < 1:
            raise ConfigurationError("max_iters >= 0, workers >= 1, trace_stride >= 1")
        if self.gamma_safety < 1:
            raise ConfigurationError("gamma_safety must be >= 1")
        if self.p0 not in ("consistent", "zero"):
            raise ConfigurationError("p0 must be 'consistent' or 'zero'")


def default_gamma(spec, safety=1.05):
    """``safety * (sqrt(57)+1) / (2 lambda_min(B^T B)) * (L_G + L_H)``.

    Falls back to ``safety`` when ``L_G + L_H = 0``.
    """
    if safety < 1:
        raise ValueError("safety must be >= 1")
    if spec.L_G + spec.L_H == 0:
        return float(safety)
    return safety * dg.gamma_lower_bound(spec)


def step_size_delta(spec, gamma, q_norm, beta):
    """Step ceiling ``delta_k`` (strictly positive)."""
    bn, lam, L0, LG = spec.gram.norm, spec.gram.lam_min, spec.L_theta, spec.L_G
    denom = (LG + q_norm * spec.L_omega + gamma * L0 ** 2
             + 14 * gamma * bn ** 2 * L0 ** 2 / lam
             + 14 * (LG + gamma * bn * L0) ** 2 / (gamma * lam) + 1.0)
    return beta / denom


def compute_q(spec, w, gamma):
    """``q = p + gamma (Theta(u) + B v)``; also cached on ``w``."""
    w.q = w.p + gamma * spec.residual(w.u, w.v)
    return w.q


def update_v(spec, F, v_k, grad_v_sum, q_k, gamma):
    """Minimizer of the linearized quadratic v-subproblem."""
    return v_k - solve_gram(F, grad_v_sum + spec.B.T @ q_k) / gamma


def update_p(spec, p_k, u_next, v_next, gamma):
    return p_k + gamma * spec.residual(u_next, v_next)


@dataclass
class SolverState:
    """Iterate plus cached evaluations and the increments that produced it."""

    k: int
    w: Iterate
    point: dg.PointData
    L_gamma: float
    Lambda: float
    du: float = 0.0
    dv: float = 0.0
    dp: float = 0.0

    @property
    def dw(self):
        return math.sqrt(self.du ** 2 + self.dv ** 2 + self.dp ** 2)


@dataclass
class StepInfo:
    """Everything computed during one iteration ``k -> k+1``."""

    q_norm: float
    delta: float
    eps: float
    h: float
    cert: dg.CertificateRecord | None
    tau: float
    dual_res: float
    dual_ok: bool
    dual_step_ok: bool
    descent_margin: float
    descent_ok: bool
    eps_ok: bool


@dataclass
class Context:
    """Quantities fixed for a run."""

    spec: object
    config: SolverConfig
    gamma: float
    consts: dg.PotentialConstants
    executor: object = None

    @property
    def kernel(self):
        return self.config.kernel


def _finite(*arrays):
    return all(np.isfinite(a).all() for a in arrays)


def make_context(spec, config, executor=None):
    config.validate()
    config.kernel.coordinate_weights(spec.n)
    gamma = default_gamma(spec, config.gamma_safety) if config.gamma is None else float(config.gamma)
    consts = dg.potential_constants(spec, gamma)
    return Context(spec, config, gamma, consts, executor)


def _state_at(ctx, k, w, du=0.0, dv=0.0, dp=0.0):
    spec = ctx.spec
    point = dg.PointData.evaluate(spec, w.u, w.v, w.p)
    r = point.residual(spec.B)
    Lg = (spec.objective(w.u, w.v) + float(w.p @ r) + 0.5 * ctx.gamma * float(r @ r))
    Lam = dg.potential(Lg, du, dv, dp, ctx.consts, ctx.gamma)
    return SolverState(k, w, point, Lg, Lam, du, dv, dp)


def initial_state(spec, config, u0=None, context=None):
    """Starting point ``w^0``.

    ``u^0`` is taken from the argument, the problem, or drawn with
    ``config.seed`` inside the box. ``v^0`` solves ``B v = -Theta(u^0)`` in
    the least-squares sense, so ``w^0`` is feasible under Im(Theta) in Im(B).
    With ``p0="consistent"``, ``p^0 = -B (B^T B)^{-1} (grad_v G + grad H)``
    at ``(u^0, v^0)``: it lies in Im(B) and satisfies the dual relation
    ``B^T p^0 = -(grad_v G + grad H)`` that later iterates satisfy by
    construction. ``p0="zero"`` starts from the origin instead.
    """
    ctx = context or make_context(spec, config)
    if u0 is None:
        u0 = spec.u0
    if u0 is None:
        rng = np.random.default_rng(config.seed)
        box = spec.box
        lo = np.where(np.isfinite(box.lower), box.lower, -1.0)
        hi = np.where(np.isfinite(box.upper), box.upper, 1.0)
        u0 = rng.uniform(np.minimum(lo, hi), np.maximum(lo, hi))
    u0 = spec.box.project(np.asarray(u0, dtype=float))
    pre = image_preimage(spec.gram, spec.B, -spec.theta(u0))
    if pre.breach:
        logger.warning("initial point: -Theta(u0) is not in Im(B) (residual %.3e)",
                       pre.residual)
    v0 = pre.v
    if config.p0 == "zero":
        p0 = np.zeros(spec.m)
    else:
        _, gv = spec.G_grad(u0, v0)
        p0 = -spec.B @ solve_gram(spec.gram, gv + spec.H_grad(v0))
    return _state_at(ctx, 0, Iterate(u0, v0, p0))


def _choose_eps(config, delta):
    if config.eps_rule == "upper":
        return delta
    if config.eps_rule == "lower":
        return config.sigma * delta
    return config.eps_fraction * delta


def _step(ctx, state):
    spec, config, gamma = ctx.spec, ctx.config, ctx.gamma
    K = config.kernel
    a = state.point
    w = state.w

    q = w.p + gamma * a.residual(spec.B)
    w.q = q
    q_norm = float(np.linalg.norm(q))
    delta = step_size_delta(spec, gamma, q_norm, K.beta)
    eps = _choose_eps(config, delta)

    grad_lin = a.grad_Gu + a.jac_omega.T @ q
    u_next = solve_u_subproblem(spec, K, w.u, grad_lin, eps, q=q, executor=ctx.executor)
    v_next = update_v(spec, spec.gram, w.v, a.grad_Gv + a.grad_H, q, gamma)
    theta_next = spec.theta(u_next)
    p_next = w.p + gamma * (theta_next + spec.B @ v_next)
    if not _finite(u_next, v_next, p_next):
        raise NumericalBreakdown(f"non-finite iterate at k={state.k + 1}")

    du = float(np.linalg.norm(u_next - w.u))
    dv = float(np.linalg.norm(v_next - w.v))
    dp = float(np.linalg.norm(p_next - w.p))
    new = _state_at(ctx, state.k + 1, Iterate(u_next, v_next, p_next), du, dv, dp)
    if not (np.isfinite(new.L_gamma) and _finite(new.point.jac_omega, new.point.grad_Gu,
                                                  new.point.grad_Gv, new.point.grad_H)):
        raise NumericalBreakdown(f"non-finite evaluation at k={state.k + 1}")

    h = dg.certificate_h(spec, gamma, config.sigma, q_norm, delta, K.L_K)
    tol = dg.INVARIANT_TOL
    cert = None
    dual_res, dual_ok, step_ok, tau = 0.0, True, True, 0.0
    if config.diagnostics:
        b = new.point
        xi = dg.xi_from_points(spec, K, gamma, eps, q, a, b)
        cert = dg.CertificateRecord.from_parts(h, new.dw, *xi)
        B = spec.B
        dual = (B.T @ p_next + a.grad_Gv + a.grad_H - gamma * (B.T @ (b.theta - a.theta)))
        dual_res = float(np.linalg.norm(dual))
        dual_ok = dual_res <= tol * (1 + float(np.linalg.norm(p_next)))
        dpv = p_next - w.p
        step_ok = float(np.sum((B.T @ dpv) ** 2)) >= spec.gram.lam_min * dp ** 2 - tol
        tau = dg.tau_k(spec, gamma, K.beta, eps, q_norm, ctx.consts)
    margin = new.Lambda - state.Lambda + ctx.consts.c3 * new.dw ** 2
    info = StepInfo(
        q_norm=q_norm, delta=delta, eps=eps, h=h, cert=cert, tau=tau,
        dual_res=dual_res, dual_ok=dual_ok, dual_step_ok=step_ok,
        descent_margin=margin,
        descent_ok=margin <= tol * (1 + abs(state.Lambda)),
        eps_ok=config.sigma * delta <= eps <= delta,
    )
    return new, info


def iterate(spec, config, state, context=None):
    """One NAPP-AL iteration; returns ``(new_state, step_info)``.

    Raises
    ------
    NumericalBreakdown
        If any produced vector or evaluation is NaN/Inf.
    """
    ctx = context or make_context(spec, config)
    return _step(ctx, state)


@dataclass
class BestIterate:
    """Iterate ``w^k`` minimizing ``||w^k - w^{k+1}||`` and its successor.

    ``certified`` is ``w^{k+1}``, for which ``xi_norm`` witnesses
    ``dist(0, dL_gamma(w^{k+1}))``.
    """

    index: int
    iterate: Iterate
    step_norm: float
    certified: Iterate = None
    xi_norm: float = float("nan")


@dataclass
class SolveResult:
    final: Iterate
    best: BestIterate | None
    termination: str
    trace: Trace
    iterations: int
    gamma: float
    gamma_bound: float
    constants: dg.PotentialConstants
    sup_h: float
    violations: dict
    rate: dg.RateEstimate | None = None
    message: str = ""

    @property
    def converged(self):
        return self.termination == CONVERGED


def _record(ctx, state, info, wall_ms):
    if info is None:
        return TraceRecord(
            k=state.k, L_gamma=state.L_gamma, Lambda=state.Lambda,
            feas_residual=float(np.linalg.norm(state.point.residual(ctx.spec.B))),
            p_norm=float(np.linalg.norm(state.w.p)), c3=ctx.consts.c3, wall_ms=wall_ms)
    cert = info.cert
    return TraceRecord(
        k=state.k, L_gamma=state.L_gamma, Lambda=state.Lambda,
        feas_residual=float(np.linalg.norm(state.point.residual(ctx.spec.B))),
        delta_k=info.delta, eps_k=info.eps, q_norm=info.q_norm,
        du_norm=state.du, dv_norm=state.dv, dp_norm=state.dp,
        h=info.h, cert_bound=info.h * state.dw,
        xi_norm=cert.xi_norm if cert is not None else float("nan"),
        wall_ms=wall_ms, tau_k=info.tau, dual_res=info.dual_res,
        p_norm=float(np.linalg.norm(state.w.p)), c3=ctx.consts.c3)


def solve(spec, config=None, u0=None, callback=None):
    """Run NAPP-AL until feasibility and certificate tolerances or the budget.

    Stops when ``||Theta(u)+Bv|| <= feas_tol`` and
    ``h ||w^k - w^{k+1}|| <= cert_tol`` after a step, or after
    ``max_iters`` steps.

    Parameters
    ----------
    spec : ProblemSpec
    config : SolverConfig, optional
    u0 : ndarray, optional
        Overrides the problem's starting point.
    callback : callable, optional
        ``callback(state, info)`` after every iteration (``info`` is ``None``
        for the initial state).

    Raises
    ------
    ConfigurationError
        Invalid configuration, ``gamma`` not above its admissible bound, or a
        failing structural check of ``spec``.
    """
    config = config or SolverConfig()
    report = validate_problem(spec)
    if not report.ok:
        raise ConfigurationError("problem validation failed:\n" + str(report))
    executor = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        ctx = make_context(spec, config, executor)
        return _run(ctx, u0, callback)
    finally:
        if executor is not None:
            executor.shutdown()


def _run(ctx, u0, callback):
    spec, config = ctx.spec, ctx.config
    clock = time.perf_counter
    t0 = clock()

    def wall():
        return (clock() - t0) * 1e3 if config.record_wall_time else 0.0

    state = initial_state(spec, config, u0=u0, context=ctx)
    trace = Trace([_record(ctx, state, None, wall())])
    if callback is not None:
        callback(state, None)
    violations = {"descent": 0, "certificate": 0, "dual_identity": 0, "dual_increment": 0,
                  "tau": 0, "eps_range": 0}
    best = None
    sup_h = 0.0
    termination, message = MAX_ITERS, ""
    last_rec_k = 0

    for _ in range(config.max_iters):
        prev = state
        try:
            state, info = _step(ctx, prev)
        except NumericalBreakdown as exc:
            termination, message = BREAKDOWN, str(exc)
            state = prev
            break
        sup_h = max(sup_h, info.h)
        if not info.descent_ok:
            violations["descent"] += 1
        if not info.eps_ok:
            violations["eps_range"] += 1
        if config.diagnostics:
            violations["certificate"] += int(not info.cert.sound)
            violations["dual_identity"] += int(not info.dual_ok)
            violations["dual_increment"] += int(not info.dual_step_ok)
            violations["tau"] += int(info.tau < 0.5 - dg.tau_tolerance(info.eps))
        if best is None or state.dw < best.step_norm:
            best = BestIterate(prev.k, prev.w.copy(), state.dw, state.w.copy(),
                               info.cert.xi_norm if info.cert is not None else float("nan"))
        feas = float(np.linalg.norm(state.point.residual(spec.B)))
        done = (config.early_stop and feas <= config.feas_tol
                and info.h * state.dw <= config.cert_tol)
        if state.k % config.trace_stride == 0 or done:
            trace.append(_record(ctx, state, info, wall()))
            last_rec_k = state.k
        if callback is not None:
            callback(state, info)
        if done:
            termination = CONVERGED
            break
    else:
        pass
    if last_rec_k != state.k and termination != BREAKDOWN:
        # final iterate always recorded
        trace.append(_record(ctx, state, info, wall()))

    rate = None
    if len(trace) >= 50:
        rate = dg.estimate_rate(trace)
    return SolveResult(
        final=state.w, best=best, termination=termination, trace=trace,
        iterations=state.k, gamma=ctx.gamma, gamma_bound=dg.gamma_lower_bound(spec),
        constants=ctx.consts, sup_h=sup_h, violations=violations, rate=rate,
        message=message)
