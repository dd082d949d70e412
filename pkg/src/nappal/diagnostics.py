"""Theory-side quantities attached to NAPP-AL iterates.

Potential ``Lambda^k``, its constants, the stationarity certificate ``h``,
the explicit subgradient witness ``xi``, rate estimates and sampling checks
of user-supplied Lipschitz constants.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .bregman import kernel_gradient
from .exceptions import ConfigurationError
from .linalg import image_preimage
from .model import ValidationReport

__all__ = [
    "CertificateRecord",
    "PotentialConstants",
    "RateEstimate",
    "certificate_h",
    "check_descent_inequalities",
    "estimate_rate",
    "finite_difference_check",
    "gamma_lower_bound",
    "is_epsilon_stationary",
    "lambda_lower_bound",
    "potential",
    "potential_constants",
    "residual_xi",
    "sqrt_k_signature",
    "tau_k",
    "telescoping_budget",
    "trace_invariant_violations",
]

SQRT57_PLUS_1 = math.sqrt(57.0) + 1.0
INVARIANT_TOL = 1e-8
# tau_k is a difference of terms of size ~ beta / eps; allow for that roundoff
TAU_RTOL = 1e-10


def gamma_lower_bound(spec):
    """Smallest admissible penalty: ``(sqrt(57)+1)/(2 lambda_min) (L_G+L_H)``."""
    return SQRT57_PLUS_1 / (2.0 * spec.gram.lam_min) * (spec.L_G + spec.L_H)


@dataclass(frozen=True)
class PotentialConstants:
    c1: float
    c2: float
    c3: float
    c4: float


def potential_constants(spec, gamma):
    """Weights of the potential and the guaranteed descent modulus ``c3``.

    Raises
    ------
    ConfigurationError
        If ``gamma`` does not exceed the admissible bound (``c4 <= 0``).
    """
    lam, bn = spec.gram.lam_min, spec.gram.norm
    L = spec.L_G + spec.L_H
    c1 = 7.0 * (spec.L_G + gamma * bn * spec.L_theta) ** 2 / (gamma * lam)
    c2 = 7.0 * L ** 2 / (gamma * lam)
    c4 = (gamma * lam - L) / 2.0 - c2
    bound = gamma_lower_bound(spec)
    if not (gamma > bound and c4 > 0):
        raise ConfigurationError(
            f"gamma={gamma:.10g} must exceed (sqrt(57)+1)/(2 lambda_min(B^T B))"
            f"*(L_G+L_H) = {bound:.10g} (c4={c4:.3g})")
    c3 = min(0.5, c4, 1.0 / (3.0 * gamma))
    return PotentialConstants(c1, c2, c3, c4)


def potential(L_gamma_val, du_norm, dv_norm, dp_norm, consts, gamma):
    """``L_gamma(w^k) + c1 du^2 + c2 dv^2 + dp^2 / (2 gamma)``."""
    return (L_gamma_val + consts.c1 * du_norm ** 2 + consts.c2 * dv_norm ** 2
            + dp_norm ** 2 / (2.0 * gamma))


def certificate_h(spec, gamma, sigma, q_norm, delta_k, L_K):
    """Constant ``h`` with ``dist(0, dL_gamma(w^{k+1})) <= h ||w^k - w^{k+1}||``."""
    bn, L0 = spec.gram.norm, spec.L_theta
    b1 = (2 * spec.L_G + q_norm * spec.L_omega + gamma * bn * L0 + gamma * L0 ** 2
          + L_K / (sigma * delta_k))
    b2 = 2 * spec.L_G + spec.L_H + gamma * bn * L0
    b3 = L0 + bn + 1.0 / gamma
    return max(b1, b2, b3)


def tau_k(spec, gamma, beta, eps_k, q_norm, consts):
    """Coefficient of ``||u^k - u^{k+1}||^2`` in the potential descent."""
    bn, lam, L0 = spec.gram.norm, spec.gram.lam_min, spec.L_theta
    return (beta / (2 * eps_k) - (spec.L_G + q_norm * spec.L_omega + gamma * L0 ** 2) / 2
            - 7 * gamma * bn ** 2 * L0 ** 2 / lam - consts.c1)


def tau_tolerance(eps_k):
    return TAU_RTOL * (1.0 + 1.0 / eps_k)


@dataclass
class PointData:
    """Cached evaluations at one primal-dual point."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    jac_omega: np.ndarray
    jac_theta: np.ndarray
    grad_Gu: np.ndarray
    grad_Gv: np.ndarray
    grad_H: np.ndarray

    @classmethod
    def evaluate(cls, spec, u, v, p):
        gu, gv = spec.G_grad(u, v)
        jo = np.asarray(spec.omega_jac(u), dtype=float)
        jt = jo if spec.phi_jac is None else jo + spec.phi_jac(u)
        return cls(u, v, p, spec.theta(u), jo, jt, gu, gv, spec.H_grad(v))

    def residual(self, B):
        return self.theta + B @ self.v


def xi_from_points(spec, K, gamma, eps_k, q_k, a, b):
    """Witness ``xi`` at ``b`` for the step ``a -> b`` from cached evaluations."""
    B = spec.B
    dp = b.p - a.p
    dr = b.residual(B) - a.residual(B)
    xi_u = (b.grad_Gu - a.grad_Gu + (b.jac_omega - a.jac_omega).T @ q_k
            + b.jac_theta.T @ dp + gamma * (b.jac_theta.T @ dr)
            - (kernel_gradient(K, b.u) - kernel_gradient(K, a.u)) / eps_k)
    xi_v = (b.grad_Gv - a.grad_Gv + b.grad_H - a.grad_H + B.T @ dp
            + gamma * (B.T @ dr) - gamma * (B.T @ (B @ (b.v - a.v))))
    xi_p = dp / gamma
    return xi_u, xi_v, xi_p


def residual_xi(spec, K, gamma, w_k, w_next, eps_k):
    """Explicit element ``(xi_u, xi_v, xi_p)`` of ``dL_gamma(w_next)``.

    Valid when ``w_next`` is the NAPP-AL successor of ``w_k`` computed with
    step ``eps_k`` and penalty ``gamma``.
    """
    spec.check_dims(w_k.u, w_k.v, w_k.p)
    spec.check_dims(w_next.u, w_next.v, w_next.p)
    a = PointData.evaluate(spec, w_k.u, w_k.v, w_k.p)
    b = PointData.evaluate(spec, w_next.u, w_next.v, w_next.p)
    q_k = w_k.p + gamma * a.residual(spec.B)
    return xi_from_points(spec, K, gamma, eps_k, q_k, a, b)


@dataclass
class CertificateRecord:
    h: float
    bound: float
    xi_norm: float
    xi_u_norm: float = 0.0
    xi_v_norm: float = 0.0
    xi_p_norm: float = 0.0

    @classmethod
    def from_parts(cls, h, dw_norm, xi_u, xi_v, xi_p):
        nu, nv, np_ = (float(np.linalg.norm(x)) for x in (xi_u, xi_v, xi_p))
        return cls(h, h * dw_norm, math.sqrt(nu ** 2 + nv ** 2 + np_ ** 2), nu, nv, np_)

    @property
    def sound(self):
        return self.xi_norm <= self.bound + INVARIANT_TOL * (1.0 + self.bound)


def is_epsilon_stationary(cert, epsilon):
    """``True`` iff the witness norm is at most ``epsilon`` (inclusive)."""
    return cert.xi_norm <= epsilon


def lambda_lower_bound(spec, gamma, u, v):
    """Lower bound on ``Lambda^k`` through the feasible companion ``(u, v~)``."""
    pre = image_preimage(spec.gram, spec.B, -spec.theta(u))
    lam, bn = spec.gram.lam_min, spec.gram.norm
    coef = (5 * gamma * lam - 7 * (spec.L_G + spec.L_H)) / (14 * bn ** 2)
    r = spec.residual(u, v)
    return spec.objective(u, pre.v) + coef * float(r @ r)


# ----------------------------------------------------------------------------
# rates

@dataclass
class RateEstimate:
    alpha: float = float("nan")
    slope: float = float("nan")
    r_squared: float = float("nan")
    geometric: bool = False
    below_floor: bool = False
    window: tuple = (0, 0)
    lambda_star: float = float("nan")
    s_k: np.ndarray = field(default=None, repr=False)
    s_tail_nonincreasing: bool = False

    def to_dict(self):
        return {"alpha": self.alpha, "slope": self.slope, "r_squared": self.r_squared,
                "geometric": self.geometric, "below_floor": self.below_floor,
                "window": list(self.window), "lambda_star": self.lambda_star,
                "s_tail_nonincreasing": self.s_tail_nonincreasing}


def sqrt_k_signature(dw_norms):
    """``s_k = sqrt(k) * min_{1<=j<=k} ||w^j - w^{j+1}||`` for ``k = 1..K``.

    ``dw_norms[j]`` is ``||w^j - w^{j+1}||`` for ``j = 0..K``.
    """
    dw = np.asarray(dw_norms, dtype=float)[1:]
    k = np.arange(1, dw.size + 1)
    return np.sqrt(k) * np.minimum.accumulate(dw)


def nonincreasing_within(s, band=0.05):
    """Each entry stays within ``(1 + band)`` of the running minimum."""
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        return True
    return bool(np.all(s <= (1.0 + band) * np.minimum.accumulate(s)))


def _trace_columns(trace):
    k = trace["k"]
    Lam = trace["Lambda"]
    dw = np.sqrt(trace["du_norm"] ** 2 + trace["dv_norm"] ** 2 + trace["dp_norm"] ** 2)
    return k, Lam, dw


def estimate_rate(trace, tail_fraction=0.5, upper_fraction=0.9, r2_threshold=0.99,
                  band=0.05):
    """Geometric fit of ``Lambda^k - Lambda*`` and the ``o(1/sqrt k)`` signature.

    ``Lambda*`` is approximated by the final potential minus a one-ulp guard.
    ``log(Lambda^k - Lambda*)`` is fitted linearly over the window
    ``[tail_fraction k_end, upper_fraction k_end]``; the window is cut where
    the gap drops under the rounding floor of the potential values.

    Parameters
    ----------
    trace : Trace
        At least 50 rows.
    tail_fraction, upper_fraction : float
        Window bounds as fractions of the final iteration index.
    """
    if len(trace) < 50:
        raise ValueError("estimate_rate needs a trace with at least 50 rows")
    if not 0 < tail_fraction < upper_fraction <= 1:
        raise ValueError("need 0 < tail_fraction < upper_fraction <= 1")
    k, Lam, dw = _trace_columns(trace)
    eps = np.finfo(float).eps

    # row j+1 carries ||w^j - w^{j+1}||; shift to index by j
    s = sqrt_k_signature(dw[1:])
    half = s.size // 2
    s_ok = nonincreasing_within(s[half:], band)

    k_end = k[-1]
    lo = np.searchsorted(k, tail_fraction * k_end)
    hi = np.searchsorted(k, upper_fraction * k_end, side="right")
    star = Lam[-1] - eps * max(abs(Lam[-1]), np.finfo(float).tiny)
    gaps = Lam[lo:hi] - star
    floor = 64 * eps * max(np.max(np.abs(Lam[lo:hi])), np.finfo(float).tiny)
    est = RateEstimate(window=(int(k[lo]) if lo < k.size else int(k_end), int(k[hi - 1])),
                       lambda_star=float(star), s_k=s, s_tail_nonincreasing=s_ok)
    usable = np.nonzero(gaps <= floor)[0]
    cut = usable[0] if usable.size else gaps.size
    if cut < 10:
        est.below_floor = True
        return est
    x = k[lo:lo + cut].astype(float)
    y = np.log(gaps[:cut])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - A @ coef) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    est.slope = float(coef[0])
    est.alpha = float(np.exp(coef[0]))
    est.r_squared = r2
    est.window = (int(x[0]), int(x[-1]))
    est.geometric = bool(r2 > r2_threshold and coef[0] < 0)
    return est


def telescoping_budget(trace, c3):
    """Both sides of ``sum_k c3 min_{j<=k} ||dw^j||^2 <= Lambda^1 - min Lambda``."""
    k, Lam, dw = _trace_columns(trace)
    step = dw[2:]  # ||w^j - w^{j+1}|| for j >= 1
    lhs = float(np.sum(c3 * np.minimum.accumulate(step) ** 2)) if step.size else 0.0
    rhs = float(Lam[1] - Lam[1:].min()) if Lam.size > 1 else 0.0
    return lhs, rhs


def trace_invariant_violations(trace, tol=INVARIANT_TOL):
    """Recount invariant violations from the scalar trace columns.

    Descent is only checked between consecutive iterations (``k`` and
    ``k+1`` both recorded).
    """
    k, Lam, dw = _trace_columns(trace)
    c3 = trace["c3"]
    counts = {"descent": 0, "certificate": 0, "dual_identity": 0, "tau": 0}
    for i in range(1, len(trace)):
        if k[i] == k[i - 1] + 1:
            if Lam[i] - Lam[i - 1] > -c3[i] * dw[i] ** 2 + tol * (1 + abs(Lam[i - 1])):
                counts["descent"] += 1
    rows = slice(1, None)
    bound, xi = trace["cert_bound"][rows], trace["xi_norm"][rows]
    counts["certificate"] = int(np.sum(xi > bound + tol * (1 + bound)))
    dres, pn = trace["dual_res"][rows], trace["p_norm"][rows]
    counts["dual_identity"] = int(np.sum(dres > tol * (1 + pn)))
    tau, eps = trace["tau_k"][rows], trace["eps_k"][rows]
    counts["tau"] = int(np.sum(tau < 0.5 - TAU_RTOL * (1 + 1 / eps)))
    return counts


# ----------------------------------------------------------------------------
# sampling checks of the user's constants

def _sample(rng, n, radius):
    return rng.uniform(-radius, radius, size=n)


def check_descent_inequalities(spec, sample_count=1000, seed=0, radius=5.0, tol=1e-8):
    """Falsification test of ``L_G``, ``L_H``, ``L_Omega_j`` and ``L_theta``.

    Draws ``sample_count`` random pairs in ``[-radius, radius]^dim`` and
    evaluates the quadratic upper bounds implied by the claimed moduli. A
    violation above ``tol * scale`` (``scale`` = 1 + magnitudes of the terms)
    fails the corresponding check. Sampling cannot certify a constant.
    """
    rng = np.random.default_rng(seed)
    n, d, m = spec.n, spec.d, spec.m
    worst = {"G joint descent": [0.0, 0], "G descent in v": [0.0, 0], "H descent": [0.0, 0],
             "Omega descent": [0.0, 0], "Omega components": [0.0, 0], "Theta Lipschitz": [0.0, 0]}

    def record(name, lhs, rhs, scale):
        viol = lhs - rhs
        w = worst[name]
        w[0] = max(w[0], viol)
        if viol > tol * scale:
            w[1] += 1

    for _ in range(sample_count):
        u, u2 = _sample(rng, n, radius), _sample(rng, n, radius)
        v, v2 = _sample(rng, d, radius), _sample(rng, d, radius)
        du, dv = u - u2, v - v2
        nu2, nv2 = float(du @ du), float(dv @ dv)

        g, g2 = spec.G_value(u, v), spec.G_value(u2, v2)
        gu2, gv2 = spec.G_grad(u2, v2)
        lhs = g - g2 - gu2 @ du - gv2 @ dv
        record("G joint descent", lhs, spec.L_G / 2 * (nu2 + nv2),
               1 + abs(g) + abs(g2) + abs(gu2 @ du) + abs(gv2 @ dv))

        g3 = spec.G_value(u, v2)
        _, gv3 = spec.G_grad(u, v2)
        lhs = g - g3 - gv3 @ dv
        record("G descent in v", lhs, spec.L_G / 2 * nv2, 1 + abs(g) + abs(g3) + abs(gv3 @ dv))

        h, h2 = spec.H_value(v), spec.H_value(v2)
        gh2 = spec.H_grad(v2)
        record("H descent", h - h2 - gh2 @ dv, spec.L_H / 2 * nv2,
               1 + abs(h) + abs(h2) + abs(gh2 @ dv))

        om, om2 = np.asarray(spec.omega(u)), np.asarray(spec.omega(u2))
        jac2 = np.asarray(spec.omega_jac(u2))
        lin = om - om2 - jac2 @ du
        p = rng.standard_normal(m)
        p /= np.linalg.norm(p)
        scale = 1 + np.abs(om).sum() + np.abs(om2).sum() + np.abs(jac2 @ du).sum()
        record("Omega descent", float(p @ lin), spec.L_omega / 2 * nu2, scale)
        comp = np.abs(lin) - spec.L_omega_components / 2 * nu2
        record("Omega components", float(comp.max()), 0.0, scale)

        th, th2 = spec.theta(u), spec.theta(u2)
        record("Theta Lipschitz", float(np.linalg.norm(th - th2)),
               spec.L_theta * math.sqrt(nu2), 1 + np.linalg.norm(th) + np.linalg.norm(th2))

    rep = ValidationReport()
    for name, (viol, count) in worst.items():
        rep.add(name, count == 0, f"max violation {viol:.3e}, {count} violating pairs", viol)
    return rep


def _fd_grad(f, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_jac(f, x, h, m):
    J = np.empty((m, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h)
    return J


def finite_difference_check(spec, n_points=100, seed=0, rtol=1e-5, radius=5.0):
    """Central-difference check of every analytic gradient and the Jacobian.

    Step ``1e-6 (1 + ||x||)``; agreement means
    ``||fd - analytic|| <= rtol * max(1, ||analytic||)``.
    """
    rng = np.random.default_rng(seed)
    worst = {"grad_u G": 0.0, "grad_v G": 0.0, "grad H": 0.0, "jac Omega": 0.0}
    for _ in range(n_points):
        u, v = _sample(rng, spec.n, radius), _sample(rng, spec.d, radius)
        hu, hv = 1e-6 * (1 + np.linalg.norm(u)), 1e-6 * (1 + np.linalg.norm(v))
        gu, gv = spec.G_grad(u, v)
        pairs = (
            ("grad_u G", _fd_grad(lambda x: spec.G_value(x, v), u, hu), gu),
            ("grad_v G", _fd_grad(lambda x: spec.G_value(u, x), v, hv), gv),
            ("grad H", _fd_grad(spec.H_value, v, hv), spec.H_grad(v)),
            ("jac Omega", _fd_jac(spec.omega, u, hu, spec.m), np.asarray(spec.omega_jac(u))),
        )
        for name, fd, an in pairs:
            err = np.linalg.norm(fd - an) / max(1.0, np.linalg.norm(an))
            worst[name] = max(worst[name], float(err))
    rep = ValidationReport()
    for name, err in worst.items():
        rep.add(f"finite differences: {name}", err <= rtol, f"max relative error {err:.3e}",
                err)
    return rep
