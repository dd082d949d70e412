"""Seeded desk-scale instances and a brute-force stationarity oracle.

Two builders are provided.

``build_sharing``
    ``N`` agents with private blocks ``u_i``; the shared variable ``v`` in
    ``R^m`` must equal ``sum_i Theta_i(u_i)`` where
    ``Theta_i(u_i) = A_i (u_i + c tanh(u_i))``. The cost is
    ``G(v) = 1/2 (v - b)^T Q (v - b) + s sum_j cos(v_j)`` plus separable
    penalties on the blocks, with box constraints.

``build_erm``
    Robust nonlinear regression: ``v_j = tanh(a_j^T u)``,
    ``H(v) = (1/m) sum_j phi(v_j - y_j)`` with the bounded smooth loss
    ``phi(r) = r^2 / (1 + r^2)``, and a sparsity penalty on ``u``.

Both use ``B = -I``. Every Lipschitz modulus is computed in closed form from
the generated data.
"""

from dataclasses import asdict, dataclass, field
import itertools
import json
import math

import numpy as np

from .exceptions import ConfigurationError
from .linalg import image_preimage, solve_gram
from .model import ProblemSpec
from .prox import Box, Regularizer, prox_separable

__all__ = [
    "ErmParams",
    "GridSpec",
    "SharingParams",
    "brute_force_stationary",
    "build_erm",
    "build_sharing",
    "convex_qp_params",
    "load_instance",
    "save_instance",
    "sharing_kkt_solution",
    "BUILDERS",
]

# max |tanh''| = 4 / (3 sqrt 3), attained at tanh^2 = 1/3
TANH_CURV = 4.0 / (3.0 * math.sqrt(3.0))
# guard against rounding in the SVD-based norms
_NORM_PAD = 1.0 + 1e-12

GRID_LIMIT = 10 ** 7


def _regularizer(kind, lam, param):
    if kind == "zero":
        return Regularizer.zero()
    if kind == "l1":
        return Regularizer.l1(lam)
    if kind == "scad":
        return Regularizer.scad(lam, 3.7 if param is None else param)
    if kind == "mcp":
        return Regularizer.mcp(lam, 2.0 if param is None else param)
    if kind == "capped_l1":
        return Regularizer.capped_l1(lam, 1.0 if param is None else param)
    raise ConfigurationError(f"unknown regularizer kind {kind!r}")


def _opnorm(M):
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2)) * _NORM_PAD


# ----------------------------------------------------------------------------
# sharing

@dataclass
class SharingParams:
    """Parameters of the sharing instance.

    ``block_dims`` may be a single int (same size for every agent) or one
    size per agent. ``regularizer`` is a kind name or one name per agent;
    ``box`` is ``(lo, hi)`` applied to every coordinate (``None`` or an
    empty sequence for free).
    ``s`` weights the nonconvex cosine term of ``G``; ``q_eigs`` bounds the
    spectrum of ``Q``. ``feature_scale`` multiplies the Gaussian entries
    of ``A``.
    """

    N: int = 4
    block_dims: object = 3
    m: int = 5
    c: float = 0.5
    s: float = 0.1
    q_eigs: tuple = (0.5, 2.0)
    regularizer: object = "mcp"
    reg_lam: float = 0.05
    reg_param: float | None = None
    box: tuple | None = (-2.0, 2.0)
    feature_scale: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.box is not None:
            self.box = tuple(self.box) or None
        self.q_eigs = tuple(self.q_eigs)

    def dims(self):
        if isinstance(self.block_dims, (int, np.integer)):
            return (int(self.block_dims),) * self.N
        return tuple(int(b) for b in self.block_dims)

    def validate(self):
        dims = self.dims()
        if self.N < 1 or len(dims) != self.N or any(b < 1 for b in dims) or self.m < 1:
            raise ConfigurationError("sharing: N, block dims and m must all be >= 1")
        if not (np.isfinite(self.c) and self.c >= 0):
            raise ConfigurationError("sharing: c must be finite and >= 0")
        if not (np.isfinite(self.s) and self.s >= 0):
            raise ConfigurationError("sharing: s must be finite and >= 0")
        lo, hi = self.q_eigs
        if not 0 <= lo <= hi:
            raise ConfigurationError("sharing: need 0 <= q_eigs[0] <= q_eigs[1]")
        if self.box is not None and not self.box[0] <= self.box[1]:
            raise ConfigurationError("sharing: empty box")
        regs = self.regularizer
        if not isinstance(regs, str) and len(regs) != self.N:
            raise ConfigurationError("sharing: one regularizer kind per agent")


def convex_qp_params(seed=0, N=2, block_dims=2, m=5):
    """Sharing parameters giving a linearly constrained convex QP.

    ``c = s = 0``, no penalty, no box and ``sum n_i <= m`` so that ``A`` has
    full column rank and the QP solution is unique.
    """
    return SharingParams(N=N, block_dims=block_dims, m=m, c=0.0, s=0.0,
                         regularizer="zero", reg_lam=0.0, box=None,
                         feature_scale=1.0, seed=seed)


def build_sharing(params=None, **overrides):
    """Build a sharing instance (see module docstring)."""
    params = params or SharingParams()
    if overrides:
        params = SharingParams(**{**asdict(params), **overrides})
    params.validate()
    rng = np.random.default_rng(params.seed)
    dims = params.dims()
    n, m = sum(dims), params.m
    A = params.feature_scale * rng.standard_normal((m, n))
    lo, hi = params.q_eigs
    eig = rng.uniform(lo, hi, size=m)
    U, _ = np.linalg.qr(rng.standard_normal((m, m)))
    Q = (U * eig) @ U.T
    Q = 0.5 * (Q + Q.T)
    b = rng.standard_normal(m)
    if params.box is None:
        u0 = rng.uniform(-1.0, 1.0, size=n)
    else:
        u0 = rng.uniform(params.box[0], params.box[1], size=n)
    kinds = ([params.regularizer] * params.N if isinstance(params.regularizer, str)
             else list(params.regularizer))
    data = {
        "kind": "sharing", "blocks": list(dims), "A": A, "Q": Q, "b": b,
        "c": float(params.c), "s": float(params.s),
        "regularizers": [_regularizer(k, params.reg_lam, params.reg_param).to_dict()
                         for k in kinds],
        "boxes": [(Box.free(d) if params.box is None else Box.uniform(d, *params.box)).to_dict()
                  for d in dims],
        "u0": u0, "params": asdict(params),
    }
    return _sharing_from_data(data)


def _sharing_from_data(data):
    A = np.asarray(data["A"], dtype=float)
    Q = np.asarray(data["Q"], dtype=float)
    b = np.asarray(data["b"], dtype=float)
    c, s = float(data["c"]), float(data["s"])
    m, n = A.shape

    def omega(u):
        return A @ (u + c * np.tanh(u))

    def omega_jac(u):
        return A * (1.0 + c * (1.0 - np.tanh(u) ** 2))

    def G(u, v):
        r = v - b
        return 0.5 * float(r @ Q @ r) + s * float(np.sum(np.cos(v)))

    def grad_G(u, v):
        return np.zeros(n), Q @ (v - b) - s * np.sin(v)

    L_G = float(np.linalg.eigvalsh(Q).max()) * _NORM_PAD + s if m else s
    L_theta = (1.0 + c) * _opnorm(A)
    L_om = c * TANH_CURV * np.max(np.abs(A), axis=1) if n else np.zeros(m)
    meta = {"kind": "sharing", "n": n, "data": data}
    return ProblemSpec(
        blocks=tuple(data["blocks"]), B=-np.eye(m), omega=omega, omega_jac=omega_jac,
        L_omega_components=L_om, L_theta=L_theta, G=G, grad_G=grad_G, L_G=L_G,
        regularizers=tuple(Regularizer.from_dict(r) for r in data["regularizers"]),
        boxes=tuple(Box.from_dict(x) for x in data["boxes"]),
        u0=np.asarray(data["u0"], dtype=float), meta=meta)


def sharing_kkt_solution(spec):
    """Direct solve of the KKT system of the convex-QP sharing instance.

    Requires ``c = s = 0``, zero penalties and free boxes. Solves
    ``A^T p = 0``, ``Q (v - b) - p = 0``, ``A u - v = 0``.

    Returns
    -------
    u, v, p : ndarray
    """
    data = spec.meta.get("data", {})
    if data.get("kind") != "sharing" or data["c"] != 0 or data["s"] != 0:
        raise ValueError("KKT oracle needs a sharing instance with c = s = 0")
    if any(r.kind != "zero" and r.lam > 0 for r in spec.regularizers) or \
            not all(bx.is_free for bx in spec.boxes):
        raise ValueError("KKT oracle needs zero penalties and free boxes")
    A, Q, b = (np.asarray(data[k], dtype=float) for k in ("A", "Q", "b"))
    m, n = A.shape
    Z = np.zeros
    K = np.block([
        [Z((n, n)), Z((n, m)), A.T],
        [Z((m, n)), Q, -np.eye(m)],
        [A, -np.eye(m), Z((m, m))],
    ])
    rhs = np.concatenate([Z(n), Q @ b, Z(m)])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:n + m], sol[n + m:]


# ----------------------------------------------------------------------------
# ERM

@dataclass
class ErmParams:
    """Parameters of the robust regression instance.

    ``loss`` is ``"geman_mcclure"`` (the only kind). Features are Gaussian
    with standard deviation ``feature_scale / sqrt(n)``; responses are
    ``tanh(A u_true) + noise * N(0, 1)`` for a sparse ``u_true``.
    """

    n: int = 10
    m: int = 20
    loss: str = "geman_mcclure"
    regularizer: str = "mcp"
    reg_lam: float = 0.02
    reg_param: float | None = None
    feature_scale: float = 1.0
    noise: float = 0.1
    sparsity: float = 0.3
    seed: int = 0

    def validate(self):
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("erm: n and m must be >= 1")
        if self.loss != "geman_mcclure":
            raise ConfigurationError(f"erm: unknown loss {self.loss!r}")
        if not (np.isfinite(self.feature_scale) and self.feature_scale >= 0):
            raise ConfigurationError("erm: feature_scale must be finite and >= 0")
        if not 0 <= self.sparsity <= 1:
            raise ConfigurationError("erm: sparsity must lie in [0, 1]")


def build_erm(params=None, **overrides):
    """Build a robust regression instance (see module docstring)."""
    params = params or ErmParams()
    if overrides:
        params = ErmParams(**{**asdict(params), **overrides})
    params.validate()
    rng = np.random.default_rng(params.seed)
    n, m = params.n, params.m
    A = params.feature_scale / math.sqrt(n) * rng.standard_normal((m, n))
    u_true = rng.standard_normal(n) * (rng.uniform(size=n) < params.sparsity)
    y = np.tanh(A @ u_true) + params.noise * rng.standard_normal(m)
    u0 = 0.1 * rng.standard_normal(n)
    data = {
        "kind": "erm", "blocks": [n], "A": A, "y": y, "u_true": u_true,
        "regularizers": [_regularizer(params.regularizer, params.reg_lam,
                                      params.reg_param).to_dict()],
        "u0": u0, "params": asdict(params),
    }
    return _erm_from_data(data)


def _erm_from_data(data):
    A = np.asarray(data["A"], dtype=float)
    y = np.asarray(data["y"], dtype=float)
    m, n = A.shape

    def omega(u):
        return np.tanh(A @ u)

    def omega_jac(u):
        return (1.0 - np.tanh(A @ u) ** 2)[:, None] * A

    def H(v):
        r = v - y
        return float(np.sum(r * r / (1.0 + r * r))) / m

    def grad_H(v):
        r = v - y
        return 2.0 * r / (1.0 + r * r) ** 2 / m

    meta = {"kind": "erm", "n": n, "data": data}
    return ProblemSpec(
        blocks=(n,), B=-np.eye(m), omega=omega, omega_jac=omega_jac,
        L_omega_components=TANH_CURV * np.sum(A * A, axis=1), L_theta=_opnorm(A),
        H=H, grad_H=grad_H, L_H=2.0 / m,
        regularizers=tuple(Regularizer.from_dict(r) for r in data["regularizers"]),
        u0=np.asarray(data["u0"], dtype=float), meta=meta)


BUILDERS = {"sharing": (SharingParams, build_sharing), "erm": (ErmParams, build_erm)}
_FROM_DATA = {"sharing": _sharing_from_data, "erm": _erm_from_data}


# ----------------------------------------------------------------------------
# serialization

def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def save_instance(spec, path):
    """Write a built instance (data, kinds and constants) as JSON.

    Floats are written with full round-trip precision, so ``load_instance``
    reproduces the instance exactly.
    """
    data = spec.meta.get("data")
    if data is None:
        raise ValueError("only builder-produced instances can be saved")
    doc = {
        "data": _jsonable(data),
        "constants": {"L_G": spec.L_G, "L_H": spec.L_H, "L_theta": spec.L_theta,
                      "L_omega_components": spec.L_omega_components.tolist()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_instance(path):
    with open(path) as fh:
        doc = json.load(fh)
    data = doc["data"]
    kind = data.get("kind")
    if kind not in _FROM_DATA:
        raise ValueError(f"unknown instance kind {kind!r}")
    spec = _FROM_DATA[kind](data)
    consts = doc.get("constants", {})
    for key in ("L_G", "L_H", "L_theta"):
        if key in consts and consts[key] != getattr(spec, key):
            raise ValueError(f"stored {key} does not match the rebuilt instance")
    return spec


# ----------------------------------------------------------------------------
# brute-force oracle

@dataclass
class GridSpec:
    """Tensor grid over ``u``: per-coordinate ``(lo, hi)`` and point counts."""

    bounds: list
    points: object = 101
    abs_threshold: float = 1e-8
    prox_step: float | None = None

    def axes(self):
        if len(self.bounds) == 0:
            raise ValueError("empty grid")
        pts = self.points
        counts = [pts] * len(self.bounds) if isinstance(pts, (int, np.integer)) else list(pts)
        if len(counts) != len(self.bounds) or any(c < 1 for c in counts):
            raise ValueError("empty grid")
        size = math.prod(counts)
        if size > GRID_LIMIT:
            raise ValueError(f"grid of {size} points exceeds the limit {GRID_LIMIT}")
        return [np.linspace(lo, hi, c) for (lo, hi), c in zip(self.bounds, counts)]


@dataclass
class Candidate:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    surrogate: float
    index: tuple = field(default=())


def _surrogate(spec, u, t):
    """KKT residual at ``u`` with ``v`` and ``p`` eliminated.

    ``v`` is the least-squares preimage of ``-Theta(u)`` and ``p`` the
    least-norm solution of ``B^T p = -(grad_v G + grad H)``, which makes the
    ``v`` and ``p`` conditions exact (up to the preimage residual). What is
    left is the prox-gradient residual of the ``u`` condition.
    """
    pre = image_preimage(spec.gram, spec.B, -spec.theta(u))
    v = pre.v
    gu, gv = spec.G_grad(u, v)
    p = -spec.B @ solve_gram(spec.gram, gv + spec.H_grad(v))
    g = gu + spec.theta_jac(u).T @ p
    x = u - t * g
    z = np.empty_like(u)
    for reg, box, sl in zip(spec.regularizers, spec.boxes, spec.block_slices):
        z[sl] = prox_separable(reg, t, x[sl], (box.lower, box.upper))
    return float(np.linalg.norm(u - z)) / t + pre.residual, v, p


def _default_prox_step(spec):
    t = 1.0
    for r in spec.regularizers:
        if r.kind == "mcp":
            t = min(t, 0.5 * r.param)
        elif r.kind == "scad":
            t = min(t, 0.5 * (r.param - 1))
    return t


def brute_force_stationary(spec, grid):
    """Grid candidates for stationary points of the constrained problem.

    Evaluates the KKT surrogate on every grid point and keeps the grid-local
    minima whose value is below ``max(grid.abs_threshold, largest jump to an
    axis neighbour)``; the second term is what a root between grid points
    can leave at the nearest node. Adjacent survivors are merged.

    Parameters
    ----------
    spec : ProblemSpec
    grid : GridSpec
        One ``(lo, hi)`` per coordinate of ``u``.

    Returns
    -------
    list of Candidate
        Sorted by surrogate value.
    """
    axes = grid.axes()
    if len(axes) != spec.n:
        raise ValueError(f"grid has {len(axes)} axes, u has {spec.n} coordinates")
    t = grid.prox_step or _default_prox_step(spec)
    shape = tuple(a.size for a in axes)
    S = np.empty(shape)
    for idx in itertools.product(*(range(s) for s in shape)):
        u = np.array([a[i] for a, i in zip(axes, idx)])
        S[idx] = _surrogate(spec, u, t)[0]

    found = []
    for idx in itertools.product(*(range(s) for s in shape)):
        val = S[idx]
        jump, local_min = 0.0, True
        for ax in range(len(shape)):
            for step in (-1, 1):
                j = idx[ax] + step
                if 0 <= j < shape[ax]:
                    nb = S[idx[:ax] + (j,) + idx[ax + 1:]]
                    local_min &= val <= nb
                    jump = max(jump, abs(nb - val))
        if local_min and val <= max(grid.abs_threshold, jump):
            found.append(idx)

    # merge runs of adjacent minima (flat valleys), keep the best of each
    groups = []
    for idx in found:
        for g in groups:
            if any(max(abs(a - b) for a, b in zip(idx, o)) <= 1 for o in g):
                g.append(idx)
                break
        else:
            groups.append([idx])
    out = []
    for g in groups:
        idx = min(g, key=lambda i: S[i])
        u = np.array([a[i] for a, i in zip(axes, idx)])
        val, v, p = _surrogate(spec, u, t)
        out.append(Candidate(u, v, p, val, idx))
    out.sort(key=lambda c: c.surrogate)
    return out
