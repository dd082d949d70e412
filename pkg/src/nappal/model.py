"""Problem abstraction for

    minimize    G(u, v) + J(u) + H(v)
    subject to  Omega(u) + Phi(u) + B v = 0,   u in U,

with the Lagrangian, augmented Lagrangian and structural validation.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import GramFactorization, min_eigen_gram, spectral_norm
from .prox import Box, Regularizer

__all__ = [
    "Check",
    "Iterate",
    "ProblemSpec",
    "ValidationReport",
    "augmented_lagrangian",
    "feasibility_residual",
    "lagrangian",
    "validate_problem",
]


def _zero_scalar(*args):
    return 0.0


@dataclass(eq=False)
class ProblemSpec:
    """Full model data.

    Smooth pieces are callables; ``G``/``grad_G`` take ``(u, v)`` and
    ``grad_G`` returns ``(grad_u, grad_v)``. ``H``/``grad_H`` take ``v``.
    ``omega`` maps ``u`` to ``R^m`` and ``omega_jac`` returns the ``m x n``
    Jacobian. ``phi``/``phi_jac`` are optional (identically zero by default).

    ``L_omega_components`` holds the gradient-Lipschitz moduli of the
    components ``Omega_j``; ``L_omega`` is their sum. ``L_theta`` is the
    global Lipschitz modulus of ``Theta = Omega + Phi``.
    """

    blocks: tuple
    B: np.ndarray
    omega: callable
    omega_jac: callable
    L_omega_components: np.ndarray
    L_theta: float
    G: callable = None
    grad_G: callable = None
    L_G: float = 0.0
    H: callable = None
    grad_H: callable = None
    L_H: float = 0.0
    regularizers: tuple = None
    boxes: tuple = None
    phi: callable = None
    phi_jac: callable = None
    u0: np.ndarray = None
    meta: dict = field(default_factory=dict)
    block_solvers: dict = field(default_factory=dict)

    def __post_init__(self):
        self.blocks = tuple(int(b) for b in self.blocks)
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.L_omega_components = np.atleast_1d(
            np.asarray(self.L_omega_components, dtype=float))
        if self.regularizers is None:
            self.regularizers = tuple(Regularizer.zero() for _ in self.blocks)
        if self.boxes is None:
            self.boxes = tuple(Box.free(b) for b in self.blocks)
        self.regularizers = tuple(self.regularizers)
        self.boxes = tuple(self.boxes)

    # dimensions
    @property
    def n(self):
        return sum(self.blocks)

    @property
    def m(self):
        return self.B.shape[0]

    @property
    def d(self):
        return self.B.shape[1]

    @property
    def L_omega(self):
        return float(np.sum(self.L_omega_components))

    @cached_property
    def block_slices(self):
        out, start = [], 0
        for b in self.blocks:
            out.append(slice(start, start + b))
            start += b
        return tuple(out)

    @cached_property
    def gram(self):
        return GramFactorization(self.B)

    @cached_property
    def box(self):
        """Concatenated feasible box over all blocks."""
        return Box(np.concatenate([b.lower for b in self.boxes]),
                   np.concatenate([b.upper for b in self.boxes]))

    # evaluators
    def theta(self, u):
        out = np.asarray(self.omega(u), dtype=float)
        if self.phi is not None:
            out = out + self.phi(u)
        return out

    def theta_jac(self, u):
        jac = np.asarray(self.omega_jac(u), dtype=float)
        if self.phi_jac is not None:
            jac = jac + self.phi_jac(u)
        return jac

    def residual(self, u, v):
        return self.theta(u) + self.B @ v

    def G_value(self, u, v):
        return 0.0 if self.G is None else float(self.G(u, v))

    def G_grad(self, u, v):
        if self.grad_G is None:
            return np.zeros(self.n), np.zeros(self.d)
        gu, gv = self.grad_G(u, v)
        return np.asarray(gu, dtype=float), np.asarray(gv, dtype=float)

    def H_value(self, v):
        return 0.0 if self.H is None else float(self.H(v))

    def H_grad(self, v):
        return np.zeros(self.d) if self.grad_H is None else np.asarray(self.grad_H(v), dtype=float)

    def J_value(self, u):
        return float(sum(r.total(u[sl]) for r, sl in zip(self.regularizers, self.block_slices)))

    def objective(self, u, v):
        """``F(u, v) = G(u, v) + J(u) + H(v)``."""
        return self.G_value(u, v) + self.J_value(u) + self.H_value(v)

    def check_dims(self, u=None, v=None, p=None):
        for name, x, size in (("u", u, self.n), ("v", v, self.d), ("p", p, self.m)):
            if x is not None and np.shape(x) != (size,):
                raise ValueError(f"{name} has shape {np.shape(x)}, expected ({size},)")


@dataclass
class Iterate:
    """Primal-dual point ``w = (u, v, p)`` with optional cached ``q``."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray = None

    def __post_init__(self):
        self.u = np.atleast_1d(np.asarray(self.u, dtype=float))
        self.v = np.atleast_1d(np.asarray(self.v, dtype=float))
        self.p = np.atleast_1d(np.asarray(self.p, dtype=float))

    def stacked(self):
        return np.concatenate([self.u, self.v, self.p])

    def copy(self):
        return Iterate(self.u.copy(), self.v.copy(), self.p.copy(),
                       None if self.q is None else self.q.copy())


def feasibility_residual(spec, u, v):
    """Euclidean norm of ``Theta(u) + B v``."""
    u, v = np.atleast_1d(np.asarray(u, float)), np.atleast_1d(np.asarray(v, float))
    spec.check_dims(u=u, v=v)
    return float(np.linalg.norm(spec.residual(u, v)))


def lagrangian(spec, w):
    spec.check_dims(w.u, w.v, w.p)
    return spec.objective(w.u, w.v) + float(w.p @ spec.residual(w.u, w.v))


def augmented_lagrangian(spec, w, gamma):
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    spec.check_dims(w.u, w.v, w.p)
    r = spec.residual(w.u, w.v)
    return spec.objective(w.u, w.v) + float(w.p @ r) + 0.5 * gamma * float(r @ r)


@dataclass
class Check:
    name: str
    status: str  # "pass" | "fail" | "asserted"
    detail: str = ""
    value: float | None = None


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, ok, detail="", value=None):
        self.checks.append(Check(name, "pass" if ok else "fail", detail, value))

    def assert_(self, name, detail):
        self.checks.append(Check(name, "asserted", detail))

    @property
    def ok(self):
        return all(c.status != "fail" for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if c.status == "fail"]

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __str__(self):
        lines = [f"[{c.status.upper():8s}] {c.name}" + (f": {c.detail}" if c.detail else "")
                 for c in self.checks]
        return "\n".join(lines)


def validate_problem(spec):
    """Structural checks on a ``ProblemSpec``; never raises."""
    rep = ValidationReport()

    sizes_ok = (len(spec.blocks) > 0 and all(b >= 1 for b in spec.blocks)
                and len(spec.regularizers) == len(spec.blocks)
                and len(spec.boxes) == len(spec.blocks)
                and all(bx.size == b for bx, b in zip(spec.boxes, spec.blocks)))
    detail = f"blocks={spec.blocks}, n={spec.n}"
    n_decl = spec.meta.get("n")
    if n_decl is not None and n_decl != spec.n:
        sizes_ok = False
        detail += f", declared n={n_decl}"
    rep.add("block coverage", sizes_ok, detail)

    dims_ok = sizes_ok
    if sizes_ok:
        try:
            u = spec.u0 if spec.u0 is not None else np.zeros(spec.n)
            v = np.zeros(spec.d)
            dims_ok = (np.shape(spec.theta(u)) == (spec.m,)
                       and np.shape(spec.theta_jac(u)) == (spec.m, spec.n)
                       and spec.L_omega_components.shape == (spec.m,)
                       and tuple(map(np.shape, spec.G_grad(u, v))) == ((spec.n,), (spec.d,))
                       and np.shape(spec.H_grad(v)) == (spec.d,))
        except Exception as exc:  # report-style: evaluator failures are failures
            dims_ok = False
            detail = repr(exc)
        else:
            detail = f"n={spec.n}, d={spec.d}, m={spec.m}"
    rep.add("dimensional consistency", dims_ok, detail)

    rep.add("B is tall (m >= d)", spec.m >= spec.d, f"B shape {spec.B.shape}")

    bnorm = spectral_norm(spec.B) if spec.B.size else 0.0
    lam = min_eigen_gram(spec.B) if spec.m >= spec.d else 0.0
    rep.add("B full column rank", lam > 1e-12 * bnorm ** 2,
            f"lambda_min(B^T B)={lam:.6g}, ||B||^2={bnorm ** 2:.6g}")

    consts = {"L_G": spec.L_G, "L_H": spec.L_H, "L_omega": spec.L_omega,
              "L_theta": spec.L_theta}
    const_ok = all(np.isfinite(c) and c >= 0 for c in consts.values()) and \
        bool(np.all(spec.L_omega_components >= 0))
    rep.add("Lipschitz constants finite and nonnegative", const_ok,
            ", ".join(f"{k}={v:.6g}" for k, v in consts.items()))

    rep.assert_("Im(Theta) in Im(B)", "not machine-checkable, user asserted")
    rep.assert_("F lower bounded and coercive on the feasible set",
                "not machine-checkable, user asserted")
    return rep
