"""Spectral quantities and the Gram factorization of the coupling matrix B."""

from typing import NamedTuple
import warnings

import numpy as np
from scipy import linalg as sla

__all__ = [
    "GramFactorization",
    "Preimage",
    "SingularGramError",
    "image_preimage",
    "min_eigen_gram",
    "power_iteration",
    "solve_gram",
    "spectral_norm",
]

MAX_ITER = 10_000
RTOL = 1e-12


class SingularGramError(np.linalg.LinAlgError):
    """B^T B is (numerically) singular, i.e. B lacks full column rank."""


def _start_vectors(d):
    # all-ones first; the alternating ramp catches starts orthogonal to the
    # dominant eigenvector
    ones = np.ones(d) / np.sqrt(d)
    ramp = np.where(np.arange(d) % 2 == 0, 1.0, -1.0) * np.arange(1, d + 1)
    return ones, ramp / np.linalg.norm(ramp)


def power_iteration(apply, d, max_iter=MAX_ITER, rtol=RTOL):
    """Dominant eigenvalue of a symmetric positive semidefinite operator.

    Parameters
    ----------
    apply : callable
        ``x -> M @ x``.
    d : int
        Operator dimension.
    max_iter : int
        Iteration budget per start vector.
    rtol : float
        Stop when successive Rayleigh quotients differ by less than
        ``rtol`` relative.

    Returns
    -------
    value : float
        Largest Rayleigh quotient reached over the deterministic starts.
    info : dict
        ``converged`` (bool) and ``iterations`` (total over starts).
    """
    best, converged, total = 0.0, True, 0
    for x in _start_vectors(d):
        rho_old = None
        ok = False
        for it in range(1, max_iter + 1):
            y = apply(x)
            rho = float(x @ y)
            ny = np.linalg.norm(y)
            if ny == 0.0:
                rho, ok = 0.0, True
                break
            x = y / ny
            if rho_old is not None and abs(rho - rho_old) <= rtol * abs(rho):
                ok = True
                break
            rho_old = rho
        total += it
        converged &= ok
        best = max(best, rho)
    return best, {"converged": converged, "iterations": total}


def spectral_norm(B, full_output=False):
    """Largest singular value of ``B`` by power iteration on ``B^T B``.

    A non-converged estimate is returned with a ``RuntimeWarning`` (and
    ``info["converged"] = False`` when ``full_output`` is set).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.size == 0:
        raise ValueError("B must be nonempty")
    lam, info = power_iteration(lambda x: B.T @ (B @ x), B.shape[1])
    if not info["converged"]:
        warnings.warn("spectral_norm: power iteration did not converge",
                      RuntimeWarning, stacklevel=2)
    value = float(np.sqrt(max(lam, 0.0)))
    return (value, info) if full_output else value


def min_eigen_gram(B, full_output=False):
    """Smallest eigenvalue of ``B^T B`` by inverse power iteration.

    Uses the Cholesky factor of the Gram matrix for the inverse applications.
    A singular Gram matrix (including eigenvalues below
    ``d * eps * trace(B^T B)``) gives ``0.0`` (``info["singular"] = True``).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    gram = B.T @ B
    d = gram.shape[0]
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        info = {"converged": True, "iterations": 0, "singular": True}
        return (0.0, info) if full_output else 0.0

    def apply_inv(x):
        y = sla.solve_triangular(L, x, lower=True)
        return sla.solve_triangular(L.T, y, lower=False)

    mu, info = power_iteration(apply_inv, d)
    # eigenvalues at the rounding level of the Gram matrix count as zero
    floor = d * np.finfo(float).eps * np.trace(gram)
    info["singular"] = not np.isfinite(mu) or mu <= 0.0 or 1.0 / mu <= floor
    value = 0.0 if info["singular"] else 1.0 / mu
    if not info["converged"]:
        warnings.warn("min_eigen_gram: inverse iteration did not converge",
                      RuntimeWarning, stacklevel=2)
    return (value, info) if full_output else value


class GramFactorization:
    """Cholesky factor of ``B^T B`` with cached ``||B||`` and ``lambda_min``.

    Raises
    ------
    SingularGramError
        If ``B`` does not have full column rank.
    """

    def __init__(self, B):
        B = np.atleast_2d(np.asarray(B, dtype=float))
        m, d = B.shape
        if m < d:
            raise ValueError(f"B must be tall (m >= d), got {B.shape}")
        self.B = B
        self.gram = B.T @ B
        try:
            self.factor = np.linalg.cholesky(self.gram)
        except np.linalg.LinAlgError as exc:
            raise SingularGramError("B^T B is not positive definite") from exc
        self.norm = spectral_norm(B)
        self.lam_min = min_eigen_gram(B)
        if not self.lam_min > 0.0:
            raise SingularGramError("lambda_min(B^T B) = 0")

    @property
    def shape(self):
        return self.B.shape

    def solve(self, rhs):
        y = sla.solve_triangular(self.factor, rhs, lower=True, check_finite=False)
        return sla.solve_triangular(self.factor, y, lower=True, trans="T",
                                    check_finite=False)


def solve_gram(F, rhs):
    """Solve ``(B^T B) x = rhs`` with two triangular solves."""
    return F.solve(np.asarray(rhs, dtype=float))


class Preimage(NamedTuple):
    v: np.ndarray
    residual: float
    breach: bool


def image_preimage(F, B, target, image_tol=1e-8):
    """Least-squares preimage ``argmin_v ||B v - target||``.

    ``breach`` is set when the optimal residual exceeds
    ``image_tol * (1 + ||target||)``, i.e. ``target`` is not in Im(B).
    """
    target = np.asarray(target, dtype=float)
    v = F.solve(B.T @ target)
    residual = float(np.linalg.norm(B @ v - target))
    breach = residual > image_tol * (1.0 + np.linalg.norm(target))
    return Preimage(v, residual, bool(breach))
