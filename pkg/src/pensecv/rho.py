"""Bounded rho functions, the M-scale, and robustness weights.

All rho families are stored in their textbook (unnormalized) form with
``psi'(0) = 1``.  Anything that enters a loss or the M-scale equation uses
``rho / rho_sup`` so that the bounded part of the loss is always 1 and the
M-scale's right-hand side ``delta`` reads as a fraction of observations.
"""

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import norm

from . import _kernels as K
from .exceptions import DegenerateResiduals, NonConvergence

RhoKind = Literal["bisquare", "lqq", "hampel", "square"]

_KIND_CODES = {"bisquare": K.BISQUARE, "lqq": K.LQQ, "hampel": K.HAMPEL, "square": K.SQUARE}

# canonical LQQ tuple (b, c, s); b and c are scaled by the cutoff knob
LQQ_CANONICAL = (1.473, 0.982, 1.5)


def _parameters(kind, cutoff):
    if kind == "bisquare":
        return np.array([cutoff])
    if kind == "lqq":
        b, c, s = LQQ_CANONICAL
        b, c = b * cutoff, c * cutoff
        a = (2.0 * c + 2.0 * b - b * s) / (s - 1.0)
        return np.array([b, c, s, a])
    if kind == "hampel":
        return np.array([cutoff, 2.0 * cutoff, 4.0 * cutoff])
    if kind == "square":
        return np.zeros(1)
    raise ValueError(f"unknown rho kind {kind!r}")


@dataclass(frozen=True)
class RhoFunction:
    """A bounded (or, for testing, the unbounded square) rho function.

    Parameters
    ----------
    kind : {"bisquare", "lqq", "hampel", "square"}
    cutoff : float
        Bisquare: the constant beyond which rho is flat.  LQQ and Hampel: a
        single knob multiplying the family's canonical breakpoints
        (LQQ ``(1.473, 0.982, 1.5)`` for ``(b, c, s)``, Hampel ``(a, 2a, 4a)``).
        Ignored for ``square``.
    """

    kind: RhoKind = "bisquare"
    cutoff: float = 1.5476
    params: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown rho kind {self.kind!r}")
        if self.kind != "square" and not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        object.__setattr__(self, "params", _parameters(self.kind, float(self.cutoff)))

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def flat_cutoff(self) -> float:
        """Smallest ``|x|`` beyond which rho is constant (``inf`` for square)."""
        if self.kind == "bisquare":
            return float(self.params[0])
        if self.kind == "lqq":
            b, c, _, a = self.params
            return float(a + b + c)
        if self.kind == "hampel":
            return float(self.params[2])
        return np.inf

    @property
    def rho_sup(self) -> float:
        if self.kind == "square":
            return np.inf
        return float(K.rho_scalar(self.code, self.params, 2.0 * self.flat_cutoff))

    @property
    def normalizer(self) -> float:
        """Divisor applied to rho inside losses; 1 for the unbounded square."""
        return 1.0 if self.kind == "square" else self.rho_sup

    def rho(self, x):
        return _apply(K.rho_vec, self, x)

    def psi(self, x):
        return _apply(K.psi_vec, self, x)

    def psi_prime(self, x):
        return _apply(K.psi_prime_vec, self, x)

    def weight(self, x):
        """``psi(x) / x`` with the limit ``psi'(0)`` at zero."""
        return _apply(K.weight_vec, self, x)

    def rho_normalized(self, x):
        return self.rho(x) / self.normalizer


def _apply(kernel, f, x):
    arr = np.asarray(x, dtype=float)
    out = kernel(f.code, f.params, np.atleast_1d(arr).ravel())
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def rho_eval(f: RhoFunction, x):
    return f.rho(x)


def psi_eval(f: RhoFunction, x):
    return f.psi(x)


def psi_prime_eval(f: RhoFunction, x):
    return f.psi_prime(x)


def weight_eval(f: RhoFunction, x):
    return f.weight(x)


@dataclass(frozen=True)
class MScaleSpec:
    """Right-hand side and stopping rule of the M-scale equation."""

    delta: float = 0.5
    tolerance: float = 1e-10
    max_iterations: int = 200

    def __post_init__(self):
        if not 0 < self.delta <= 0.5:
            raise ValueError("delta must lie in (0, 0.5]")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")


_GL_NODES, _GL_WEIGHTS = leggauss(64)


def _breakpoints(f: RhoFunction):
    if f.kind == "bisquare":
        return [0.0, f.flat_cutoff]
    if f.kind == "lqq":
        b, c, _, a = f.params
        return [0.0, c, b + c, a + b + c]
    a, b, c = f.params
    return [0.0, a, b, c]


def _expected_rho(f: RhoFunction) -> float:
    # E[rho(Z) / rho_sup], Z ~ N(0, 1): Gauss-Legendre on each smooth piece
    # plus the flat tail, which contributes exactly P(|Z| > flat cutoff)
    total = 0.0
    knots = _breakpoints(f)
    for lo, hi in zip(knots[:-1], knots[1:]):
        z = 0.5 * (hi - lo) * _GL_NODES + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * np.dot(_GL_WEIGHTS, f.rho_normalized(z) * norm.pdf(z))
    return float(2.0 * total + 2.0 * norm.sf(knots[-1]))


def calibrate_cutoff(kind: RhoKind, delta: float) -> RhoFunction:
    """Cutoff making the M-scale consistent for the normal standard deviation.

    Solves ``E[rho(Z) / rho_sup] = delta`` for ``Z ~ N(0, 1)``.
    """
    if not 0 < delta <= 0.5:
        raise ValueError("delta must lie in (0, 0.5]")
    if kind == "square":
        raise ValueError("the square rho has no cutoff to calibrate")

    def gap(c):
        return _expected_rho(RhoFunction(kind, c)) - delta

    lo, hi = 0.1, 30.0
    if gap(lo) * gap(hi) > 0:
        raise ValueError(f"cannot bracket a cutoff for ({kind}, {delta}) in [{lo}, {hi}]")
    # expected normalized rho decreases in the cutoff
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return RhoFunction(kind, 0.5 * (lo + hi))


def m_scale(residuals, f: RhoFunction, spec: MScaleSpec = MScaleSpec()) -> float:
    """M-scale of ``residuals`` solving ``mean(rho(r / s) / rho_sup) = delta``.

    Returns 0 for an all-zero residual vector.

    Raises
    ------
    DegenerateResiduals
        If at most ``delta * n`` residuals are nonzero, so no positive root exists.
    NonConvergence
        If neither the fixed-point iteration nor the Newton fallback reaches
        the tolerance.
    """
    r = np.ascontiguousarray(residuals, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("residuals must be non-empty")
    sigma, status, _ = K.mscale(r, f.code, f.params, f.normalizer, spec.delta,
                                spec.tolerance, spec.max_iterations)
    if status == K.DEGENERATE:
        raise DegenerateResiduals(
            f"only {np.count_nonzero(r)} of {r.size} residuals are nonzero; "
            f"need more than {spec.delta * r.size:g}")
    if status == K.NONCONVERGED:
        # the multiplicative update crawls when residuals sit at the edge of
        # the flat region; safeguarded Newton from the last iterate does not
        sigma, status, _ = K.mscale_newton(r, f.code, f.params, f.normalizer, spec.delta,
                                           spec.tolerance, spec.max_iterations, sigma)
    if status == K.NONCONVERGED:
        raise NonConvergence(f"M-scale did not converge in {spec.max_iterations} iterations")
    return float(sigma)


@dataclass(frozen=True)
class WeightVector:
    weights: np.ndarray
    source_scale: float

    def __len__(self):
        return self.weights.shape[0]

    @property
    def n_zero(self) -> int:
        return int(np.count_nonzero(self.weights == 0))


def normalize_weights(raw: np.ndarray) -> np.ndarray:
    """Scale weights so the nonzero ones average to 1."""
    nz = raw > 0
    if not nz.any():
        return np.zeros_like(raw)
    return raw / raw[nz].mean()


def robustness_weights(residuals, f: RhoFunction, scale: float) -> WeightVector:
    """Per-observation weights ``psi(r / scale) / (r / scale)``, nonzero mean 1."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    r = np.asarray(residuals, dtype=float)
    raw = f.weight(r / scale)
    return WeightVector(normalize_weights(np.atleast_1d(raw)), float(scale))
