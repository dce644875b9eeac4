"""
Markovian solutions for a free particle coupled to the harmonic bath.

Time-dependent symbols are represented as a polynomial in (q, p) plus noise
integrals ``int_0^t g(t') F(s (t' - t)) dt'``, where the sign ``s`` fixes the
argument convention of the noise force (``s = +1`` gives ``F(t' - t)``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .symbols import PhasePoint, PolySymbol, StarAlgebra, evaluate


@dataclass(frozen=True)
class SystemParams:
    m: float = 1.0
    gamma: float = 1.0
    T: float = 10.0
    F0: float = 0.0
    hbar: float = 1.0
    k_B: float = 1.0

    def __post_init__(self):
        if self.m <= 0 or self.gamma <= 0:
            raise ValueError("mass and decay rate must be positive")
        if self.T < 0:
            raise ValueError("temperature must be non-negative")
        if self.hbar <= 0 or self.k_B <= 0:
            raise ValueError("hbar and k_B must be positive")

    @property
    def kBT(self) -> float:
        return self.k_B * self.T

    @property
    def diffusion(self) -> float:
        return self.kBT / (self.m * self.gamma)

    @property
    def mobility(self) -> float:
        return 1.0 / (self.m * self.gamma)


@dataclass(frozen=True)
class StochasticSymbol:
    """``poly + int_0^t g(t') F(s(t'-t)) dt' [+ double noise integral]``."""

    poly: PolySymbol
    t: float
    kernel: Optional[Callable] = None
    noise_sign: int = 1
    #: optional ``h(t', t'')`` for ``int int h F(s(t'-t)) F(s(t''-t)) dt' dt''``
    double_kernel: Optional[Callable] = None
    metadata: dict = field(default_factory=dict)

    def mean(self, z: PhasePoint) -> float:
        """Reservoir average; the noise force has zero mean."""
        return float(np.real(evaluate(self.poly, z)))


def _alg(params: SystemParams) -> StarAlgebra:
    return StarAlgebra(params.hbar)


def _meta(Gamma):
    return {} if Gamma is None else {"t_min": 5.0 / Gamma}


def beta1_canonical(t, beta1_0: float, beta2_0: float, params: SystemParams):
    g, m = params.gamma, params.m
    e = np.exp(-g * np.asarray(t, dtype=float))
    return beta1_0 * e + beta2_0 / (m * g) * (1.0 - e)


def symbol_q(t: float, params: SystemParams, Gamma: Optional[float] = None) -> StochasticSymbol:
    alg = _alg(params)
    g, m = params.gamma, params.m
    e = math.exp(-g * t)
    poly = alg.q * e + alg.p * ((1.0 - e) / (m * g))
    return StochasticSymbol(
        poly, t, kernel=lambda s: (1.0 - np.exp(-g * s)) / (m * g), metadata=_meta(Gamma)
    )


def symbol_p(t: float, params: SystemParams, Gamma: Optional[float] = None) -> StochasticSymbol:
    alg = _alg(params)
    g, m = params.gamma, params.m
    e = math.exp(-g * t)
    poly = (alg.p - alg.q * (m * g)) * e
    return StochasticSymbol(poly, t, kernel=lambda s: np.exp(-g * s), metadata=_meta(Gamma))


def drift_correction(t, params: SystemParams):
    """Shifts ``(dq, dp)`` of the averaged canonical symbols under a constant force."""
    g, m, F0 = params.gamma, params.m, params.F0
    t = np.asarray(t, dtype=float)
    one_minus = -np.expm1(-g * t)
    dq = F0 / (m * g) * (t - one_minus / g)
    dp = F0 / g * one_minus
    return dq, dp


def averaged_q(t, z: PhasePoint, params: SystemParams):
    """Reservoir-averaged position symbol, including the constant-force drift."""
    g, m = params.gamma, params.m
    e = np.exp(-g * np.asarray(t, dtype=float))
    return z.q * e + z.p / (m * g) * (1.0 - e) + drift_correction(t, params)[0]


def averaged_p(t, z: PhasePoint, params: SystemParams):
    g, m = params.gamma, params.m
    e = np.exp(-g * np.asarray(t, dtype=float))
    return e * (z.p - m * g * z.q) + drift_correction(t, params)[1]


def symbol_q2(t, z: PhasePoint, params: SystemParams):
    """Averaged symbol of ``q^2`` (no drift term)."""
    g, m, kBT = params.gamma, params.m, params.kBT
    t = np.asarray(t, dtype=float)
    e = np.exp(-g * t)
    Aq = z.q * e + z.p / (m * g) * (1.0 - e)
    return (
        Aq**2
        + z.q**2 * (1.0 - e) ** 2
        + kBT / (m * g**2) * (2 * g * t - 3.0 - e**2 + 4.0 * e)
    )


def symbol_p2(t, z: PhasePoint, params: SystemParams):
    """Averaged symbol of ``p^2`` (no drift term)."""
    g, m, kBT = params.gamma, params.m, params.kBT
    t = np.asarray(t, dtype=float)
    e2 = np.exp(-2 * g * t)
    Ap = np.exp(-g * t) * (z.p - m * g * z.q)
    return Ap**2 + m * kBT * (1.0 - e2) + e2 * (m * g * z.q) ** 2


def variance_betas(t, beta1_0: float, beta3_0: float, params: SystemParams):
    """Coefficients of ``p^2``, ``pq``, ``q^2`` in the quadratic ansatz."""
    g, m = params.gamma, params.m
    t = np.asarray(t, dtype=float)
    e = np.exp(-g * t)
    beta3 = np.full_like(t, beta3_0)
    beta2 = 2 * beta3_0 / (m * g) * (1.0 - e)
    beta1 = e**2 * beta1_0 + beta3_0 / (m * g) ** 2 * (1.0 - e) ** 2
    return beta1, beta2, beta3


def beta6_mean(t, beta1_0: float, beta3_0: float, params: SystemParams):
    g, m, kBT = params.gamma, params.m, params.kBT
    t = np.asarray(t, dtype=float)
    e = np.exp(-g * t)
    return m * kBT * (
        beta1_0 * (1.0 - e**2)
        + beta3_0 * (2 * g * t - e**2 + 4 * e - 3.0) / (g * m) ** 2
    )


# --- functional evaluation on noise trajectories -----------------------------


def _segment(times, values, lo, hi, tol):
    """Trajectory restricted to [lo, hi], endpoints interpolated if needed."""
    if times[0] > lo + tol or times[-1] < hi - tol:
        raise ValueError(
            f"trajectory covers [{times[0]:g}, {times[-1]:g}] but [{lo:g}, {hi:g}] is needed"
        )
    inside = (times > lo) & (times < hi)
    ts = np.concatenate([[lo], times[inside], [hi]])
    vs = np.concatenate(
        [[np.interp(lo, times, values)], values[inside], [np.interp(hi, times, values)]]
    )
    return ts, vs


def evaluate_on_noise(s: StochasticSymbol, trajectory, z: PhasePoint) -> float:
    """Value of ``s`` for one noise realisation.

    Parameters
    ----------
    s : StochasticSymbol
    trajectory : tuple of arrays ``(times, F)``
        Noise samples on an increasing grid covering the arguments
        ``s.noise_sign * (t' - t)`` for ``t'`` in ``[0, t]``.
    z : PhasePoint

    Returns
    -------
    float
        Polynomial value plus trapezoid quadrature of the noise integrals.
    """
    times, F = (np.asarray(a, dtype=float) for a in trajectory)
    if times.ndim != 1 or times.shape != F.shape or np.any(np.diff(times) <= 0):
        raise ValueError("trajectory needs matching 1-d arrays with increasing times")
    value = float(np.real(evaluate(s.poly, z)))
    if (s.kernel is None and s.double_kernel is None) or s.t == 0:
        return value
    lo, hi = (-s.t, 0.0) if s.noise_sign > 0 else (0.0, s.t)
    tol = 1e-9 * max(1.0, s.t)
    tau, Fv = _segment(times, F, lo, hi, tol)
    tprime = s.noise_sign * tau + s.t  # integration variable t' for each sample
    if s.kernel is not None:
        value += float(np.trapezoid(s.kernel(tprime) * Fv, tau))
    if s.double_kernel is not None:
        H = s.double_kernel(tprime[:, None], tprime[None, :])
        inner = np.trapezoid(H * Fv[None, :], tau, axis=1)
        value += float(np.trapezoid(inner * Fv, tau))
    return value
