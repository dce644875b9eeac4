"""
Canonical symbols without the Markov approximation.

The coefficient of ``p`` obeys the memory equation

    m d(beta1)/dt = beta2(0) - int_0^t beta1(t') C(t - t') dt'

which is solved here three ways: by partial fractions of its Laplace
transform (exponential kernel), by RK4 on the auxiliary-variable embedding of
the exponential kernel, and by a trapezoid history convolution that accepts
any correlation function, including a discrete bath.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .closed_forms import StochasticSymbol, beta1_canonical, SystemParams
from .reservoir import ReservoirSpec, correlation
from .symbols import StarAlgebra
from .timeseries import TimeSeries

#: leading order in 1/Gamma is trusted only above this ratio Gamma/gamma
LEADING_ORDER_RATIO = 20.0


class PoleProximityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ExpKernel:
    """``C(t) = m gamma Gamma exp(-Gamma t)``."""

    gamma: float
    Gamma: float
    m: float = 1.0

    def __post_init__(self):
        if not (self.Gamma > self.gamma > 0):
            raise ValueError(f"need Gamma > gamma > 0, got {self.gamma}, {self.Gamma}")
        if self.m <= 0:
            raise ValueError("mass must be positive")

    def __call__(self, t):
        return self.m * self.gamma * self.Gamma * np.exp(-self.Gamma * np.asarray(t, dtype=float))

    def laplace(self, s):
        return self.m * self.gamma * self.Gamma / (s + self.Gamma)

    @property
    def degraded(self) -> bool:
        return self.Gamma < LEADING_ORDER_RATIO * self.gamma

    def markov_params(self, **kw) -> SystemParams:
        return SystemParams(m=self.m, gamma=self.gamma, **kw)


def laplace_beta1(s: complex, beta1_0: float, beta2_0: float, kernel: ExpKernel) -> complex:
    """``(beta1(0) + beta2(0)/(m s)) / (s + C~(s)/m)``."""
    s = complex(s)
    if beta2_0 != 0 and abs(s) < 1e-12:
        raise PoleProximityError("s = 0 is a pole when beta2(0) != 0")
    if abs(s + kernel.Gamma) < 1e-12:
        raise PoleProximityError(f"s = {s} hits the kernel pole -Gamma")
    denom = s + kernel.laplace(s) / kernel.m
    if abs(denom) < 1e-12:
        raise PoleProximityError(f"s = {s} is within 1e-12 of a pole")
    num = beta1_0 + (beta2_0 / (kernel.m * s) if beta2_0 != 0 else 0.0)
    return num / denom


def kernel_poles(kernel: ExpKernel) -> tuple[complex, complex]:
    """Roots of ``s^2 + Gamma s + gamma Gamma``, smaller magnitude first."""
    G, g = kernel.Gamma, kernel.gamma
    disc = cmath.sqrt(G * G - 4 * g * G)
    # stable pairing: large root by direct formula, small root via Vieta
    big = (-G - disc) / 2
    small = g * G / big
    return (small, big) if abs(small) <= abs(big) else (big, small)


def kernel_poles_expansion(kernel: ExpKernel, order: int = 3) -> tuple[float, float]:
    """Poles expanded in ``gamma / Gamma`` around ``(-gamma, -Gamma)``.

    ``s1 = -gamma sum_k Cat_k (gamma/Gamma)^k`` with Catalan numbers, and
    ``s2 = -Gamma - s1``.
    """
    x = kernel.gamma / kernel.Gamma
    s1 = -kernel.gamma * sum(math.comb(2 * k, k) / (k + 1) * x**k for k in range(order + 1))
    return s1, -kernel.Gamma - s1


def _numerator(s, beta1_0, beta2_0, kernel):
    # beta~1(s) = (beta1_0 s + beta2_0/m)(s + Gamma) / (s (s - s1)(s - s2))
    return (beta1_0 * s + beta2_0 / kernel.m) * (s + kernel.Gamma)


def beta1_residues(beta1_0: float, beta2_0: float, kernel: ExpKernel):
    """Residues of ``laplace_beta1`` as a list of ``(pole, residue)``.

    Only simple poles are returned; see :func:`beta1_pole_solution` for the
    double-root case.
    """
    s1, s2 = kernel_poles(kernel)
    out = []
    if beta2_0 != 0:
        out.append((0j, beta2_0 / (kernel.m * kernel.gamma)))
    for a, b in ((s1, s2), (s2, s1)):
        out.append((a, _numerator(a, beta1_0, beta2_0, kernel) / (a * (a - b))))
    return out


def beta1_pole_solution(t, beta1_0: float, beta2_0: float, kernel: ExpKernel):
    """Exact inverse Laplace transform of ``laplace_beta1``."""
    t = np.asarray(t, dtype=float)
    s1, s2 = kernel_poles(kernel)
    if abs(s1 - s2) > 1e-7 * kernel.Gamma:
        total = sum(r * np.exp(s * t) for s, r in beta1_residues(beta1_0, beta2_0, kernel))
        return np.real(total)
    # double pole at s0 = -Gamma/2: residue of G(s) e^{st}/(s - s0)^2
    s0 = -kernel.Gamma / 2
    G = lambda s: _numerator(s, beta1_0, beta2_0, kernel) / s
    dG = (
        (beta1_0 * (2 * s0 + kernel.Gamma) + beta2_0 / kernel.m) * s0
        - (beta1_0 * s0 + beta2_0 / kernel.m) * (s0 + kernel.Gamma)
    ) / s0**2
    total = np.exp(s0 * t) * (dG + t * G(s0))
    if beta2_0 != 0:
        total = total + beta2_0 / (kernel.m * kernel.gamma)
    return np.real(total)


def symbol_p_nonmarkov(t: float, kernel: ExpKernel) -> StochasticSymbol:
    """Momentum symbol to leading order in ``1/Gamma``.

    The ``exp(-Gamma t)`` term restores ``A_p(0) = p``; the noise enters as
    ``F(t - t')``.
    """
    alg = StarAlgebra()
    g, G, m = kernel.gamma, kernel.Gamma, kernel.m
    poly = alg.p * math.exp(-g * t) - alg.q * (m * g * (math.exp(-g * t) - math.exp(-G * t)))
    meta = {"leading_order_degraded": kernel.degraded}
    return StochasticSymbol(poly, t, kernel=lambda s: np.exp(-g * s), noise_sign=-1, metadata=meta)


# --- time-domain solvers -----------------------------------------------------


def _uniform_step(t_grid) -> float:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2:
        raise ValueError("need a 1-d time grid with at least two points")
    if t_grid[0] != 0.0:
        raise ValueError("time grid must start at t = 0")
    h = np.diff(t_grid)
    if np.any(h <= 0) or np.ptp(h) > 1e-9 * h.mean():
        raise ValueError("time grid must be uniform and increasing")
    return float(h.mean())


def _rk4_exponential(t_grid, beta1_0, beta2_0, kernel: ExpKernel):
    """Classical RK4 on the embedding ``x = (beta1, y)``.

    The system is linear with constant coefficients, so one RK4 step is the
    affine map ``x -> P x + c`` with ``P`` the degree-4 Taylor polynomial of
    ``exp(hA)``; iterating it on scalars avoids per-step array overhead.
    """
    h = _uniform_step(t_grid)
    g, G, m = kernel.gamma, kernel.Gamma, kernel.m
    # y(t) = int_0^t beta1(t') Gamma e^{-Gamma (t - t')} dt'
    hA = h * np.array([[0.0, -g], [G, -G]])
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    eye = np.eye(2)
    P = eye + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    c = h * (eye + hA / 2 + hA2 / 6 + hA3 / 24) @ np.array([beta2_0 / m, 0.0])
    p00, p01, p10, p11 = P.ravel().tolist()
    c0, c1 = c.tolist()
    x0, x1 = float(beta1_0), 0.0
    out = [x0]
    for _ in range(len(t_grid) - 1):
        x0, x1 = p00 * x0 + p01 * x1 + c0, p10 * x0 + p11 * x1 + c1
        out.append(x0)
    return np.array(out)


def _history_convolution(t_grid, beta1_0, beta2_0, C: np.ndarray, m: float):
    """Trapezoid in both the memory integral and the time stepping."""
    h = _uniform_step(t_grid)
    n = len(t_grid)
    beta = np.empty(n)
    beta[0] = beta1_0
    mem_prev = 0.0
    for i in range(1, n):
        # int_0^{t_i} beta(t') C(t_i - t') dt' without the beta[i] endpoint
        partial = h * (0.5 * beta[0] * C[i] + np.dot(beta[1:i], C[i - 1 : 0 : -1]))
        rhs = beta[i - 1] + h / (2 * m) * (2 * beta2_0 - mem_prev - partial)
        beta[i] = rhs / (1.0 + h * h * C[0] / (4 * m))
        mem_prev = partial + 0.5 * h * C[0] * beta[i]
    return beta


KernelLike = Union[ExpKernel, ReservoirSpec, Callable]


def beta1_memory_ode(
    t_grid,
    beta1_0: float,
    beta2_0: float,
    kernel: KernelLike,
    m: float | None = None,
    method: str = "auto",
) -> TimeSeries:
    """Solve the memory equation for ``beta1`` on a uniform grid from ``t = 0``.

    Parameters
    ----------
    kernel : ExpKernel, ReservoirSpec or callable
        An ExpKernel uses the auxiliary-variable RK4 path unless
        ``method="history"``. A ReservoirSpec (its discrete correlation) or a
        callable ``C(t)`` always uses the history convolution; ``m`` is then
        required.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    h = _uniform_step(t_grid)
    if isinstance(kernel, ExpKernel):
        m = kernel.m
        if h > 0.01 / kernel.Gamma * (1 + 1e-9):
            raise ValueError(f"step {h:g} exceeds 0.01/Gamma = {0.01 / kernel.Gamma:g}")
        if method in ("auto", "rk4"):
            beta = _rk4_exponential(t_grid, beta1_0, beta2_0, kernel)
        elif method == "history":
            beta = _history_convolution(t_grid, beta1_0, beta2_0, kernel(t_grid), m)
        else:
            raise ValueError(f"unknown method {method!r}")
    else:
        if m is None:
            raise ValueError("mass m is required for a general kernel")
        if isinstance(kernel, ReservoirSpec):
            kernel.check_horizon(t_grid[-1])
            C = correlation(kernel, t_grid)
        else:
            C = np.asarray(kernel(t_grid), dtype=float)
        beta = _history_convolution(t_grid, beta1_0, beta2_0, C, m)
    return TimeSeries(t_grid, {"beta1": beta})


def markov_comparison(t_grid, beta1_0: float, beta2_0: float, kernel: ExpKernel) -> TimeSeries:
    """Markovian and exact ``beta1`` side by side."""
    t_grid = np.asarray(t_grid, dtype=float)
    mk = beta1_canonical(t_grid, beta1_0, beta2_0, kernel.markov_params())
    nm = beta1_pole_solution(t_grid, beta1_0, beta2_0, kernel)
    return TimeSeries(
        t_grid, {"beta1_markov": mk, "beta1_nonmarkov": nm, "abs_diff": np.abs(nm - mk)}
    )
