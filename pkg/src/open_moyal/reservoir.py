"""
Finite harmonic reservoir: bath construction, thermal sampling, noise force.

Bath oscillator ``n`` has frequency ``omega_n``, spring constant ``k_n`` and
mass ``m_n = k_n / omega_n**2``. Its state is the complex coordinate

    alpha_n = (q_n / l_n + i l_n p_n / hbar) / sqrt(2),   l_n = sqrt(hbar / (m_n omega_n)).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .rng import stream


class RecurrenceGuardError(ValueError):
    """Simulation horizon too close to the recurrence time of a discrete bath."""


#: horizons must stay below this fraction of the recurrence time 2 pi / d_omega
RECURRENCE_FRACTION = 0.5


def mean_energy(omega, kBT: float, hbar: float):
    """Thermal mean energy ``hbar omega / 2 * coth(hbar omega / (2 kBT))``."""
    omega = np.asarray(omega, dtype=float)
    if kBT <= 0:
        return 0.5 * hbar * omega
    x = hbar * omega / (2.0 * kBT)
    return kBT * x / np.tanh(x)


@dataclass(frozen=True, eq=False)
class ReservoirSpec:
    """Static description of a discrete bath."""

    omegas: np.ndarray
    ks: np.ndarray
    masses: np.ndarray
    temperature: float
    hbar: float = 1.0
    k_B: float = 1.0
    #: grid spacing for uniform baths, sets the recurrence time
    delta_omega: Optional[float] = None

    def __post_init__(self):
        for name in ("omegas", "ks", "masses"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.omegas.ndim != 1 or len(self.omegas) < 1:
            raise ValueError("a reservoir needs at least one mode")
        if not (len(self.omegas) == len(self.ks) == len(self.masses)):
            raise ValueError("omegas, ks and masses must have equal length")
        if np.any(self.omegas <= 0) or np.any(self.ks <= 0) or np.any(self.masses <= 0):
            raise ValueError("frequencies, spring constants and masses must be positive")
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        rel = np.abs(self.masses * self.omegas**2 - self.ks) / self.ks
        if rel.max() > 1e-12:
            raise ValueError("k_n = m_n omega_n^2 violated")
        if self.temperature <= 0 or self.hbar <= 0 or self.k_B <= 0:
            raise ValueError("temperature, hbar and k_B must be positive")

    @classmethod
    def from_modes(cls, omegas, ks, temperature, hbar=1.0, k_B=1.0, delta_omega=None):
        omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
        ks = np.atleast_1d(np.asarray(ks, dtype=float))
        return cls(omegas, ks, ks / omegas**2, temperature, hbar, k_B, delta_omega)

    @property
    def N(self) -> int:
        return len(self.omegas)

    @property
    def kBT(self) -> float:
        return self.k_B * self.temperature

    @property
    def lengths(self) -> np.ndarray:
        return np.sqrt(self.hbar / (self.masses * self.omegas))

    @property
    def recurrence_time(self) -> float:
        if self.delta_omega is None:
            return math.inf
        return 2 * math.pi / self.delta_omega

    @property
    def max_horizon(self) -> float:
        return RECURRENCE_FRACTION * self.recurrence_time

    def check_horizon(self, t_max: float):
        if t_max >= self.max_horizon:
            raise RecurrenceGuardError(
                f"horizon t={t_max:g} exceeds the recurrence guard "
                f"{RECURRENCE_FRACTION:g} * 2 pi / d_omega = {self.max_horizon:.6g}"
            )

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for arr in (self.omegas, self.ks, self.masses):
            h.update(arr.tobytes())
        h.update(repr((self.temperature, self.hbar, self.k_B)).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class ReservoirState:
    alphas: np.ndarray

    def coordinates(self, spec: ReservoirSpec) -> tuple[np.ndarray, np.ndarray]:
        return bath_coordinates(spec, self.alphas)


def bath_coordinates(spec: ReservoirSpec, alphas) -> tuple[np.ndarray, np.ndarray]:
    """``(q_n, p_n)`` from complex coordinates; works on ``(..., N)`` arrays."""
    alphas = np.asarray(alphas)
    l = spec.lengths
    q = math.sqrt(2.0) * l * alphas.real
    p = math.sqrt(2.0) * spec.hbar * alphas.imag / l
    return q, p


def bath_alphas(spec: ReservoirSpec, q, p) -> np.ndarray:
    l = spec.lengths
    return (np.asarray(q) / l + 1j * l * np.asarray(p) / spec.hbar) / math.sqrt(2.0)


def lorentzian_density(omega, gamma: float, Gamma: float, m: float):
    """Spectral density whose cosine transform is ``m gamma Gamma exp(-Gamma t)``."""
    omega = np.asarray(omega, dtype=float)
    return (2.0 / math.pi) * m * gamma * Gamma**2 / (omega**2 + Gamma**2)


def build_lorentzian_bath(
    gamma: float,
    Gamma: float,
    m: float,
    N: int,
    omega_max: float,
    T: float,
    hbar: float = 1.0,
    k_B: float = 1.0,
    horizon: Optional[float] = None,
) -> ReservoirSpec:
    """Discretize the Lorentzian spectral density on a uniform midpoint grid.

    ``omega_n = (n - 1/2) d_omega`` with ``d_omega = omega_max / N`` and
    ``k_n = kappa(omega_n) d_omega``. The discrete correlation is then
    anti-periodic with period ``2 pi / d_omega``.

    Raises
    ------
    ValueError
        If ``Gamma > gamma > 0``, ``N >= 100`` or ``omega_max >= 10 Gamma`` fails.
    RecurrenceGuardError
        If ``horizon`` is not below half the recurrence time.
    """
    if not (Gamma > gamma > 0):
        raise ValueError(f"need Gamma > gamma > 0, got gamma={gamma}, Gamma={Gamma}")
    if N < 100:
        raise ValueError(f"need N >= 100 modes, got {N}")
    if omega_max < 10 * Gamma:
        raise ValueError(f"need omega_max >= 10 Gamma, got {omega_max} < {10 * Gamma}")
    if m <= 0:
        raise ValueError("mass must be positive")
    dw = omega_max / N
    omegas = (np.arange(1, N + 1) - 0.5) * dw
    ks = lorentzian_density(omegas, gamma, Gamma, m) * dw
    spec = ReservoirSpec.from_modes(omegas, ks, T, hbar, k_B, delta_omega=dw)
    if horizon is not None:
        spec.check_horizon(horizon)
    return spec


def correlation(spec: ReservoirSpec, t, chunk: int = 2048):
    """Force correlation ``C(t) = sum_n k_n cos(omega_n t)``."""
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    out = np.empty(flat.shape)
    for i in range(0, len(flat), chunk):
        out[i : i + chunk] = np.cos(np.outer(flat[i : i + chunk], spec.omegas)) @ spec.ks
    out = out.reshape(t.shape)
    return out[()] if out.ndim == 0 else out


def alpha_scale(spec: ReservoirSpec) -> np.ndarray:
    """Standard deviation of Re(alpha_n) and Im(alpha_n) in equilibrium."""
    E = mean_energy(spec.omegas, spec.kBT, spec.hbar)
    return np.sqrt(E / (2.0 * spec.hbar * spec.omegas))


def sample_thermal(spec: ReservoirSpec, rng: np.random.Generator) -> ReservoirState:
    """Draw one thermal configuration from the Gaussian Wigner function."""
    z = rng.standard_normal(2 * spec.N)
    s = alpha_scale(spec)
    return ReservoirState(s * (z[: spec.N] + 1j * z[spec.N :]))


def sample_thermal_batch(spec: ReservoirSpec, master_seed: int, indices) -> np.ndarray:
    """Stack of thermal ``alphas`` with shape ``(len(indices), N)``.

    Row ``i`` equals ``sample_thermal(spec, stream(master_seed, indices[i]))``.
    """
    indices = list(indices)
    z = np.empty((len(indices), 2 * spec.N))
    for row, idx in enumerate(indices):
        stream(master_seed, idx).standard_normal(out=z[row])
    s = alpha_scale(spec)
    return s * (z[:, : spec.N] + 1j * z[:, spec.N :])


def _force_weights(spec: ReservoirSpec) -> np.ndarray:
    return spec.ks * spec.lengths / math.sqrt(2.0)


def noise_force(spec: ReservoirSpec, state, t):
    """Noise symbol ``F(t) = sum_n k_n l_n / sqrt2 (e^{i w t} alpha_n + c.c.)``.

    ``state`` may be a ReservoirState or an ``(..., N)`` array of alphas;
    ``t`` may be an array. The result has shape ``state_shape + t_shape``.
    """
    alphas = state.alphas if isinstance(state, ReservoirState) else np.asarray(state)
    t = np.asarray(t, dtype=float)
    phase = np.exp(1j * np.multiply.outer(t, spec.omegas))  # t_shape + (N,)
    w = _force_weights(spec) * phase
    val = 2.0 * np.real(np.tensordot(alphas, w, axes=([-1], [-1])))
    return val[()] if np.ndim(val) == 0 else val


@dataclass(frozen=True)
class NoiseLinearForm:
    """``constant + sum_n (c_n alpha_n + d_n conj(alpha_n))``."""

    constant: complex
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        if np.shape(self.c) != np.shape(self.d):
            raise ValueError("c and d must have equal length")

    @classmethod
    def constant_form(cls, value: complex, N: int) -> NoiseLinearForm:
        return cls(complex(value), np.zeros(N, complex), np.zeros(N, complex))

    def __add__(self, other: NoiseLinearForm) -> NoiseLinearForm:
        return NoiseLinearForm(self.constant + other.constant, self.c + other.c, self.d + other.d)

    def __mul__(self, s: complex) -> NoiseLinearForm:
        return NoiseLinearForm(self.constant * s, self.c * s, self.d * s)

    __rmul__ = __mul__

    def evaluate(self, state) -> complex:
        alphas = state.alphas if isinstance(state, ReservoirState) else np.asarray(state)
        return self.constant + alphas @ self.c + np.conj(alphas) @ self.d


def noise_force_form(spec: ReservoirSpec, t: float) -> NoiseLinearForm:
    c = _force_weights(spec) * np.exp(1j * spec.omegas * t)
    return NoiseLinearForm(0j, c, np.conj(c))


def k_action(spec: ReservoirSpec, t: float, form: NoiseLinearForm) -> complex:
    """Apply the dissipation super-operator ``K(t)`` to a linear noise form.

    ``K(t) = -sum_n k_n l_n / (sqrt2 hbar w_n) (e^{-i w_n t} d/d alpha_n + e^{i w_n t} d/d alpha_n*)``;
    on ``noise_force_form(t')`` it returns ``-C(t - t')``.
    """
    w = _force_weights(spec) / (spec.hbar * spec.omegas)
    ph = np.exp(-1j * spec.omegas * t)
    return complex(-np.sum(w * (ph * form.c + np.conj(ph) * form.d)))


# --- reproducible bath files -------------------------------------------------


@dataclass(frozen=True)
class BathConfig:
    """Inputs of :func:`build_lorentzian_bath` plus the sampling seed."""

    gamma: float = 1.0
    Gamma: float = 50.0
    m: float = 1.0
    N: int = 4000
    omega_max: float = 1000.0
    T: float = 10.0
    hbar: float = 1e-4
    kB: float = 1.0
    seed: int = 42

    def build(self, horizon: Optional[float] = None) -> ReservoirSpec:
        return build_lorentzian_bath(
            self.gamma, self.Gamma, self.m, self.N, self.omega_max,
            self.T, self.hbar, self.kB, horizon=horizon,
        )

    def to_text(self) -> str:
        lines = []
        for f in self.__dataclass_fields__:
            v = getattr(self, f)
            lines.append(f"{f} = {v!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> BathConfig:
        from .config import parse_flat

        raw = parse_flat(text)
        kwargs = {}
        for key, value in raw.items():
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown bath key {key!r}")
            typ = int if key in ("N", "seed") else float
            try:
                kwargs[key] = typ(value)
            except ValueError:
                raise ValueError(f"bath key {key!r}: cannot read {value!r} as {typ.__name__}")
        return cls(**kwargs)

    def write(self, path):
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> BathConfig:
        return cls.from_text(Path(path).read_text())
