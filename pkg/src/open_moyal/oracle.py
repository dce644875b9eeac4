"""
Finite-N ground truth: exact classical flow of particle plus bath.

Every Hamiltonian here is quadratic, so the Moyal and Poisson brackets
coincide and a Weyl symbol evolves by composition with the classical flow,
``A(z, t) = A0(Phi_t(z))``. Averaging over bath initial conditions drawn from
the thermal Wigner function therefore gives the exact reservoir-averaged
symbol for the discretized bath. This is the correctness argument for the
whole module.

Phase-space vectors are ordered ``(q, q_1..q_N, p, p_1..p_N)``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .closed_forms import SystemParams
from .reservoir import (
    ReservoirSpec,
    bath_coordinates,
    noise_force,
    sample_thermal_batch,
)
from .symbols import PhasePoint, PolySymbol, evaluate
from .timeseries import TimeSeries

#: samples per work unit; fixed so results do not depend on the worker count
CHUNK = 500

# 6th-order Yoshida composition of velocity Verlet
_Y6 = (0.784513610477560, 0.235573213359357, -1.17767998417887)
_Y6_STEPS = (*_Y6, 1.0 - 2.0 * sum(_Y6), *_Y6[::-1])


@dataclass(frozen=True)
class FullState:
    z: PhasePoint
    bath_q: np.ndarray
    bath_p: np.ndarray

    def __post_init__(self):
        if np.shape(self.bath_q) != np.shape(self.bath_p):
            raise ValueError("bath_q and bath_p must have equal length")

    @property
    def N(self) -> int:
        return len(self.bath_q)

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.z.q], self.bath_q, [self.z.p], self.bath_p])

    @classmethod
    def from_vector(cls, x) -> FullState:
        n = len(x) // 2
        return cls(PhasePoint(float(x[0]), float(x[n])), np.array(x[1:n]), np.array(x[n + 1 :]))


def _parts(spec: Optional[ReservoirSpec], m: float):
    if spec is None:
        return np.array([m]), np.zeros(0), np.zeros(0)
    return np.concatenate([[m], spec.masses]), spec.ks, spec.omegas


def stiffness(spec: Optional[ReservoirSpec], m: float) -> np.ndarray:
    mu, ks, _ = _parts(spec, m)
    K = np.diag(np.concatenate([[ks.sum()], ks]))
    K[0, 1:] = K[1:, 0] = -ks
    return K


def hamiltonian_matrix(spec: Optional[ReservoirSpec], params: SystemParams):
    """Generator ``M`` and affine drive ``b`` with ``dX/dt = M X + b``.

    ``spec=None`` is the free particle without a bath.
    """
    mu, _, _ = _parts(spec, params.m)
    n = len(mu)
    M = np.zeros((2 * n, 2 * n))
    M[:n, n:] = np.diag(1.0 / mu)
    M[n:, :n] = -stiffness(spec, params.m)
    b = np.zeros(2 * n)
    b[n] = params.F0
    return M, b


def energy(state: FullState, spec: Optional[ReservoirSpec], params: SystemParams) -> float:
    mu, ks, _ = _parts(spec, params.m)
    p = np.concatenate([[state.z.p], state.bath_p])
    kin = 0.5 * np.sum(p**2 / mu)
    pot = 0.5 * np.sum(ks * (state.bath_q - state.z.q) ** 2) - params.F0 * state.z.q
    return float(kin + pot)


def _sinc_t(Om, t):
    """sin(Om t)/Om, equal to t on the zero mode."""
    return t * np.sinc(Om * t / np.pi)


def _one_minus_cos(Om, t):
    """(1 - cos(Om t))/Om^2, equal to t^2/2 on the zero mode."""
    return 0.5 * t * t * np.sinc(Om * t / (2 * np.pi)) ** 2


class NormalModes:
    """Eigen-decomposition of the mass-weighted stiffness matrix.

    The system is translation invariant, so one mode has zero frequency and
    carries free centre-of-mass motion; the sinc forms below handle it.
    """

    def __init__(self, spec: Optional[ReservoirSpec], m: float):
        self.spec = spec
        self.m = m
        self.mu, _, _ = _parts(spec, m)
        self.n = len(self.mu)
        r = 1.0 / np.sqrt(self.mu)
        D = r[:, None] * stiffness(spec, m) * r[None, :]
        lam, self.U = scipy.linalg.eigh(D)
        self.omega = np.sqrt(np.clip(lam, 0.0, None))
        self.u0 = self.U[0].copy()

    def _funcs(self, t):
        Om = self.omega[:, None]
        t = np.atleast_1d(np.asarray(t, dtype=float))[None, :]
        return np.cos(Om * t), _sinc_t(Om, t), Om * np.sin(Om * t), _one_minus_cos(Om, t)

    def system_rows(self, t_grid, F0: float = 0.0):
        """Rows of the affine flow that give the system coordinates.

        Returns ``(Rq, bq, Rp, bp)`` with ``q(t) = Rq[t] @ X0 + bq[t]`` for a
        full initial vector ``X0``; ``Rq`` has shape ``(nt, 2N+2)``.
        """
        c, s, w, a = self._funcs(t_grid)
        u0 = self.u0[:, None]
        sq, isq = np.sqrt(self.mu), 1.0 / np.sqrt(self.mu)
        rm = math.sqrt(self.m)
        Gc, Gs, Gw = self.U @ (u0 * c), self.U @ (u0 * s), self.U @ (u0 * w)
        Rq = np.hstack([(sq[:, None] * Gc).T, (isq[:, None] * Gs).T]) / rm
        Rp = np.hstack([(-sq[:, None] * Gw).T, (isq[:, None] * Gc).T]) * rm
        u02 = self.u0[:, None] ** 2
        bq = F0 / self.m * np.sum(u02 * a, axis=0)
        bp = F0 * np.sum(u02 * s, axis=0)
        return Rq, bq, Rp, bp

    def propagate(self, X0: np.ndarray, t: float, F0: float = 0.0) -> np.ndarray:
        c, s, w, a = (f[:, 0] for f in self._funcs(t))
        n = self.n
        sq, isq = np.sqrt(self.mu), 1.0 / np.sqrt(self.mu)
        A = self.U.T @ (sq * X0[:n])
        B = self.U.T @ (isq * X0[n:])
        Fm = self.u0 * (F0 / math.sqrt(self.m))
        x = isq * (self.U @ (c * A + s * B + a * Fm))
        p = sq * (self.U @ (-w * A + c * B + s * Fm))
        return np.concatenate([x, p])

    def flow_matrix(self, t: float, F0: float = 0.0):
        """Dense ``(S, b)`` with ``X(t) = S X0 + b``; memory grows as (2N+2)^2."""
        c, s, w, a = (f[:, 0] for f in self._funcs(t))
        U = self.U
        sq, isq = np.sqrt(self.mu), 1.0 / np.sqrt(self.mu)
        blk = lambda d, left, right: left[:, None] * ((U * d) @ U.T) * right[None, :]
        S = np.block(
            [[blk(c, isq, sq), blk(s, isq, isq)], [blk(-w, sq, sq), blk(c, sq, isq)]]
        )
        Fm = self.u0 * (F0 / math.sqrt(self.m))
        b = np.concatenate([isq * (U @ (a * Fm)), sq * (U @ (s * Fm))])
        return S, b


_MODE_CACHE: "OrderedDict[tuple, NormalModes]" = OrderedDict()
_MODE_CACHE_SIZE = 3


def normal_modes(spec: Optional[ReservoirSpec], m: float) -> NormalModes:
    key = (None if spec is None else spec.fingerprint, float(m))
    if key in _MODE_CACHE:
        _MODE_CACHE.move_to_end(key)
        return _MODE_CACHE[key]
    modes = NormalModes(spec, m)
    _MODE_CACHE[key] = modes
    while len(_MODE_CACHE) > _MODE_CACHE_SIZE:
        _MODE_CACHE.popitem(last=False)
    return modes


def flow_matrix(spec, params: SystemParams, t: float):
    return normal_modes(spec, params.m).flow_matrix(t, params.F0)


def symplectic_defect(S: np.ndarray) -> float:
    """``max |S^T J S - J|``."""
    n = S.shape[0] // 2
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return float(np.abs(S.T @ J @ S - J).max())


def _max_frequency(spec, m: float) -> float:
    """Gershgorin bound on the largest normal-mode frequency."""
    if spec is None:
        return 0.0
    cross = spec.ks / np.sqrt(m * spec.masses)
    row0 = spec.ks.sum() / m + cross.sum()
    return float(np.sqrt(max(row0, np.max(spec.omegas**2 + cross))))


def _verlet_symplectic(X0, t, spec, params, dt):
    mu, ks, _ = _parts(spec, params.m)
    n = len(mu)
    x, p = X0[:n].copy(), X0[n:].copy()

    def force(x):
        stretch = x[1:] - x[0]
        f = np.empty(n)
        f[0] = params.F0 + np.sum(ks * stretch)
        f[1:] = -ks * stretch
        return f

    steps = max(1, int(math.ceil(abs(t) / dt)))
    h = t / steps
    f = force(x)
    for _ in range(steps):
        for w in _Y6_STEPS:
            p += 0.5 * w * h * f
            x += w * h * p / mu
            f = force(x)
            p += 0.5 * w * h * f
    return np.concatenate([x, p])


def propagate(
    state: FullState,
    t: float,
    spec: Optional[ReservoirSpec],
    params: SystemParams,
    backend: str = "modes",
    dt: Optional[float] = None,
) -> FullState:
    """Exact flow of the full system.

    Backends: ``"modes"`` (normal-mode decomposition, exact), ``"expm"``
    (scipy scaling-and-squaring on the augmented generator, small N only) and
    ``"symplectic"`` (6th-order Yoshida / velocity Verlet with step ``dt``).
    """
    if spec is not None:
        spec.check_horizon(abs(t))
        if state.N != spec.N:
            raise ValueError(f"state has {state.N} bath modes, spec has {spec.N}")
    elif state.N:
        raise ValueError("bath coordinates given without a reservoir")
    X0 = state.vector()
    if t == 0:
        return FullState.from_vector(X0)
    if backend == "modes":
        X = normal_modes(spec, params.m).propagate(X0, t, params.F0)
    elif backend == "expm":
        M, b = hamiltonian_matrix(spec, params)
        d = len(b)
        A = np.zeros((d + 1, d + 1))
        A[:d, :d], A[:d, d] = M, b
        E = scipy.linalg.expm(t * A)
        X = E[:d, :d] @ X0 + E[:d, d]
    elif backend == "symplectic":
        if dt is None:
            wmax = _max_frequency(spec, params.m)
            dt = 0.02 / wmax if wmax > 0 else abs(t)
        X = _verlet_symplectic(X0, t, spec, params, dt)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return FullState.from_vector(X)


# --- Monte Carlo ---------------------------------------------------------------


def _chunks(n: int):
    return [(i, min(i + CHUNK, n)) for i in range(0, n, CHUNK)]


def mc_samples(
    symbols: dict,
    z0: PhasePoint,
    t_grid,
    spec: ReservoirSpec,
    params: SystemParams,
    n_samples: int,
    master_seed: int,
    zero_noise: bool = False,
    workers: int = 1,
) -> dict:
    """Per-sample values ``A0(Phi_t(z0, bath))`` with shape ``(n_samples, nt)``."""
    t_grid = np.asarray(t_grid, dtype=float)
    spec.check_horizon(float(np.max(np.abs(t_grid))))
    modes = normal_modes(spec, params.m)
    Rq, bq, Rp, bp = modes.system_rows(t_grid, params.F0)
    n = modes.n
    # split rows into system part (fixed z0) and bath part (sampled)
    q_sys = Rq[:, 0] * z0.q + Rq[:, n] * z0.p + bq
    p_sys = Rp[:, 0] * z0.q + Rp[:, n] * z0.p + bp
    Bq = np.hstack([Rq[:, 1:n], Rq[:, n + 1 :]]).T.copy()  # (2N, nt)
    Bp = np.hstack([Rp[:, 1:n], Rp[:, n + 1 :]]).T.copy()

    if zero_noise:
        n_samples = 1

    out = {name: np.empty((n_samples, len(t_grid))) for name in symbols}

    def work(bounds):
        lo, hi = bounds
        if zero_noise:
            Q = q_sys[None, :]
            P = p_sys[None, :]
        else:
            alphas = sample_thermal_batch(spec, master_seed, range(lo, hi))
            bq_, bp_ = bath_coordinates(spec, alphas)
            Y = np.hstack([bq_, bp_])
            Q = Y @ Bq + q_sys
            P = Y @ Bp + p_sys
        for name, A in symbols.items():
            out[name][lo:hi] = np.real(evaluate(A, Q, P))

    chunks = _chunks(n_samples)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(work, chunks))
    else:
        for c in chunks:
            work(c)
    return out


def _summarize(values: np.ndarray):
    n = values.shape[0]
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def mc_symbol_average(
    A0,
    z0: PhasePoint,
    t_grid,
    spec: ReservoirSpec,
    params: SystemParams,
    n_samples: int = 10_000,
    master_seed: int = 42,
    zero_noise: bool = False,
    workers: int = 1,
    closed_form=None,
    rel_tol: float = 0.02,
) -> TimeSeries:
    """Thermal average of a symbol carried along the exact flow.

    ``A0`` is a PolySymbol (columns ``mean``, ``stderr``) or a dict of them
    (columns ``<name>_mean``, ``<name>_se``). For a single symbol an optional
    ``closed_form`` (array over ``t_grid``) adds ``closed_form``, ``abs_diff``
    and ``pass_flag``, the latter judged against ``max(3 SE, rel_tol |closed|)``.
    """
    if not zero_noise and n_samples < 100:
        raise ValueError("need at least 100 samples")
    single = isinstance(A0, PolySymbol)
    symbols = {"": A0} if single else dict(A0)
    vals = mc_samples(symbols, z0, t_grid, spec, params, n_samples, master_seed, zero_noise, workers)
    ts = TimeSeries(t_grid)
    for name, v in vals.items():
        mean, se = _summarize(v)
        if single:
            ts["mean"], ts["stderr"] = mean, se
        else:
            ts[f"{name}_mean"], ts[f"{name}_se"] = mean, se
    if closed_form is not None:
        if not single:
            raise ValueError("closed_form needs a single symbol")
        closed = np.broadcast_to(np.asarray(closed_form, dtype=float), ts.t.shape)
        diff = np.abs(ts["mean"] - closed)
        ts["closed_form"], ts["abs_diff"] = closed, diff
        ts["pass_flag"] = diff <= np.maximum(3 * ts["stderr"], rel_tol * np.abs(closed))
    return ts


@dataclass(frozen=True)
class NoiseCorrelation:
    t: np.ndarray
    t_prime: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray


def mc_noise_samples(spec: ReservoirSpec, times, n_samples: int, master_seed: int, workers: int = 1):
    """Noise force ``F(t)`` for each thermal sample, shape ``(n_samples, len(times))``."""
    times = np.asarray(times, dtype=float)
    out = np.empty((n_samples, len(times)))

    def work(bounds):
        lo, hi = bounds
        alphas = sample_thermal_batch(spec, master_seed, range(lo, hi))
        out[lo:hi] = noise_force(spec, alphas, times)

    chunks = _chunks(n_samples)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(work, chunks))
    else:
        for c in chunks:
            work(c)
    return out


def mc_noise_correlation(spec: ReservoirSpec, t_pairs, n_samples: int = 10_000, master_seed: int = 42, workers: int = 1) -> NoiseCorrelation:
    """Monte Carlo ``<F(t) F(t')>`` with standard errors."""
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples")
    pairs = np.asarray(t_pairs, dtype=float).reshape(-1, 2)
    times, inv = np.unique(pairs.ravel(), return_inverse=True)
    F = mc_noise_samples(spec, times, n_samples, master_seed, workers)
    inv = inv.reshape(-1, 2)
    prod = F[:, inv[:, 0]] * F[:, inv[:, 1]]
    est, se = _summarize(prod)
    return NoiseCorrelation(pairs[:, 0], pairs[:, 1], est, se)
