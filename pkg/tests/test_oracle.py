import math

import numpy as np
import pytest

from open_moyal.closed_forms import SystemParams
from open_moyal.nonmarkovian import beta1_memory_ode
from open_moyal.oracle import (
    FullState,
    energy,
    flow_matrix,
    hamiltonian_matrix,
    mc_noise_correlation,
    mc_samples,
    mc_symbol_average,
    normal_modes,
    propagate,
    symplectic_defect,
)
from open_moyal.reservoir import (
    RecurrenceGuardError,
    ReservoirSpec,
    bath_coordinates,
    correlation,
    sample_thermal_batch,
)
from open_moyal.rng import stream
from open_moyal.symbols import PhasePoint, StarAlgebra

ALG = StarAlgebra()
P0 = SystemParams(m=1.0, gamma=1.0, T=10.0, hbar=1e-3)


def thermal_state(spec, seed=0, z=PhasePoint(0.4, -1.1)):
    q, p = bath_coordinates(spec, sample_thermal_batch(spec, seed, [0])[0])
    return FullState(z, q, p)


class TestGenerator:
    def test_free_particle(self):
        M, b = hamiltonian_matrix(None, SystemParams(m=2.0, F0=0.5))
        np.testing.assert_array_equal(M, [[0.0, 0.5], [0.0, 0.0]])
        np.testing.assert_array_equal(b, [0.0, 0.5])

    def test_equations_of_motion(self, small_bath, rng):
        params = SystemParams(m=1.3, gamma=1.0, F0=0.7)
        M, b = hamiltonian_matrix(small_bath, params)
        st = thermal_state(small_bath)
        x = st.vector()
        dx = M @ x + b
        n = small_bath.N + 1
        stretch = st.bath_q - st.z.q
        assert dx[0] == pytest.approx(st.z.p / params.m)
        assert dx[n] == pytest.approx(params.F0 + np.sum(small_bath.ks * stretch))
        np.testing.assert_allclose(dx[1:n], st.bath_p / small_bath.masses)
        np.testing.assert_allclose(dx[n + 1 :], -small_bath.ks * stretch)

    def test_single_mode_frequencies(self):
        # m = m1 = k1 = 1: det(K - w^2 M) = w^4 - 2 w^2
        spec = ReservoirSpec.from_modes([1.0], [1.0], 1.0)
        modes = normal_modes(spec, 1.0)
        roots = np.roots([1, 0, -2, 0, 0]).real
        quartic = np.unique(np.round(roots[roots >= -1e-12], 12)) + 0.0
        np.testing.assert_allclose(np.sort(modes.omega), quartic, atol=1e-7)


class TestPropagate:
    def test_identity(self, small_bath):
        st = thermal_state(small_bath)
        np.testing.assert_array_equal(propagate(st, 0.0, small_bath, P0).vector(), st.vector())

    def test_free_flight(self):
        st = FullState(PhasePoint(1.0, 2.0), np.zeros(0), np.zeros(0))
        out = propagate(st, 3.0, None, SystemParams(m=4.0))
        assert (out.z.q, out.z.p) == (pytest.approx(2.5), pytest.approx(2.0))
        out = propagate(st, 3.0, None, SystemParams(m=4.0, F0=0.5))
        assert out.z.p == pytest.approx(3.5)
        assert out.z.q == pytest.approx(1.0 + 2.0 * 3 / 4 + 0.5 * 9 / 8)

    def test_guard(self, default_bath):
        st = thermal_state(default_bath)
        with pytest.raises(RecurrenceGuardError):
            propagate(st, 13.0, default_bath, P0)

    @pytest.mark.parametrize("F0", [0.0, 0.8])
    def test_backends_agree(self, small_bath, F0):
        params = SystemParams(m=1.0, gamma=1.0, F0=F0, hbar=1e-3)
        st = thermal_state(small_bath)
        for t in (0.5, 2.0, 5.0):
            a = propagate(st, t, small_bath, params, backend="modes")
            b = propagate(st, t, small_bath, params, backend="expm")
            c = propagate(st, t, small_bath, params, backend="symplectic")
            for other in (b, c):
                assert abs(a.z.q - other.z.q) <= 1e-8 * max(1, abs(a.z.q))
                assert abs(a.z.p - other.z.p) <= 1e-8 * max(1, abs(a.z.p))

    def test_energy_conservation(self, small_bath):
        st = thermal_state(small_bath)
        e0 = energy(st, small_bath, P0)
        for t in np.linspace(0.5, 5.0, 10):
            for backend in ("modes", "symplectic"):
                e = energy(propagate(st, t, small_bath, P0, backend=backend), small_bath, P0)
                assert e == pytest.approx(e0, rel=1e-8)

    def test_energy_conservation_full_bath(self, default_bath):
        st = thermal_state(default_bath)
        e0 = energy(st, default_bath, P0)
        for t in (1.0, 5.0):
            assert energy(propagate(st, t, default_bath, P0), default_bath, P0) == pytest.approx(e0, rel=1e-8)

    def test_symplectic(self, small_bath):
        for t in (0.1, 1.0, 5.0):
            S, _ = flow_matrix(small_bath, P0, t)
            assert symplectic_defect(S) <= 1e-8

    def test_flow_matrix_matches_propagate(self, small_bath):
        params = SystemParams(m=1.0, gamma=1.0, F0=0.3)
        st = thermal_state(small_bath)
        S, b = flow_matrix(small_bath, params, 1.7)
        np.testing.assert_allclose(S @ st.vector() + b, propagate(st, 1.7, small_bath, params).vector(), atol=1e-10)


class TestMonteCarlo:
    def test_zero_noise_matches_memory_equation(self, default_bath):
        h = 0.01 / 50
        t = np.arange(0, 2.0 + h / 2, h)
        z0 = PhasePoint(1.0, 1.0)
        ts = mc_symbol_average({"q": ALG.q, "p": ALG.p}, z0, t, default_bath, P0, master_seed=0, zero_noise=True)
        beta_p = beta1_memory_ode(t, 1.0, 0.0, default_bath, m=1.0)["beta1"]
        beta_q = beta1_memory_ode(t, 0.0, 1.0, default_bath, m=1.0)["beta1"]
        predicted = z0.q * beta_p + z0.p * beta_q
        np.testing.assert_allclose(ts["q_mean"], predicted, atol=1e-5)
        np.testing.assert_allclose(ts["p_mean"][1:-1], P0.m * np.gradient(predicted, h)[1:-1], atol=1e-3)
        assert np.all(ts["q_se"] == 0)

    def test_matches_direct_propagation(self, small_bath):
        z0 = PhasePoint(0.5, 0.2)
        t = np.array([0.0, 0.7, 2.5])
        vals = mc_samples({"A": ALG.q * ALG.p + ALG.p}, z0, t, small_bath, P0, 3, 8)
        for i in range(3):
            q, p = bath_coordinates(small_bath, sample_thermal_batch(small_bath, 8, [i])[0])
            for j, tj in enumerate(t):
                out = propagate(FullState(z0, q, p), tj, small_bath, P0, backend="expm")
                assert vals["A"][i, j] == pytest.approx(out.z.q * out.z.p + out.z.p, rel=1e-9, abs=1e-9)

    def test_worker_independence(self, small_bath):
        t = np.linspace(0, 3, 7)
        a = mc_symbol_average(ALG.p * ALG.p, PhasePoint(0, 0), t, small_bath, P0, 1200, 5, workers=1)
        b = mc_symbol_average(ALG.p * ALG.p, PhasePoint(0, 0), t, small_bath, P0, 1200, 5, workers=3)
        assert a.to_csv() == b.to_csv()

    def test_sample_floor(self, small_bath):
        with pytest.raises(ValueError):
            mc_symbol_average(ALG.q, PhasePoint(0, 0), [0.0, 1.0], small_bath, P0, n_samples=50)

    def test_closed_form_columns(self, small_bath):
        t = np.linspace(0.5, 3, 6)
        ts = mc_symbol_average(ALG.q, PhasePoint(0, 0), t, small_bath, P0, 200, 1, closed_form=np.zeros(6))
        assert ts.names == ["t", "mean", "stderr", "closed_form", "abs_diff", "pass_flag"]
        np.testing.assert_array_equal(ts["abs_diff"], np.abs(ts["mean"]))

    def test_guard_propagates(self, default_bath):
        with pytest.raises(RecurrenceGuardError):
            mc_symbol_average(ALG.q, PhasePoint(0, 0), [0.0, 20.0], default_bath, P0, 100, 1)


@pytest.fixture(scope="module")
def est(default_bath):
    t0 = 1.3
    pairs = [(t0, t0), (t0, t0 + 3 / 50), (t0 + 3 / 50, t0)]
    return mc_noise_correlation(default_bath, pairs, n_samples=10_000, master_seed=42)


class TestNoiseCorrelation:
    def test_equal_time(self, est, default_bath):
        target = default_bath.kBT * correlation(default_bath, 0.0)
        assert abs(est.estimate[0] - target) <= 3 * est.stderr[0]

    def test_lag(self, est, default_bath):
        target = default_bath.kBT * 50.0 * math.exp(-3)
        assert abs(est.estimate[1] - target) <= max(3 * est.stderr[1], 0.05 * target)

    def test_symmetry(self, est):
        assert abs(est.estimate[1] - est.estimate[2]) <= est.stderr[1]

    def test_sample_floor(self, default_bath):
        with pytest.raises(ValueError):
            mc_noise_correlation(default_bath, [(0, 0)], n_samples=999)

    def test_streams_are_counter_based(self):
        a = stream(42, 7).standard_normal(4)
        stream(42, 6).standard_normal(1000)
        np.testing.assert_array_equal(a, stream(42, 7).standard_normal(4))
        assert not np.array_equal(a, stream(42, 8).standard_normal(4))
