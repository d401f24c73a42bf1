import math

import numpy as np
import pytest

from qcsim import operators as ops
from qcsim import trajectories as tj
from qcsim.errors import StabilityError, StepFailure
from qcsim.lindblad import LindbladModel, rhs
from qcsim.trajectories import DIFFUSIVE, HETERODYNE, MeasurementChannel, NoisePlan


def random_density(n, rng):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def qubit_like(gamma=1.0):
    x = np.diag([-1.0, 0.0, 1.0]).astype(complex)
    h = 0.5 * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    return LindbladModel(h), [MeasurementChannel(x, gamma, DIFFUSIVE, "y")], x


def test_h_superop_properties():
    a = ops.annihilation(30)
    coh = ops.ket2dm(ops.coherent_state(1.2 - 0.4j, 30))
    assert np.max(np.abs(tj.h_superop(a, coh))) < 1e-9
    rng = np.random.default_rng(0)
    x = ops.quadrature(6)
    rho = random_density(6, rng)
    assert abs(np.trace(tj.h_superop(x, rho))) < 1e-12
    evals, evecs = np.linalg.eigh(x)
    proj = np.outer(evecs[:, 2], evecs[:, 2].conj())
    assert np.max(np.abs(tj.h_superop(x, proj))) < 1e-12


def test_no_channels_is_euler_step():
    model, _, _ = qubit_like()
    rho = random_density(3, np.random.default_rng(1))
    out, rec = tj.sme_step(model, [], rho, 1e-3, [])
    assert rec.size == 0
    assert np.allclose(out, rho + 1e-3 * rhs(model, rho), atol=1e-14)


def test_eigenstate_is_fixed_and_record_law():
    gamma, dt, dw = 2.0, 1e-3, 0.017
    x = np.diag([-1.0, 0.5, 2.0]).astype(complex)
    model = LindbladModel(np.zeros((3, 3)))
    ch = [MeasurementChannel(x, gamma)]
    rho = np.diag([0, 1, 0]).astype(complex)
    out, rec = tj.sme_step(model, ch, rho, dt, [dw])
    assert np.allclose(out, rho, atol=1e-15)
    assert rec[0].real == pytest.approx(gamma * 0.5 * dt + math.sqrt(gamma / 2) * dw, abs=1e-15)


def _mean_drift(model, channels, rho, dt, n, seed):
    """Monte-Carlo mean and standard error of (rho' - rho)/dt."""
    rng = np.random.default_rng(seed)
    dws = rng.standard_normal((n, tj.n_real_noises(channels))) * math.sqrt(dt)
    acc = np.zeros_like(rho)
    acc2 = np.zeros(rho.shape)
    for dw in dws:
        out, _ = tj.sme_step(model, channels, rho, dt, dw)
        d = (out - rho) / dt
        acc += d
        acc2 += np.abs(d) ** 2
    mean = acc / n
    se = np.sqrt(np.maximum(acc2 / n - np.abs(mean) ** 2, 0) / n)
    return mean, se


def test_diffusive_martingale_reproduces_unconditional_generator():
    model, channels, x = qubit_like(gamma=1.5)
    rng = np.random.default_rng(2)
    rho = random_density(3, rng)
    mean, se = _mean_drift(model, channels, rho, 1e-3, 100_000, 7)
    target = rhs(tj.unconditional_model(model, channels), rho)
    assert np.all(np.abs(mean - target) <= 3 * se + 1e-12)
    expect = rhs(LindbladModel(model.hamiltonian, dephasings=((1.5, x),)), rho)
    assert np.allclose(target, expect, atol=1e-12)


def test_heterodyne_martingale():
    a = ops.annihilation(6)
    model = LindbladModel(0.3 * a.conj().T @ a)
    channels = [MeasurementChannel(a, 0.8, HETERODYNE, "J")]
    rho = 0.7 * ops.ket2dm(ops.coherent_state(0.4, 6, 1e-3)) + 0.3 * random_density(6, np.random.default_rng(8))
    rho /= np.trace(rho)
    mean, se = _mean_drift(model, channels, rho, 1e-3, 100_000, 9)
    target = rhs(LindbladModel(model.hamiltonian, dissipators=((0.8, a),)), rho)
    assert np.all(np.abs(mean - target) <= 3 * se + 1e-12)


def test_heterodyne_record_quadratures():
    a = ops.annihilation(8)
    model = LindbladModel(np.zeros((8, 8)))
    ch = [MeasurementChannel(a, 1.0, HETERODYNE, "J")]
    tr = tj.simulate_trajectory(model, ch, ops.coherent_state(0.5, 8, 1e-4), NoisePlan(3, 1e-3, 50))
    rec = tr.record
    assert np.allclose(rec.J_x[:, 0], 2 * np.cumsum(rec.channel("J").real))
    assert np.allclose(rec.J_y[:, 0], 2 * np.cumsum(rec.channel("J").imag))


def test_noise_plan_reproducible():
    p = NoisePlan(11, 1e-3, 100)
    assert np.array_equal(p.increments(2), NoisePlan(11, 1e-3, 100).increments(2))
    assert not np.array_equal(p.increments(2), NoisePlan(12, 1e-3, 100).increments(2))
    inc = NoisePlan(5, 0.01, 200_000).increments(1)
    assert inc.var() == pytest.approx(0.01, rel=0.01)
    assert tj.trajectory_seed(1, 0) != tj.trajectory_seed(1, 1)


def test_trajectory_reproducible_and_ket_density_paths_agree():
    model, channels, x = qubit_like()
    psi0 = np.ones(3, complex) / math.sqrt(3)
    plan = NoisePlan(4, 1e-4, 2000)
    t1 = tj.simulate_trajectory(model, channels, psi0, plan, probes=[x], store_steps=[2000])
    t2 = tj.simulate_trajectory(model, channels, psi0, plan, probes=[x], store_steps=[2000])
    assert np.array_equal(t1.expectations, t2.expectations)
    assert np.array_equal(t1.record.increments, t2.record.increments)
    td = tj.simulate_trajectory(model, channels, ops.ket2dm(psi0), plan, probes=[x], store_steps=[2000])
    # both schemes are weakly first order; pathwise they agree to O(dt)
    assert ops.trace_distance(t1.density(2000), td.density(2000)) < 0.02
    assert np.max(np.abs(t1.expectations - td.expectations)) < 0.03


def test_ensemble_single_matches_simulate_and_batching_invariant(monkeypatch):
    model, channels, x = qubit_like()
    psi0 = np.ones(3, complex) / math.sqrt(3)
    dt, n = 1e-3, 100
    exps, recs, sums, trajs = tj.run_ensemble(model, channels, psi0, 5, 42, dt, n, probes=[x],
                                              store_steps=[n], keep=True)
    for k in range(5):
        t = tj.simulate_trajectory(model, channels, psi0, NoisePlan(tj.trajectory_seed(42, k), dt, n),
                                   probes=[x])
        assert np.array_equal(t.expectations, exps[k])
        assert np.array_equal(t.record.increments, recs[k])
    monkeypatch.setattr(tj, "KET_BATCH", 2)
    monkeypatch.setenv("QCSIM_THREADS", "3")
    exps2, recs2, sums2, _ = tj.run_ensemble(model, channels, psi0, 5, 42, dt, n, probes=[x], store_steps=[n])
    assert np.array_equal(exps, exps2)
    assert np.array_equal(recs, recs2)
    assert np.allclose(sums[n], sums2[n], atol=1e-15)
    rho0 = 0.8 * ops.ket2dm(psi0) + 0.2 * np.eye(3) / 3
    mean = tj.ensemble_mean(model, channels, rho0, 1, 42, [0.0, n * dt], dt)
    t = tj.simulate_trajectory(model, channels, rho0, NoisePlan(tj.trajectory_seed(42, 0), dt, n),
                               store_steps=[n])
    assert np.array_equal(mean[-1], t.density(n))


def test_record_mean_tracks_expectation():
    gamma, dt, n = 1.0, 1e-3, 50
    model, channels, x = qubit_like(gamma)
    psi0 = np.array([0.2, 0.3, 0.9], complex)
    psi0 /= np.linalg.norm(psi0)
    exps, recs, _, _ = tj.run_ensemble(model, channels, psi0, 2000, 3, dt, n, probes=[x])
    dy = recs[:, :, 0].real
    drift = gamma * exps[:, :-1, 0].real * dt
    resid = (dy - drift).sum(axis=1)
    # the residual is sqrt(Gamma/2) W(T): zero mean with variance Gamma T / 2
    se = math.sqrt(gamma * n * dt / 2 / resid.size)
    assert abs(resid.mean()) < 3 * se
    innov = tj.innovations(dy[0], exps[0, :-1, 0].real, gamma, dt)
    assert innov.var() == pytest.approx(dt, rel=0.5)


def test_positivity_failure_reported():
    x = np.diag([-1.0, 1.0]).astype(complex)
    model = LindbladModel(np.zeros((2, 2)))
    ch = [MeasurementChannel(x, 1.0)]
    rho = np.diag([0.5, 0.5]).astype(complex)
    with pytest.raises(StepFailure) as err:
        tj.sme_step(model, ch, rho, 1e-3, [5.0], step=3, seed=17)
    assert err.value.step == 3 and err.value.seed == 17
    with pytest.raises(StabilityError):
        tj.check_sme_stability(ch, 0.1)


def test_record_driven_free_rotation_and_drive():
    dim, omega, dt = 20, 1.0, 0.01
    psi = ops.coherent_state(0.5, dim)
    out = tj.record_driven_unitary_step(omega, 0.0, 1.0, 0.3 + 0.1j, dt, psi, 1.0)
    b = ops.annihilation(dim)
    assert ops.expectation(out, b) == pytest.approx(0.5 * np.exp(-1j * omega * dt), abs=1e-10)
    # noiseless record (dJ = kappa alpha0 dt): deterministic drive G0|alpha0|^2 on x
    g0, kappa, alpha0 = 0.1, 4.0, 2.0
    vac = ops.basis(dim, 0)
    dJ = kappa * alpha0 * dt
    state = vac
    for _ in range(100):
        state = tj.record_driven_unitary_step(0.0, g0, kappa, dJ, dt, state, alpha0)
    # H = F x with F = G0|alpha0|^2 gives <p> = <i(b^dag - b)> = -2 F t
    p = 1j * (b.conj().T - b)
    assert ops.expectation(state, p).real == pytest.approx(-2 * g0 * alpha0**2 * 1.0, abs=1e-10)


def test_record_driven_average_is_reduced_master_equation():
    dim, omega, g0, kappa, alpha0, dt = 8, 1.0, 0.2, 2.0, 1.5, 1e-3
    rng = np.random.default_rng(4)
    rho = random_density(dim, rng)
    n = 100_000
    dZ = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(dt / 2)
    dJ = kappa * alpha0 * dt + math.sqrt(kappa) * dZ
    out = tj.record_driven_unitary_step(omega, g0, kappa, dJ, dt, np.broadcast_to(rho, (n, dim, dim)), alpha0)
    d = (out - rho) / dt
    mean = d.mean(axis=0)
    se = d.std(axis=0) / math.sqrt(n)
    b = ops.annihilation(dim)
    x = b + b.conj().T
    gamma = 4 * g0**2 * alpha0**2 / kappa
    ref = LindbladModel(omega * b.conj().T @ b + g0 * alpha0**2 * x, dissipators=((gamma, x),))
    # the O(dt) Taylor remainder of the unitary is far below the statistical error here
    assert np.all(np.abs(mean - rhs(ref, rho)) <= 3 * se + 1e-3)


def test_hybrid_diagnostics_basic():
    dims = (6, 4)
    a = ops.embed(ops.annihilation(6), dims, 0)
    model = LindbladModel(np.zeros((24, 24)))
    ch = [MeasurementChannel(a, 1.0, HETERODYNE, "J")]
    psi0 = np.kron(ops.coherent_state(0.3, 6, 1e-4), ops.basis(4, 1))
    _, _, _, trajs = tj.run_ensemble(model, ch, psi0, 20, 1, 1e-3, 20, keep=True)
    hs = tj.hybrid_diagnostics(trajs, dims, a, alpha_offset=1.0)
    assert hs.total_weight == pytest.approx(1.0)
    num = ops.number(4)
    assert hs.average(num) == pytest.approx(np.trace(num @ hs.rho_q), abs=1e-14)
    assert hs.average(lambda al: al * np.eye(4)) == pytest.approx(hs.alpha.mean(), abs=1e-12)
