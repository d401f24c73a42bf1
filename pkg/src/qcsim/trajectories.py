"""Conditional (stochastic) master equations, measurement records and ensembles.

Diffusive channels ``(Gamma, X)`` with Hermitian ``X`` evolve as::

    d rho = L rho dt + sqrt(Gamma/2) H[X] rho dW,     dy = Gamma <X> dt + sqrt(Gamma/2) dW

and heterodyne channels ``(kappa, a)`` as::

    d rho = L rho dt + sqrt(kappa) H[a dZ*] rho,      dJ = kappa <a> dt + sqrt(kappa) dZ

with ``dZ = (dW1 + i dW2)/sqrt(2)`` and ``H[A] rho = A rho + rho A^dag - tr(A rho + rho A^dag) rho``.
Channels carry their own dissipation: the unconditional generator ``L`` is the
model's plus ``-(Gamma/4)[X,[X,.]]`` per diffusive channel and ``kappa D[a]``
per heterodyne channel (see :func:`unconditional_model`).

States are stepped with Euler-Maruyama and renormalized each step.  When the
initial state is a ket and every dissipative term comes from a monitored
channel, the equivalent normalized stochastic Schrodinger equation is used
instead, batched over trajectories.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, StabilityError, StepFailure
from .lindblad import LindbladModel
from .operators import annihilation, is_hermitian, partial_trace

log = logging.getLogger(__name__)

DIFFUSIVE = "diffusive"
HETERODYNE = "heterodyne"
POSITIVITY_FAIL = -1e-3
# dt * max(rate) bound for stochastic stepping
SME_STABILITY = 0.01
# trajectories simulated together on the ket path
KET_BATCH = 200


@dataclass(frozen=True, eq=False)
class MeasurementChannel:
    """A continuously monitored operator.

    ``kind`` is ``"diffusive"`` (Hermitian ``op``, one real Wiener process) or
    ``"heterodyne"`` (lowering-type ``op``, complex Wiener process).
    """

    op: np.ndarray
    rate: float
    kind: str = DIFFUSIVE
    name: str = ""

    def __post_init__(self):
        op = np.asarray(self.op, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise DimensionError(f"channel operator must be square, got {op.shape}")
        object.__setattr__(self, "op", op)
        rate = float(self.rate)
        if not math.isfinite(rate) or rate < 0:
            raise ValueError(f"channel rate must be finite and >= 0, got {rate}")
        object.__setattr__(self, "rate", rate)
        if self.kind not in (DIFFUSIVE, HETERODYNE):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == DIFFUSIVE and not is_hermitian(op, 1e-10):
            raise ValueError("diffusive channels need a Hermitian operator (to 1e-10)")

    @property
    def n_real(self) -> int:
        return 1 if self.kind == DIFFUSIVE else 2


def unconditional_model(model: LindbladModel, channels: Sequence[MeasurementChannel]) -> LindbladModel:
    """``model`` plus the dissipation implied by monitoring ``channels``."""
    deph = [(c.rate, c.op) for c in channels if c.kind == DIFFUSIVE]
    diss = [(c.rate, c.op) for c in channels if c.kind == HETERODYNE]
    return model.with_terms(dissipators=diss, dephasings=deph)


def h_superop(a: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Conditioning superoperator ``A rho + rho A^dag - tr(A rho + rho A^dag) rho``."""
    a = np.asarray(a)
    rho = np.asarray(rho)
    if a.shape != rho.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {rho.shape}")
    m = a @ rho
    m = m + m.conj().T
    return m - np.trace(m) * rho


# ---------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoisePlan:
    """Seeded Wiener increments: identical plans give identical increments."""

    seed: int
    dt: float
    n_steps: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError(f"n_steps must be a non-negative integer, got {self.n_steps}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def increments(self, n_real: int) -> np.ndarray:
        """Real increments of shape ``(n_steps, n_real)`` with variance ``dt``."""
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(self.seed))))
        return rng.standard_normal((int(self.n_steps), n_real)) * math.sqrt(self.dt)


def trajectory_seed(base_seed: int, index: int) -> int:
    """Deterministic 64-bit seed of trajectory ``index`` within an ensemble."""
    ss = np.random.SeedSequence([int(base_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def n_real_noises(channels) -> int:
    return sum(c.n_real for c in channels)


def check_sme_stability(channels, dt, limit=SME_STABILITY):
    rate = max((c.rate for c in channels), default=0.0)
    if dt * rate > limit:
        raise StabilityError(f"dt={dt} exceeds {limit}/max(rate) = {limit / rate:.3g}")


# ---------------------------------------------------------------- records

@dataclass
class MeasurementRecord:
    """Per-channel record increments (``dy`` real, ``dJ`` complex) on a fixed step."""

    dt: float
    channels: tuple
    kinds: tuple
    increments: np.ndarray  # (n_steps, n_channels) complex

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    def channel(self, key) -> np.ndarray:
        idx = self.channels.index(key) if isinstance(key, str) else int(key)
        return self.increments[:, idx]

    @property
    def J_x(self) -> np.ndarray:
        """Accumulated in-phase current; ``2 Re J`` for heterodyne channels."""
        scale = np.array([2.0 if k == HETERODYNE else 1.0 for k in self.kinds])
        return np.cumsum(self.increments.real, axis=0) * scale

    @property
    def J_y(self) -> np.ndarray:
        scale = np.array([2.0 if k == HETERODYNE else 0.0 for k in self.kinds])
        return np.cumsum(self.increments.imag, axis=0) * scale

    def to_csv(self, path, t0: float = 0.0):
        """Write rows ``(step, time, channel, increment_real, increment_imag)``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "time", "channel", "increment_real", "increment_imag"])
            for k in range(self.n_steps):
                t = t0 + (k + 1) * self.dt
                for c, name in enumerate(self.channels):
                    z = self.increments[k, c]
                    w.writerow([k, repr(float(t)), name, repr(float(z.real)), repr(float(z.imag))])


def innovations(dy, mean_x, gamma: float, dt: float) -> np.ndarray:
    """Wiener increments ``sqrt(2/Gamma)(dy - Gamma <X> dt)`` recovered from a diffusive record."""
    dy = np.asarray(dy).real
    return math.sqrt(2.0 / gamma) * (dy - gamma * np.asarray(mean_x).real * dt)


@dataclass
class Trajectory:
    """One conditional evolution.

    ``expectations[k, j]`` is the probe ``j`` expectation at ``times[k]``;
    ``states`` maps stored step indices to kets or density matrices.
    """

    times: np.ndarray
    expectations: np.ndarray
    record: MeasurementRecord
    seed: int
    states: dict = field(default_factory=dict)
    final_state: np.ndarray | None = None

    def density(self, step: int) -> np.ndarray:
        s = self.states[step]
        return np.outer(s, s.conj()) if s.ndim == 1 else s


# ---------------------------------------------------------------- density-matrix path

def _noise_terms(channels, rho, dw, dt):
    """Conditioning increment and record increments for one step."""
    out = np.zeros_like(rho)
    rec = np.zeros(len(channels), dtype=complex)
    col = 0
    for c, ch in enumerate(channels):
        mean = complex(np.einsum("ij,ji->", ch.op, rho))
        if ch.kind == DIFFUSIVE:
            w = dw[col]
            col += 1
            s = math.sqrt(ch.rate / 2.0)
            out += (s * w) * h_superop(ch.op, rho)
            rec[c] = ch.rate * mean.real * dt + s * w
        else:
            dz = (dw[col] + 1j * dw[col + 1]) / math.sqrt(2.0)
            col += 2
            s = math.sqrt(ch.rate)
            out += s * h_superop(ch.op * np.conj(dz), rho)
            rec[c] = ch.rate * mean * dt + s * dz
    return out, rec



def sme_step(model: LindbladModel, channels, rho, dt: float, dw, step=None, seed=None):
    """One Euler-Maruyama step of the conditional master equation.

    Parameters
    ----------
    model : LindbladModel
        Unmonitored dynamics; channel dissipation is added automatically.
    channels : sequence of MeasurementChannel
    rho : ndarray
        Current conditional state (Hermitian, unit trace).
    dt : float
    dw : array_like
        Real Wiener increments, one per diffusive channel and two per
        heterodyne channel, in channel order.

    Returns
    -------
    rho_next : ndarray
        Hermitized, trace-renormalized state.
    increments : ndarray
        Complex record increment per channel (``dy`` stored as real part).
    """
    rho = np.asarray(rho, dtype=complex)
    dw = np.atleast_1d(np.asarray(dw, dtype=float))
    if dw.size != n_real_noises(channels):
        raise ValueError(f"expected {n_real_noises(channels)} noise increments, got {dw.size}")
    gen = unconditional_model(model, channels).generator if channels else model.generator
    noise, rec = _noise_terms(channels, rho, dw, dt)
    new = rho + dt * gen(rho) + noise
    return _renormalize(new, step, seed), rec


def _renormalize(rho, step=None, seed=None):
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.trace(rho).real)
    if not math.isfinite(tr) or tr <= 0:
        raise StepFailure(f"trace collapsed to {tr} at step {step}", step, seed)
    rho /= tr
    lam = float(np.linalg.eigvalsh(rho)[0])
    if lam < POSITIVITY_FAIL:
        raise StepFailure(
            f"positivity lost at step {step} (seed {seed}): min eigenvalue {lam:.3e}",
            step, seed, lam,
        )
    return rho


def _simulate_density(model, channels, rho0, plan, probes, store_steps):
    dt = plan.dt
    full = unconditional_model(model, channels)
    gen = full.generator
    dws = plan.increments(n_real_noises(channels))
    n = plan.n_steps
    rho = np.array(rho0, dtype=complex)
    exps = np.empty((n + 1, len(probes)), dtype=complex)
    rec = np.empty((n, len(channels)), dtype=complex)
    states = {}
    for k in range(n + 1):
        for j, p in enumerate(probes):
            exps[k, j] = np.einsum("ij,ji->", p, rho)
        if k in store_steps:
            states[k] = rho.copy()
        if k == n:
            break
        noise, rec[k] = _noise_terms(channels, rho, dws[k], dt)
        rho = _renormalize(rho + dt * gen(rho) + noise, k, plan.seed)
    return exps, rec, states, rho


# ---------------------------------------------------------------- ket path

class _KetSystem:
    """CSR operators for the normalized stochastic Schrodinger equation.

    Operators act on row-stacked kets ``psi`` of shape ``(B, N)`` through
    ``(op @ psi.T).T`` so that each trajectory's arithmetic does not depend
    on how many trajectories share the batch.
    """

    def __init__(self, model, channels, probes):
        csr = lambda m: sp.csr_matrix(np.asarray(m, dtype=complex))
        self.h = csr(model.hamiltonian)
        self.ops = [csr(c.op) for c in channels]
        self.ops_h = [csr(c.op.conj().T) for c in channels]
        self.channels = list(channels)
        self.probes = [csr(p) for p in probes]

    @staticmethod
    def apply(op, psi):
        return np.ascontiguousarray((op @ psi.T).T)

    @staticmethod
    def braket(psi, phi):
        return np.sum(psi.conj() * phi, axis=1)

    def step(self, psi, dt, dw):
        """Euler-Maruyama step for a batch; ``dw`` has shape ``(B, n_real)``."""
        drift = -1j * self.apply(self.h, psi)
        noise = np.zeros_like(psi)
        rec = np.empty((psi.shape[0], len(self.channels)), dtype=complex)
        col = 0
        for c, ch in enumerate(self.channels):
            lpsi = self.apply(self.ops[c], psi)
            mean = self.braket(psi, lpsi)
            if ch.kind == DIFFUSIVE:
                s = math.sqrt(ch.rate / 2.0)
                m = mean.real[:, None]
                centred = lpsi - m * psi
                drift -= (0.5 * s * s) * (self.apply(self.ops[c], centred) - m * centred)
                w = dw[:, col:col + 1]
                col += 1
                noise += (s * w) * centred
                rec[:, c] = ch.rate * mean.real * dt + s * w[:, 0]
            else:
                s = math.sqrt(ch.rate)
                m = mean[:, None]
                ldl = self.apply(self.ops_h[c], lpsi)
                drift -= (0.5 * ch.rate) * (ldl - 2.0 * m.conj() * lpsi + (m * m.conj()) * psi)
                dz = (dw[:, col:col + 1] + 1j * dw[:, col + 1:col + 2]) / math.sqrt(2.0)
                col += 2
                noise += (s * dz.conj()) * (lpsi - m * psi)
                rec[:, c] = ch.rate * mean * dt + s * dz[:, 0]
        psi = psi + dt * drift + noise
        norm = np.sqrt(np.sum((psi.conj() * psi).real, axis=1))
        if not np.all(np.isfinite(norm)) or np.any(norm == 0):
            raise StepFailure("ket norm collapsed")
        return psi / norm[:, None], rec

    def expect(self, psi):
        return np.stack([self.braket(psi, self.apply(p, psi)) for p in self.probes], axis=1) \
            if self.probes else np.empty((psi.shape[0], 0), complex)


def ket_path_available(model: LindbladModel, rho0) -> bool:
    return np.ndim(rho0) == 1 and not model.dissipators and not model.dephasings


def _simulate_kets(model, channels, psi0, plans, probes, store_steps):
    """Batched ket trajectories sharing ``dt`` and ``n_steps``."""
    sys_ = _KetSystem(model, channels, probes)
    dt, n = plans[0].dt, plans[0].n_steps
    nr = n_real_noises(channels)
    b = len(plans)
    noises = np.stack([p.increments(nr) for p in plans], axis=1)  # (n, B, nr)
    psi = np.tile(np.asarray(psi0, dtype=complex), (b, 1))
    exps = np.empty((b, n + 1, len(probes)), dtype=complex)
    rec = np.empty((b, n, len(channels)), dtype=complex)
    states = {}
    for k in range(n + 1):
        exps[:, k] = sys_.expect(psi)
        if k in store_steps:
            states[k] = psi.copy()
        if k == n:
            break
        try:
            psi, rec[:, k] = sys_.step(psi, dt, noises[k])
        except StepFailure as exc:
            bad = [p.seed for p, v in zip(plans, np.linalg.norm(psi, axis=1)) if not np.isfinite(v)]
            raise StepFailure(f"ket norm collapsed at step {k}", k, bad[0] if bad else None) from exc
    return exps, rec, states, psi


# ---------------------------------------------------------------- public drivers

def _record(channels, rec, dt):
    names = tuple(c.name or f"ch{i}" for i, c in enumerate(channels))
    return MeasurementRecord(dt, names, tuple(c.kind for c in channels), rec)


def simulate_trajectory(
    model: LindbladModel,
    channels: Sequence[MeasurementChannel],
    rho0: np.ndarray,
    plan: NoisePlan,
    probes: Sequence[np.ndarray] = (),
    store_steps=(),
    check_stability: bool = True,
) -> Trajectory:
    """Iterate :func:`sme_step` (or the ket equivalent) over ``plan``.

    ``rho0`` may be a density matrix or a ket; a ket is propagated as a ket
    when the model has no unmonitored dissipation.  Deterministic given the
    inputs and ``plan.seed``.
    """
    channels = list(channels)
    if check_stability:
        check_sme_stability(channels, plan.dt)
    store_steps = set(store_steps)
    times = np.arange(plan.n_steps + 1) * plan.dt
    if ket_path_available(model, rho0):
        exps, rec, states, psi = _simulate_kets(model, channels, rho0, [plan], list(probes), store_steps)
        states = {k: v[0] for k, v in states.items()}
        return Trajectory(times, exps[0], _record(channels, rec[0], plan.dt), plan.seed, states, psi[0])
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = np.outer(rho0, rho0.conj())
    exps, rec, states, rho = _simulate_density(model, channels, rho0, plan, list(probes), store_steps)
    return Trajectory(times, exps, _record(channels, rec, plan.dt), plan.seed, states, rho)


def grid_steps(t_grid, dt: float) -> np.ndarray:
    """Step indices of ``t_grid`` on a ``dt`` lattice; grid times must be multiples of ``dt``."""
    t_grid = np.asarray(t_grid, dtype=float)
    steps = np.rint(t_grid / dt).astype(int)
    if np.any(np.abs(steps * dt - t_grid) > 1e-9 * max(1.0, float(t_grid.max(initial=0.0)))):
        raise ValueError("t_grid entries must be integer multiples of dt")
    if np.any(np.diff(steps) < 0) or steps[0] != 0:
        raise ValueError("t_grid must be ascending and start at 0")
    return steps


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("QCSIM_THREADS", "1")))
    except ValueError:
        return 1


def run_ensemble(
    model: LindbladModel,
    channels: Sequence[MeasurementChannel],
    rho0: np.ndarray,
    n_traj: int,
    base_seed: int,
    dt: float,
    n_steps: int,
    probes: Sequence[np.ndarray] = (),
    store_steps=(),
    check_stability: bool = True,
    keep=False,
):
    """Simulate ``n_traj`` trajectories with seeds ``trajectory_seed(base_seed, k)``.

    Returns ``(expectations, records, sums, trajectories)`` where ``sums``
    maps each stored step to the index-ordered sum of conditional density
    matrices and ``expectations`` has shape ``(n_traj, n_steps + 1, n_probes)``.
    Work is split over ``QCSIM_THREADS`` threads; results do not depend on it.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    channels = list(channels)
    if check_stability:
        check_sme_stability(channels, dt)
    store_steps = sorted(set(int(s) for s in store_steps))
    plans = [NoisePlan(trajectory_seed(base_seed, k), dt, n_steps) for k in range(n_traj)]
    ket = ket_path_available(model, rho0)
    size = KET_BATCH if ket else 1
    chunks = [plans[i:i + size] for i in range(0, n_traj, size)]

    def work(chunk):
        if ket:
            return _simulate_kets(model, channels, rho0, chunk, list(probes), set(store_steps))
        r0 = np.asarray(rho0, dtype=complex)
        if r0.ndim == 1:
            r0 = np.outer(r0, r0.conj())
        e, r, s, f = _simulate_density(model, channels, r0, chunk[0], list(probes), set(store_steps))
        return e[None], r[None], {k: v[None] for k, v in s.items()}, f[None]

    workers = min(worker_count(), len(chunks))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    exps = np.concatenate([r[0] for r in results])
    recs = np.concatenate([r[1] for r in results])
    sums = {}
    for s in store_steps:
        acc = None
        for r in results:
            for st in r[2][s]:
                m = np.outer(st, st.conj()) if st.ndim == 1 else st
                acc = m.copy() if acc is None else acc + m
        sums[s] = acc
    trajs = None
    if keep:
        times = np.arange(n_steps + 1) * dt
        trajs = []
        k = 0
        for r in results:
            for j in range(r[0].shape[0]):
                states = {s: r[2][s][j] for s in store_steps}
                trajs.append(Trajectory(times, r[0][j], _record(channels, r[1][j], dt),
                                        plans[k].seed, states, r[3][j]))
                k += 1
    return exps, recs, sums, trajs


def ensemble_mean(
    model: LindbladModel,
    channels: Sequence[MeasurementChannel],
    rho0: np.ndarray,
    n_traj: int,
    base_seed: int,
    t_grid: Sequence[float],
    dt: float,
    check_stability: bool = True,
) -> list[np.ndarray]:
    """Average conditional state at each ``t_grid`` time over ``n_traj`` trajectories.

    Trajectory ``k`` uses ``NoisePlan(trajectory_seed(base_seed, k), dt, ...)``,
    so ``n_traj=1`` reproduces :func:`simulate_trajectory` with that plan.
    """
    steps = grid_steps(t_grid, dt)
    _, _, sums, _ = run_ensemble(model, channels, rho0, n_traj, base_seed, dt, int(steps[-1]),
                                 store_steps=steps, check_stability=check_stability)
    return [sums[int(s)] / n_traj for s in steps]


# ---------------------------------------------------------------- record-driven control

def record_quadrature_noise(dJ, kappa: float, alpha0: complex, dt: float) -> np.ndarray:
    """In-phase Wiener increment ``dW1`` recovered from heterodyne increments.

    The quadrature is taken along the phase of ``alpha0``:
    ``dW1 = sqrt(2) Re(e^{-i arg alpha0}(dJ - kappa alpha0 dt)) / sqrt(kappa)``.
    """
    phase = np.exp(-1j * np.angle(alpha0)) if alpha0 != 0 else 1.0
    return math.sqrt(2.0) * np.real(phase * (np.asarray(dJ) - kappa * alpha0 * dt)) / math.sqrt(kappa)


def record_driven_unitaries(omega_m, g0, kappa, alpha0, dW1, dt, dim):
    """Stack of step unitaries
    ``exp[-i(omega_m b^dag b + G0|alpha0|^2 x) dt - i (2 G0 |alpha0| / sqrt(kappa)) x dW1]``
    for each entry of ``dW1`` (``x = b + b^dag``).
    """
    b = annihilation(dim)
    x = b + b.conj().T
    h0 = omega_m * (b.conj().T @ b) + g0 * abs(alpha0) ** 2 * x
    theta = 2.0 * g0 * abs(alpha0) / math.sqrt(kappa)
    dW1 = np.atleast_1d(np.asarray(dW1, dtype=float))
    gens = h0[None] * dt + (theta * dW1)[:, None, None] * x[None]
    evals, evecs = np.linalg.eigh(gens)
    return (evecs * np.exp(-1j * evals)[:, None, :]) @ np.swapaxes(evecs.conj(), 1, 2)


def record_driven_unitary_step(omega_m, g0, kappa, dJ, dt, state, alpha0):
    """Conjugate a mechanics state by the record-driven step unitary.

    ``state`` may be a ket, a density matrix, or a batch of either (leading
    axis), with ``dJ`` a matching scalar or batch of heterodyne increments.
    """
    state = np.asarray(state, dtype=complex)
    dim = state.shape[-1]
    batched = np.ndim(dJ) > 0
    dW1 = record_quadrature_noise(np.atleast_1d(dJ), kappa, alpha0, dt)
    u = record_driven_unitaries(omega_m, g0, kappa, alpha0, dW1, dt, dim)
    s = state if batched else state[None]
    if s.ndim == 2:
        out = np.einsum("bij,bj->bi", u, s)
    else:
        out = u @ s @ np.swapaxes(u.conj(), 1, 2)
    return out if batched else out[0]


# ---------------------------------------------------------------- hybrid state

@dataclass
class HybridState:
    """Empirical hybrid state: classical samples paired with quantum conditional states."""

    alpha: np.ndarray
    weights: np.ndarray
    states: np.ndarray
    rho_q: np.ndarray

    def average(self, observable) -> complex:
        """Hybrid average of ``A(alpha)``; ``observable`` is a callable or a fixed operator."""
        total = 0j
        for w, a, rho in zip(self.weights, self.alpha, self.states):
            op = observable(a) if callable(observable) else observable
            total += w * np.einsum("ij,ji->", op, rho)
        return complex(total)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())


def hybrid_diagnostics(trajectories, dims, cavity_op, alpha_offset: complex = 0.0) -> HybridState:
    """Hybrid state from heterodyne trajectories of a cavity (index 0) x mechanics system.

    Each trajectory contributes ``alpha_i = <a>^c + alpha_offset`` from its
    final state and the mechanics marginal of that state.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("hybrid_diagnostics needs at least one trajectory")
    alphas, states = [], []
    for tr in trajectories:
        s = tr.final_state
        rho = np.outer(s, s.conj()) if s.ndim == 1 else s
        alphas.append(np.einsum("ij,ji->", cavity_op, rho) + alpha_offset)
        states.append(partial_trace(rho, dims, 1))
    states = np.array(states)
    n = len(states)
    weights = np.full(n, 1.0 / n)
    rho_q = np.zeros_like(states[0])
    for s in states:
        rho_q += s
    return HybridState(np.array(alphas), weights, states, rho_q / n)
