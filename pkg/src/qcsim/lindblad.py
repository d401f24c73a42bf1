"""Unconditional Lindblad master equations and a fixed-step RK4 integrator.

Generator convention::

    d rho/dt = -i[H, rho] + sum_k kappa_k D[A_k] rho - sum_j (Gamma_j/4)[X_j, [X_j, rho]]

with ``D[A] rho = A rho A^dag - {A^dag A, rho}/2``.  The dephasing term equals
``D[sqrt(Gamma/2) X]`` for Hermitian ``X``, which is how it is evaluated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import ConvergenceError, DimensionError, StabilityError, ValidityError
from .operators import is_hermitian

log = logging.getLogger(__name__)

# Above this dimension sparse models run through the CSR kernels; below it
# dense numpy is as fast.
SPARSE_MIN_DIM = 16
SPARSE_MAX_FILL = 0.15


def _as_terms(terms, kind):
    out = []
    for rate, op in terms:
        rate = float(rate)
        if not math.isfinite(rate) or rate < 0:
            raise ValueError(f"{kind} rate must be finite and >= 0, got {rate}")
        out.append((rate, np.asarray(op, dtype=complex)))
    return tuple(out)


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus damping dissipators and dephasing double commutators.

    ``dissipators`` holds ``(kappa, A)`` pairs contributing ``kappa D[A]``;
    ``dephasings`` holds ``(Gamma, X)`` pairs contributing
    ``-(Gamma/4)[X, [X, rho]]`` with ``X`` Hermitian.
    """

    hamiltonian: np.ndarray
    dissipators: tuple = field(default=())
    dephasings: tuple = field(default=())

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionError(f"Hamiltonian must be square, got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("Hamiltonian has non-finite entries")
        if not is_hermitian(h, 1e-10):
            raise ValueError("Hamiltonian is not Hermitian to 1e-10")
        object.__setattr__(self, "hamiltonian", h)
        dis = _as_terms(self.dissipators, "dissipator")
        dep = _as_terms(self.dephasings, "dephasing")
        for _, op in dis + dep:
            if op.shape != h.shape:
                raise DimensionError(f"operator shape {op.shape} does not match H {h.shape}")
        for _, op in dep:
            if not is_hermitian(op, 1e-10):
                raise ValueError("dephasing operators must be Hermitian to 1e-10")
        object.__setattr__(self, "dissipators", dis)
        object.__setattr__(self, "dephasings", dep)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def max_rate(self) -> float:
        rates = [r for r, _ in self.dissipators + self.dephasings]
        return max(rates, default=0.0)

    @cached_property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.hamiltonian))))

    def jump_operators(self) -> list[np.ndarray]:
        """Operators ``L`` such that the dissipative part is ``sum D[L]``."""
        jumps = [math.sqrt(k) * a for k, a in self.dissipators if k > 0]
        jumps += [math.sqrt(g / 2) * x for g, x in self.dephasings if g > 0]
        return jumps

    def with_terms(self, dissipators=(), dephasings=()) -> "LindbladModel":
        return LindbladModel(
            self.hamiltonian,
            self.dissipators + tuple(dissipators),
            self.dephasings + tuple(dephasings),
        )

    @cached_property
    def generator(self) -> "Generator":
        return Generator(self.hamiltonian, self.jump_operators())


class Generator:
    """Compiled form of ``-i[H, .] + sum D[L_k]`` acting on Hermitian matrices.

    Uses ``-iK rho + h.c. + sum L rho L^dag`` with the non-Hermitian
    ``K = H - (i/2) sum L^dag L``; valid only for Hermitian arguments.
    Large, sparse models run through fused numba kernels.
    """

    def __init__(self, hamiltonian, jumps):
        k = hamiltonian.astype(complex)
        for jump in jumps:
            k = k - 0.5j * (jump.conj().T @ jump)
        n = k.shape[0]
        fill = max([np.count_nonzero(k)] + [np.count_nonzero(j) for j in jumps])
        self.sparse = n >= SPARSE_MIN_DIM and fill <= SPARSE_MAX_FILL * n * n
        if self.sparse:
            k = sp.csr_matrix(k)
            stacked = sp.csr_matrix(np.vstack(jumps)) if jumps else sp.csr_matrix((0, n), dtype=complex)
            self._csr = (
                k.indptr, k.indices, k.data,
                stacked.indptr, stacked.indices, stacked.data, len(jumps),
            )
        self.k = k
        self.jumps = jumps

    def __call__(self, rho):
        rho = np.ascontiguousarray(rho, dtype=complex)
        if self.sparse:
            half = np.empty_like(rho)
            _kernels.half_rhs(*self._csr, rho, half)
            out = np.empty_like(rho)
            _kernels.hermitian_part(half, out)
            return out
        # A + A^dag is exactly Hermitian in floating point; the map is unstable on
        # anti-Hermitian parts, so roundoff there must never be created
        y = self.k @ rho
        y *= -1j
        for jump in self.jumps:
            y += 0.5 * (jump @ rho) @ jump.conj().T
        return y + y.conj().T

    def rk4_step(self, rho, h):
        if not self.sparse:
            return rk4_step(self, rho, h)
        rho = np.ascontiguousarray(rho, dtype=complex)
        half = np.empty_like(rho)
        b1 = np.empty_like(rho)
        b2 = np.empty_like(rho)
        acc = np.empty_like(rho)
        stages = (
            (rho, b1, 0.5 * h, 1.0, True),
            (b1, b2, 0.5 * h, 2.0, False),
            (b2, b1, h, 2.0, False),
            (b1, b2, 0.0, 1.0, False),
        )
        for src, dst, c, w, first in stages:
            _kernels.half_rhs(*self._csr, src, half)
            _kernels.stage_update(half, rho, c, dst, acc, w, first)
        acc *= h / 6.0
        acc += rho
        return acc


@dataclass(frozen=True)
class StepperConfig:
    """Fixed-step RK4 settings.

    ``dt * (max rate + spectral radius of H) <= stability_limit`` is enforced
    unless ``check_stability`` is False.
    """

    dt: float
    method: str = "rk4"
    stability_limit: float = 0.1
    check_stability: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise StabilityError(f"dt must be positive, got {self.dt}")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")

    def check(self, model: LindbladModel):
        if not self.check_stability:
            return
        load = self.dt * (model.max_rate + model.spectral_radius)
        if load > self.stability_limit:
            raise StabilityError(
                f"dt={self.dt} gives dt*(max rate + |H|) = {load:.3g} > {self.stability_limit}"
            )


def rhs(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """Time derivative of ``rho`` under ``model``; ``rho`` must be Hermitian."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != model.hamiltonian.shape:
        raise DimensionError(f"state {rho.shape} does not match model {model.hamiltonian.shape}")
    return model.generator(rho)


def rk4_step(gen, rho, h):
    k1 = gen(rho)
    k2 = gen(rho + (0.5 * h) * k1)
    k3 = gen(rho + (0.5 * h) * k2)
    k4 = gen(rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _revalidate(rho, t, drift_tol=1e-6):
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > drift_tol:
        raise ValidityError(f"Hermiticity drift {herm:.2e} at t={t}")
    rho = 0.5 * (rho + rho.conj().T)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) >= drift_tol:
        raise ValidityError(f"trace drift {tr - 1.0:.2e} at t={t}")
    rho /= tr
    lam = float(np.linalg.eigvalsh(rho)[0])
    if lam < -drift_tol:
        raise ValidityError(f"positivity lost (min eigenvalue {lam:.2e}) at t={t}")
    return rho


def integrate(
    model: LindbladModel,
    rho0: np.ndarray,
    t_grid: Sequence[float],
    cfg: StepperConfig,
) -> list[np.ndarray]:
    """Integrate the master equation, returning the state at each grid time.

    Each interval between grid points is split into ``ceil(interval/dt)``
    equal RK4 steps, so the effective step never exceeds ``cfg.dt``.  Output
    states are Hermitized, trace-renormalized and checked for positivity.
    """
    cfg.check(model)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] != 0.0:
        raise ValueError("t_grid must be a non-empty 1-d array starting at 0")
    if np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be ascending")
    rho = np.array(rho0, dtype=complex)
    if rho.shape != model.hamiltonian.shape:
        raise DimensionError(f"state {rho.shape} does not match model {model.hamiltonian.shape}")
    gen = model.generator
    out = [_revalidate(rho.copy(), 0.0)]
    rho = out[0].copy()
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        span = t1 - t0
        if span > 0:
            n = max(1, math.ceil(span / cfg.dt - 1e-9))
            h = span / n
            for _ in range(n):
                rho = gen.rk4_step(rho, h)
        rho = _revalidate(rho, t1)
        out.append(rho.copy())
    return out


def residual_norm(model: LindbladModel, rho: np.ndarray) -> float:
    return float(np.linalg.norm(model.generator(rho)))


def steady_state(
    model: LindbladModel,
    cfg: StepperConfig,
    rho0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_time: float = 1e3,
    chunk_steps: int = 200,
) -> tuple[np.ndarray, float]:
    """Long-time integration until ``||rhs|| < tol`` (Frobenius norm).

    Starts from ``rho0`` or the projector on the first basis state and
    returns ``(rho, residual)``.
    """
    if not model.dissipators and not model.dephasings:
        raise ValueError("steady_state needs at least one dissipative term")
    cfg.check(model)
    n = model.dim
    if rho0 is None:
        rho = np.zeros((n, n), dtype=complex)
        rho[0, 0] = 1.0
    else:
        rho = np.array(rho0, dtype=complex)
        rho = 0.5 * (rho + rho.conj().T)
    gen = model.generator
    t = 0.0
    resid = residual_norm(model, rho)
    while resid >= tol:
        if t >= max_time:
            raise ConvergenceError(
                f"steady state not reached by t={t:.3g} (residual {resid:.2e})"
            )
        for _ in range(chunk_steps):
            rho = gen.rk4_step(rho, cfg.dt)
        t += chunk_steps * cfg.dt
        rho = _revalidate(rho, t)
        resid = residual_norm(model, rho)
    log.debug("steady state reached at t=%.4g, residual %.2e", t, resid)
    return rho, resid
