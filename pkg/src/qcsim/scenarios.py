"""Scenario descriptors and model builders for the three worked examples.

* Impulse: a target oscillator kicked by ``U(X) = exp(-i X q)`` with a
  Gaussian-distributed control parameter ``X``.
* Controller-target: a continuously monitored controller with ``X`` diagonal
  on a grid, coupled to a target oscillator through ``kappa_c X x``.
* Optomechanics: a driven damped cavity acting on a mechanical resonator,
  with the adiabatically eliminated reduced model for the mechanics.

Conventions: ``q = (b + b^dag)/sqrt(2)``, ``p = i(b^dag - b)/sqrt(2)`` for the
impulse target; ``x = b + b^dag`` elsewhere.  hbar = 1.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import DimensionError, QuadratureError, ScenarioError, TruncationError
from .lindblad import LindbladModel
from .operators import (
    COHERENT_TAIL_TOL,
    SpaceSpec,
    annihilation,
    basis,
    coherent_tail_mass,
    embed,
    expm,
    identity,
    kron,
)
from .trajectories import DIFFUSIVE, HETERODYNE, MeasurementChannel

QUADRATURE_NODES = 64
QUADRATURE_TOL = 1e-9
# Controller grid spans x0 +/- this many initial standard deviations by default.
GRID_HALFWIDTH_SD = 4.0


# ---------------------------------------------------------------- descriptors

class _Scenario:
    """Shared JSON handling; unknown or missing fields are rejected."""

    kind = ""

    @classmethod
    def from_dict(cls, data: dict):
        data = dict(data)
        kind = data.pop("type", cls.kind)
        if kind != cls.kind:
            raise ScenarioError(f"scenario type {kind!r} is not {cls.kind!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ScenarioError(f"unknown field(s) for {cls.kind}: {', '.join(unknown)}")
        required = {f.name for f in dataclasses.fields(cls)
                    if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
        missing = sorted(required - set(data))
        if missing:
            raise ScenarioError(f"missing field(s) for {cls.kind}: {', '.join(missing)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"invalid {cls.kind} scenario: {exc}") from exc

    def to_dict(self) -> dict:
        out = {"type": self.kind}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, complex):
                v = [v.real, v.imag]
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _positive(name, value, strict=False):
    value = float(value)
    if not math.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ScenarioError(f"{name} must be finite and {bound}, got {value}")
    return value


def _dims(value, n):
    try:
        dims = tuple(int(d) for d in value)
    except TypeError as exc:
        raise ScenarioError(f"dims must be a list of {n} integers") from exc
    if len(dims) != n or any(d < 2 for d in dims):
        raise ScenarioError(f"dims must be {n} integers >= 2, got {value}")
    try:
        SpaceSpec(dims)
    except DimensionError as exc:
        raise ScenarioError(str(exc)) from exc
    return dims


@dataclass(frozen=True)
class ImpulseScenario(_Scenario):
    """Impulsive kick ``exp(-i kappa_c Q q)`` with controller ``Q ~ N(q_bar, sigma)``."""

    kappa_c: float
    q_bar: float
    sigma: float
    target_dim: int = 40

    kind = "impulse"

    def __post_init__(self):
        object.__setattr__(self, "kappa_c", float(self.kappa_c))
        object.__setattr__(self, "q_bar", float(self.q_bar))
        object.__setattr__(self, "sigma", _positive("sigma", self.sigma))
        if int(self.target_dim) != self.target_dim or self.target_dim < 2:
            raise ScenarioError(f"target_dim must be an integer >= 2, got {self.target_dim}")
        object.__setattr__(self, "target_dim", int(self.target_dim))

    @property
    def gamma(self) -> float:
        return 4.0 * self.sigma * self.kappa_c ** 2

    @property
    def x_mean(self) -> float:
        return self.kappa_c * self.q_bar

    @property
    def x_variance(self) -> float:
        return self.sigma * self.kappa_c ** 2

    @classmethod
    def from_gamma(cls, gamma, kappa_c=1.0, q_bar=0.0, target_dim=40):
        return cls(kappa_c, q_bar, gamma / (4.0 * kappa_c ** 2), target_dim)


@dataclass(frozen=True)
class ControllerTargetScenario(_Scenario):
    """Monitored controller (grid of ``dims[0]`` X values) coupled to a target oscillator.

    ``grid_spacing`` sets the distance between controller grid points; by
    default the grid spans ``x0 +/- 4 sqrt(sigma0)``.
    """

    gamma: float
    kappa_c: float
    x0: float
    sigma0: float
    omega_s: float
    dims: tuple = (64, 10)
    grid_spacing: float | None = None

    kind = "controller_target"

    def __post_init__(self):
        for name in ("gamma", "sigma0", "omega_s"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        object.__setattr__(self, "kappa_c", float(self.kappa_c))
        object.__setattr__(self, "x0", float(self.x0))
        object.__setattr__(self, "dims", _dims(self.dims, 2))
        if self.grid_spacing is not None:
            object.__setattr__(self, "grid_spacing", _positive("grid_spacing", self.grid_spacing, True))

    @property
    def grid(self) -> np.ndarray:
        d = self.dims[0]
        if self.grid_spacing is not None:
            h = self.grid_spacing
        elif self.sigma0 > 0:
            h = 2 * GRID_HALFWIDTH_SD * math.sqrt(self.sigma0) / (d - 1)
        else:
            h = 1.0
        return self.x0 + h * (np.arange(d) - (d - 1) / 2)


@dataclass(frozen=True)
class OptomechScenario(_Scenario):
    """Driven damped cavity (index 0) coupled to a mechanical mode (index 1)."""

    omega_m: float
    delta: float
    g0: float
    kappa: float
    drive_e: complex
    dims: tuple = (40, 20)

    kind = "optomech"

    def __post_init__(self):
        object.__setattr__(self, "omega_m", _positive("omega_m", self.omega_m))
        object.__setattr__(self, "kappa", _positive("kappa", self.kappa, strict=True))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "g0", float(self.g0))
        e = self.drive_e
        if isinstance(e, (list, tuple)):
            if len(e) != 2:
                raise ScenarioError("drive_e must be a number or a [real, imag] pair")
            e = complex(float(e[0]), float(e[1]))
        object.__setattr__(self, "drive_e", complex(e))
        object.__setattr__(self, "dims", _dims(self.dims, 2))

    @property
    def alpha0(self) -> complex:
        """Steady cavity amplitude ``-iE/(kappa/2 + i Delta)``."""
        return -1j * self.drive_e / (self.kappa / 2 + 1j * self.delta)

    @property
    def gamma_reduced(self) -> float:
        """Mechanical decoherence rate ``4 G0^2 |alpha0|^2 / kappa``."""
        return 4.0 * self.g0 ** 2 * abs(self.alpha0) ** 2 / self.kappa

    @property
    def regime_ratios(self) -> dict:
        """Adiabatic-elimination figures of merit; both should be small."""
        return {
            "omega_m_over_kappa": self.omega_m / self.kappa,
            "coupling_over_kappa": (self.g0 * abs(self.alpha0)) ** 2 / self.kappa ** 2,
        }

    @classmethod
    def for_alpha0(cls, alpha0, omega_m=1.0, delta=0.0, g0=0.01, kappa=50.0, dims=(40, 20)):
        """Scenario whose drive produces the steady amplitude ``alpha0``."""
        e = 1j * alpha0 * (kappa / 2 + 1j * delta)
        return cls(omega_m, delta, g0, kappa, e, dims)


SCENARIO_TYPES = {c.kind: c for c in (ImpulseScenario, ControllerTargetScenario, OptomechScenario)}


def scenario_from_dict(data: dict):
    """Build a scenario, taking its type from ``"type"`` or from the field set."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a JSON object")
    kind = data.get("type")
    if kind is None:
        keys = set(data)
        matches = [c for c in SCENARIO_TYPES.values()
                   if keys <= {f.name for f in dataclasses.fields(c)}
                   and {f.name for f in dataclasses.fields(c)
                        if f.default is dataclasses.MISSING} <= keys]
        if len(matches) != 1:
            raise ScenarioError("cannot infer scenario type; add a \"type\" field")
        return matches[0].from_dict(data)
    if kind not in SCENARIO_TYPES:
        raise ScenarioError(f"unknown scenario type {kind!r}")
    return SCENARIO_TYPES[kind].from_dict(data)


def load_scenario(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data)


# ---------------------------------------------------------------- impulse model

def impulse_quadratures(dim: int):
    """``(q, p)`` with ``q = (b + b^dag)/sqrt(2)`` and ``p = i(b^dag - b)/sqrt(2)``."""
    b = annihilation(dim)
    bd = b.conj().T
    return (b + bd) / math.sqrt(2), 1j * (bd - b) / math.sqrt(2)


def kick(dim: int, x: float) -> np.ndarray:
    """``U(X) = exp(-i X q)``."""
    q, _ = impulse_quadratures(dim)
    return expm(q, -1j * x)


def _q_basis(dim):
    q, _ = impulse_quadratures(dim)
    lam, vec = np.linalg.eigh(q)
    return lam, vec


def _mixture_factor(lam, mean, std, nodes):
    y, w = np.polynomial.hermite.hermgauss(nodes)
    xs = mean + math.sqrt(2.0) * std * y
    dl = lam[:, None] - lam[None, :]
    # sum_k w_k exp(-i X_k (l_i - l_j)) / sqrt(pi)
    return np.einsum("k,kij->ij", w / math.sqrt(math.pi), np.exp(-1j * xs[:, None, None] * dl[None]))


def impulse_exact(s: ImpulseScenario, rho_in: np.ndarray, nodes: int = QUADRATURE_NODES) -> np.ndarray:
    """Gaussian mixture of kicks evaluated by Gauss-Hermite quadrature.

    Raises
    ------
    QuadratureError
        If doubling the node count changes any matrix element by more than 1e-9.
    """
    rho_in = np.asarray(rho_in, dtype=complex)
    if rho_in.shape != (s.target_dim, s.target_dim):
        raise DimensionError(f"state {rho_in.shape} does not match target_dim {s.target_dim}")
    lam, vec = _q_basis(s.target_dim)
    std = math.sqrt(s.x_variance)
    f1 = _mixture_factor(lam, s.x_mean, std, nodes)
    f2 = _mixture_factor(lam, s.x_mean, std, 2 * nodes)
    rt = vec.conj().T @ rho_in @ vec
    out1 = vec @ (rt * f1) @ vec.conj().T
    out2 = vec @ (rt * f2) @ vec.conj().T
    change = float(np.max(np.abs(out1 - out2)))
    if change > QUADRATURE_TOL:
        raise QuadratureError(f"node doubling changed the mixture by {change:.2e}")
    out = out2
    return 0.5 * (out + out.conj().T)


def impulse_truncated(s: ImpulseScenario, rho_in: np.ndarray) -> np.ndarray:
    """Second-order form ``U rho U^dag - (Gamma/8)[q,[q, U rho U^dag]]`` at ``X = X_bar``."""
    q, _ = impulse_quadratures(s.target_dim)
    u = kick(s.target_dim, s.x_mean)
    r = u @ np.asarray(rho_in, dtype=complex) @ u.conj().T
    c = q @ r - r @ q
    return r - (s.gamma / 8.0) * (q @ c - c @ q)


def impulse_conditional(s: ImpulseScenario, psi_in: np.ndarray, q_result: float) -> np.ndarray:
    """Target ket after the kick given a sharp controller position ``q_result``."""
    psi = kick(s.target_dim, s.kappa_c * q_result) @ np.asarray(psi_in, dtype=complex)
    return psi / np.linalg.norm(psi)


def momentum_variance(rho: np.ndarray) -> float:
    _, p = impulse_quadratures(rho.shape[0])
    m1 = np.einsum("ij,ji->", p, rho).real
    m2 = np.einsum("ij,ji->", p @ p, rho).real
    return float(m2 - m1 ** 2)


# ---------------------------------------------------------------- controller-target

def controller_weights(s: ControllerTargetScenario) -> np.ndarray:
    """Initial controller distribution ``P0(X_i)`` on the grid (Gaussian, normalized)."""
    g = s.grid
    if s.sigma0 == 0:
        w = np.zeros(g.size)
        w[int(np.argmin(np.abs(g - s.x0)))] = 1.0
        return w
    logw = -((g - s.x0) ** 2) / (2 * s.sigma0)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def controller_ket(s: ControllerTargetScenario) -> np.ndarray:
    """Controller state with Gaussian amplitudes ``sqrt(P0(X_i))``."""
    return np.sqrt(controller_weights(s)).astype(complex)


def controller_mixture(s: ControllerTargetScenario) -> np.ndarray:
    """Decohered controller ``sum_i P0(X_i)|X_i><X_i|``."""
    return np.diag(controller_weights(s)).astype(complex)


def target_x(dim: int) -> np.ndarray:
    b = annihilation(dim)
    return b + b.conj().T


def target_momentum(dim: int) -> np.ndarray:
    """``P = i(b^dag - b)/2``, conjugate to ``x = b + b^dag``."""
    b = annihilation(dim)
    return 0.5j * (b.conj().T - b)


def target_hamiltonian(s: ControllerTargetScenario) -> np.ndarray:
    b = annihilation(s.dims[1])
    return s.omega_s * (b.conj().T @ b)


def build_full_bipartite(s: ControllerTargetScenario):
    """Controller (index 0) x target (index 1) model and its measurement channel.

    Returns ``(model, channels)`` with ``model`` carrying ``H_s + kappa_c X x``
    (``H_c = 0``) and the single diffusive channel ``(gamma, X x 1)``.  The
    channel supplies the ``-(gamma/4)[X,[X,.]]`` dephasing; use
    :func:`qcsim.trajectories.unconditional_model` for the master equation.
    """
    d, n = s.dims
    big_x = np.diag(s.grid).astype(complex)
    h = s.kappa_c * kron(big_x, target_x(n)) + embed(target_hamiltonian(s), s.dims, 1)
    model = LindbladModel(h)
    channel = MeasurementChannel(embed(big_x, s.dims, 0), s.gamma, DIFFUSIVE, name="y")
    return model, [channel]


def build_controller_only(s: ControllerTargetScenario):
    """Controller alone (``kappa_c -> 0``, ``H_c = 0``) with its measurement channel."""
    d = s.dims[0]
    big_x = np.diag(s.grid).astype(complex)
    return LindbladModel(np.zeros((d, d), dtype=complex)), [
        MeasurementChannel(big_x, s.gamma, DIFFUSIVE, name="y")
    ]


def full_initial_state(s: ControllerTargetScenario, mixed: bool = False) -> np.ndarray:
    """Controller Gaussian (ket, or decohered mixture) times target vacuum."""
    vac = basis(s.dims[1], 0)
    if mixed:
        return kron(controller_mixture(s), np.outer(vac, vac.conj()))
    return kron(controller_ket(s), vac)


def build_effective_target(s: ControllerTargetScenario) -> LindbladModel:
    """Target-only model ``H_s + kappa_c x0 x`` with ``-kappa_c^2 sigma0 [x,[x,.]]``.

    The double commutator is stored as a dephasing of rate
    ``4 kappa_c^2 sigma0`` in the engine's ``Gamma/4`` convention.
    """
    x = target_x(s.dims[1])
    h = target_hamiltonian(s) + s.kappa_c * s.x0 * x
    rate = 4.0 * s.kappa_c ** 2 * s.sigma0
    return LindbladModel(h, dephasings=[(rate, x)] if rate > 0 else [])


def conditional_target_step(h_s, kappa_c, x_t, rho, dt, x_op=None) -> np.ndarray:
    """Unitary step ``exp(-i(H_s + kappa_c x_t x) dt)`` with the classical control ``x_t``.

    ``rho`` may be a ket or a density matrix.
    """
    h_s = np.asarray(h_s, dtype=complex)
    x_op = target_x(h_s.shape[0]) if x_op is None else x_op
    u = expm(h_s + kappa_c * float(x_t) * x_op, -1j * dt)
    rho = np.asarray(rho, dtype=complex)
    return u @ rho if rho.ndim == 1 else u @ rho @ u.conj().T


# ---------------------------------------------------------------- optomechanics

def vacuum_coupling_rate(omega_c, length, mass, omega_m, hbar: float = 1.0) -> float:
    """``G0 = (omega_c / L) sqrt(hbar / (2 m omega_m))``."""
    for name, v in (("omega_c", omega_c), ("length", length), ("mass", mass), ("omega_m", omega_m)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return omega_c / length * math.sqrt(hbar / (2.0 * mass * omega_m))


def vacuum_coupling_rate_si(omega_c, length, mass, omega_m) -> float:
    """``G0`` in rad/s from SI inputs (rad/s, m, kg, rad/s) using the CODATA hbar."""
    return vacuum_coupling_rate(omega_c, length, mass, omega_m, hbar=constants.hbar)


def _mode_ops(s: OptomechScenario):
    nc, nm = s.dims
    a = kron(annihilation(nc), identity(nm))
    b = kron(identity(nc), annihilation(nm))
    return a, b


def build_optomech_full(s: OptomechScenario, frame: str = "displaced", tail_tol: float = COHERENT_TAIL_TOL,
                        monitored: bool = False):
    """Cavity x mechanics master equation ``-i[H_I, rho] + kappa D[a] rho``.

    ``frame="displaced"`` (default) writes the cavity as ``alpha0 + a`` so the
    truncation only has to hold the fluctuations; ``frame="lab"`` uses
    ``H_I`` as is and checks the coherent tail of ``alpha0`` at ``dims[0]``.
    With ``monitored=True`` the cavity loss is returned as a heterodyne channel
    instead of a dissipator: ``(model, [channel])``.

    Raises
    ------
    TruncationError
        In the lab frame, when the steady coherent state does not fit.
    """
    a, b = _mode_ops(s)
    n = a.shape[0]
    eye = np.eye(n, dtype=complex)
    x = b + b.conj().T
    alpha0 = s.alpha0
    if frame == "lab":
        tail = coherent_tail_mass(alpha0, s.dims[0])
        if tail > tail_tol:
            raise TruncationError(f"cavity dim {s.dims[0]} loses tail mass {tail:.2e} at |alpha0|={abs(alpha0):.3g}")
        ae = a
        extra = np.zeros_like(eye)
    elif frame == "displaced":
        ae = a + alpha0 * eye
        # from kappa D[a + alpha0] = kappa D[a] - i[(i kappa/2)(alpha0^* a - alpha0 a^dag), .]
        extra = 0.5j * s.kappa * (np.conj(alpha0) * a - alpha0 * a.conj().T)
    else:
        raise ValueError(f"unknown frame {frame!r}")
    n_ph = ae.conj().T @ ae
    h = (s.delta * n_ph + s.omega_m * (b.conj().T @ b) + s.g0 * n_ph @ x
         + np.conj(s.drive_e) * ae + s.drive_e * ae.conj().T + extra)
    h = 0.5 * (h + h.conj().T)
    h -= np.trace(h).real / n * eye
    if monitored:
        return LindbladModel(h), [MeasurementChannel(a, s.kappa, HETERODYNE, name="J")]
    return LindbladModel(h, dissipators=[(s.kappa, a)])


def build_optomech_reduced(s: OptomechScenario) -> LindbladModel:
    """Mechanics-only model ``H_m = omega_m b^dag b + G0|alpha0|^2 x`` with ``Gamma D[x]``.

    ``Gamma = 4 G0^2 |alpha0|^2 / kappa`` and ``alpha0`` is taken from the
    analytic steady state.
    """
    nm = s.dims[1]
    b = annihilation(nm)
    x = b + b.conj().T
    h = s.omega_m * (b.conj().T @ b) + s.g0 * abs(s.alpha0) ** 2 * x
    g = s.gamma_reduced
    return LindbladModel(h, dissipators=[(g, x)] if g > 0 else [])


def adiabatic_offdiag(s: OptomechScenario, rho00: np.ndarray, rho11: np.ndarray):
    """Steady off-diagonal cavity blocks of the mechanics state.

    ``rho10 = -i G0 alpha0 / (kappa/2 + i Delta) (x rho00 - rho11 x)`` and
    ``rho01 = rho10^dag``.
    """
    rho00 = np.asarray(rho00, dtype=complex)
    rho11 = np.asarray(rho11, dtype=complex)
    if rho00.shape != rho11.shape:
        raise DimensionError(f"shape mismatch: {rho00.shape} vs {rho11.shape}")
    x = target_x(rho00.shape[0])
    c = -1j * s.g0 * s.alpha0 / (s.kappa / 2 + 1j * s.delta)
    rho10 = c * (x @ rho00 - rho11 @ x)
    return rho10, rho10.conj().T


def offdiag_rate(s: OptomechScenario, rho10, rho00, rho11) -> np.ndarray:
    """Leading-order ``d rho10/dt = -(kappa/2 + i Delta) rho10 - i G0 alpha0 (x rho00 - rho11 x)``."""
    x = target_x(np.shape(rho00)[0])
    return (-(s.kappa / 2 + 1j * s.delta) * np.asarray(rho10)
            - 1j * s.g0 * s.alpha0 * (x @ rho00 - rho11 @ x))


def mechanics_ops(dim: int):
    """``(x, x^2)`` probes for the mechanical mode."""
    x = target_x(dim)
    return x, x @ x
