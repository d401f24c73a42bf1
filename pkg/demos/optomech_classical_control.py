"""A driven cavity as a classical controller of a mechanical resonator.

1. The driven damped cavity settles in the coherent state alpha0.
2. Eliminating the fast cavity leaves the mechanics classically driven by
   G0|alpha0|^2 with weak x-decoherence at 4 G0^2 |alpha0|^2 / kappa.
3. Driving the mechanics with the heterodyne record as a classical signal
   reproduces the same unconditional dynamics on average.

Reduced dimensions keep the run short; see the ``optomech-adiabatic`` and
``record-control-equivalence`` harness experiments for the full sizes.

Run with ``python demos/optomech_classical_control.py``.
"""

import math

import numpy as np

from qcsim import operators as ops
from qcsim import scenarios as sc
from qcsim import trajectories as tj
from qcsim.lindblad import LindbladModel, StepperConfig, integrate, steady_state


def main():
    kappa, delta, amp = 50.0, 10.0, 2.0
    a = ops.annihilation(25)
    e = 1j * amp * (kappa / 2 + 1j * delta)
    cav = LindbladModel(delta * a.conj().T @ a + np.conj(e) * a + e * a.conj().T, dissipators=[(kappa, a)])
    rho, resid = steady_state(cav, StepperConfig(0.099 / (kappa + cav.spectral_radius)), max_time=20.0)
    alpha0 = -1j * e / (kappa / 2 + 1j * delta)
    print(f"cavity steady state: <a> = {complex(np.trace(a @ rho)):.6f}, "
          f"alpha0 = {alpha0:.6f}, purity {ops.purity(rho):.8f}")

    s = sc.OptomechScenario.for_alpha0(5.0, dims=(8, 12))
    print(f"\nregime ratios: {s.regime_ratios}; reduced decoherence rate {s.gamma_reduced:.2e}")
    full = sc.build_optomech_full(s)
    red = sc.build_optomech_reduced(s)
    t_grid = np.linspace(0, 2 * math.pi, 9)
    rho0 = np.zeros((full.dim, full.dim), complex)
    rho0[0, 0] = 1
    out_full = integrate(full, rho0, t_grid, StepperConfig(1.5e-3))
    out_red = integrate(red, ops.ket2dm(ops.basis(12, 0)), t_grid, StepperConfig(1e-3))
    x = sc.target_x(12)
    print("t        <x> full     <x> reduced   trace distance")
    for t, rf, rr in zip(t_grid, out_full, out_red):
        rm = ops.partial_trace(rf, s.dims, 1)
        print(f"{t:<8.3f} {np.trace(x @ rm).real:+.6f}    {np.trace(x @ rr).real:+.6f}     "
              f"{ops.trace_distance(rm, rr):.2e}")

    # record-driven classical control
    n_traj, n_steps = 400, 500
    dt = 2 * math.pi / n_steps
    rng = np.random.default_rng(11)
    psi = np.zeros((n_traj, 12), complex)
    psi[:, 0] = 1
    for _ in range(n_steps):
        dz = (rng.standard_normal(n_traj) + 1j * rng.standard_normal(n_traj)) * math.sqrt(dt / 2)
        dJ = s.kappa * s.alpha0 * dt + math.sqrt(s.kappa) * dz
        psi = tj.record_driven_unitary_step(s.omega_m, s.g0, s.kappa, dJ, dt, psi, s.alpha0)
    xs = np.einsum("bi,ij,bj->b", psi.conj(), x, psi).real
    ref = integrate(red, ops.ket2dm(ops.basis(12, 0)), [0.0, 2 * math.pi], StepperConfig(1e-3))[-1]
    print(f"\nrecord-driven ensemble <x>(2 pi) = {xs.mean():+.5f} +/- {xs.std() / math.sqrt(n_traj):.5f}; "
          f"reduced master equation {np.trace(x @ ref).real:+.5f}")


if __name__ == "__main__":
    main()
