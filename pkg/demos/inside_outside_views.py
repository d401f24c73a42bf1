"""Two views of a continuously measured controller driving a target oscillator.

Outside view: the unconditional master equation for controller plus target.
Inside view: conditional trajectories driven by the measurement record.  The
average of the inside view reproduces the outside view, the measured
controller localises on an X eigenstate, and a classical filter driven by
the same record tracks the quantum conditional mean.

Small dimensions keep the run under a minute; the harness experiments
``ensemble-vs-master`` and ``filter-localisation`` use the full sizes.

Run with ``python demos/inside_outside_views.py``.
"""

import numpy as np

from qcsim import operators as ops
from qcsim import scenarios as sc
from qcsim import trajectories as tj
from qcsim.filters import GridDensity, grid_step
from qcsim.lindblad import StepperConfig, integrate


def main():
    s = sc.ControllerTargetScenario(gamma=10.0, kappa_c=1.0, x0=0.0, sigma0=1.0, omega_s=1.0,
                                    dims=(12, 6), grid_spacing=1.0)
    model, channels = sc.build_full_bipartite(s)
    psi0 = sc.full_initial_state(s)
    dt = 1e-3
    t_grid = np.linspace(0.0, 0.3, 7)

    full = tj.unconditional_model(model, channels)
    spread = float(np.ptp(s.grid))
    ref_dt = min(dt, 2.0 / (s.gamma / 4 * spread**2))
    ref = integrate(full, ops.ket2dm(psi0), t_grid, StepperConfig(ref_dt, check_stability=False))
    print("N trajectories   max trace distance to master equation")
    for n in (10, 100, 400):
        ens = tj.ensemble_mean(model, channels, psi0, n, 7, t_grid, dt)
        td = max(ops.trace_distance(a, b) for a, b in zip(ens, ref))
        print(f"{n:<16d} {td:.4f}")

    # localisation of the measured controller (controller-only model)
    cmodel, cch = sc.build_controller_only(s)
    rho0 = sc.controller_mixture(s)
    plan = tj.NoisePlan(3, 2.5e-4, 2000)
    tr = tj.simulate_trajectory(cmodel, cch, rho0, plan, probes=[cch[0].op], store_steps=[2000])
    final = tr.density(2000)
    print(f"\ncontroller purity after t = 5/Gamma: {ops.purity(final):.5f}; "
          f"localised near X = {tr.expectations[-1, 0].real:+.3f}")

    # classical filter fed by innovations from the same record
    dy = tr.record.channel("y").real
    mean_x = tr.expectations[:-1, 0].real
    innov = tj.innovations(dy, mean_x, s.gamma, plan.dt)
    p = GridDensity(s.grid, sc.controller_weights(s))
    gap = 0.0
    for k, dw in enumerate(innov):
        p, _ = grid_step(p, s.gamma, dw, plan.dt)
        gap = max(gap, abs(p.mean - tr.expectations[k + 1, 0].real))
    print(f"grid filter mean vs quantum conditional mean: max gap {gap:.2e}")


if __name__ == "__main__":
    main()
