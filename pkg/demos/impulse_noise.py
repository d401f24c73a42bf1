"""Impulsive control by a quantum controller adds momentum noise to the target.

A target oscillator in its vacuum is kicked by exp(-i X q) where the control
variable X is Gaussian with variance sigma*kappa_c^2.  Averaging the kick
over X leaves the target with extra momentum variance Gamma/4, with
Gamma = 4 sigma kappa_c^2, and the second-order truncated form of the
mixture differs from the exact one by O(Gamma^2).

Run with ``python demos/impulse_noise.py``.
"""

import numpy as np

from qcsim import operators as ops
from qcsim import scenarios as sc


def main():
    vac = ops.ket2dm(ops.basis(40, 0))
    print("Gamma      added <dp^2>   Gamma/4     rel.err    trace dist (exact vs truncated)")
    dists = {}
    for gamma in (0.001, 0.005, 0.01, 0.02, 0.1):
        s = sc.ImpulseScenario.from_gamma(gamma)
        exact = sc.impulse_exact(s, vac)
        trunc = sc.impulse_truncated(s, vac)
        added = sc.momentum_variance(exact) - sc.momentum_variance(vac)
        dists[gamma] = ops.trace_distance(exact, trunc)
        print(f"{gamma:<10g} {added:<14.6e} {gamma / 4:<11.4e} {abs(added / (gamma / 4) - 1):<10.2e} "
              f"{dists[gamma]:.3e}")
    print(f"\ndistance ratio Gamma=0.02 vs 0.01: {dists[0.02] / dists[0.01]:.3f} (expect ~4)")

    # a sharp controller reading gives a pure, conditionally kicked target
    s = sc.ImpulseScenario.from_gamma(0.01)
    _, p = sc.impulse_quadratures(40)
    for q in (-1.0, 0.0, 1.0):
        psi = sc.impulse_conditional(s, ops.basis(40, 0), q)
        print(f"controller reads Q={q:+.1f}: <p> = {ops.expectation(psi, p).real:+.4f}, "
              f"purity {ops.purity(ops.ket2dm(psi)):.6f}")

    # averaging the conditional kets over Q recovers the exact mixture
    y, w = np.polynomial.hermite.hermgauss(80)
    qs = s.q_bar + np.sqrt(2 * s.sigma) * y
    mix = sum(wk / np.sqrt(np.pi) * ops.ket2dm(sc.impulse_conditional(s, ops.basis(40, 0), qk))
              for wk, qk in zip(w, qs))
    print(f"average of conditional kicks vs exact mixture: trace distance "
          f"{ops.trace_distance(mix, sc.impulse_exact(s, vac)):.2e}")


if __name__ == "__main__":
    main()
