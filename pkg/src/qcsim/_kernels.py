"""Numba kernels for the sparse Lindblad generator on large Hilbert spaces.

The generator is split as ``rhs = A + A^dag`` with
``A = -i K rho + (1/2) sum_m L_m rho L_m^dag``; ``K`` and the stacked jump
operators arrive as CSR arrays.  Only Hermitian ``rho`` are supported.
"""

import numpy as np
from numba import njit

_TILE = 32


@njit(cache=True)
def half_rhs(kp, ki, kv, lp, li, lv, n_jumps, rho, out):
    n = rho.shape[0]
    w = np.empty(n, np.complex128)
    for i in range(n):
        row = out[i]
        row[:] = 0.0
        for p in range(kp[i], kp[i + 1]):
            c = -1j * kv[p]
            r = rho[ki[p]]
            for j in range(n):
                row[j] += c * r[j]
        for m in range(n_jumps):
            w[:] = 0.0
            ii = m * n + i
            for p in range(lp[ii], lp[ii + 1]):
                c = 0.5 * lv[p]
                r = rho[li[p]]
                for j in range(n):
                    w[j] += c * r[j]
            for j in range(n):
                jj = m * n + j
                s = 0j
                for p in range(lp[jj], lp[jj + 1]):
                    s += w[li[p]] * np.conj(lv[p])
                row[j] += s


@njit(cache=True)
def hermitian_part(a, out):
    """``out = a + a^dag`` with cache-tiled transposed reads."""
    n = a.shape[0]
    for i0 in range(0, n, _TILE):
        for j0 in range(0, n, _TILE):
            for i in range(i0, min(i0 + _TILE, n)):
                for j in range(j0, min(j0 + _TILE, n)):
                    out[i, j] = a[i, j] + np.conj(a[j, i])


@njit(cache=True)
def stage_update(a, rho, c, tmp, acc, weight, first):
    """With ``k = a + a^dag``: ``tmp = rho + c k`` and ``acc (+)= weight k``."""
    n = a.shape[0]
    for i0 in range(0, n, _TILE):
        for j0 in range(0, n, _TILE):
            for i in range(i0, min(i0 + _TILE, n)):
                for j in range(j0, min(j0 + _TILE, n)):
                    k = a[i, j] + np.conj(a[j, i])
                    tmp[i, j] = rho[i, j] + c * k
                    if first:
                        acc[i, j] = weight * k
                    else:
                        acc[i, j] += weight * k
