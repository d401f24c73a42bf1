import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcsim import operators as ops
from qcsim.errors import DimensionError, TruncationError, ValidityError


def random_density(n, rng, rank=None):
    rank = rank or n
    g = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


def coherent_series(alpha, dim):
    """Independent oracle: Poisson amplitudes via log-gamma."""
    n = np.arange(dim)
    if alpha == 0:
        v = np.zeros(dim, complex)
        v[0] = 1
        return v
    logs = n * math.log(abs(alpha)) - 0.5 * np.array([math.lgamma(k + 1) for k in n])
    phase = np.exp(1j * n * np.angle(alpha))
    return np.exp(-abs(alpha) ** 2 / 2 + logs) * phase


def test_annihilation_on_fock_states():
    a3 = ops.annihilation(3)
    assert np.allclose(a3 @ ops.basis(3, 2), math.sqrt(2) * ops.basis(3, 1))
    assert np.allclose(ops.annihilation(2) @ ops.basis(2, 0), 0)


def test_commutator_identity_below_truncation():
    a = ops.annihilation(20)
    c = ops.commutator(a, a.conj().T)
    assert np.allclose(c[:10, :10], np.eye(10), atol=1e-14)
    assert c[19, 19] == pytest.approx(-19)


def test_quadrature_small_and_vacuum():
    assert np.allclose(ops.quadrature(2), [[0, 1], [1, 0]])
    vac = ops.basis(10, 0)
    assert abs(ops.expectation(vac, ops.quadrature(10))) < 1e-15


def test_quadrature_on_coherent_state():
    psi = ops.coherent_state(0.5, 30)
    assert ops.expectation(psi, ops.quadrature(30)).real == pytest.approx(1.0, abs=1e-8)


def test_coherent_state_against_series():
    for alpha in (0.0, 1.0, 1.3 - 0.7j, 2.5j):
        assert np.allclose(ops.coherent_state(alpha, 40), coherent_series(alpha, 40), atol=1e-12)


def test_coherent_eigenrelation_and_displacement():
    psi = ops.coherent_state(1.0, 30)
    assert np.linalg.norm(ops.annihilation(30) @ psi - psi) < 1e-10
    d = ops.displacement(1.0, 30)
    # displacement in a truncated space is only accurate away from the cutoff
    big = ops.displacement(1.0, 60)[:30, 0]
    assert np.linalg.norm(big - psi) < 1e-9
    assert np.linalg.norm(d[:, 0] - psi) < 1e-6


def test_coherent_truncation_error():
    with pytest.raises(TruncationError):
        ops.coherent_state(5.0, 10)


def test_partial_trace_product_and_bell():
    rng = np.random.default_rng(3)
    ra, rb = random_density(3, rng), random_density(4, rng)
    assert np.allclose(ops.partial_trace(np.kron(ra, rb), (3, 4), 0), ra)
    assert np.allclose(ops.partial_trace(np.kron(ra, rb), (3, 4), 1), rb)
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    rho = np.outer(bell, bell)
    for keep in (0, 1):
        assert np.allclose(ops.partial_trace(rho, (2, 2), keep), np.eye(2) / 2)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_partial_trace_preserves_trace(d1, d2, d3, seed):
    rng = np.random.default_rng(seed)
    rho = random_density(d1 * d2 * d3, rng)
    for keep in (0, 1, 2, (0, 2)):
        red = ops.partial_trace(rho, (d1, d2, d3), keep)
        assert np.trace(red) == pytest.approx(1.0, abs=1e-12)


def test_embed_and_kron_dimensions():
    x = ops.quadrature(3)
    e = ops.embed(x, (2, 3, 4), 1)
    assert e.shape == (24, 24)
    assert np.allclose(e, np.kron(np.kron(np.eye(2), x), np.eye(4)))
    with pytest.raises(DimensionError):
        ops.kron(np.eye(100), np.eye(100))
    with pytest.raises(DimensionError):
        ops.SpaceSpec((0, 3))


def test_expm_matches_scipy():
    import scipy.linalg as sla

    rng = np.random.default_rng(0)
    h = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    herm = h + h.conj().T
    assert np.allclose(ops.expm(herm, -0.3j), sla.expm(-0.3j * herm), atol=1e-12)
    assert np.allclose(ops.expm(h), sla.expm(h), atol=1e-10)


def test_trace_distance_and_purity():
    p0 = ops.ket2dm(ops.basis(2, 0))
    p1 = ops.ket2dm(ops.basis(2, 1))
    assert ops.trace_distance(p0, p1) == pytest.approx(1.0)
    assert ops.trace_distance(p0, p0) == pytest.approx(0.0, abs=1e-15)
    assert ops.purity(np.eye(4) / 4) == pytest.approx(0.25)


def test_check_density_rejects_bad_states():
    with pytest.raises(ValidityError):
        ops.check_density(np.diag([1.2, -0.2]))
    with pytest.raises(ValidityError):
        ops.check_density(np.diag([0.5, 0.6]))
