"""Small numeric helpers shared across modules."""

import numpy as np


def hermitize(a):
    """Return the Hermitian part (A + A^H)/2 of a square matrix."""
    return (a + a.conj().T) / 2.0


def is_hermitian(a, tol=1e-9):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return float(np.max(np.abs(a - a.conj().T))) <= tol


def min_eigval(a):
    """Smallest eigenvalue of a Hermitian matrix."""
    return float(np.linalg.eigvalsh(hermitize(a))[0])


def psd_sqrt(r, clamp_tol=1e-10):
    """Hermitian square root of a PSD matrix.

    Eigenvalues below zero are clamped to zero; values more negative than
    -clamp_tol * max(eig) indicate a genuinely indefinite input and raise.
    """
    r = hermitize(np.asarray(r, dtype=complex))
    w, u = np.linalg.eigh(r)
    scale = max(float(w[-1]), 0.0)
    if w[0] < -clamp_tol * max(scale, 1.0):
        raise ValueError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}")
    w = np.clip(w, 0.0, None)
    return (u * np.sqrt(w)) @ u.conj().T


def complex_standard_normal(rng, shape):
    """Circularly symmetric complex Gaussian with unit variance per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)
