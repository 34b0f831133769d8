"""Second-order link statistics feeding the capacity bound and the optimizer.

For each link p->q through the surface, the cascade seen by the receiver is
sum_n phi_n * h_pr[n] * h_rq[n] = v^H (h_pr ⊙ h_rq) with v = conj(phi), so the
covariance that the quadratic form v^H R v needs is the second moment of the
element-wise product vector u = h_pr ⊙ h_rq.  estimate_R averages u u^H over
the sample blocks.
"""

from dataclasses import dataclass, field

import numpy as np

from .util import hermitize, min_eigval

LINK_NAMES = ("ab", "aek", "bek")


@dataclass
class ReflectState:
    """Reflecting-coefficient state: v[n] is the conjugate of coefficient phi[n]."""

    v: np.ndarray
    V: np.ndarray | None = None
    scheme: str = "unspecified"

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=complex)

    @property
    def phi(self):
        return self.v.conj()

    def validate(self, tol=1e-9):
        if np.any(np.abs(self.v) > 1.0 + tol):
            raise ValueError("reflect coefficients must satisfy |v_n| <= 1")
        if self.V is not None:
            if min_eigval(self.V) < -1e-8:
                raise ValueError("lifted matrix must be PSD")
        return self


@dataclass
class LinkStatistics:
    """Direct-link powers and cascade covariance matrices for one scenario.

    sigma2_* are scalar direct-channel powers; R_* are Hermitian N x N
    covariance matrices of the element-wise cascade vectors.  Per-eve
    aggregates combine the two eavesdropper-side quantities.
    """

    sigma2_ab: float
    sigma2_aek: np.ndarray  # (K,)
    sigma2_bek: np.ndarray  # (K,)
    R_arb: np.ndarray       # (N, N)
    R_arek: np.ndarray      # (K, N, N)
    R_brek: np.ndarray      # (K, N, N)

    @property
    def num_eves(self):
        return len(self.sigma2_aek)

    @property
    def num_elements(self):
        return self.R_arb.shape[0]

    def R_sigma(self, k):
        """Aggregate eavesdropper covariance R_arek[k] + R_brek[k]."""
        return self.R_arek[k] + self.R_brek[k]

    def sigma2_sigma(self, k):
        """Aggregate eavesdropper direct power sigma2_aek[k] + sigma2_bek[k]."""
        return float(self.sigma2_aek[k] + self.sigma2_bek[k])

    def validate(self, herm_tol=1e-12, psd_tol=-1e-10):
        if self.sigma2_ab < 0 or np.any(self.sigma2_aek < 0) or np.any(self.sigma2_bek < 0):
            raise ValueError("direct powers must be nonnegative")
        mats = [self.R_arb] + list(self.R_arek) + list(self.R_brek)
        for r in mats:
            if np.max(np.abs(r - r.conj().T)) > herm_tol * max(1.0, np.max(np.abs(r))):
                raise ValueError("covariance matrix is not Hermitian")
            if min_eigval(r) < psd_tol * max(1.0, float(np.abs(r).max())):
                raise ValueError("covariance matrix is not PSD")
        return self

    def scaled(self, factor):
        """All power quantities multiplied by a common positive factor."""
        return LinkStatistics(
            sigma2_ab=self.sigma2_ab * factor,
            sigma2_aek=self.sigma2_aek * factor,
            sigma2_bek=self.sigma2_bek * factor,
            R_arb=self.R_arb * factor,
            R_arek=self.R_arek * factor,
            R_brek=self.R_brek * factor,
        )


def estimate_direct_power(samples):
    """Sample mean of |h|^2 over a sequence of complex scalars."""
    samples = np.asarray(samples)
    if samples.size == 0:
        raise ValueError("empty sample sequence")
    return float(np.mean(np.abs(samples) ** 2))


def estimate_R(pr_samples, rq_samples):
    """Sample covariance of the element-wise cascade vector h_pr ⊙ h_rq.

    Both inputs are (L, N) arrays of aligned draws from the incident and
    reflected legs.  The average of the rank-one outer products is
    re-Hermitianized before returning.
    """
    pr = np.asarray(pr_samples, dtype=complex)
    rq = np.asarray(rq_samples, dtype=complex)
    if pr.ndim == 1:
        pr = pr[None, :]
    if rq.ndim == 1:
        rq = rq[None, :]
    if pr.shape != rq.shape:
        raise ValueError(f"sample shape mismatch: {pr.shape} vs {rq.shape}")
    u = pr * rq
    # R[n, m] = mean over blocks of u_n * conj(u_m)
    r = u.T @ u.conj() / u.shape[0]
    return hermitize(r)


def cascade_vectors(pr_samples, rq_samples):
    """Element-wise cascade vectors u = h_pr ⊙ h_rq for each sample block."""
    return np.asarray(pr_samples, dtype=complex) * np.asarray(rq_samples, dtype=complex)


def K_value(stats, link, v, eve=0):
    """Combined-channel power sigma2_pq + v^H R v for one link.

    The quadratic form is real for Hermitian R up to round-off; the
    imaginary residual is discarded.
    """
    v = np.asarray(v, dtype=complex)
    if link == "ab":
        s2, r = stats.sigma2_ab, stats.R_arb
    elif link == "aek":
        s2, r = float(stats.sigma2_aek[eve]), stats.R_arek[eve]
    elif link == "bek":
        s2, r = float(stats.sigma2_bek[eve]), stats.R_brek[eve]
    else:
        raise ValueError(f"unknown link {link!r}; expected one of {LINK_NAMES}")
    quad = v.conj() @ r @ v
    return float(s2 + quad.real)


def compute_link_statistics(channel_sets, gains=None):
    """Build LinkStatistics from a sequence of channel realizations.

    When a LinkGains table is supplied, every sample is divided by the
    square root of its deterministic path gain first, which removes the
    large-scale amplitude differences between links and leaves unit-power
    small-scale statistics.
    """
    if len(channel_sets) == 0:
        raise ValueError("empty channel-set sequence")
    ab = np.array([cs.h_ab for cs in channel_sets])
    aek = np.array([cs.h_aek for cs in channel_sets])
    bek = np.array([cs.h_bek for cs in channel_sets])
    ar = np.array([cs.h_ar for cs in channel_sets])
    rb = np.array([cs.h_rb for cs in channel_sets])
    rek = np.array([cs.h_rek for cs in channel_sets])

    if gains is not None:
        ab = ab / np.sqrt(gains.ab)
        aek = aek / np.sqrt(gains.aek)
        bek = bek / np.sqrt(gains.bek)
        ar = ar / np.sqrt(gains.ar)
        rb = rb / np.sqrt(gains.rb)
        rek = rek / np.sqrt(gains.rek)

    num_eves = aek.shape[1]
    return LinkStatistics(
        sigma2_ab=estimate_direct_power(ab),
        sigma2_aek=np.array([estimate_direct_power(aek[:, k]) for k in range(num_eves)]),
        sigma2_bek=np.array([estimate_direct_power(bek[:, k]) for k in range(num_eves)]),
        R_arb=estimate_R(ar, rb),
        R_arek=np.stack([estimate_R(ar, rek[:, k, :]) for k in range(num_eves)]),
        R_brek=np.stack([estimate_R(rb, rek[:, k, :]) for k in range(num_eves)]),
    )
