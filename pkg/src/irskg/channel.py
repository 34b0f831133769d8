"""Network geometry and stochastic channel generation.

Every link follows the same fading law: a deterministic distance-phased
line-of-sight part and a circularly symmetric Gaussian non-LoS part, mixed
by the Rician factor and scaled by the distance path gain.  Nodes that sit
in the same local cluster (the eavesdroppers plus whichever legitimate node
they surround) get correlated non-LoS components, with Pearson coefficient
J0(2*pi*d/lambda)^2 at separation d.

Random draws are organized into per-purpose substreams (direct links, the
surface legs, one stream per eavesdropper) so that enlarging the surface or
adding eavesdroppers leaves the draws of everything else untouched.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import j0

from .config import EveCase, ScenarioConfig
from .util import complex_standard_normal, hermitize


@dataclass
class Geometry:
    """Resolved node and surface-element positions for one trial."""

    alice: np.ndarray
    bob: np.ndarray
    rose_center: np.ndarray
    eve_positions: np.ndarray      # (K, 3)
    element_positions: np.ndarray  # (N, 3)
    eve_case: EveCase

    @property
    def num_eves(self):
        return self.eve_positions.shape[0]

    @property
    def num_elements(self):
        return self.element_positions.shape[0]

    @property
    def cluster_center(self):
        return self.bob if self.eve_case == EveCase.AROUND_BOB else self.alice

    @property
    def cluster_positions(self):
        """Positions of the co-located node set: cluster center first."""
        return np.vstack([self.cluster_center[None, :], self.eve_positions])

    @property
    def d_ab(self):
        return float(np.linalg.norm(self.alice - self.bob))

    @property
    def d_aek(self):
        return np.linalg.norm(self.eve_positions - self.alice, axis=1)

    @property
    def d_bek(self):
        return np.linalg.norm(self.eve_positions - self.bob, axis=1)

    @property
    def d_ar(self):
        return np.linalg.norm(self.element_positions - self.alice, axis=1)

    @property
    def d_rb(self):
        return np.linalg.norm(self.element_positions - self.bob, axis=1)

    @property
    def d_rek(self):
        diff = self.eve_positions[:, None, :] - self.element_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


@dataclass
class ChannelSet:
    """One coherence block's channels (reverse directions by reciprocity)."""

    h_ab: complex
    h_aek: np.ndarray  # (K,)
    h_bek: np.ndarray  # (K,)
    h_ar: np.ndarray   # (N,)
    h_rb: np.ndarray   # (N,)
    h_rek: np.ndarray  # (K, N)


@dataclass
class LinkGains:
    """Deterministic path gains per link (per element for surface legs)."""

    ab: float
    aek: np.ndarray  # (K,)
    bek: np.ndarray  # (K,)
    ar: np.ndarray   # (N,)
    rb: np.ndarray   # (N,)
    rek: np.ndarray  # (K, N)


@dataclass
class PilotObservation:
    """Least-squares channel estimates for one pilot exchange."""

    h_hat_b: complex        # Bob's estimate (odd slot)
    h_hat_a: complex        # Alice's estimate (even slot)
    h_hat_e1: np.ndarray    # eavesdropper odd-slot estimates (K,)
    h_hat_e2: np.ndarray    # eavesdropper even-slot estimates (K,)
    phi: np.ndarray         # reflecting coefficients in effect


def build_geometry(config: ScenarioConfig, rng) -> Geometry:
    """Sample eavesdropper positions and lay out the surface grid.

    Eavesdroppers are uniform in a horizontal disk of radius R around the
    case's center node (uniform angle, radius proportional to sqrt(u)).
    Surface elements form a grid with lambda spacing in the x-z plane,
    centered on the surface's nominal position; positions are exact, so
    near-field distances are available per element.
    """
    config.validate()
    lam = config.wavelength
    center = np.asarray(
        config.bob_pos if config.eve_case == EveCase.AROUND_BOB else config.alice_pos,
        dtype=float,
    )

    eve_rngs = rng.spawn(config.num_eves)
    eves = np.empty((config.num_eves, 3))
    for k, erng in enumerate(eve_rngs):
        u_angle, u_radius = erng.random(2)
        theta = 2.0 * np.pi * u_angle
        rad = config.eve_radius * np.sqrt(u_radius)
        eves[k] = center + rad * np.array([np.cos(theta), np.sin(theta), 0.0])

    rows = config.grid_rows
    cols = config.num_elements // rows
    rose = np.asarray(config.rose_pos, dtype=float)
    elements = np.empty((config.num_elements, 3))
    n = 0
    for c in range(cols):
        for r in range(rows):
            x_off = (c - (cols - 1) / 2.0) * lam
            z_off = (r - (rows - 1) / 2.0) * lam
            elements[n] = rose + np.array([x_off, 0.0, z_off])
            n += 1

    return Geometry(
        alice=np.asarray(config.alice_pos, dtype=float),
        bob=np.asarray(config.bob_pos, dtype=float),
        rose_center=rose,
        eve_positions=eves,
        element_positions=elements,
        eve_case=config.eve_case,
    )


def link_gain(d, c, zeta0):
    """Distance path gain zeta0 * d**(-c); rejects nonpositive distances."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("link distance must be positive")
    return zeta0 * d ** (-c)


def link_gains(geometry: Geometry, config: ScenarioConfig) -> LinkGains:
    exps = config.path_loss_exponents
    z0 = config.ref_gain
    return LinkGains(
        ab=float(link_gain(geometry.d_ab, exps["ab"], z0)),
        aek=link_gain(geometry.d_aek, exps["aek"], z0),
        bek=link_gain(geometry.d_bek, exps["bek"], z0),
        ar=link_gain(geometry.d_ar, exps["ar"], z0),
        rb=link_gain(geometry.d_rb, exps["rb"], z0),
        rek=link_gain(geometry.d_rek, exps["rek"], z0),
    )


def nlos_correlation(geometry: Geometry, wavelength: float) -> np.ndarray:
    """Correlation matrix of the cluster nodes' non-LoS components.

    Entry (i, j) is J0(2*pi*d_ij/lambda)^2.  If the resulting matrix is
    indefinite it is clamped to the nearest PSD matrix (negative eigenvalues
    zeroed) and its diagonal renormalized back to one.
    """
    pos = geometry.cluster_positions
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.linalg.norm(diff, axis=2)
    rho = j0(2.0 * np.pi * d / wavelength) ** 2
    rho = (rho + rho.T) / 2.0
    w, u = np.linalg.eigh(rho)
    if w[0] < 0.0:
        w = np.clip(w, 0.0, None)
        rho = (u * w) @ u.T
        rho = (rho + rho.T) / 2.0
        scale = 1.0 / np.sqrt(np.maximum(np.diag(rho), 1e-30))
        rho = rho * scale[:, None] * scale[None, :]
        np.fill_diagonal(rho, 1.0)
    return rho


def _cluster_factor(corr, ridge=1e-12):
    """Lower-triangular mixing factor; leading blocks are K-nested."""
    return np.linalg.cholesky(corr + ridge * np.eye(corr.shape[0]))


def _rician(gain, kappa, g_los, g_nlos):
    s_los = np.sqrt(kappa / (1.0 + kappa))
    s_nlos = np.sqrt(1.0 / (1.0 + kappa))
    return np.sqrt(gain) * (s_los * g_los + s_nlos * g_nlos)


def sample_channels(geometry: Geometry, config: ScenarioConfig, rng, num_blocks=None):
    """Draw independent coherence-block channel realizations.

    Returns a list of ChannelSet.  LoS components carry the exact
    per-element propagation phases; non-LoS components are mixed across the
    cluster nodes by a Cholesky factor of the J0^2 correlation matrix.
    """
    L = config.num_blocks if num_blocks is None else num_blocks
    K, N = geometry.num_eves, geometry.num_elements
    lam = config.wavelength
    kap = config.rician_factors
    gains = link_gains(geometry, config)

    direct_rng, irs_rng, eve_root = rng.spawn(3)
    w_ab = complex_standard_normal(direct_rng, (L,))
    w_ar = complex_standard_normal(irs_rng, (L, N))
    w_rb = complex_standard_normal(irs_rng, (L, N))
    w_aek = np.empty((L, K), dtype=complex)
    w_bek = np.empty((L, K), dtype=complex)
    w_rek = np.empty((L, K, N), dtype=complex)
    for k, erng in enumerate(eve_root.spawn(K)):
        w_aek[:, k] = complex_standard_normal(erng, (L,))
        w_bek[:, k] = complex_standard_normal(erng, (L,))
        w_rek[:, k] = complex_standard_normal(erng, (L, N))

    corr = nlos_correlation(geometry, lam)
    mix_full = _cluster_factor(corr)          # cluster center + eavesdroppers
    mix_eves = _cluster_factor(corr[1:, 1:])  # eavesdroppers only

    if config.eve_case == EveCase.AROUND_BOB:
        # families ending in the Bob-side cluster: Alice->{b, e_k},
        # Bob->{e_k}, Rose->{b, e_k} per element
        stack_d = np.concatenate([w_ab[:, None], w_aek], axis=1)       # (L, 1+K)
        mixed_d = stack_d @ mix_full.T
        g_ab, g_aek = mixed_d[:, 0], mixed_d[:, 1:]
        g_bek = w_bek @ mix_eves.T
        stack_r = np.concatenate([w_rb[:, None, :], w_rek], axis=1)    # (L, 1+K, N)
        mixed_r = np.einsum("ij,ljn->lin", mix_full, stack_r)
        g_rb, g_rek = mixed_r[:, 0, :], mixed_r[:, 1:, :]
        g_ar = w_ar
    else:
        # cluster around Alice: Bob->{a, e_k}, Alice->{e_k}, Rose->{a, e_k}
        stack_d = np.concatenate([w_ab[:, None], w_bek], axis=1)
        mixed_d = stack_d @ mix_full.T
        g_ab, g_bek = mixed_d[:, 0], mixed_d[:, 1:]
        g_aek = w_aek @ mix_eves.T
        stack_r = np.concatenate([w_ar[:, None, :], w_rek], axis=1)
        mixed_r = np.einsum("ij,ljn->lin", mix_full, stack_r)
        g_ar, g_rek = mixed_r[:, 0, :], mixed_r[:, 1:, :]
        g_rb = w_rb

    phase = lambda d: np.exp(-2j * np.pi * d / lam)
    h_ab = _rician(gains.ab, kap["ab"], phase(geometry.d_ab), g_ab)
    h_aek = _rician(gains.aek, kap["aek"], phase(geometry.d_aek), g_aek)
    h_bek = _rician(gains.bek, kap["bek"], phase(geometry.d_bek), g_bek)
    h_ar = _rician(gains.ar, kap["ar"], phase(geometry.d_ar), g_ar)
    h_rb = _rician(gains.rb, kap["rb"], phase(geometry.d_rb), g_rb)
    h_rek = _rician(gains.rek, kap["rek"], phase(geometry.d_rek), g_rek)

    return [
        ChannelSet(
            h_ab=complex(h_ab[l]),
            h_aek=h_aek[l].copy(),
            h_bek=h_bek[l].copy(),
            h_ar=h_ar[l].copy(),
            h_rb=h_rb[l].copy(),
            h_rek=h_rek[l].copy(),
        )
        for l in range(L)
    ]


def combined_channel(direct, incident, reflected, v):
    """Direct channel plus the cascade sum_n phi_n incident_n reflected_n.

    The same bilinear form serves both transmission directions, which makes
    noiseless reciprocity exact.
    """
    v = np.asarray(v, dtype=complex)
    return direct + v.conj() @ (np.asarray(incident) * np.asarray(reflected))


def observe_pilots(channels: ChannelSet, v, sigma2, rng) -> PilotObservation:
    """Least-squares estimates of the combined channels with estimation noise.

    The eavesdropper's odd-slot and even-slot noises are independent, as are
    Alice's and Bob's.
    """
    v = np.asarray(getattr(v, "v", v), dtype=complex)
    if np.any(np.abs(v) > 1.0 + 1e-9):
        raise ValueError("reflect coefficients must satisfy |v_n| <= 1")
    K = channels.h_aek.shape[0]

    c_ab = combined_channel(channels.h_ab, channels.h_ar, channels.h_rb, v)
    c_aek = np.array(
        [combined_channel(channels.h_aek[k], channels.h_ar, channels.h_rek[k], v) for k in range(K)]
    )
    c_bek = np.array(
        [combined_channel(channels.h_bek[k], channels.h_rb, channels.h_rek[k], v) for k in range(K)]
    )

    noise = np.sqrt(sigma2) * complex_standard_normal(rng, (2 + 2 * K,))
    return PilotObservation(
        h_hat_b=c_ab + noise[0],
        h_hat_a=c_ab + noise[1],
        h_hat_e1=c_aek + noise[2 : 2 + K],
        h_hat_e2=c_bek + noise[2 + K :],
        phi=v.conj(),
    )
