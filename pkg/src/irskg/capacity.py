"""Secret-key-capacity lower bound: closed forms and determinant-based oracle.

The bound for one eavesdropper is driven by three combined-channel powers
(legitimate K_ab, and the eavesdropper's odd/even-slot powers K_aek, K_bek)
plus the estimation-noise variances at each node.  The closed forms here
assume the worst-case eavesdropper correlation structure, under which the
cross-covariances factor as K_AE1 = sqrt(K_ab * K_aek) and so on; the
numeric-determinant oracle builds those covariance matrices explicitly
so the closed forms can be cross-validated against plain 3x3 / 2x2
determinants.
"""

from dataclasses import dataclass, field

import numpy as np

from .stats import K_value

#: Signal value returned when the bound's log argument is not positive.
UNDEFINED_BOUND = float("-inf")


class CapacityError(ValueError):
    """Raised when a determinant-form evaluation is numerically invalid."""


@dataclass(frozen=True)
class KTriple:
    """Combined-channel powers and noise variances for one eavesdropper."""

    k_ab: float
    k_aek: float
    k_bek: float
    sigma_a2: float
    sigma_b2: float
    sigma_e2: float

    def __post_init__(self):
        for name in ("k_ab", "k_aek", "k_bek", "sigma_a2", "sigma_b2", "sigma_e2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class CapacityReport:
    """Per-eavesdropper capacities for one reflect state, and their minimum."""

    per_eve: list
    min_capacity: float
    scheme: str
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        assert self.min_capacity == min(self.per_eve)


def capacity_equal_noise(kt, tc):
    """Capacity lower bound in bits/s when all noise variances are equal.

    Uses sigma_a2 as the common noise power.  The bound may be negative;
    a non-positive log argument yields UNDEFINED_BOUND instead of NaN.
    """
    sigma2 = kt.sigma_a2
    k_sum = kt.k_aek + kt.k_bek
    num = kt.k_ab * kt.k_ab - kt.k_ab * k_sum
    den = (k_sum + sigma2) * (2.0 * kt.k_ab + sigma2)
    if den <= 0.0:
        return UNDEFINED_BOUND
    arg = 1.0 + num / den
    if arg <= 0.0 or not np.isfinite(arg):
        return UNDEFINED_BOUND
    return np.log2(arg) / tc


def _general_branch(kt, swap):
    """One branch of the unequal-noise closed form.

    The two branches differ only in which legitimate noise variance
    multiplies the subtracted numerator term; swap=True replaces
    sigma_b2 with sigma_a2 there.
    """
    k_sum = kt.k_aek + kt.k_bek
    se2 = kt.sigma_e2
    num_noise = kt.sigma_a2 if swap else kt.sigma_b2
    num = kt.k_ab**2 * se2**2 - kt.k_ab * k_sum * num_noise * se2
    den = (k_sum * se2 + se2**2) * (
        kt.k_ab * (kt.sigma_a2 + kt.sigma_b2) + kt.sigma_a2 * kt.sigma_b2
    )
    return num, den


def capacity_general(kt, tc):
    """Capacity lower bound in bits/s with per-node noise variances.

    Evaluates the better of the two mutual-information differences: the
    branch conditioning on Alice's estimate when sigma_b2 <= sigma_a2,
    otherwise the branch conditioning on Bob's.  Reduces bit-exactly to
    capacity_equal_noise when all three noise powers coincide.
    """
    if kt.sigma_a2 == kt.sigma_b2 == kt.sigma_e2:
        return capacity_equal_noise(kt, tc)
    num, den = _general_branch(kt, swap=kt.sigma_b2 > kt.sigma_a2)
    if den <= 0.0:
        return UNDEFINED_BOUND
    arg = 1.0 + num / den
    if arg <= 0.0 or not np.isfinite(arg):
        return UNDEFINED_BOUND
    return np.log2(arg) / tc


def determinant_identities(kt):
    """Closed-form determinants of the three estimate covariance matrices.

    Returns a dict with detW_AE1E2 (3x3: Alice + both eavesdropper slots),
    detW_E1E2 (2x2: eavesdropper slots only) and detW_AB (2x2: the
    legitimate pair).
    """
    k_sum = kt.k_aek + kt.k_bek
    sa2, sb2, se2 = kt.sigma_a2, kt.sigma_b2, kt.sigma_e2
    return {
        "detW_AE1E2": k_sum * sa2 * se2 + kt.k_ab * se2**2 + sa2 * se2**2,
        "detW_E1E2": k_sum * se2 + se2**2,
        "detW_AB": kt.k_ab * (sa2 + sb2) + sa2 * sb2,
    }


def worst_case_covariances(kt):
    """Estimate covariance matrices under worst-case eavesdropper correlation.

    Cross terms are the geometric means of the channel powers, the structure
    that makes the closed-form determinant expansion exact.  Returns
    (W_AE1E2, W_E1E2, W_AB) as plain float arrays for numeric determinants.
    """
    c_ae1 = np.sqrt(kt.k_ab * kt.k_aek)
    c_ae2 = np.sqrt(kt.k_ab * kt.k_bek)
    c_e1e2 = np.sqrt(kt.k_aek * kt.k_bek)
    w_ae1e2 = np.array(
        [
            [kt.k_ab + kt.sigma_a2, c_ae1, c_ae2],
            [c_ae1, kt.k_aek + kt.sigma_e2, c_e1e2],
            [c_ae2, c_e1e2, kt.k_bek + kt.sigma_e2],
        ]
    )
    w_e1e2 = np.array(
        [
            [kt.k_aek + kt.sigma_e2, c_e1e2],
            [c_e1e2, kt.k_bek + kt.sigma_e2],
        ]
    )
    w_ab = np.array(
        [
            [kt.k_ab + kt.sigma_a2, kt.k_ab],
            [kt.k_ab, kt.k_ab + kt.sigma_b2],
        ]
    )
    return w_ae1e2, w_e1e2, w_ab


def capacity_from_determinants(kt, tc):
    """Determinant-form capacity bound, the oracle for the closed forms.

    Computes log2(det(W_AE1E2) * K_BB / (det(W_E1E2) * det(W_AB))) with
    numeric determinants, for both node orderings, and returns the larger.
    """
    w_ae1e2, w_e1e2, w_ab = worst_case_covariances(kt)
    det3_a = np.linalg.det(w_ae1e2)
    det2_e = np.linalg.det(w_e1e2)
    det2_ab = np.linalg.det(w_ab)

    # swapped branch: Bob's estimate conditioned on the eavesdropper's
    kt_swap = KTriple(kt.k_ab, kt.k_aek, kt.k_bek, kt.sigma_b2, kt.sigma_a2, kt.sigma_e2)
    det3_b = np.linalg.det(worst_case_covariances(kt_swap)[0])

    for name, d in (("detW_AE1E2", det3_a), ("detW_E1E2", det2_e),
                    ("detW_AB", det2_ab), ("detW_BE1E2", det3_b)):
        if d <= 0.0:
            raise CapacityError(f"nonpositive determinant {name} = {d:.3e}")

    k_bb = kt.k_ab + kt.sigma_b2
    k_aa = kt.k_ab + kt.sigma_a2
    ratio_a = det3_a * k_bb / (det2_e * det2_ab)
    ratio_b = det3_b * k_aa / (det2_e * det2_ab)
    return np.log2(max(ratio_a, ratio_b)) / tc


def min_capacity_over_eves(stats, v, sigma2, tc, scheme="unspecified"):
    """Worst-case (minimum) equal-noise capacity over all eavesdroppers."""
    if stats.num_eves < 1:
        raise ValueError("need at least one eavesdropper")
    k_ab = K_value(stats, "ab", v)
    per_eve = []
    for k in range(stats.num_eves):
        kt = KTriple(
            k_ab=k_ab,
            k_aek=K_value(stats, "aek", v, eve=k),
            k_bek=K_value(stats, "bek", v, eve=k),
            sigma_a2=sigma2,
            sigma_b2=sigma2,
            sigma_e2=sigma2,
        )
        per_eve.append(capacity_equal_noise(kt, tc))
    return CapacityReport(
        per_eve=per_eve,
        min_capacity=min(per_eve),
        scheme=scheme,
        v=np.asarray(v),
    )
