"""Reflecting-coefficient optimization: bisection over the capacity level,
an SDR-SCA feasibility subproblem at each level, and Gaussian randomization
to recover a rank-one solution.

The capacity argument 1 + num/den is a ratio h(v)/g(v) of two quartic forms
in v; lifting V = v v^H turns both into linear-plus-bilinear trace forms.
Bisection searches the largest level C with h(V) >= C g(V) feasible; the
subtracted convex h is replaced by its tangent plane at the current SCA
iterate, which under-estimates h, so accepted iterates always satisfy the
original constraint.
"""

from dataclasses import dataclass, field

import numpy as np

from .capacity import min_capacity_over_eves
from .conic import ConicProgram, ConicSolveError, SlackCone, SolveStatus, solve
from .stats import LinkStatistics, ReflectState
from .util import complex_standard_normal, hermitize

FEAS_TOL = 1e-8  # slack level below which a bisection probe counts as feasible


@dataclass
class EveCoefficients:
    """Scalar expansion coefficients of the lifted numerator/denominator
    forms for one eavesdropper, with the covariance matrices they weight."""

    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float
    r_arb: np.ndarray
    r_sigma: np.ndarray
    sigma2_sigma: float


def assemble_coefficients(stats: LinkStatistics, sigma2, eve):
    """Expansion coefficients of h_k and g_k for eavesdropper `eve`."""
    s_ab = stats.sigma2_ab
    s_sig = stats.sigma2_sigma(eve)
    s2 = sigma2
    return EveCoefficients(
        a1=s_ab**2 + s_ab * s_sig + 2 * s2 * s_ab + s2 * s_sig + s2**2,
        b1=2 * s_ab + s_sig + 2 * s2,
        c1=s_ab + s2,
        a2=2 * s_ab * s_sig + s2 * s_sig + 2 * s2 * s_ab + s2**2,
        b2=2 * s_sig + 2 * s2,
        c2=2 * s_ab + s2,
        r_arb=stats.R_arb,
        r_sigma=stats.R_sigma(eve),
        sigma2_sigma=s_sig,
    )


def _tr(a, b):
    return float(np.trace(a @ b).real)


def h_eval(v_mat, coeff):
    """Numerator-plus-denominator form h_k at a lifted matrix V."""
    ra, rs = coeff.r_arb, coeff.r_sigma
    rav = ra @ v_mat
    rsv = rs @ v_mat
    return (
        coeff.a1
        + coeff.b1 * float(np.trace(rav).real)
        + coeff.c1 * float(np.trace(rsv).real)
        + float(np.trace(rav @ rav).real)
        + float(np.trace(rav @ rsv).real)
    )


def g_eval(v_mat, coeff):
    """Denominator form g_k at a lifted matrix V."""
    ra, rs = coeff.r_arb, coeff.r_sigma
    rav = ra @ v_mat
    rsv = rs @ v_mat
    return (
        coeff.a2
        + coeff.b2 * float(np.trace(rav).real)
        + coeff.c2 * float(np.trace(rsv).real)
        + 2.0 * float(np.trace(rav @ rsv).real)
    )


def grad_h(v_mat, coeff):
    """Gradient of h_k at V, as the Hermitian matrix G satisfying
    d/dt h(V + t D) = Re tr(G^H D) for Hermitian directions D."""
    ra, rs = coeff.r_arb, coeff.r_sigma
    return (
        coeff.b1 * ra
        + coeff.c1 * rs
        + 2.0 * (ra @ v_mat @ ra)
        + (ra @ v_mat @ rs + rs @ v_mat @ ra)
    )


def linearize_h(v_mat, v_anchor, coeff):
    """First-order expansion of h_k around the anchor point.

    h is convex in V, so the tangent plane under-estimates h everywhere.
    """
    g = grad_h(v_anchor, coeff)
    return h_eval(v_anchor, coeff) + float(
        np.trace(g.conj().T @ (v_mat - v_anchor)).real
    )


def _psi_terms(level, coeffs, v_anchor):
    """Affine + quadratic data of each convexified constraint.

    psi_k(V) = e_k + Re tr(D_k V) + 2*level*tr(R_arb V R_sigma V) is the
    slack of constraint k; the subproblem minimizes max_k psi_k over the
    spectahedron box.
    """
    terms = []
    for cf in coeffs:
        g_anchor = grad_h(v_anchor, cf)
        d_k = level * cf.b2 * cf.r_arb + level * cf.c2 * cf.r_sigma - g_anchor
        e_k = (
            level * cf.a2
            - h_eval(v_anchor, cf)
            + float(np.trace(g_anchor.conj().T @ v_anchor).real)
        )
        terms.append((e_k, hermitize(d_k), cf.r_arb, cf.r_sigma))
    return terms


def _psi_values(terms, level, v_mat):
    vals = []
    for e_k, d_k, ra, rs in terms:
        quad = float(np.trace(ra @ v_mat @ rs @ v_mat).real)
        vals.append(e_k + float(np.trace(d_k @ v_mat).real) + 2.0 * level * quad)
    return np.array(vals)


def _factored_min_slack(level, terms, v_init, l_init=None, max_rank=8,
                        stages=None, iters_per_stage=None):
    """Minimize max_k psi_k over {V >= 0, diag <= 1} via a low-rank factor.

    V = L L^H keeps the PSD constraint implicit and turns the diagonal cap
    into a row-norm clip, so projected spectral-gradient steps are cheap.
    The returned slack is the exact max_k psi_k at the returned V, which
    makes feasible classifications sound; infeasible ones are heuristic
    (the factorization could in principle miss the global minimum).
    Passing l_init warm-starts the factor and shortens the temperature
    continuation.
    """
    n = v_init.shape[0]
    r = min(n, max_rank)
    if l_init is not None and l_init.shape == (n, r):
        l_fac = l_init
        stages = (1e-2, 1e-4) if stages is None else stages
        iters_per_stage = 90 if iters_per_stage is None else iters_per_stage
    else:
        w, u = np.linalg.eigh(hermitize(v_init))
        w = np.clip(w[::-1][:r], 1e-12, None)
        l_fac = u[:, ::-1][:, :r] * np.sqrt(w)
        stages = (1e-1, 1e-2, 1e-3, 1e-5) if stages is None else stages
        iters_per_stage = 140 if iters_per_stage is None else iters_per_stage

    def project(l_mat):
        norms = np.sqrt(np.sum(np.abs(l_mat) ** 2, axis=1))
        over = norms > 1.0
        if np.any(over):
            l_mat = l_mat.copy()
            l_mat[over] /= norms[over, None]
        return l_mat

    def psi_and_grad(l_mat, tau):
        vals = np.empty(len(terms))
        grads = []
        for i, (e_k, d_k, ra, rs) in enumerate(terms):
            ral = ra @ l_mat
            rsl = rs @ l_mat
            m_a = l_mat.conj().T @ ral
            m_s = l_mat.conj().T @ rsl
            quad = float(np.trace(m_a @ m_s).real)
            lin = float(np.sum((l_mat.conj() * (d_k @ l_mat)).real))
            vals[i] = e_k + lin + 2.0 * level * quad
            grads.append((d_k, ral, rsl, m_a, m_s))
        shifted = (vals - vals.max()) / tau
        w_soft = np.exp(shifted)
        w_soft /= w_soft.sum()
        grad = np.zeros_like(l_mat)
        for i, (d_k, ral, rsl, m_a, m_s) in enumerate(grads):
            if w_soft[i] < 1e-14:
                continue
            g_k = 2.0 * (d_k @ l_mat) + 4.0 * level * (ral @ m_s + rsl @ m_a)
            grad += w_soft[i] * g_k
        smooth_val = tau * (np.log(np.sum(np.exp(shifted))) + vals.max() / tau)
        return vals, smooth_val, grad

    l_fac = project(l_fac)
    best_l, best_slack = l_fac, float(np.max(_psi_values(terms, level,
                                                         l_fac @ l_fac.conj().T)))
    scale0 = max(1.0, abs(best_slack))
    for tau_rel in stages:
        tau = tau_rel * scale0
        step = 1.0
        prev_l, prev_grad = None, None
        for _ in range(iters_per_stage):
            vals, fval, grad = psi_and_grad(l_fac, tau)
            if prev_l is not None:
                s = (l_fac - prev_l).ravel()
                y = (grad - prev_grad).ravel()
                sy = float(np.real(np.vdot(s, y)))
                if sy > 1e-18:
                    step = float(np.real(np.vdot(s, s))) / sy
                else:
                    step = 1.0
                step = min(max(step, 1e-12), 1e6)
            prev_l, prev_grad = l_fac, grad
            l_fac = project(l_fac - step * grad)
            if np.linalg.norm(l_fac - prev_l) <= 1e-12 * max(1.0, np.linalg.norm(prev_l)):
                break
        slack = float(np.max(_psi_values(terms, level, l_fac @ l_fac.conj().T)))
        if slack < best_slack:
            best_slack, best_l = slack, l_fac
    v_mat = best_l @ best_l.conj().T
    return hermitize(v_mat), best_slack, best_l


def _subproblem(level, coeffs, v_anchor):
    """Convexified feasibility subproblem at a bisection level.

    minimize t  s.t.  V >= 0, diag(V) <= 1,
                      level * g_k(V) - linearize_h(V; anchor) <= t  for all k
    """
    n = coeffs[0].r_arb.shape[0]
    prog = ConicProgram(dim=n, num_slacks=1, slack_cones=[SlackCone.FREE])
    prog.objective_s = np.array([1.0])
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        prog.add_linear(e, c=1.0)
    for cf in coeffs:
        g_anchor = grad_h(v_anchor, cf)
        lin = level * cf.b2 * cf.r_arb + level * cf.c2 * cf.r_sigma - g_anchor
        rhs = (
            h_eval(v_anchor, cf)
            - float(np.trace(g_anchor.conj().T @ v_anchor).real)
            - level * cf.a2
        )
        prog.add_quadratic(
            2.0 * level * cf.r_arb, cf.r_sigma, a=lin, b=np.array([-1.0]), c=rhs
        )
    return prog


def sca_solve(level, coeffs, v_init, max_iters=50, tol=1e-3, solver_tol=1e-9,
              method="interior"):
    """Iterate the convexified subproblem until the iterate stabilizes.

    Returns (feasible, V, slack, iterations).  Because the linearization
    under-estimates h, any returned (V, slack <= 0) satisfies the original
    difference-of-convex constraint at this level.

    method "interior" solves each subproblem with the conic interior-point
    solver; "factored" runs the low-rank projected-gradient solver, which
    is much faster for larger surfaces and classifies feasible levels
    soundly (its slack is evaluated exactly at the returned iterate).
    """
    if level < 0:
        raise ValueError("bisection level must be nonnegative")
    v_m = np.asarray(v_init, dtype=complex)
    slack = np.inf
    l_warm = None
    window_best = np.inf
    window_age = 0
    for it in range(1, max_iters + 1):
        if method == "interior":
            prog = _subproblem(level, coeffs, v_m)
            res = solve(prog, tol=solver_tol)
            if res.status != SolveStatus.OPTIMAL:
                # retry ladder: looser interior tolerance, then the factored
                # solver (whose feasible classifications stay sound)
                res = solve(prog, tol=1e-7)
            if res.status == SolveStatus.OPTIMAL:
                v_new, slack = res.v, res.objective
            else:
                terms = _psi_terms(level, coeffs, v_m)
                try:
                    v_new, slack, _ = _factored_min_slack(level, terms, v_m)
                except Exception:
                    err = ConicSolveError(
                        f"subproblem solve failed with status {res.status}"
                        f" at level C={level:.6g}"
                    )
                    err.level = level
                    raise err
        elif method == "factored":
            terms = _psi_terms(level, coeffs, v_m)
            v_new, slack, l_warm = _factored_min_slack(level, terms, v_m, l_init=l_warm)
        else:
            raise ValueError(f"unknown sca method {method!r}")
        delta = np.linalg.norm(v_new - v_m) / max(1.0, np.linalg.norm(v_m))
        v_m = v_new
        if slack <= -1e-2:
            # comfortably feasible: the iterate certifies the level (the
            # linearization under-estimates h), no need to polish further
            break
        if delta <= tol:
            break
        # stagnation guard: stop grinding when several successive
        # iterations have not improved the slack noticeably
        if slack < window_best - 1e-7 * max(1.0, abs(window_best)):
            window_best, window_age = slack, 0
        else:
            window_age += 1
            if window_age >= 5:
                break
    return slack <= FEAS_TOL, v_m, slack, it


@dataclass
class ProbeRecord:
    level: float
    feasible: bool
    slack: float
    sca_iters: int
    width_before: float


@dataclass
class OptimizeResult:
    """Outcome of the bisection: best lifted matrix and the achieved level."""

    v_opt: np.ndarray
    c_star: float
    c_max_initial: float
    trace: list = field(default_factory=list)
    fallback: bool = False

    @property
    def num_probes(self):
        return len(self.trace)


def _stats_scale(stats):
    """Common rescale bringing the legitimate direct power to one.

    The level ratio h/g is invariant under a joint rescale of all power
    quantities, so this only conditions the subproblem numerics.
    """
    return 1.0 / stats.sigma2_ab if stats.sigma2_ab > 0 else 1.0


def c_max_bound(stats, sigma2, policy="eve_floor"):
    """Upper bound on the achievable level h/g.

    The numerator is at most K_ab^2 and the denominator at least
    2 K_ab (sigma2_Sigma + sigma2), so with K_ab <= sigma2_ab +
    N lambda_max(R_arb) either floor yields a provable cap; the
    eavesdropper floor is far tighter when the noise power is small.
    """
    n = stats.num_elements
    lam_max = float(np.linalg.eigvalsh(hermitize(stats.R_arb))[-1])
    k_ab_max = stats.sigma2_ab + n * lam_max
    if policy == "noise_floor":
        return 1.0 + k_ab_max / (2.0 * sigma2)
    if policy == "eve_floor":
        floor = min(stats.sigma2_sigma(k) for k in range(stats.num_eves)) + sigma2
        return 1.0 + k_ab_max / (2.0 * floor)
    raise ValueError(f"unknown cmax policy {policy!r}")


def dc_margin(stats, sigma2, level, v_mat):
    """min_k h_k(V) - level * g_k(V) on the internally rescaled data.

    This is the audit quantity for accepted bisection probes; it uses the
    same conditioning rescale as bisection_optimize.
    """
    scale = _stats_scale(stats)
    st = stats.scaled(scale)
    s2 = sigma2 * scale
    margins = []
    for k in range(st.num_eves):
        cf = assemble_coefficients(st, s2, k)
        margins.append(h_eval(v_mat, cf) - level * g_eval(v_mat, cf))
    return min(margins)


def bisection_optimize(
    stats,
    sigma2,
    tc,
    rng,
    eps=0.01,
    max_sca_iters=50,
    sca_tol=1e-3,
    cmax_policy="eve_floor",
    method="auto",
):
    """Bisection search for the largest feasible capacity level.

    Feasible probes record their lifted solution and raise the lower end;
    infeasible probes lower the upper end.  Probes are warm-started from
    the last feasible iterate.  If no probe is ever feasible the random
    shifting baseline is returned, flagged as a fallback.

    method "auto" picks the interior-point subproblem solver for small
    surfaces and the factored solver above six elements.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if method == "auto":
        method = "interior" if stats.num_elements <= 6 else "factored"
    scale = _stats_scale(stats)
    st = stats.scaled(scale)
    s2 = sigma2 * scale
    n = st.num_elements
    coeffs = [assemble_coefficients(st, s2, k) for k in range(st.num_eves)]

    c_min = 0.0
    c_max = c_max_bound(st, s2, policy=cmax_policy)
    c_max_initial = c_max

    v0 = np.exp(2j * np.pi * rng.random(n))
    v_warm = np.outer(v0, v0.conj()) + 1e-3 * np.eye(n)
    v_opt = None
    trace = []
    while True:
        level = 0.5 * (c_min + c_max)
        width = c_max - c_min
        feasible, v_sol, slack, iters = sca_solve(
            level, coeffs, v_warm, max_iters=max_sca_iters, tol=sca_tol, method=method
        )
        trace.append(ProbeRecord(level, feasible, slack, iters, width))
        if feasible:
            c_min = level
            v_opt = v_sol
            v_warm = v_sol
        else:
            c_max = level
        if c_max - c_min <= eps:
            break

    if v_opt is None:
        v = baseline_random_shift(n, rng).v
        return OptimizeResult(
            v_opt=np.outer(v, v.conj()),
            c_star=c_min,
            c_max_initial=c_max_initial,
            trace=trace,
            fallback=True,
        )
    return OptimizeResult(
        v_opt=v_opt, c_star=c_min, c_max_initial=c_max_initial, trace=trace
    )


def _clamp_unit(v):
    mag = np.abs(v)
    over = mag > 1.0
    out = v.copy()
    out[over] = v[over] / mag[over]
    return out


def gaussian_randomization(v_opt_mat, trials, stats, sigma2, tc, rng):
    """Recover a feasible coefficient vector from the lifted solution.

    Draws `trials` Gaussian candidates with covariance V_opt, adds the
    deterministic scaled leading eigenvector, clamps each candidate's
    per-element magnitude to one, and keeps the candidate with the best
    worst-case capacity.
    """
    v_opt_mat = hermitize(np.asarray(v_opt_mat, dtype=complex))
    w, u = np.linalg.eigh(v_opt_mat)
    w = np.clip(w, 0.0, None)
    lead = _clamp_unit(np.sqrt(w[-1]) * u[:, -1])

    candidates = [lead]
    root = u * np.sqrt(w)
    for _ in range(trials):
        r = complex_standard_normal(rng, (v_opt_mat.shape[0],))
        candidates.append(_clamp_unit(root @ r))

    best_v, best_c = None, -np.inf
    for cand in candidates:
        c = min_capacity_over_eves(stats, cand, sigma2, tc).min_capacity
        if c > best_c:
            best_v, best_c = cand, c
    return ReflectState(v=best_v, scheme="optimized")


def baseline_random_shift(n, rng):
    """Unit-amplitude coefficients with uniform random phases."""
    theta = 2.0 * np.pi * rng.random(n)
    phi = np.exp(1j * theta)
    return ReflectState(v=phi.conj(), scheme="random_shift")


def baseline_no_irs(n):
    """Surface switched off."""
    return ReflectState(v=np.zeros(n, dtype=complex), scheme="no_irs")


def optimize_reflect_state(stats, sigma2, tc, rng, config=None, **knobs):
    """Full pipeline: bisection + SCA, then Gaussian randomization.

    Accepts either a ScenarioConfig (knobs read from it) or explicit
    keyword knobs (eps, max_sca_iters, sca_tol, cmax_policy, trials).
    Returns (ReflectState, OptimizeResult).
    """
    if config is not None:
        knobs.setdefault("eps", config.bisect_tol)
        knobs.setdefault("max_sca_iters", config.max_sca_iters)
        knobs.setdefault("sca_tol", config.sca_tol)
        knobs.setdefault("cmax_policy", config.cmax_policy)
        knobs.setdefault("trials", config.randomization_trials)
    knobs.setdefault("method", "auto")
    trials = knobs.pop("trials", 200)
    result = bisection_optimize(stats, sigma2, tc, rng, **knobs)
    state = gaussian_randomization(result.v_opt, trials, stats, sigma2, tc, rng)
    if result.fallback:
        state.scheme = "optimized(fallback)"
    return state, result


def grid_oracle(stats, sigma2, tc, phase_levels):
    """Exhaustive unit-amplitude phase search for small surfaces.

    Enumerates phase_levels^N coefficient vectors with phases on a uniform
    grid and returns the best worst-case capacity.  The budget is capped at
    one million candidates.
    """
    n = stats.num_elements
    total = phase_levels**n
    if total > 1_000_000:
        raise ValueError(f"grid budget exceeded: {phase_levels}^{n} > 1e6")
    grids = np.meshgrid(*([np.arange(phase_levels)] * n), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=1)  # (total, n)
    phi = np.exp(2j * np.pi * idx / phase_levels)
    v = phi.conj()

    def quad_all(r):
        return np.einsum("bi,ij,bj->b", v.conj(), r, v).real

    k_ab = stats.sigma2_ab + quad_all(stats.R_arb)
    best = np.full(total, np.inf)
    for k in range(stats.num_eves):
        k_sum = (
            stats.sigma2_aek[k]
            + quad_all(stats.R_arek[k])
            + stats.sigma2_bek[k]
            + quad_all(stats.R_brek[k])
        )
        num = k_ab**2 - k_ab * k_sum
        den = (k_sum + sigma2) * (2 * k_ab + sigma2)
        arg = 1.0 + num / den
        cap = np.where(arg > 0, np.log2(np.maximum(arg, 1e-300)) / tc, -np.inf)
        best = np.minimum(best, cap)
    i_best = int(np.argmax(best))
    return ReflectState(v=v[i_best], scheme="grid_oracle"), float(best[i_best])
