"""Canonical convex subproblem over a Hermitian PSD matrix variable.

A ConicProgram holds one Hermitian N x N matrix variable V plus scalar
slacks, a linear objective, and two constraint kinds:

  linear:     Re tr(A V) + b. s <= c
  quadratic:  tr(R_a V R_b V) + Re tr(A V) + b . s <= c   (R_a, R_b PSD)

Positive semidefiniteness of V is enforced through its real symmetric
2N x 2N embedding [[Re V, -Im V], [Im V, Re V]].  solve() lowers the program
to Clarabel cone form: the Hermitian variable is parametrized by its N^2
real coordinates, the embedding rows feed a PSD-triangle cone, and each
quadratic constraint becomes a second-order cone via the factorization
tr(R_a V R_b V) = || sqrt(R_b) V sqrt(R_a) ||_F^2 expanded over the
eigenvectors of R_b (auxiliary y_i = V b_i keeps the constraint matrix
sparse).
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

import clarabel

from .util import hermitize, is_hermitian, min_eigval, psd_sqrt


def embed_hermitian(h):
    """Real symmetric 2N x 2N embedding of a Hermitian matrix.

    PSD is preserved both ways and the embedded trace is twice tr(H).
    Inputs farther than 1e-9 from Hermitian are rejected.
    """
    h = np.asarray(h)
    if not is_hermitian(h, tol=1e-9):
        raise ValueError("input matrix is not Hermitian within 1e-9")
    h = hermitize(h.astype(complex))
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def extract_hermitian(s):
    """Inverse of embed_hermitian (block-averaged, so it also projects
    solver output onto the structured embedding)."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or s.shape[0] % 2 != 0:
        raise ValueError("expected a square 2N x 2N matrix")
    n = s.shape[0] // 2
    re = (s[:n, :n] + s[n:, n:]) / 2.0
    im = (s[n:, :n] - s[:n, n:]) / 2.0
    return re + 1j * im


@dataclass
class QuadraticFactor:
    """Factorization of the bilinear trace form tr(R_a V R_b V).

    With P = sqrt(R_a) and Q = sqrt(R_b), tr(R_a V R_b V) = ||Q V P||_F^2
    for Hermitian V.  apply() evaluates Q V P; matrix() materializes the
    map vec(V) -> vec(Q V P) (column-major), intended for small N.
    """

    r_a: np.ndarray
    r_b: np.ndarray
    p: np.ndarray = field(init=False)
    q: np.ndarray = field(init=False)

    def __post_init__(self):
        self.r_a = hermitize(np.asarray(self.r_a, dtype=complex))
        self.r_b = hermitize(np.asarray(self.r_b, dtype=complex))
        self.p = psd_sqrt(self.r_a)
        self.q = psd_sqrt(self.r_b)

    def apply(self, v):
        return self.q @ v @ self.p

    def value(self, v):
        """tr(R_a V R_b V) evaluated through the factorization."""
        w = self.apply(v)
        return float(np.sum(np.abs(w) ** 2))

    def matrix(self):
        return np.kron(self.p.T, self.q)


def quadratic_factor(r_a, r_b):
    return QuadraticFactor(r_a, r_b)


@dataclass
class LinearConstraint:
    """Re tr(A V) + b . s <= c."""

    a: np.ndarray
    b: np.ndarray
    c: float


@dataclass
class QuadraticConstraint:
    """tr(R_a V R_b V) + Re tr(A V) + b . s <= c."""

    factor: QuadraticFactor
    a: np.ndarray
    b: np.ndarray
    c: float


class SlackCone(enum.Enum):
    FREE = "free"
    NONNEG = "nonneg"


@dataclass
class ConicProgram:
    """min Re tr(A0 V) + b0 . s subject to the constraint lists and V PSD."""

    dim: int
    num_slacks: int = 0
    objective_v: np.ndarray | None = None
    objective_s: np.ndarray | None = None
    slack_cones: list = field(default_factory=list)
    linear: list = field(default_factory=list)
    quadratic: list = field(default_factory=list)

    def __post_init__(self):
        n = self.dim
        if self.objective_v is None:
            self.objective_v = np.zeros((n, n), dtype=complex)
        if self.objective_s is None:
            self.objective_s = np.zeros(self.num_slacks)
        if not self.slack_cones:
            self.slack_cones = [SlackCone.NONNEG] * self.num_slacks
        if len(self.slack_cones) != self.num_slacks:
            raise ValueError("one cone membership required per slack")
        if not is_hermitian(self.objective_v, tol=1e-9):
            raise ValueError("objective matrix must be Hermitian")

    def add_linear(self, a, b=None, c=0.0):
        a = hermitize(np.asarray(a, dtype=complex))
        self._check_dims(a, b)
        self.linear.append(LinearConstraint(a, self._slack_vec(b), float(c)))

    def add_quadratic(self, r_a, r_b, a=None, b=None, c=0.0):
        a = np.zeros((self.dim, self.dim), complex) if a is None else hermitize(np.asarray(a, complex))
        self._check_dims(a, b)
        self.quadratic.append(
            QuadraticConstraint(quadratic_factor(r_a, r_b), a, self._slack_vec(b), float(c))
        )

    def _slack_vec(self, b):
        if b is None:
            return np.zeros(self.num_slacks)
        b = np.asarray(b, dtype=float)
        if b.shape != (self.num_slacks,):
            raise ValueError(f"slack coefficient vector must have shape ({self.num_slacks},)")
        return b

    def _check_dims(self, a, b):
        if a.shape != (self.dim, self.dim):
            raise ValueError(f"constraint matrix must be {self.dim} x {self.dim}")
        self._slack_vec(b)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class SolveResult:
    status: SolveStatus
    objective: float
    v: np.ndarray | None
    slacks: np.ndarray | None
    primal_residual: float
    dual_gap: float
    min_eig: float


class ConicSolveError(RuntimeError):
    """Solver did not return a usable status."""


# --- Hermitian coordinate bookkeeping -------------------------------------
#
# hvec(V) = [diag(V); sqrt(2) Re V_ij (i<j, column-major); sqrt(2) Im V_ij]
# is an isometry: <hvec(A), hvec(B)> = Re tr(A^H B) = tr(A B) for Hermitian
# A, B, so linear functionals tr(G V) have coefficient row hvec(G).


def _upper_indices(n):
    iu, ju = np.triu_indices(n, k=1)
    order = np.lexsort((iu, ju))  # column-major over the upper triangle
    return iu[order], ju[order]


def hvec(v):
    v = np.asarray(v, dtype=complex)
    n = v.shape[0]
    iu, ju = _upper_indices(n)
    return np.concatenate(
        [v.diagonal().real, np.sqrt(2.0) * v[iu, ju].real, np.sqrt(2.0) * v[iu, ju].imag]
    )


def hvec_inverse(x, n):
    iu, ju = _upper_indices(n)
    m = n * (n - 1) // 2
    v = np.zeros((n, n), dtype=complex)
    v[np.arange(n), np.arange(n)] = x[:n]
    upper = (x[n : n + m] + 1j * x[n + m :]) / np.sqrt(2.0)
    v[iu, ju] = upper
    v[ju, iu] = upper.conj()
    return v


def _embedding_rows(n):
    """Sparse map from hvec(V) to the svec of the 2N x 2N embedding.

    Clarabel's PSD triangle cone takes the upper triangle column-major with
    sqrt(2)-scaled off-diagonals; each embedded entry is a single Hermitian
    coordinate, so every row has exactly one nonzero.
    """
    iu, ju = _upper_indices(n)
    pos = {}
    for idx in range(len(iu)):
        pos[(iu[idx], ju[idx])] = idx
    dim_e = 2 * n
    rows, cols, vals = [], [], []
    r = 0
    m = n * (n - 1) // 2
    for j in range(dim_e):
        for i in range(j + 1):
            scale = 1.0 if i == j else np.sqrt(2.0)
            bi, bj = i % n, j % n
            if i < n and j < n:
                block = "re"
            elif i >= n and j >= n:
                block = "re"
            else:
                block = "im"  # i < n <= j: entry (-Im V)[bi, bj]
            if block == "re":
                if bi == bj:
                    rows.append(r); cols.append(bi); vals.append(scale)
                else:
                    a, b = min(bi, bj), max(bi, bj)
                    rows.append(r); cols.append(n + pos[(a, b)]); vals.append(scale / np.sqrt(2.0))
            else:
                # upper-right block holds -Im V; Im V is antisymmetric with
                # zero diagonal
                if bi != bj:
                    a, b = min(bi, bj), max(bi, bj)
                    sign = -1.0 if bi < bj else 1.0  # (-Im V)[bi,bj] = -Im V[bi,bj]
                    rows.append(r); cols.append(n + m + pos[(a, b)])
                    vals.append(sign * scale / np.sqrt(2.0))
            r += 1
    nvar = n * n
    return sparse.csc_matrix((vals, (rows, cols)), shape=(r, nvar))


def _matvec_rows(b, n):
    """Sparse map from hvec(V) to [Re(V b); Im(V b)]."""
    iu, ju = _upper_indices(n)
    m = n * (n - 1) // 2
    re_rows = np.zeros((n, n * n))
    im_rows = np.zeros((n, n * n))
    br, bi = b.real, b.imag
    for j in range(n):
        # diagonal contribution: V_jj * b_j
        re_rows[j, j] += br[j]
        im_rows[j, j] += bi[j]
    for idx in range(m):
        i, j = int(iu[idx]), int(ju[idx])
        cre, cim = n + idx, n + m + idx
        s = 1.0 / np.sqrt(2.0)
        # row i of V b gets V_ij b_j = (re + 1j im)(brj + 1j bij)
        re_rows[i, cre] += s * br[j]; re_rows[i, cim] += -s * bi[j]
        im_rows[i, cre] += s * bi[j]; im_rows[i, cim] += s * br[j]
        # row j gets conj(V_ij) b_i
        re_rows[j, cre] += s * br[i]; re_rows[j, cim] += s * bi[i]
        im_rows[j, cre] += s * bi[i]; im_rows[j, cim] += -s * br[i]
    return sparse.csc_matrix(np.vstack([re_rows, im_rows]))


def solve(program: ConicProgram, tol=1e-8, max_iter=200) -> SolveResult:
    """Solve the program with Clarabel's interior-point method.

    Deterministic for identical inputs.  Solver statuses map onto
    SolveStatus; an Optimal result carries the extracted Hermitian V, the
    slack values, and self-computed primal residuals.
    """
    n = program.dim
    nv = n * n
    ns = program.num_slacks
    nq = len(program.quadratic)
    # variable layout: [hvec(V); slacks; aux y vectors for quadratics]
    aux_info = []
    n_aux = 0
    for qc in program.quadratic:
        w, u = np.linalg.eigh(hermitize(qc.factor.r_b))
        keep = w > max(w[-1], 0.0) * 1e-12
        evals, evecs = w[keep], u[:, keep]
        aux_info.append((evals, evecs, n_aux))
        n_aux += 2 * n * len(evals)
    nx = nv + ns + n_aux

    q_obj = np.zeros(nx)
    q_obj[:nv] = hvec(program.objective_v)
    q_obj[nv : nv + ns] = program.objective_s

    blocks_a, blocks_b, cones = [], [], []

    # equality rows tying each auxiliary y_i to V b_i
    eq_rows = []
    eq_rhs = []
    for qi, qc in enumerate(program.quadratic):
        evals, evecs, offset = aux_info[qi]
        for ei in range(len(evals)):
            mv = _matvec_rows(np.ascontiguousarray(evecs[:, ei]), n)
            block = sparse.lil_matrix((2 * n, nx))
            block[:, :nv] = mv
            col0 = nv + ns + offset + 2 * n * ei
            block[:, col0 : col0 + 2 * n] = -sparse.eye(2 * n)
            eq_rows.append(block.tocsc())
            eq_rhs.append(np.zeros(2 * n))
    if eq_rows:
        blocks_a.append(sparse.vstack(eq_rows))
        blocks_b.append(np.concatenate(eq_rhs))
        cones.append(clarabel.ZeroConeT(sum(r.shape[0] for r in eq_rows)))

    # nonnegative slacks
    nn_idx = [i for i, c in enumerate(program.slack_cones) if c == SlackCone.NONNEG]
    nonneg_rows = []
    nonneg_rhs = []
    for i in nn_idx:
        row = sparse.lil_matrix((1, nx))
        row[0, nv + i] = -1.0
        nonneg_rows.append(row.tocsc())
        nonneg_rhs.append(0.0)
    # linear inequality constraints
    for lc in program.linear:
        row = sparse.lil_matrix((1, nx))
        row[0, :nv] = hvec(lc.a)
        for i in range(ns):
            if lc.b[i] != 0.0:
                row[0, nv + i] = lc.b[i]
        nonneg_rows.append(row.tocsc())
        nonneg_rhs.append(lc.c)
    if nonneg_rows:
        blocks_a.append(sparse.vstack(nonneg_rows))
        blocks_b.append(np.array(nonneg_rhs))
        cones.append(clarabel.NonnegativeConeT(len(nonneg_rows)))

    # one second-order cone per quadratic constraint:
    # ||[2 z; 1 - w]|| <= 1 + w with w = c - lin(V, s) and z the stacked
    # sqrt(eig) P y_i vectors, so that ||z||^2 <= w.
    p_mats = [psd_sqrt(qc.factor.r_a) for qc in program.quadratic]
    for qi, qc in enumerate(program.quadratic):
        evals, evecs, offset = aux_info[qi]
        r = len(evals)
        soc_dim = 2 * n * r + 2
        block = sparse.lil_matrix((soc_dim, nx))
        rhs = np.zeros(soc_dim)
        # first row: s0 = 1 + w = 1 + c - lin
        lin_row = np.zeros(nx)
        lin_row[:nv] = hvec(qc.a)
        lin_row[nv : nv + ns] = qc.b
        block[0, :] = lin_row
        rhs[0] = 1.0 + qc.c
        p = p_mats[qi]
        pre, pim = p.real, p.imag
        for ei in range(r):
            col0 = nv + ns + offset + 2 * n * ei
            scale = 2.0 * np.sqrt(evals[ei])
            # z_i = sqrt(eval) * P y_i ; rows carry -2 z (b - Ax = s)
            block[1 + 2 * n * ei : 1 + 2 * n * ei + n, col0 : col0 + n] = -scale * pre
            block[1 + 2 * n * ei : 1 + 2 * n * ei + n, col0 + n : col0 + 2 * n] = scale * pim
            block[1 + 2 * n * ei + n : 1 + 2 * n * (ei + 1), col0 : col0 + n] = -scale * pim
            block[1 + 2 * n * ei + n : 1 + 2 * n * (ei + 1), col0 + n : col0 + 2 * n] = -scale * pre
        block[soc_dim - 1, :] = -lin_row
        rhs[soc_dim - 1] = 1.0 - qc.c
        blocks_a.append(block.tocsc())
        blocks_b.append(rhs)
        cones.append(clarabel.SecondOrderConeT(soc_dim))

    # PSD cone on the embedded matrix
    emb = _embedding_rows(n)
    block = sparse.lil_matrix((emb.shape[0], nx))
    block[:, :nv] = -emb
    blocks_a.append(block.tocsc())
    blocks_b.append(np.zeros(emb.shape[0]))
    cones.append(clarabel.PSDTriangleConeT(2 * n))

    a_mat = sparse.vstack(blocks_a).tocsc()
    b_vec = np.concatenate(blocks_b)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.max_iter = max_iter
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    solver = clarabel.DefaultSolver(
        sparse.csc_matrix((nx, nx)), q_obj, a_mat, b_vec, cones, settings
    )
    sol = solver.solve()

    status_map = {
        "Solved": SolveStatus.OPTIMAL,
        "AlmostSolved": SolveStatus.OPTIMAL,
        "PrimalInfeasible": SolveStatus.INFEASIBLE,
        "AlmostPrimalInfeasible": SolveStatus.INFEASIBLE,
        "DualInfeasible": SolveStatus.NUMERICAL_FAILURE,
        "AlmostDualInfeasible": SolveStatus.NUMERICAL_FAILURE,
        "MaxIterations": SolveStatus.MAX_ITER,
        "InsufficientProgress": SolveStatus.NUMERICAL_FAILURE,
        "NumericalError": SolveStatus.NUMERICAL_FAILURE,
        "MaxTime": SolveStatus.MAX_ITER,
    }
    status = status_map.get(str(sol.status), SolveStatus.NUMERICAL_FAILURE)

    if status != SolveStatus.OPTIMAL:
        return SolveResult(status, float("nan"), None, None, float("inf"), float("inf"), 0.0)

    x = np.asarray(sol.x)
    v = hvec_inverse(x[:nv], n)
    v = hermitize(v)
    slacks = x[nv : nv + ns].copy()

    # self-computed primal residuals on the original constraint set
    resid = 0.0
    for lc in program.linear:
        resid = max(resid, float(np.real(np.trace(lc.a @ v)) + lc.b @ slacks - lc.c))
    for qc in program.quadratic:
        val = qc.factor.value(v) + float(np.real(np.trace(qc.a @ v)) + qc.b @ slacks - qc.c)
        resid = max(resid, val)
    for i in nn_idx:
        resid = max(resid, -slacks[i])
    eig_min = min_eigval(v)
    return SolveResult(
        status=status,
        objective=float(sol.obj_val),
        v=v,
        slacks=slacks,
        primal_residual=resid,
        dual_gap=abs(float(sol.obj_val) - float(sol.obj_val_dual)),
        min_eig=eig_min,
    )
