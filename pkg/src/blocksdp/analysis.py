"""Diagnostics for the block-coordinate solver: the fast gradient-norm
formula, iteration-count bounds for both sampling schemes, lift-level
feasibility/objective checks, a dual-certificate test for global optimality,
and Monte Carlo oracles for the random-matrix inequalities the convergence
analysis relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from io import StringIO

import numpy as np

from .blockmat import BlockSparseSym
from .stiefel import (FactorPoint, compute_gcache, evaluate_cost,
                      feasibility_residual, random_stiefel, sym_coupling)


def grad_norm_sq_fast(point: FactorPoint) -> float:
    """Squared Frobenius norm of the Riemannian gradient from cached G_i.

    Evaluates 4 * sum_i (||G_i||_F^2 - ||A_i||_F^2) with
    A_i = 0.5 * (Y_i^T G_i + G_i^T Y_i).  Tiny negative values from roundoff
    are clamped to zero.
    """
    total = 0.0
    scale = 0.0
    for Y, G in zip(point.blocks, point.gcache):
        A = sym_coupling(Y, G)
        gsq = float(np.sum(G * G))
        total += gsq - float(np.sum(A * A))
        scale += gsq
    value = 4.0 * total
    if value < 0.0 and value >= -1e-12 * (1.0 + 4.0 * scale):
        value = 0.0
    return value


@dataclass
class BoundInputs:
    """Inputs to the iteration-count bounds.

    fstar may be any valid lower bound on the rank-restricted optimum; a
    looser bound only enlarges the returned K.
    """

    d: int
    n: int
    f0: float
    fstar: float
    eps: float
    c1: float | None = None
    c2: float | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"target eps must be positive, got {self.eps}")
        if self.f0 < self.fstar:
            raise ValueError(f"initial cost {self.f0} below lower bound {self.fstar}")


def iteration_bound_uniform(b: BoundInputs) -> int:
    """Iterations sufficient for uniform sampling: ceil(2 d n C1 (F0 - F*) / eps)."""
    if b.c1 is None:
        raise ValueError("uniform bound requires c1")
    gap = b.f0 - b.fstar
    if gap == 0.0:
        return 0
    return math.ceil(2.0 * b.d * b.n * b.c1 * gap / b.eps)


def iteration_bound_importance(b: BoundInputs) -> int:
    """Iterations sufficient for importance sampling: ceil(2 d C2 (F0 - F*) / eps)."""
    if b.c2 is None:
        raise ValueError("importance bound requires c2")
    gap = b.f0 - b.fstar
    if gap == 0.0:
        return 0
    return math.ceil(2.0 * b.d * b.c2 * gap / b.eps)


def sdp_lift_check(point: FactorPoint, Q: BlockSparseSym):
    """Objective and constraint residual of the implicit lift X = Y^T Y.

    Returns (tr(Q X), max_i max-abs(Y_i^T Y_i - I)).  The lift is positive
    semidefinite by construction, so only the diagonal blocks are checked.
    """
    objective = evaluate_cost(point.blocks, Q)
    residual = max(feasibility_residual(B) for B in point.blocks)
    return objective, residual


@dataclass
class CertificateReport:
    """Outcome of the dual-certificate check at a candidate solution."""

    lambda_min: float
    stationarity_residual: float
    grad_norm_sq: float
    verdict: str  # certified-global | first-order-only | not-stationary
    cert_tol: float
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "lambda_min": self.lambda_min,
            "stationarity_residual": self.stationarity_residual,
            "grad_norm_sq": self.grad_norm_sq,
            "verdict": self.verdict,
            "cert_tol": self.cert_tol,
            "note": self.note,
        }


def build_certificate_matrix(point: FactorPoint, Q: BlockSparseSym) -> np.ndarray:
    """Dense dn x dn certificate S = Q - BlockDiag(A_1, ..., A_n).

    The couplings are recomputed from Q (never from the incremental cache);
    A_i is symmetric by construction.
    """
    fresh = compute_gcache(point.blocks, Q)
    S = Q.to_dense()
    d = Q.d
    for i, (Y, G) in enumerate(zip(point.blocks, fresh)):
        S[i * d:(i + 1) * d, i * d:(i + 1) * d] -= sym_coupling(Y, G)
    return S


def _smallest_eigenvalue(S: np.ndarray, dense_cutoff: int):
    """Algebraically smallest eigenvalue; returns (value, converged)."""
    if S.shape[0] <= dense_cutoff:
        return float(np.linalg.eigvalsh(S)[0]), True
    from scipy.sparse import csr_matrix
    from scipy.sparse.linalg import ArpackNoConvergence, eigsh
    try:
        vals = eigsh(csr_matrix(S), k=1, which="SA", return_eigenvectors=False)
        return float(vals[0]), True
    except ArpackNoConvergence as exc:
        vals = exc.eigenvalues
        if len(vals):
            return float(vals[0]), False
        return float("nan"), False


def certify_global(point: FactorPoint, Q: BlockSparseSym,
                   cert_tol: float | None = None, dense_cutoff: int = 2000) -> CertificateReport:
    """Check global optimality of a (near-)critical point via the dual matrix.

    Builds S = Q - BlockDiag(A_i) from freshly recomputed couplings.  At an
    exact critical point S Y^T = 0; if additionally S is positive
    semidefinite, Y is a global minimizer of the rank-restricted problem and
    the lift Y^T Y solves the SDP, so the verdict is certified-global.  A
    stationarity residual above cert_tol * (1 + ||Q||_F) yields
    not-stationary; a decisively negative eigenvalue yields first-order-only.
    Eigenvalue-solver failures downgrade the verdict, never certify.
    """
    if cert_tol is None:
        cert_tol = 1e-8 * (1.0 + Q.frobenius_norm())
    fresh = compute_gcache(point.blocks, Q)
    gradsq = 0.0
    S = Q.to_dense()
    d = Q.d
    for i, (Y, G) in enumerate(zip(point.blocks, fresh)):
        A = sym_coupling(Y, G)
        S[i * d:(i + 1) * d, i * d:(i + 1) * d] -= A
        gradsq += 4.0 * (float(np.sum(G * G)) - float(np.sum(A * A)))
    gradsq = max(gradsq, 0.0)
    residual = float(np.linalg.norm(S @ point.stacked().T))
    lam, converged = _smallest_eigenvalue(S, dense_cutoff)
    note = None
    if residual > cert_tol * (1.0 + Q.frobenius_norm()):
        verdict = "not-stationary"
    elif converged and lam >= -cert_tol:
        verdict = "certified-global"
    else:
        verdict = "first-order-only"
        if not converged:
            note = "eigenvalue solver did not converge; certificate downgraded"
    return CertificateReport(lam, residual, gradsq, verdict, cert_tol, note)


class LemmaViolation(AssertionError):
    """A random-matrix inequality failed; message embeds the witnesses."""


@dataclass
class LemmaOracleSummary:
    trials: int
    seed: int
    checks: dict = field(default_factory=dict)

    @property
    def total_checks(self) -> int:
        return sum(self.checks.values())


def _serialize_matrix(name: str, M: np.ndarray) -> str:
    buf = StringIO()
    buf.write(f"{name} {M.shape[0]} {M.shape[1]}\n")
    for row in np.atleast_2d(M):
        buf.write(" ".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def lemma_oracles(seed: int, trials: int, slack: float = 1e-9) -> LemmaOracleSummary:
    """Monte Carlo check of the spectral inequalities the rate analysis rests on.

    Per trial: a random square M for the eigenvalue/singular-value sums
    (p in {1, 2}) and their pairwise-product variant, plus random G and a
    random orthonormal-column Y for the compression and norm-gap bounds.
    Every inequality is asserted with slack * (1 + |RHS|); a violation
    raises LemmaViolation with the offending matrices serialized row-major.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    counts = {"eig_sv_p1": 0, "eig_sv_p2": 0, "pairwise": 0, "compression": 0, "norm_gap": 0}

    def fail(name, lhs, rhs, **mats):
        dump = "\n".join(_serialize_matrix(k, v) for k, v in mats.items())
        raise LemmaViolation(f"{name}: lhs={lhs!r} > rhs={rhs!r} + slack\n{dump}")

    for _ in range(trials):
        m = int(rng.integers(2, 7))
        M = rng.standard_normal((m, m))
        lam = np.abs(np.linalg.eigvals(M))
        sig = np.linalg.svd(M, compute_uv=False)
        for p, key in ((1, "eig_sv_p1"), (2, "eig_sv_p2")):
            lhs, rhs = float(np.sum(lam ** p)), float(np.sum(sig ** p))
            if lhs > rhs + slack * (1.0 + abs(rhs)):
                fail(f"sum |lambda|^{p} <= sum sigma^{p}", lhs, rhs, M=M)
            counts[key] += 1
        lhs = 0.5 * (float(np.sum(lam)) ** 2 - float(np.sum(lam ** 2)))
        rhs = 0.5 * (float(np.sum(sig)) ** 2 - float(np.sum(sig ** 2)))
        if lhs > rhs + slack * (1.0 + abs(rhs)):
            fail("sum_{i<j} |l_i l_j| <= sum_{i<j} s_i s_j", lhs, rhs, M=M)
        counts["pairwise"] += 1

        d = int(rng.integers(1, 4))
        r = int(rng.integers(d, 7))
        G = rng.standard_normal((r, d))
        Y = random_stiefel(r, d, rng)
        sG = np.linalg.svd(G, compute_uv=False)
        sYG = np.linalg.svd(Y.T @ G, compute_uv=False)
        if np.any(sYG > sG + slack * (1.0 + np.abs(sG))):
            fail("sigma_i(Y^T G) <= sigma_i(G)", sYG.tolist(), sG.tolist(), G=G, Y=Y)
        counts["compression"] += 1
        A = sym_coupling(Y, G)
        lhs = float(np.trace(A)) ** 2 - float(np.sum(A * A))
        rhs = float(sG.sum()) ** 2 - float(np.sum(sG ** 2))
        if lhs > rhs + slack * (1.0 + abs(rhs)):
            fail("tr(A)^2 - ||A||_F^2 <= ||G||_*^2 - ||G||_F^2", lhs, rhs, G=G, Y=Y)
        counts["norm_gap"] += 1

    return LemmaOracleSummary(trials=trials, seed=seed, checks=counts)


def nuclear_lower_bound(Q: BlockSparseSym) -> float:
    """-C2(Q): a valid lower bound on the cost over the product manifold."""
    return -Q.c2()


def dual_lower_bound(point: FactorPoint, Q: BlockSparseSym,
                     dense_cutoff: int = 2000):
    """Rigorous SDP lower bound from any feasible point.

    For every feasible X of the lifted problem, tr(Q X) = tr(S X) + F(Y)
    with S = Q - BlockDiag(A_i), and tr(S X) >= dn * min(lambda_min(S), 0)
    since tr(X) = dn.  Returns (bound, lambda_min); falls back to -C2(Q)
    if the eigenvalue solve fails.
    """
    S = build_certificate_matrix(point, Q)
    lam, converged = _smallest_eigenvalue(S, dense_cutoff)
    if not converged and not np.isfinite(lam):
        return nuclear_lower_bound(Q), float("nan")
    cost = evaluate_cost(point.blocks, Q)
    return cost + Q.d * Q.n * min(lam, 0.0), lam


__all__ = [
    "grad_norm_sq_fast",
    "BoundInputs",
    "iteration_bound_uniform",
    "iteration_bound_importance",
    "sdp_lift_check",
    "CertificateReport",
    "build_certificate_matrix",
    "certify_global",
    "LemmaViolation",
    "LemmaOracleSummary",
    "lemma_oracles",
    "nuclear_lower_bound",
    "dual_lower_bound",
]
