"""Lowest eigenpairs of the generalized symmetric problem B u = sigma M u."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FactorizationFailed, NoConvergence, TooLarge

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_SEED = 20240601
MAX_RESTARTS = 500
DENSE_LIMIT = 2000
MAX_DEFLATIONS = 8


@dataclass(frozen=True)
class EigenPair:
    sigma: float
    vector: np.ndarray
    residual: float

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "residual": self.residual}

    def dump_vector(self, stream: TextIO) -> None:
        for v in self.vector:
            stream.write(f"{float(v)!r}\n")


def _residual(B, M, sigma: float, u: np.ndarray) -> float:
    return float(np.linalg.norm(B @ u - sigma * (M @ u)) / np.sqrt(u @ (M @ u)))


def _factorize(A: sp.spmatrix):
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # exactly singular
        raise FactorizationFailed(str(exc)) from exc
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise FactorizationFailed("singular factor")
    return lu


def coercivity_shift(B, M) -> float:
    """A shift lying strictly below the whole spectrum of (B, M).

    Any eigenvalue satisfies ``|sigma| <= ||B||_inf / lambda_min(M)``, and for
    P1 mass matrices ``lambda_min(M)`` is at least a quarter of the smallest
    lumped (row-sum) mass.
    """
    b_norm = float(abs(B).sum(axis=1).max())
    lumped = float(np.asarray(M.sum(axis=1)).min())
    return -(4.0 * b_norm / lumped + 1.0)


def _arpack(B, M, lu, k, tol, shift, v0, ncv, deflate=None):
    """Eigenpairs nearest ``shift``; with ``deflate``, in the M-complement of its columns."""
    solve = lu.solve
    if deflate is not None:
        V = deflate
        MV = M @ V

        def solve(b, _solve=lu.solve):
            # P (B - sM)^{-1} P^T with the M-orthogonal projector P = I - V V^T M
            x = _solve(b - MV @ (V.T @ b))
            return x - V @ (MV.T @ x)

        v0 = v0 - V @ (MV.T @ v0)
    op = spla.LinearOperator(B.shape, matvec=solve, dtype=float)
    try:
        return spla.eigsh(
            B, k=k, M=M, sigma=shift, which="LM", OPinv=op, v0=v0,
            tol=0.0 if tol <= 1e-12 else tol * 1e-2, maxiter=MAX_RESTARTS * B.shape[0], ncv=ncv,
        )
    except spla.ArpackNoConvergence as exc:
        raise NoConvergence(
            f"ARPACK converged {len(exc.eigenvalues)} of {k} pairs (shift {shift})"
        ) from exc


def _rayleigh_ritz(B, M, vecs):
    """Re-solve on the computed subspace: exact M-orthonormality, sorted."""
    bb = vecs.T @ (B @ vecs)
    mm = vecs.T @ (M @ vecs)
    vals, y = la.eigh(0.5 * (bb + bb.T), 0.5 * (mm + mm.T))
    return vals, vecs @ y


def _shift_invert(B, M, k, tol, shift, seed, ncv):
    """The ``k`` eigenpairs nearest ``shift``, with no copy of a repeated eigenvalue lost.

    A single-vector Krylov space sees one direction per eigenspace, so
    copies of a repeated eigenvalue can be missed.  After each solve the
    problem is re-solved in the M-complement of the pairs found; anything
    turning up below the current ``sigma_k`` is merged in, until the
    complement has nothing left below it.
    """
    n = B.shape[0]
    rng = np.random.default_rng(seed)
    lu = _factorize(B - shift * M)
    vals, vecs = _arpack(B, M, lu, k, tol, shift, rng.standard_normal(n), ncv)
    vals, vecs = _rayleigh_ritz(B, M, vecs)
    k_def = min(k, n - k - 1)
    for _ in range(MAX_DEFLATIONS):
        if k_def < 1 or vals.min() < shift:
            break
        w_vals, w_vecs = _arpack(
            B, M, lu, k_def, tol, shift, rng.standard_normal(n), min(ncv, n - k - 1), deflate=vecs
        )
        slack = tol * max(1.0, abs(vals[-1]))
        if w_vals.min() >= vals[-1] - slack:
            break
        log.info("recovered %d missed eigenpair(s) below %g", int((w_vals < vals[-1] - slack).sum()), vals[-1])
        vals, vecs = _rayleigh_ritz(B, M, np.hstack([vecs, w_vecs]))
        vals, vecs = vals[:k], vecs[:, :k]
    return vals, vecs


def smallest_eigenpairs(
    B,
    M,
    k: int,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
    shift: float = 0.0,
) -> list[EigenPair]:
    """The ``k`` smallest eigenpairs by shift-invert Lanczos (ARPACK).

    The shifted operator ``B - shift*M`` is LU-factorized.  If that fails,
    or if a negative eigenvalue shows up (so ``B`` is not coercive and the
    pairs nearest ``shift`` need not be the lowest), the solve is repeated
    with :func:`coercivity_shift`, which lies below the whole spectrum,
    and then once more with a shift just below the lowest eigenvalue found.
    Repeated eigenvalues are returned with their full multiplicity (see
    :func:`_shift_invert`).  Eigenvectors are M-orthonormal and returned in
    ascending order.
    """
    B = sp.csr_matrix(B)
    M = sp.csr_matrix(M)
    n = B.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    if n <= max(2 * k + 2, 8):
        # too small for Lanczos; the dense problem is the exact answer
        vals, vecs = la.eigh(B.toarray(), M.toarray())
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        ncv = min(n - 1, max(2 * k + 1, 20))
        try:
            vals, vecs = _shift_invert(B, M, k, tol, shift, seed, ncv)
            if vals.min() < shift:
                raise FactorizationFailed("eigenvalues below the shift: operator is not coercive")
        except FactorizationFailed as exc:
            fallback = coercivity_shift(B, M)
            log.warning("shift %g failed (%s); retrying with shift %g", shift, exc, fallback)
            ncv = min(n - 1, max(4 * k, 40))
            vals, _ = _shift_invert(B, M, k, tol, fallback, seed, ncv)
            # A far shift squeezes the wanted eigenvalues together; re-solve
            # just below the lowest eigenvalue, which is found reliably.
            lo = float(vals.min())
            near = lo - max(1.0, 0.5 * (float(vals.max()) - lo))
            vals, vecs = _shift_invert(B, M, k, tol, near, seed, ncv)
            if vals.min() < near:
                raise FactorizationFailed("eigenvalues below the refined shift")

    pairs = []
    for j in range(k):
        u = vecs[:, j]
        # fix the sign so that output is reproducible
        pivot = int(np.argmax(np.abs(u)))
        if u[pivot] < 0:
            u = -u
        r = _residual(B, M, float(vals[j]), u)
        pairs.append(EigenPair(float(vals[j]), u, r))
    worst = max(p.residual for p in pairs)
    if worst > tol * max(1.0, abs(pairs[-1].sigma)):
        raise NoConvergence(f"residual {worst:.3e} exceeds tolerance {tol:.1e}")
    return pairs


def dense_oracle(B, M) -> tuple[np.ndarray, np.ndarray]:
    """Full generalized eigendecomposition by dense LAPACK reduction."""
    n = B.shape[0]
    if n > DENSE_LIMIT:
        raise TooLarge(f"dimension {n} exceeds dense limit {DENSE_LIMIT}")
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    return la.eigh(Bd, Md)


def m_orthogonalize(w: np.ndarray, basis: np.ndarray, M) -> np.ndarray:
    """Remove the M-projection of ``w`` onto the M-orthonormal columns of ``basis``."""
    for _ in range(2):
        w = w - basis @ (basis.T @ (M @ w))
    return w


def minmax_witness(
    B, M, pairs: Sequence[EigenPair], trials: int = 500, seed: int = 0, k: int | None = None
) -> float:
    """max over random w orthogonal to u_1..u_{k-1} of sigma_k - R(w).

    A positive value above round-off falsifies the min-max characterisation
    of ``sigma_k``.  ``k`` defaults to ``len(pairs)``.
    """
    k = len(pairs) if k is None else k
    sigma_k = pairs[k - 1].sigma
    basis = np.column_stack([p.vector for p in pairs[: k - 1]]) if k > 1 else np.zeros((B.shape[0], 0))
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(trials):
        w = m_orthogonalize(rng.standard_normal(B.shape[0]), basis, M)
        r = float(w @ (B @ w)) / float(w @ (M @ w))
        worst = max(worst, sigma_k - r)
    return worst


def eigenpairs_to_json(pairs: Sequence[EigenPair]) -> str:
    return json.dumps([p.to_dict() for p in pairs], indent=2)
