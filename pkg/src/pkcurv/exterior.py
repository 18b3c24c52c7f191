"""Multi-index combinatorics and the p-th exterior-power derivation.

A symmetric n x n matrix ``a`` induces a linear derivation on the p-th
exterior power of R^n; its matrix W in the canonical wedge basis has
diagonal entries sum_{i in I} a_ii and, on index pairs sharing a
(p-1)-subindex K, entries sign(i,K)*sign(j,K)*a_ij, where sign(i,K) is
the parity of the permutation sorting (i, K).  The eigenvalues of W are
exactly the p-fold sums of the eigenvalues of ``a``; that identity is the
arbiter for the sign convention and is pinned by the test suite.

On top of W this module evaluates the quotient operator

    sigma_k / sigma_l  of the index sums  Lam_I = sum_{i in I} kappa_i

together with its first derivative in the matrix argument and the
divided-difference second-derivative quadratic form.  Derivatives are
taken in the eigenbasis of ``a``; divided differences across eigenvalue
gaps below DEGENERATE_GAP switch to the analytic limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from . import symfun
from .errors import ConeViolationError, DomainError
from .symfun import ConeCheck

__all__ = [
    "MultiIndexTable",
    "CurvaturePoint",
    "build_table",
    "derivation_matrix",
    "index_sums",
    "in_pk_cone",
    "quotient_in_kappa",
    "quotient_and_gradient",
    "hessian_quadratic_form",
    "inverse_convexity_form",
]

# eigenvalue gap below which divided differences use the analytic limit
DEGENERATE_GAP = 1e-9

# combinatorial guard on the number of multi-indices
MAX_TABLE_SIZE = 924


@dataclass(frozen=True, eq=False)
class MultiIndexTable:
    """Ordered p-element multi-indices of {0,...,n-1} with adjacency data.

    ``indices`` is lexicographically sorted; ``incidence[i, I]`` is 1.0
    when i belongs to the I-th multi-index.  Adjacent pairs (sharing a
    (p-1)-subindex) are stored flat as parallel arrays, one orientation
    per unordered pair.  Immutable and shareable across threads.
    """

    n: int
    p: int
    indices: tuple[tuple[int, ...], ...]
    complement: tuple[tuple[int, ...], ...]
    incidence: np.ndarray
    adj_row: np.ndarray
    adj_col: np.ndarray
    adj_i: np.ndarray
    adj_j: np.ndarray
    adj_sign: np.ndarray
    position: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.indices)


def _reorder_sign(i: int, K: tuple[int, ...]) -> int:
    """Parity of the permutation sorting the tuple (i, K), K increasing."""
    below = sum(1 for t in K if t < i)
    return -1 if below % 2 else 1


def build_table(n: int, p: int) -> MultiIndexTable:
    """Enumerate the multi-index set for (n, p) with complements and signs."""
    if not 1 <= p <= n:
        raise DomainError(f"need 1 <= p <= n, got p={p}, n={n}")
    if comb(n, p) > MAX_TABLE_SIZE:
        raise DomainError(
            f"C({n},{p}) = {comb(n, p)} exceeds the table guard {MAX_TABLE_SIZE}"
        )
    indices = tuple(combinations(range(n), p))
    position = {I: a for a, I in enumerate(indices)}
    full = set(range(n))
    complement = tuple(tuple(sorted(full - set(I))) for I in indices)
    N = len(indices)
    incidence = np.zeros((n, N))
    for a, I in enumerate(indices):
        for i in I:
            incidence[i, a] = 1.0
    rows, cols, ii, jj, ss = [], [], [], [], []
    for K in combinations(range(n), p - 1):
        rest = sorted(full - set(K))
        for u in range(len(rest)):
            for v in range(u + 1, len(rest)):
                i, j = rest[u], rest[v]
                I = tuple(sorted(K + (i,)))
                J = tuple(sorted(K + (j,)))
                rows.append(position[I])
                cols.append(position[J])
                ii.append(i)
                jj.append(j)
                ss.append(_reorder_sign(i, K) * _reorder_sign(j, K))
    return MultiIndexTable(
        n=n,
        p=p,
        indices=indices,
        complement=complement,
        incidence=incidence,
        adj_row=np.asarray(rows, dtype=np.intp),
        adj_col=np.asarray(cols, dtype=np.intp),
        adj_i=np.asarray(ii, dtype=np.intp),
        adj_j=np.asarray(jj, dtype=np.intp),
        adj_sign=np.asarray(ss, dtype=float),
        position=position,
    )


def _as_sym(a, n: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (n, n):
        raise DomainError(f"expected a {n}x{n} matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > 1e-8 * scale:
        raise DomainError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def derivation_matrix(a, table: MultiIndexTable) -> np.ndarray:
    """W matrix of the derivation induced by ``a`` in the wedge basis."""
    a = _as_sym(a, table.n)
    N = table.size
    W = np.zeros((N, N))
    W[np.arange(N), np.arange(N)] = table.incidence.T @ np.diag(a)
    vals = table.adj_sign * a[table.adj_i, table.adj_j]
    W[table.adj_row, table.adj_col] = vals
    W[table.adj_col, table.adj_row] = vals
    return W


def index_sums(kappa, table: MultiIndexTable) -> np.ndarray:
    """Map kappa in R^n to its p-fold index sums, ordered as the table.

    Accepts a batch (..., n) and returns (..., N).
    """
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape[-1] != table.n:
        raise DomainError(
            f"kappa length {kappa.shape[-1]} does not match table n={table.n}"
        )
    return kappa @ table.incidence


def in_pk_cone(kappa, k: int, table: MultiIndexTable) -> ConeCheck:
    """Cone test on the index sums: sigma_j(Lam(kappa)) > 0 for j <= k."""
    if not 1 <= k <= table.size:
        raise DomainError(f"cone level k={k} outside [1, {table.size}]")
    return symfun.in_gamma_cone(k, index_sums(kappa, table))


@dataclass
class CurvaturePoint:
    """Quotient operator evaluated at one symmetric matrix."""

    a: np.ndarray
    kappa: np.ndarray
    frame: np.ndarray  # eigenvectors of a, columns
    Lam: np.ndarray
    F: float
    F_grad: np.ndarray  # entrywise derivative w.r.t. a
    cone_ok: bool


def _quotient_pieces(Lam: np.ndarray, k: int, l: int):
    """sigma table, minors and per-index first derivative of sigma_k/sigma_l."""
    e = symfun.sigma_all(Lam, k)
    mt = symfun.sigma_minor_table(Lam, k - 1)
    Mk = mt[:, k - 1]
    Ml = mt[:, l - 1] if l >= 1 else np.zeros_like(Mk)
    F = e[k] / e[l]
    Q = Mk / e[l] - e[k] * Ml / e[l] ** 2
    return e, Mk, Ml, F, Q


def _check_args(k: int, l: int, table: MultiIndexTable):
    if not (0 <= l < k <= table.size):
        raise DomainError(
            f"need 0 <= l < k <= {table.size}, got k={k}, l={l}"
        )


def quotient_in_kappa(kappa, k: int, l: int, table: MultiIndexTable):
    """Value and kappa-gradient of sigma_k/sigma_l of the index sums."""
    _check_args(k, l, table)
    Lam = index_sums(kappa, table)
    ok, j = symfun.in_gamma_cone(k, Lam)
    if not ok:
        raise ConeViolationError(j, value=symfun.sigma(j, Lam))
    _, _, _, F, Q = _quotient_pieces(Lam, k, l)
    return float(F), table.incidence @ Q


def quotient_and_gradient(a, k: int, l: int, table: MultiIndexTable) -> CurvaturePoint:
    """Evaluate F = sigma_k/sigma_l(Lam) at ``a`` with its matrix gradient.

    The gradient is diagonal in the eigenbasis of ``a`` with entries
    sum_{I contains i} of the per-index quotient derivative, rotated back.
    """
    _check_args(k, l, table)
    a = _as_sym(a, table.n)
    kappa, vecs = np.linalg.eigh(a)
    Lam = index_sums(kappa, table)
    ok, j = symfun.in_gamma_cone(k, Lam)
    if not ok:
        raise ConeViolationError(j, value=symfun.sigma(j, Lam))
    _, _, _, F, Q = _quotient_pieces(Lam, k, l)
    fhat = table.incidence @ Q
    F_grad = (vecs * fhat) @ vecs.T
    return CurvaturePoint(
        a=a, kappa=kappa, frame=vecs, Lam=Lam, F=float(F), F_grad=F_grad, cone_ok=True
    )


def _kappa_hessian(Lam: np.ndarray, k: int, l: int, table: MultiIndexTable):
    """Gradient and Hessian of kappa -> sigma_k/sigma_l(Lam(kappa)).

    Index-level second derivatives combine pair minors of sigma_k and
    sigma_l with the quotient product rule; the incidence matrix folds
    them down to kappa space.
    """
    N = table.size
    e, Mk, Ml, F, Q = _quotient_pieces(Lam, k, l)
    S2k = symfun.sigma_pair_minor(Lam, k - 2) if k >= 2 else np.zeros((N, N))
    S2l = symfun.sigma_pair_minor(Lam, l - 2) if l >= 2 else np.zeros((N, N))
    QIJ = (
        S2k / e[l]
        - (np.outer(Mk, Ml) + np.outer(Ml, Mk)) / e[l] ** 2
        - e[k] * S2l / e[l] ** 2
        + 2.0 * e[k] * np.outer(Ml, Ml) / e[l] ** 3
    )
    B = table.incidence
    fhat = B @ Q
    hess = B @ QIJ @ B.T
    return float(F), fhat, hess


def _divided_differences(kappa: np.ndarray, grad: np.ndarray, hess: np.ndarray):
    """(grad_i - grad_j)/(kappa_i - kappa_j) with the degenerate limit."""
    gap = kappa[:, None] - kappa[None, :]
    num = grad[:, None] - grad[None, :]
    limit = hess.diagonal()[:, None] - hess
    small = np.abs(gap) < DEGENERATE_GAP
    dd = np.where(small, limit, num / np.where(small, 1.0, gap))
    np.fill_diagonal(dd, 0.0)
    return dd


def hessian_quadratic_form(a, xi, k: int, l: int, table: MultiIndexTable) -> float:
    """Second derivative of a -> sigma_k/sigma_l(Lam(a)) along symmetric xi.

    Evaluated in the eigenbasis: the diagonal block is the kappa-Hessian,
    the off-diagonal block the divided differences of the gradient.
    """
    _check_args(k, l, table)
    a = _as_sym(a, table.n)
    xi = _as_sym(xi, table.n)
    kappa, vecs = np.linalg.eigh(a)
    Lam = index_sums(kappa, table)
    ok, j = symfun.in_gamma_cone(k, Lam)
    if not ok:
        raise ConeViolationError(j, value=symfun.sigma(j, Lam))
    _, fhat, hess = _kappa_hessian(Lam, k, l, table)
    xit = vecs.T @ xi @ vecs
    d = np.diag(xit)
    dd = _divided_differences(kappa, fhat, hess)
    return float(d @ hess @ d + np.sum(dd * xit**2))


def inverse_convexity_form(a, xi, k: int, l: int, table: MultiIndexTable) -> float:
    """Quadratic form of G = -(sigma_k/sigma_l(Lam))^(-1/(k-l)) plus the
    inverse-matrix coupling 2*dG/da_ir * (a^{-1})_js, along symmetric xi.

    Nonnegative for positive definite ``a``; requires kappa > 0.
    """
    _check_args(k, l, table)
    a = _as_sym(a, table.n)
    xi = _as_sym(xi, table.n)
    kappa, vecs = np.linalg.eigh(a)
    if kappa[0] <= 0.0:
        raise DomainError("inverse convexity form needs a positive definite matrix")
    Lam = index_sums(kappa, table)
    ok, j = symfun.in_gamma_cone(k, Lam)
    if not ok:
        raise ConeViolationError(j, value=symfun.sigma(j, Lam))
    F, fhat, hess = _kappa_hessian(Lam, k, l, table)
    beta = 1.0 / (k - l)
    g1 = beta * F ** (-beta - 1.0) * fhat
    g2 = (
        beta * (-beta - 1.0) * F ** (-beta - 2.0) * np.outer(fhat, fhat)
        + beta * F ** (-beta - 1.0) * hess
    )
    xit = vecs.T @ xi @ vecs
    d = np.diag(xit)
    dd = _divided_differences(kappa, g1, g2)
    coupling = 2.0 * np.sum((g1[:, None] / kappa[None, :]) * xit**2)
    return float(d @ g2 @ d + np.sum(dd * xit**2) + coupling)
