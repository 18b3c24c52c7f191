"""Elementary symmetric functions on R^m and their Garding-cone algebra.

sigma_k is evaluated through the coefficient recurrence for the product
prod_i (1 + t*lam_i), which costs O(m*k) and avoids the cancellation of
naive subset enumeration (the enumeration oracle lives in the tests).
Minors (sigma with entries deleted) come from subtraction-free
prefix/suffix polynomial products; the batched helpers used in hot loops
trade that for a short downward recurrence.

All functions are pure and thread-safe.  sigma_0 is 1 everywhere, and
sigma_j of a vector shorter than j is 0 (empty sum).
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ConeViolationError, DomainError

__all__ = [
    "ConeCheck",
    "sigma",
    "sigma_all",
    "sigma_minor",
    "sigma_minors_all",
    "sigma_minor_table",
    "sigma_pair_minor",
    "sigma_gradient",
    "in_gamma_cone",
    "quotient_root",
]


class ConeCheck(NamedTuple):
    ok: bool
    failed_level: int | None


def _as_vector(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise DomainError("eigenvalue vector must be one-dimensional and nonempty")
    if not np.all(np.isfinite(lam)):
        raise DomainError("eigenvalue vector must be finite")
    return lam


def sigma_all(lam, kmax: int | None = None) -> np.ndarray:
    """Return [sigma_0, ..., sigma_kmax] of lam in one pass."""
    lam = _as_vector(lam)
    m = lam.size
    if kmax is None:
        kmax = m
    if not 0 <= kmax <= m:
        raise DomainError(f"kmax must lie in [0, {m}], got {kmax}")
    e = np.zeros(kmax + 1)
    e[0] = 1.0
    for i in range(m):
        top = min(i + 1, kmax)
        if top >= 1:
            e[1 : top + 1] += lam[i] * e[0:top].copy()
    return e


def sigma(k: int, lam) -> float:
    """k-th elementary symmetric function; sigma_0 = 1, sigma_m = prod."""
    lam = _as_vector(lam)
    if not 0 <= k <= lam.size:
        raise DomainError(f"sigma level k={k} outside [0, {lam.size}]")
    return float(sigma_all(lam, k)[k])


def sigma_minor(k: int, lam, excluded) -> float:
    """sigma_k of lam with the ``excluded`` indices removed (0-based).

    Returns 0.0 when k exceeds the number of remaining entries, which is
    what the derivative recurrences expect.
    """
    lam = _as_vector(lam)
    idx = list(excluded)
    if len(set(idx)) != len(idx):
        raise DomainError("excluded indices must be distinct")
    for i in idx:
        if not 0 <= i < lam.size:
            raise DomainError(f"excluded index {i} out of range")
    rest = np.delete(lam, idx)
    if k < 0:
        return 0.0
    if k == 0:
        return 1.0
    if k > rest.size:
        return 0.0
    return float(sigma_all(rest, k)[k])


def sigma_minor_table(lam, jmax: int) -> np.ndarray:
    """Table T[i, j] = sigma_j(lam | i) for all i and 0 <= j <= jmax.

    Built from prefix/suffix polynomial products (no subtractions).
    """
    lam = _as_vector(lam)
    m = lam.size
    jmax = max(jmax, 0)
    jm = min(jmax, m - 1)
    pref = np.zeros((m + 1, jm + 1))
    pref[0, 0] = 1.0
    for i in range(m):
        pref[i + 1] = pref[i]
        if jm >= 1:
            pref[i + 1, 1:] += lam[i] * pref[i, :-1]
    suff = np.zeros((m + 1, jm + 1))
    suff[m, 0] = 1.0
    for i in range(m - 1, -1, -1):
        suff[i] = suff[i + 1]
        if jm >= 1:
            suff[i, 1:] += lam[i] * suff[i + 1, :-1]
    out = np.zeros((m, jmax + 1))
    for j in range(jm + 1):
        # convolution of prefix (before i) and suffix (after i) coefficients
        acc = np.zeros(m)
        for t in range(j + 1):
            acc += pref[:m, t] * suff[1:, j - t]
        out[:, j] = acc
    return out


def sigma_minors_all(lam, j: int) -> np.ndarray:
    """Vector of sigma_j(lam | i) over all i."""
    lam = _as_vector(lam)
    if j < 0:
        return np.zeros(lam.size)
    if j == 0:
        return np.ones(lam.size)
    if j > lam.size - 1:
        return np.zeros(lam.size)
    return sigma_minor_table(lam, j)[:, j]


def sigma_pair_minor(lam, j: int) -> np.ndarray:
    """Matrix S[a, b] = sigma_j(lam | a, b) for a != b (diagonal is 0)."""
    lam = _as_vector(lam)
    m = lam.size
    out = np.zeros((m, m))
    if j < 0 or j > max(m - 2, 0):
        return out
    if j == 0:
        out[:] = 1.0
        np.fill_diagonal(out, 0.0)
        return out
    mt = sigma_minor_table(lam, j)
    s = np.ones((m, m))
    for t in range(1, j + 1):
        s = mt[:, t][:, None] - lam[None, :] * s
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 0.0)
    return s


def sigma_gradient(k: int, lam) -> np.ndarray:
    """Gradient of sigma_k: component i is sigma_{k-1}(lam | i)."""
    lam = _as_vector(lam)
    if not 1 <= k <= lam.size:
        raise DomainError(f"gradient level k={k} outside [1, {lam.size}]")
    return sigma_minors_all(lam, k - 1)


def in_gamma_cone(k: int, lam) -> ConeCheck:
    """Strict Garding-cone test: sigma_j > 0 for 1 <= j <= k.

    Returns (ok, first failing j).  The cone is open: zero values fail.
    """
    lam = _as_vector(lam)
    if not 1 <= k <= lam.size:
        raise DomainError(f"cone level k={k} outside [1, {lam.size}]")
    e = sigma_all(lam, k)
    for j in range(1, k + 1):
        if not e[j] > 0.0:
            return ConeCheck(False, j)
    return ConeCheck(True, None)


def quotient_root(k: int, l: int, lam) -> float:
    """(sigma_k / sigma_l)^(1/(k-l)), defined on the Gamma_k cone."""
    lam = _as_vector(lam)
    if not (0 <= l < k <= lam.size):
        raise DomainError(f"need 0 <= l < k <= {lam.size}, got k={k}, l={l}")
    ok, j = in_gamma_cone(k, lam)
    if not ok:
        raise ConeViolationError(j, value=sigma(j, lam))
    e = sigma_all(lam, k)
    return float((e[k] / e[l]) ** (1.0 / (k - l)))


# -- batched helpers (hot paths; shapes (B, m)) ------------------------------


def sigma_all_batch(lams: np.ndarray, kmax: int) -> np.ndarray:
    """Rows of [sigma_0..sigma_kmax] for a batch of vectors, shape (B, kmax+1)."""
    lams = np.asarray(lams, dtype=float)
    B, m = lams.shape
    kmax = min(kmax, m)
    e = np.zeros((B, kmax + 1))
    e[:, 0] = 1.0
    for i in range(m):
        top = min(i + 1, kmax)
        if top >= 1:
            e[:, 1 : top + 1] += lams[:, i : i + 1] * e[:, 0:top].copy()
    return e


def sigma_minors_all_batch(lams: np.ndarray, j: int, sig: np.ndarray | None = None) -> np.ndarray:
    """sigma_j(lam | i) for every batch row and index i, shape (B, m).

    Uses the downward recurrence sigma_t(|i) = sigma_t - lam_i*sigma_{t-1}(|i);
    adequate for cone-interior batches (tests cross-check the stable path).
    """
    lams = np.asarray(lams, dtype=float)
    B, m = lams.shape
    if j < 0 or j > m - 1:
        return np.zeros((B, m))
    if sig is None or sig.shape[1] < j + 1:
        sig = sigma_all_batch(lams, j)
    s = np.ones((B, m))
    for t in range(1, j + 1):
        s = sig[:, t : t + 1] - lams * s
    return s
