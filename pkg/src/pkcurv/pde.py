"""Residual and linearization of the curvature equation in the log-radial gauge.

With u = -log(rho) and the shape matrix a(u) of ``geometry``, the equation
reads, node by node,

    sigma_k/sigma_l(Lam(a)) = f(x) * exp(cu) * (1 + |du|^2)^((k-l-q)/2),
    c = -b - q - k + l + epsilon,

where epsilon >= 0 is the regularization exponent of the scale-invariant
(homogeneous) case.  ``residual`` evaluates the difference of the two
sides, ``linearize`` its Frechet derivative as a sparse operator, and
``audit_bounds`` the closed-form radial bounds that the continuum theory
guarantees, as runtime pass/fail checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from math import comb
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import exterior, symfun
from .errors import ConeViolationError, DomainError
from .geometry import RadialField, SphereGrid, shape_pieces

__all__ = [
    "RhsFunction",
    "ConstantRhs",
    "HarmonicRhs",
    "ExpHarmonicRhs",
    "TableRhs",
    "BlendedRhs",
    "rhs_from_json",
    "ProblemSpec",
    "Residual",
    "PDEState",
    "Linearization",
    "BoundReport",
    "evaluate_state",
    "residual",
    "linearize",
    "audit_bounds",
]


# -- prescribed-data catalog ---------------------------------------------------


class RhsFunction:
    """Positive data f on the unit sphere, evaluated at grid nodes."""

    kind = "abstract"

    def values(self, grid: SphereGrid) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def positivity_margin(self, grid: SphereGrid) -> float:
        return float(np.min(self.values(grid)))


@dataclass
class ConstantRhs(RhsFunction):
    c: float = 1.0
    kind = "constant"

    def values(self, grid):
        if self.c <= 0:
            raise DomainError("constant data must be positive")
        return np.full(grid.size, float(self.c))

    def to_json(self):
        return {"type": "constant", "c": self.c}


@dataclass
class HarmonicRhs(RhsFunction):
    """c0 + sum_A coeffs[A] * x_A, clipped from below at ``floor``."""

    c0: float
    coeffs: tuple
    floor: float = 0.05
    kind = "harmonic"

    def values(self, grid):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.size != grid.n + 1:
            raise DomainError(
                f"harmonic data needs {grid.n + 1} coefficients, got {coeffs.size}"
            )
        if self.floor <= 0:
            raise DomainError("floor must be positive")
        vals = self.c0 + grid.unit_points() @ coeffs
        return np.maximum(vals, self.floor)

    def to_json(self):
        return {
            "type": "harmonic",
            "c0": self.c0,
            "coeffs": list(self.coeffs),
            "floor": self.floor,
        }


@dataclass
class ExpHarmonicRhs(RhsFunction):
    """exp(sum_A coeffs[A] * x_A); positive by construction."""

    coeffs: tuple
    kind = "exp-harmonic"

    def values(self, grid):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.size != grid.n + 1:
            raise DomainError(
                f"exp-harmonic data needs {grid.n + 1} coefficients, got {coeffs.size}"
            )
        return np.exp(grid.unit_points() @ coeffs)

    def to_json(self):
        return {"type": "exp-harmonic", "coeffs": list(self.coeffs)}


@dataclass
class TableRhs(RhsFunction):
    """Per-node tabulated data, one value per grid node in grid order."""

    table: np.ndarray = None
    path: Optional[str] = None
    kind = "table"

    def values(self, grid):
        vals = self.table
        if vals is None:
            if self.path is None:
                raise DomainError("table data needs values or a csv path")
            vals = np.loadtxt(self.path, delimiter=",", ndmin=1)
        vals = np.asarray(vals, dtype=float).ravel()
        if vals.size != grid.size:
            raise DomainError(
                f"table has {vals.size} values, grid expects {grid.size}"
            )
        if np.min(vals) <= 0:
            raise DomainError("table data must be positive at every node")
        return vals

    def to_json(self):
        if self.path is not None:
            return {"type": "table", "path": self.path}
        return {"type": "table", "values": list(map(float, self.table))}


@dataclass
class BlendedRhs(RhsFunction):
    """Continuation blend [t f^(1/(k-l)) + (1-t) K0^(1/(k-l))]^(k-l).

    K0 is the constant that makes rho = 1 the exact solution at t = 0.
    """

    base: RhsFunction
    t: float
    k: int
    l: int
    K0: float
    kind = "blended"

    def values(self, grid):
        r = 1.0 / (self.k - self.l)
        fv = self.base.values(grid)
        return (self.t * fv**r + (1.0 - self.t) * self.K0**r) ** (self.k - self.l)

    def to_json(self):
        return {
            "type": "blended",
            "t": self.t,
            "base": self.base.to_json(),
            "K0": self.K0,
        }


_RHS_TYPES = {
    "constant": lambda d: ConstantRhs(c=float(d["c"])),
    "harmonic": lambda d: HarmonicRhs(
        c0=float(d.get("c0", 0.0)),
        coeffs=tuple(d["coeffs"]),
        floor=float(d.get("floor", 0.05)),
    ),
    "exp-harmonic": lambda d: ExpHarmonicRhs(coeffs=tuple(d["coeffs"])),
    "table": lambda d: TableRhs(
        table=np.asarray(d["values"], dtype=float) if "values" in d else None,
        path=d.get("path"),
    ),
}


def rhs_from_json(obj: dict) -> RhsFunction:
    try:
        kind = obj["type"]
    except (TypeError, KeyError):
        raise DomainError("data function needs a 'type' field") from None
    if kind not in _RHS_TYPES:
        raise DomainError(
            f"unknown data type {kind!r}; expected one of {sorted(_RHS_TYPES)}"
        )
    return _RHS_TYPES[kind](obj)


# -- problem description --------------------------------------------------------


HOMOGENEOUS_TOL = 1e-12


@dataclass
class ProblemSpec:
    """One instance of the curvature equation and its admissibility data."""

    n: int
    p: int
    k: int
    l: int
    b: float
    q: float
    f: RhsFunction
    epsilon: float = 0.0
    notes: list = dc_field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.p <= self.n:
            raise DomainError(f"need 1 <= p <= n, got p={self.p}, n={self.n}")
        N = comb(self.n, self.p)
        if not (0 <= self.l < self.k <= N):
            raise DomainError(
                f"need 0 <= l < k <= C(n,p) = {N}, got k={self.k}, l={self.l}"
            )
        if not np.isfinite(self.b) or not np.isfinite(self.q):
            raise DomainError("exponents b, q must be finite")
        if self.epsilon < 0:
            raise DomainError("regularization exponent must be >= 0")
        self._collect_notes(N)

    def _collect_notes(self, N):
        window = comb(self.n - 1, self.p - 1)
        if not (2 < self.k <= window + 1 and self.l < min(window, self.k)):
            self.notes.append(
                "outside the certified estimate window "
                f"(need 2 < k <= {window + 1} and l < {min(window, self.k)}); "
                "the solver runs but a priori estimates are not guaranteed"
            )
        if self.l == 0 and self.q > 1:
            self.notes.append(
                "q > 1 with l = 0: curvature bounds are only certified for q <= 1"
            )
        if self.p == 1:
            self.notes.append("p = 1 reduces to the classical curvature quotient")

    @property
    def N(self) -> int:
        return comb(self.n, self.p)

    @property
    def exponent(self) -> float:
        """Radial exponent c = -b - q - k + l (without regularization)."""
        return -self.b - self.q - self.k + self.l

    @property
    def regime(self) -> str:
        c = self.exponent
        if abs(c) <= HOMOGENEOUS_TOL:
            return "homogeneous"
        return "nonhomogeneous" if c > 0 else "subcritical"

    @property
    def K0(self) -> float:
        """sigma_k/sigma_l of the index sums at the unit shape matrix."""
        return comb(self.N, self.k) / comb(self.N, self.l) * self.p ** (self.k - self.l)

    def table(self) -> exterior.MultiIndexTable:
        tb = getattr(self, "_table", None)
        if tb is None:
            tb = exterior.build_table(self.n, self.p)
            object.__setattr__(self, "_table", tb)
        return tb

    def with_epsilon(self, eps: float) -> "ProblemSpec":
        return ProblemSpec(
            n=self.n, p=self.p, k=self.k, l=self.l, b=self.b, q=self.q,
            f=self.f, epsilon=eps,
        )

    def with_rhs(self, f: RhsFunction) -> "ProblemSpec":
        return ProblemSpec(
            n=self.n, p=self.p, k=self.k, l=self.l, b=self.b, q=self.q,
            f=f, epsilon=self.epsilon,
        )

    def blended(self, t: float) -> "ProblemSpec":
        return self.with_rhs(BlendedRhs(self.f, t, self.k, self.l, self.K0))

    def to_json(self) -> dict:
        return {
            "n": self.n, "p": self.p, "k": self.k, "l": self.l,
            "b": self.b, "q": self.q, "f": self.f.to_json(),
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProblemSpec":
        missing = [key for key in ("n", "p", "k", "l", "b", "q", "f") if key not in obj]
        if missing:
            raise DomainError(f"problem json is missing fields: {missing}")
        return cls(
            n=int(obj["n"]), p=int(obj["p"]), k=int(obj["k"]), l=int(obj["l"]),
            b=float(obj["b"]), q=float(obj["q"]), f=rhs_from_json(obj["f"]),
            epsilon=float(obj.get("epsilon", 0.0)),
        )


# -- residual -------------------------------------------------------------------


@dataclass
class PDEState:
    """Everything the solver wants from one residual evaluation."""

    field: RadialField
    grad: np.ndarray
    hess: np.ndarray
    v: np.ndarray
    gbar: np.ndarray
    hbar: np.ndarray
    a: np.ndarray
    kappa: np.ndarray
    frame: Optional[np.ndarray]
    Lam: np.ndarray
    sig: np.ndarray
    f_vals: np.ndarray
    rhs: np.ndarray
    F: np.ndarray
    r: np.ndarray
    cone_ok: np.ndarray
    cone_margin: float

    @property
    def all_admissible(self) -> bool:
        return bool(self.cone_ok.all())

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.r)))

    def principal_curvatures(self) -> np.ndarray:
        return self.kappa * (np.exp(self.field.u) / self.v)[:, None]

    def worst_violation(self):
        """(node, level, value) of the deepest cone violation, or None."""
        if self.all_admissible:
            return None
        k = self.sig.shape[1] - 1
        bad = np.where(~self.cone_ok)[0]
        node = bad[np.argmin(np.min(self.sig[bad, 1:], axis=1))]
        for j in range(1, k + 1):
            if self.sig[node, j] <= 0.0:
                return int(node), j, float(self.sig[node, j])
        return int(node), k, float(self.sig[node, k])


def evaluate_state(field: RadialField, spec: ProblemSpec, need_frame: bool = False,
                   f_vals: np.ndarray | None = None) -> PDEState:
    """Evaluate the equation at ``field`` without raising on cone exits.

    Residual entries at inadmissible nodes are NaN; callers decide policy.
    """
    grid = field.grid
    if grid.n != spec.n:
        raise DomainError(f"grid dimension {grid.n} does not match problem n={spec.n}")
    table = spec.table()
    grad = grid.gradient(field.u)
    hess = grid.hessian(field.u)
    v, gbar, hbar, a = shape_pieces(grad, hess)
    if need_frame:
        kappa, frame = np.linalg.eigh(a)
    else:
        kappa, frame = np.linalg.eigvalsh(a), None
    Lam = exterior.index_sums(kappa, table)
    sig = symfun.sigma_all_batch(Lam, spec.k)
    cone_ok = np.all(sig[:, 1:] > 0.0, axis=1)
    cone_margin = float(np.min(sig[:, 1:]))
    if f_vals is None:
        f_vals = spec.f.values(grid)
    if np.min(f_vals) <= 0:
        raise DomainError("prescribed data must be positive at every node")
    c_eff = spec.exponent + spec.epsilon
    e2 = 0.5 * (spec.k - spec.l - spec.q)
    # the constant gauge offset enters only through this exact scalar factor
    rhs = (
        f_vals
        * np.exp(c_eff * field.u)
        * float(np.exp(c_eff * field.offset))
        * (1.0 + np.sum(grad**2, axis=1)) ** e2
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        F = sig[:, spec.k] / sig[:, spec.l]
    F = np.where(cone_ok, F, np.nan)
    r = F - rhs
    return PDEState(
        field=field, grad=grad, hess=hess, v=v, gbar=gbar, hbar=hbar, a=a,
        kappa=kappa, frame=frame, Lam=Lam, sig=sig, f_vals=f_vals, rhs=rhs,
        F=F, r=r, cone_ok=cone_ok, cone_margin=cone_margin,
    )


@dataclass
class Residual:
    r: np.ndarray
    F_vals: np.ndarray
    cone_ok: np.ndarray
    state: PDEState

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.r)))


def residual(field: RadialField, spec: ProblemSpec) -> Residual:
    """Pointwise residual F(Lam(a)) - f e^{cu} (1+|du|^2)^{(k-l-q)/2}.

    Raises ConeViolationError when any node leaves the cone.
    """
    state = evaluate_state(field, spec)
    if not state.all_admissible:
        node, level, value = state.worst_violation()
        raise ConeViolationError(
            level, node=node, value=value, count=int((~state.cone_ok).sum())
        )
    return Residual(r=state.r, F_vals=state.F, cone_ok=state.cone_ok, state=state)


# -- linearization ---------------------------------------------------------------


@dataclass
class Linearization:
    """Frechet derivative of the residual at one iterate.

    ``matvec`` applies it matrix-free through the grid's stencil
    operators; ``assemble`` builds the sparse matrix for direct solves.
    """

    grid: SphereGrid
    coeff_hess: np.ndarray  # (M, n, n) multiplier of the frame Hessian entries
    coeff_grad: np.ndarray  # (M, n) multiplier of the frame gradient entries
    coeff_u: np.ndarray  # (M,) zero-order coefficient
    _matrix: Optional[sp.csr_matrix] = None

    def matvec(self, du: np.ndarray) -> np.ndarray:
        grid = self.grid
        du = np.asarray(du, dtype=float).ravel()
        out = self.coeff_u * du
        for a_ax in range(grid.n):
            out += self.coeff_grad[:, a_ax] * (grid.frame_gradient_ops[a_ax] @ du)
        for (a_ax, b_ax), op in grid.frame_hessian_ops.items():
            w = 1.0 if a_ax == b_ax else 2.0
            out += w * self.coeff_hess[:, a_ax, b_ax] * (op @ du)
        return out

    def assemble(self) -> sp.csr_matrix:
        if self._matrix is None:
            grid = self.grid
            mat = sp.diags(self.coeff_u).tocsr()
            for a_ax in range(grid.n):
                mat = mat + sp.diags(self.coeff_grad[:, a_ax]) @ grid.frame_gradient_ops[a_ax]
            for (a_ax, b_ax), op in grid.frame_hessian_ops.items():
                w = 1.0 if a_ax == b_ax else 2.0
                mat = mat + sp.diags(w * self.coeff_hess[:, a_ax, b_ax]) @ op
            self._matrix = mat.tocsr()
        return self._matrix


def _batched_quotient_gradient(state: PDEState, spec: ProblemSpec) -> np.ndarray:
    """Matrix derivative of F w.r.t. a at every node, shape (M, n, n)."""
    k, l = spec.k, spec.l
    table = spec.table()
    Lam, sig = state.Lam, state.sig
    Mk = symfun.sigma_minors_all_batch(Lam, k - 1, sig)
    if l >= 1:
        Ml = symfun.sigma_minors_all_batch(Lam, l - 1, sig)
        Q = Mk / sig[:, l : l + 1] - sig[:, k : k + 1] * Ml / sig[:, l : l + 1] ** 2
    else:
        Q = Mk
    fhat = Q @ table.incidence.T  # (M, n)
    return np.einsum("mij,mj,mkj->mik", state.frame, fhat, state.frame)


def linearize(field: RadialField, spec: ProblemSpec,
              state: PDEState | None = None) -> Linearization:
    """Assemble the linearized operator at an admissible iterate."""
    if state is None or state.frame is None:
        state = evaluate_state(field, spec, need_frame=True)
    if not state.all_admissible:
        node, level, value = state.worst_violation()
        raise ConeViolationError(level, node=node, value=value)
    grid = field.grid
    Fg = _batched_quotient_gradient(state, spec)
    gbar, hbar, g = state.gbar, state.hbar, state.grad
    # dF/d(hess): a = gbar hbar gbar with d(hbar) = d(hess)
    V = np.einsum("mij,mjk,mkl->mil", gbar, Fg, gbar)
    # dF/d(grad) through gbar(grad) and the rank-one part of hbar
    v = state.v
    beta = 1.0 / (v * (1.0 + v))
    dbeta = -(1.0 + 2.0 * v) / (v * (1.0 + v)) ** 2
    U = np.einsum("mij,mjk,mkl->mil", hbar, gbar, Fg) + np.einsum(
        "mij,mjk,mkl->mil", Fg, gbar, hbar
    )
    Ug = np.einsum("mij,mj->mi", U + np.transpose(U, (0, 2, 1)), g)
    gUg = np.einsum("mi,mij,mj->m", g, U, g)
    t1 = -beta[:, None] * Ug - (gUg * dbeta / v)[:, None] * g
    t2 = 2.0 * np.einsum("mij,mj->mi", V, g)
    g2 = np.sum(g**2, axis=1)
    e2 = 0.5 * (spec.k - spec.l - spec.q)
    drhs_dg = (state.rhs * 2.0 * e2 / (1.0 + g2))[:, None] * g
    coeff_grad = t1 + t2 - drhs_dg
    c_eff = spec.exponent + spec.epsilon
    coeff_u = -c_eff * state.rhs
    return Linearization(
        grid=grid, coeff_hess=V, coeff_grad=coeff_grad, coeff_u=coeff_u
    )


# -- a priori bound audits -------------------------------------------------------


@dataclass
class BoundReport:
    regime: str
    epsilon: float
    min_rho: float
    max_rho: float
    interval_lo: Optional[float]
    interval_hi: Optional[float]
    c0_slack: Optional[float]
    c0_pass: Optional[bool]
    max_grad_log_rho: float
    grad_finite: bool
    max_abs_kappa: float
    cone_margin: float
    grad_smallness_lhs: Optional[float]
    grad_smallness_rhs: Optional[float]
    grad_smallness_pass: Optional[bool]
    c0_tolerance: float = 1e-6

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        return out


def _grad_ratio(spec: ProblemSpec, grid: SphereGrid, f_vals: np.ndarray) -> float:
    """max |grad f| / f via the grid stencils (works for tabulated data)."""
    grad_f = grid.gradient(f_vals)
    return float(np.max(np.linalg.norm(grad_f, axis=1) / f_vals))


def audit_bounds(field: RadialField, spec: ProblemSpec) -> BoundReport:
    """Radial-bound, gradient and cone audits at the given field.

    In the nonhomogeneous regime the radial interval is
    [ (C_N^l min f / (C_N^k p^{k-l}))^{1/c}, (... max f ...)^{1/c} ];
    in the regularized homogeneous regime the same expressions bound
    rho^epsilon instead of rho.
    """
    grid = field.grid
    state = evaluate_state(field, spec)
    rho = field.rho
    kap = state.principal_curvatures()
    grad_norm = np.linalg.norm(state.grad, axis=1)
    f_vals = state.f_vals
    N = spec.N
    ratio_lo = comb(N, spec.l) * np.min(f_vals) / (comb(N, spec.k) * spec.p ** (spec.k - spec.l))
    ratio_hi = comb(N, spec.l) * np.max(f_vals) / (comb(N, spec.k) * spec.p ** (spec.k - spec.l))
    c = spec.exponent
    tol = 1e-6
    interval_lo = interval_hi = c0_slack = c0_pass = None
    if spec.regime == "nonhomogeneous":
        interval_lo = ratio_lo ** (1.0 / c)
        interval_hi = ratio_hi ** (1.0 / c)
        c0_slack = float(min(np.min(rho) - interval_lo, interval_hi - np.max(rho)))
        c0_pass = bool(c0_slack >= -tol)
    elif spec.regime == "homogeneous" and spec.epsilon > 0:
        # bounds apply to rho^epsilon
        rho_eps = np.exp(-spec.epsilon * field.total_u)
        interval_lo, interval_hi = float(ratio_lo), float(ratio_hi)
        c0_slack = float(
            min(np.min(rho_eps) - interval_lo, interval_hi - np.max(rho_eps))
        )
        c0_pass = bool(c0_slack >= -tol)
    gs_lhs = gs_rhs = gs_pass = None
    if spec.regime == "homogeneous" and spec.q == 0:
        gs_lhs = _grad_ratio(spec, grid, f_vals)
        gs_rhs = 2.0 * (spec.k - spec.l) * np.sqrt((spec.p - 1) / spec.p)
        gs_pass = bool(gs_lhs < gs_rhs)
    return BoundReport(
        regime=spec.regime,
        epsilon=spec.epsilon,
        min_rho=float(np.min(rho)),
        max_rho=float(np.max(rho)),
        interval_lo=interval_lo,
        interval_hi=interval_hi,
        c0_slack=c0_slack,
        c0_pass=c0_pass,
        max_grad_log_rho=float(np.max(grad_norm)),
        grad_finite=bool(np.all(np.isfinite(grad_norm))),
        max_abs_kappa=float(np.max(np.abs(kap))),
        cone_margin=state.cone_margin,
        grad_smallness_lhs=gs_lhs,
        grad_smallness_rhs=gs_rhs,
        grad_smallness_pass=gs_pass,
        c0_tolerance=tol,
    )
