"""Damped Newton, the continuation path, and the shrinking-regularization
path for the scale-invariant case.

The nonhomogeneous path follows the family

    sigma_k/sigma_l(Lam) = f_t * e^{c u} (1+|du|^2)^{(k-l-q)/2},
    f_t = [t f^{1/(k-l)} + (1-t) K0^{1/(k-l)}]^{k-l},

which has the exact solution rho = 1 at t = 0 and the target data at
t = 1; failed steps bisect the parameter interval.  The homogeneous path
solves the same equation with radial exponent epsilon for a decreasing
epsilon schedule, normalizes each solution to min(rho) = 1, and reads the
multiplicative constant gamma off as (min rho_eps)^(-epsilon), with a
linear-in-epsilon Richardson extrapolation and a Cauchy check across the
last three schedule points.

Newton steps are accepted under an Armijo decrease of the residual
sup-norm plus cone membership of every node; the step is halved
otherwise.  All linear solves are sparse-direct by default.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import pde
from .errors import AdmissibilityError, DomainError, NonconvergenceError
from .geometry import RadialField, SphereGrid, embed
from .pde import PDEState, ProblemSpec

__all__ = [
    "SolverConfig",
    "StepRecord",
    "NewtonTrace",
    "CertificateReport",
    "SolveReport",
    "newton_solve",
    "continuation_solve",
    "homogeneous_solve",
    "convexity_certificate",
]


@dataclass
class SolverConfig:
    newton_tol: float = 1e-9
    max_newton: int = 30
    damping: float = 0.5
    t_steps: tuple = tuple(np.linspace(0.0, 1.0, 11))
    eps_schedule: tuple = (0.2, 0.1, 0.05, 0.025)
    linear_solver: str = "direct"
    iterative_tol: float = 1e-10
    jacobian: str = "auto"
    armijo: float = 1e-4
    max_backtracks: int = 40
    min_t_step: float = 1e-6

    def __post_init__(self):
        if self.newton_tol <= 0 or self.iterative_tol <= 0:
            raise DomainError("tolerances must be positive")
        if not 0.0 < self.damping < 1.0:
            raise DomainError("damping ratio must lie in (0, 1)")
        ts = np.asarray(self.t_steps, dtype=float)
        if ts.size < 2 or np.any(np.diff(ts) <= 0) or ts[0] != 0.0 or ts[-1] != 1.0:
            raise DomainError("t_steps must increase from 0 to 1")
        es = np.asarray(self.eps_schedule, dtype=float)
        if es.size < 1 or np.any(es <= 0) or np.any(np.diff(es) >= 0):
            raise DomainError("eps_schedule must be positive and decreasing")
        if self.linear_solver not in ("direct", "iterative"):
            raise DomainError("linear_solver must be 'direct' or 'iterative'")
        if self.jacobian not in ("exact", "frozen", "auto"):
            raise DomainError("jacobian must be 'exact', 'frozen' or 'auto'")

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["t_steps"] = list(map(float, self.t_steps))
        out["eps_schedule"] = list(map(float, self.eps_schedule))
        return out


@dataclass
class StepRecord:
    kind: str  # "t" or "eps"
    value: float
    newton_iters: int
    res_initial: float
    res_final: float
    min_rho: float
    max_rho: float
    cone_margin: float
    min_h_eig: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class NewtonTrace:
    residuals: list = dc_field(default_factory=list)
    step_sizes: list = dc_field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.step_sizes)


@dataclass
class CertificateReport:
    min_h_eigenvalue: float
    rank_deficit_nodes: int
    rank_tolerance: float
    hypothesis_q_ok: bool
    hypothesis_concave: bool
    concavity_max_eigenvalue: float
    certified: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolveReport:
    converged: bool
    regime: str
    u_final: Optional[RadialField]
    trace: list
    audits: Optional[pde.BoundReport]
    certificate: Optional[CertificateReport]
    gamma: Optional[float] = None
    gamma_sequence: Optional[list] = None
    gamma_cauchy: Optional[bool] = None
    residual_sup: Optional[float] = None
    gamma_residual_sup: Optional[float] = None
    failure: Optional[str] = None
    problem: Optional[dict] = None
    config: Optional[dict] = None
    runtime_s: Optional[float] = None

    @property
    def rho(self) -> np.ndarray:
        return self.u_final.rho

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "regime": self.regime,
            "gamma": self.gamma,
            "gamma_sequence": self.gamma_sequence,
            "gamma_cauchy": self.gamma_cauchy,
            "residual_sup": self.residual_sup,
            "gamma_residual_sup": self.gamma_residual_sup,
            "min_rho": float(np.min(self.rho)) if self.u_final is not None else None,
            "max_rho": float(np.max(self.rho)) if self.u_final is not None else None,
            "trace": [s.to_json() for s in self.trace],
            "audits": self.audits.to_json() if self.audits else None,
            "certificate": self.certificate.to_json() if self.certificate else None,
            "failure": self.failure,
            "problem": self.problem,
            "config": self.config,
            "meta": {"runtime_s": self.runtime_s},
        }


def _min_h_eig(state: PDEState) -> float:
    return float(np.min(state.principal_curvatures()))


def _step_record(kind, value, iters, res0, state: PDEState) -> StepRecord:
    rho = state.field.rho
    return StepRecord(
        kind=kind,
        value=float(value),
        newton_iters=iters,
        res_initial=float(res0),
        res_final=state.sup_norm,
        min_rho=float(np.min(rho)),
        max_rho=float(np.max(rho)),
        cone_margin=state.cone_margin,
        min_h_eig=_min_h_eig(state),
    )


class _NewtonLinear:
    """Linearized operator plus a lazily refreshed factorization.

    One instance may be shared across continuation steps so the (costly)
    sparse factorization is rebuilt only when the policy asks for it.
    """

    def __init__(self, config: SolverConfig):
        self.config = config
        self._lu = None
        self._mat = None

    @property
    def ready(self) -> bool:
        return self._lu is not None or self._mat is not None

    def refresh(self, field: RadialField, spec: ProblemSpec, f_vals: np.ndarray):
        state = pde.evaluate_state(field, spec, need_frame=True, f_vals=f_vals)
        lin = pde.linearize(field, spec, state)
        if self.config.linear_solver == "direct":
            self._lu = spla.splu(lin.assemble().tocsc())
            self._mat = None
        else:
            self._mat = lin.assemble()
            self._lu = None

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu is not None:
            return self._lu.solve(rhs)
        diag = self._mat.diagonal()
        precond = spla.LinearOperator(self._mat.shape, matvec=lambda x: x / diag)
        sol, info = spla.lgmres(
            self._mat, rhs, M=precond, rtol=self.config.iterative_tol, atol=0.0
        )
        if info != 0:
            raise NonconvergenceError(f"iterative linear solve failed (info={info})")
        return sol


def newton_solve(u0: RadialField, spec: ProblemSpec, config: SolverConfig | None = None,
                 tool: "_NewtonLinear | None" = None):
    """Damped Newton from an admissible start.

    Returns (solution field, trace, final state).  Every accepted step
    strictly decreases the residual sup-norm and keeps all nodes in the
    cone; failure to do so even at the smallest damping raises.

    The ``jacobian`` policy decides when the linearization is rebuilt:
    'exact' every iteration, 'frozen' only on stalls, 'auto' like frozen
    far from the solution and like exact in the terminal phase.
    """
    config = config or SolverConfig()
    f_vals = spec.f.values(u0.grid)
    state = pde.evaluate_state(u0, spec, f_vals=f_vals)
    if not state.all_admissible:
        node, level, value = state.worst_violation()
        raise AdmissibilityError(
            f"initial field leaves the cone at node {node} (sigma_{level} = {value})"
        )
    trace = NewtonTrace(residuals=[state.sup_norm])
    tool = tool or _NewtonLinear(config)
    since_refresh = 0
    for _ in range(config.max_newton):
        if state.sup_norm <= config.newton_tol:
            return state.field, trace, state
        refreshed = False
        if (
            not tool.ready
            or config.jacobian == "exact"
            or (config.jacobian == "auto" and since_refresh >= 6)
        ):
            tool.refresh(state.field, spec, f_vals)
            refreshed = True
            since_refresh = 0
        accepted = None
        while True:
            step = tool.solve(-state.r)
            s = 1.0
            for _ in range(config.max_backtracks):
                candidate = RadialField(
                    u0.grid, state.field.u + s * step, offset=state.field.offset
                )
                cand_state = pde.evaluate_state(candidate, spec, f_vals=f_vals)
                if cand_state.all_admissible and cand_state.sup_norm <= (
                    1.0 - config.armijo * s
                ) * state.sup_norm:
                    accepted = cand_state
                    break
                s *= config.damping
            stalled = accepted is None or (
                s < 0.25 or accepted.sup_norm > 0.5 * state.sup_norm
            )
            if stalled and not refreshed:
                # a stale operator is the usual culprit; rebuild at the
                # current iterate and retry this step once
                tool.refresh(state.field, spec, f_vals)
                refreshed = True
                since_refresh = 0
                accepted = None
                continue
            break
        if accepted is None:
            raise AdmissibilityError(
                "no admissible descent step (cone collapse at zero step)"
            )
        state = accepted
        since_refresh += 1
        trace.residuals.append(state.sup_norm)
        trace.step_sizes.append(s)
    raise NonconvergenceError(
        f"Newton did not reach {config.newton_tol} in {config.max_newton} iterations "
        f"(last residual {state.sup_norm:.3e})",
        trace=trace,
    )


def _gauge_shift(u: RadialField, spec_t: ProblemSpec) -> RadialField:
    """Free predictor: a constant shift leaves the shape matrix untouched and
    scales the data side by e^{c*shift}, so one scalar solve centres the
    residual (and lands exactly on the solution for constant data)."""
    c_eff = spec_t.exponent + spec_t.epsilon
    if abs(c_eff) < 1e-12:
        return u
    state = pde.evaluate_state(u, spec_t)
    if not state.all_admissible:
        return u
    shift = float(np.mean(np.log(state.F) - np.log(state.rhs))) / c_eff
    return u.shifted(shift)


def _continuation(spec: ProblemSpec, config: SolverConfig, grid: SphereGrid,
                  u_start: RadialField | None = None):
    """March the blend parameter from 0 to 1; returns (field, state, records)."""
    records = []
    tool = _NewtonLinear(config)
    u = u_start if u_start is not None else RadialField.constant(grid, 0.0)
    spec0 = spec.blended(0.0)
    u, tr, state = newton_solve(u, spec0, config, tool=tool)
    records.append(_step_record("t", 0.0, tr.iterations, tr.residuals[0], state))
    t_prev = 0.0
    pending = [float(t) for t in config.t_steps if t > 0.0]
    while pending:
        t = pending[0]
        try:
            spec_t = spec.blended(t)
            u_new, tr, state = newton_solve(_gauge_shift(u, spec_t), spec_t, config, tool=tool)
        except (AdmissibilityError, NonconvergenceError):
            if t - t_prev <= config.min_t_step:
                raise NonconvergenceError(
                    f"continuation step underflow at t = {t:.8f}",
                    trace=records,
                )
            pending.insert(0, 0.5 * (t_prev + t))
            continue
        u = u_new
        records.append(_step_record("t", t, tr.iterations, tr.residuals[0], state))
        t_prev = t
        pending.pop(0)
        pending = [tt for tt in pending if tt > t_prev]
    return u, state, records


def continuation_solve(spec: ProblemSpec, config: SolverConfig | None = None,
                       grid: SphereGrid | None = None, res: int = 32) -> SolveReport:
    """Existence path for the nonhomogeneous regime (radial exponent > 0)."""
    config = config or SolverConfig()
    grid = grid or SphereGrid(spec.n, res)
    if spec.regime != "nonhomogeneous":
        raise DomainError(
            f"continuation requires the nonhomogeneous regime, got {spec.regime}"
        )
    start = time.monotonic()
    try:
        u, state, records = _continuation(spec, config, grid)
    except NonconvergenceError as err:
        return SolveReport(
            converged=False, regime=spec.regime, u_final=None,
            trace=err.trace if isinstance(err.trace, list) else [],
            audits=None, certificate=None, failure=str(err),
            problem=spec.to_json(), config=config.to_json(),
            runtime_s=time.monotonic() - start,
        )
    audits = pde.audit_bounds(u, spec)
    cert = convexity_certificate(u, spec)
    return SolveReport(
        converged=True, regime=spec.regime, u_final=u, trace=records,
        audits=audits, certificate=cert, residual_sup=state.sup_norm,
        problem=spec.to_json(), config=config.to_json(),
        runtime_s=time.monotonic() - start,
    )


def _richardson(eps: np.ndarray, gammas: np.ndarray) -> float:
    """Linear-in-epsilon extrapolation from the last two schedule points."""
    if eps.size == 1:
        return float(gammas[-1])
    e1, e2 = eps[-2], eps[-1]
    g1, g2 = gammas[-2], gammas[-1]
    return float((e1 * g2 - e2 * g1) / (e1 - e2))


def homogeneous_solve(spec: ProblemSpec, config: SolverConfig | None = None,
                      grid: SphereGrid | None = None, res: int = 32) -> SolveReport:
    """Shrinking-regularization path for the scale-invariant regime.

    Solves the radial-exponent-epsilon problem along the schedule, tracks
    gamma_eps = (min rho_eps)^(-eps), and returns the min-normalized shape
    with the extrapolated gamma.
    """
    config = config or SolverConfig()
    grid = grid or SphereGrid(spec.n, res)
    if spec.regime != "homogeneous":
        raise DomainError(
            f"regularization path requires the homogeneous regime, got {spec.regime}"
        )
    start = time.monotonic()
    records = []
    gammas = []
    notes = list(spec.notes)
    if spec.q == 0:
        rep0 = pde.audit_bounds(RadialField.constant(grid, 0.0), spec)
        if not rep0.grad_smallness_pass:
            notes.append(
                "gradient smallness hypothesis fails "
                f"(max|grad f|/f = {rep0.grad_smallness_lhs:.4g} "
                f">= {rep0.grad_smallness_rhs:.4g}); uniqueness of gamma "
                "is not guaranteed"
            )
    u_norm = None
    last_eps_audit = None
    tool = _NewtonLinear(config)
    for eps in config.eps_schedule:
        spec_eps = spec.with_epsilon(float(eps))
        try:
            if u_norm is None:
                u, state, recs = _continuation(spec_eps, config, grid)
                records.extend(recs)
            else:
                # warm start from the previous shape at the scale the new
                # exponent wants; the gauge shift finds it in one scalar solve
                u, tr, state = newton_solve(
                    _gauge_shift(u_norm, spec_eps), spec_eps, config, tool=tool
                )
                records.append(
                    _step_record("eps", float(eps), tr.iterations, tr.residuals[0], state)
                )
        except (AdmissibilityError, NonconvergenceError) as err:
            return SolveReport(
                converged=False, regime=spec.regime, u_final=u_norm, trace=records,
                audits=None, certificate=None, gamma_sequence=gammas,
                failure=f"regularized solve failed at eps={eps}: {err}",
                problem=spec.to_json(), config=config.to_json(),
                runtime_s=time.monotonic() - start,
            )
        if u_norm is None:
            records.append(_step_record("eps", float(eps), 0, state.sup_norm, state))
        max_u = float(np.max(u.u)) + u.offset
        gammas.append(float(np.exp(eps * max_u)))  # (min rho)^(-eps)
        u_norm = RadialField(grid, u.u - float(np.max(u.u)))  # min(rho) = 1
        last_eps_audit = pde.audit_bounds(u, spec_eps)
    eps_arr = np.asarray(config.eps_schedule, dtype=float)
    gam_arr = np.asarray(gammas, dtype=float)
    gamma = _richardson(eps_arr, gam_arr)
    tail = gam_arr[-3:]
    cauchy = bool((np.max(tail) - np.min(tail)) / abs(gam_arr[-1]) <= 1e-3)
    # mismatch of the limit equation with the extrapolated gamma (carries
    # the O(eps) truncation; the converged residual is the last eps row)
    spec_gamma = spec.with_rhs(_ScaledRhs(spec.f, gamma))
    final_state = pde.evaluate_state(u_norm, spec_gamma)
    cert = convexity_certificate(u_norm, spec)
    return SolveReport(
        converged=True, regime=spec.regime, u_final=u_norm, trace=records,
        audits=last_eps_audit, certificate=cert, gamma=gamma,
        gamma_sequence=[float(x) for x in gammas], gamma_cauchy=cauchy,
        residual_sup=records[-1].res_final,
        gamma_residual_sup=final_state.sup_norm,
        problem=spec.to_json(), config=config.to_json(),
        runtime_s=time.monotonic() - start,
    )


@dataclass
class _ScaledRhs(pde.RhsFunction):
    base: pde.RhsFunction
    scale: float
    kind = "scaled"

    def values(self, grid):
        return self.scale * self.base.values(grid)

    def to_json(self):
        return {"type": "scaled", "scale": self.scale, "base": self.base.to_json()}


def _extended_data_concave(spec: ProblemSpec, grid: SphereGrid,
                           rho_range: tuple, samples: int = 64,
                           seed: int = 0) -> tuple:
    """Numerical concavity check of y -> f(y/|y|)^{1/(k-l)} |y|^{b/(k-l)}.

    Samples a radial shell around the solution and takes finite-difference
    Hessians in ambient coordinates; returns (concave?, max eigenvalue).
    """
    rng = np.random.default_rng(seed)
    dim = spec.n + 1
    r = 1.0 / (spec.k - spec.l)

    def phi(y):
        norm = np.linalg.norm(y, axis=-1, keepdims=True)
        x = y / norm
        tab = spec.f
        # evaluate data off-grid through its closed form; tabulated data
        # falls back to nearest grid node
        if isinstance(tab, pde.ConstantRhs):
            fv = np.full(y.shape[:-1], tab.c)
        elif isinstance(tab, pde.HarmonicRhs):
            fv = np.maximum(tab.c0 + x @ np.asarray(tab.coeffs), tab.floor)
        elif isinstance(tab, pde.ExpHarmonicRhs):
            fv = np.exp(x @ np.asarray(tab.coeffs))
        elif isinstance(tab, _ScaledRhs) and isinstance(tab.base, pde.ConstantRhs):
            fv = np.full(y.shape[:-1], tab.scale * tab.base.c)
        else:
            pts = grid.unit_points()
            idx = np.argmax(x @ pts.T, axis=-1)
            fv = tab.values(grid)[idx]
        return fv**r * norm[..., 0] ** (spec.b * r)

    pts = rng.normal(size=(samples, dim))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    radii = rng.uniform(0.9 * rho_range[0], 1.1 * rho_range[1], size=(samples, 1))
    ys = pts * radii
    h = 1e-3 * radii[:, 0]
    eye = np.eye(dim)
    worst = -np.inf
    for s in range(samples):
        y = ys[s]
        hs = h[s]
        H = np.empty((dim, dim))
        f0 = phi(y)
        for i in range(dim):
            for j in range(i, dim):
                if i == j:
                    val = (phi(y + hs * eye[i]) - 2 * f0 + phi(y - hs * eye[i])) / hs**2
                else:
                    val = (
                        phi(y + hs * (eye[i] + eye[j]))
                        - phi(y + hs * (eye[i] - eye[j]))
                        - phi(y - hs * (eye[i] - eye[j]))
                        + phi(y - hs * (eye[i] + eye[j]))
                    ) / (4 * hs**2)
                H[i, j] = H[j, i] = val
        scale = max(1.0, abs(f0) / radii[s, 0] ** 2)
        worst = max(worst, float(np.max(np.linalg.eigvalsh(H))) / scale)
    return bool(worst <= 1e-8), worst


def convexity_certificate(field: RadialField, spec: ProblemSpec) -> CertificateReport:
    """Positivity profile of the second fundamental form, embedding route.

    Reports the global minimum principal curvature, the number of nodes
    with near-null curvature directions, and the concavity hypothesis
    check on the extended data function.
    """
    data = embed(field)
    kappa = data.kappa
    min_eig = float(np.min(kappa))
    tol = 1e-8 * float(np.max(np.abs(kappa)))
    deficits = np.sum(kappa < tol, axis=1)
    q_ok = spec.q >= 0
    rho = field.rho
    concave, worst = _extended_data_concave(
        spec, field.grid, (float(np.min(rho)), float(np.max(rho)))
    )
    return CertificateReport(
        min_h_eigenvalue=min_eig,
        rank_deficit_nodes=int(np.sum(deficits > 0)),
        rank_tolerance=tol,
        hypothesis_q_ok=bool(q_ok),
        hypothesis_concave=concave,
        concavity_max_eigenvalue=worst,
        certified=bool(q_ok and concave and min_eig > 0.0),
    )
