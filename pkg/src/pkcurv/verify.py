"""Randomized property battery for the symmetric-function and derivation
algebra, plus solution-level audits.

Every inequality is rewritten as expression >= 0 and reported through its
worst (most negative) slack over all trials, normalized where noted so
one absolute tolerance is meaningful across configurations.  Reports are
deterministic functions of (trials, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Optional

import numpy as np

from . import exterior, pde, symfun
from .errors import DomainError
from .solver import SolveReport

__all__ = [
    "PropertyReport",
    "run_symfun_suite",
    "run_exterior_suite",
    "run_solution_audits",
    "format_reports",
]


@dataclass
class PropertyReport:
    name: str
    trials: int
    worst_slack: float
    tolerance: float
    passed: Optional[bool]
    seed: int
    note: str = ""

    def to_json(self) -> dict:
        return dict(self.__dict__)


class _Slack:
    """Accumulates the minimum slack of one property over trials."""

    def __init__(self, name, tolerance, note=""):
        self.name = name
        self.tolerance = tolerance
        self.note = note
        self.worst = np.inf
        self.count = 0

    def add(self, value: float):
        self.worst = min(self.worst, float(value))
        self.count += 1

    def report(self, seed) -> PropertyReport:
        ok = None if self.count == 0 else bool(self.worst >= -self.tolerance)
        worst = self.worst if self.count else float("nan")
        return PropertyReport(
            name=self.name, trials=self.count, worst_slack=worst,
            tolerance=self.tolerance, passed=ok, seed=seed, note=self.note,
        )


def sample_gamma_cone(rng, m: int, k: int, scale: float = 0.3, max_tries: int = 2000):
    """Gaussian around the all-ones vector, rejected to the level-k cone.

    Returns (sample, tries); the acceptance rate is 1/mean(tries).
    """
    for attempt in range(1, max_tries + 1):
        lam = rng.normal(1.0, scale, m)
        if symfun.in_gamma_cone(k, lam).ok:
            return lam, attempt
    raise RuntimeError(f"cone sampling failed after {max_tries} tries (m={m}, k={k})")


def sample_pk_cone(rng, table, k: int, scale: float = 0.3, max_tries: int = 2000):
    for attempt in range(1, max_tries + 1):
        kap = rng.normal(1.0, scale, table.n)
        if exterior.in_pk_cone(kap, k, table).ok:
            return kap, attempt
    raise RuntimeError(f"cone sampling failed after {max_tries} tries")


def _random_sym(rng, n, unit=True):
    m = rng.normal(size=(n, n))
    m = 0.5 * (m + m.T)
    return m / np.linalg.norm(m) if unit else m


def _rotation(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


# -- symmetric-function suite ----------------------------------------------------


def run_symfun_suite(trials: int, seed: int, dims=(3, 4, 5, 6)) -> list[PropertyReport]:
    """Identity/inequality battery for sigma_k on random cone samples."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    props = {
        "sigma-split-identity": _Slack(
            "sigma-split-identity", 1e-12,
            note="sigma_k = sigma_k(|i) + lam_i sigma_{k-1}(|i), relative"),
        "minor-sum-identity": _Slack(
            "minor-sum-identity", 1e-12,
            note="sum_i sigma_{k-1}(|i) = (m-k+1) sigma_{k-1}, relative"),
        "gradient-positive": _Slack(
            "gradient-positive", 0.0,
            note="min_i d(sigma_k)/d(lam_i) inside the cone"),
        "quotient-root-gradient-sum": _Slack(
            "quotient-root-gradient-sum", 1e-10,
            note="sum_i d[(s_k/s_l)^(1/(k-l))]/d(lam_i) >= (C_m^k/C_m^l)^(1/(k-l))"),
        "quotient-root-gradient-fd": _Slack(
            "quotient-root-gradient-fd", 1e-6,
            note="analytic root gradient vs central differences, relative"),
        "quotient-root-concavity": _Slack(
            "quotient-root-concavity", 1e-10,
            note="midpoint value >= chord average on cone segments"),
        "top-entry-bound": _Slack(
            "top-entry-bound", 1e-12,
            note="lam_1 sigma_{k-1}(|1) >= (k/m) sigma_k, sorted, relative"),
        "newton-maclaurin": _Slack(
            "newton-maclaurin", 1e-12,
            note="normalized quotient monotone across admissible levels, relative"),
        "gradient-fd": _Slack(
            "gradient-fd", 1e-6,
            note="analytic gradient vs central differences, relative"),
    }
    tries = 0
    for t in range(trials):
        m = int(dims[t % len(dims)])
        k = int(rng.integers(1, m + 1))
        lam, n_try = sample_gamma_cone(rng, m, k)
        tries += n_try
        e = symfun.sigma_all(lam)
        scale = max(1.0, float(np.max(np.abs(e))))
        # split identity at a random index
        i = int(rng.integers(0, m))
        lhs = e[k]
        rhs = symfun.sigma_minor(k, lam, [i]) + lam[i] * symfun.sigma_minor(k - 1, lam, [i])
        props["sigma-split-identity"].add(-abs(lhs - rhs) / scale)
        # minor sum
        msum = float(np.sum(symfun.sigma_minors_all(lam, k - 1)))
        props["minor-sum-identity"].add(-abs(msum - (m - k + 1) * e[k - 1]) / scale)
        # gradient positivity
        grad = symfun.sigma_gradient(k, lam)
        props["gradient-positive"].add(float(np.min(grad)))
        # analytic gradient vs finite differences
        h = 1e-6
        fd = np.empty(m)
        for j in range(m):
            lp, lm_ = lam.copy(), lam.copy()
            lp[j] += h
            lm_[j] -= h
            fd[j] = (symfun.sigma(k, lp) - symfun.sigma(k, lm_)) / (2 * h)
        rel = np.max(np.abs(fd - grad)) / max(1e-30, np.max(np.abs(grad)))
        props["gradient-fd"].add(1e-6 - rel)
        # quotient-root properties need l < k
        l = int(rng.integers(0, k))
        root = 1.0 / (k - l)
        val = symfun.quotient_root(k, l, lam)
        Mk = symfun.sigma_minors_all(lam, k - 1)
        Ml = symfun.sigma_minors_all(lam, l - 1) if l >= 1 else np.zeros(m)
        dF = Mk / e[l] - e[k] * Ml / e[l] ** 2
        grad_root = root * (e[k] / e[l]) ** (root - 1.0) * dF
        bound = (comb(m, k) / comb(m, l)) ** root
        props["quotient-root-gradient-sum"].add(float(np.sum(grad_root)) - bound)
        hq = 1e-6
        grad_fd = np.empty(m)
        ok_fd = True
        for j in range(m):
            lp, lm_ = lam.copy(), lam.copy()
            lp[j] += hq
            lm_[j] -= hq
            if not (symfun.in_gamma_cone(k, lp).ok and symfun.in_gamma_cone(k, lm_).ok):
                ok_fd = False
                break
            grad_fd[j] = (
                symfun.quotient_root(k, l, lp) - symfun.quotient_root(k, l, lm_)
            ) / (2 * hq)
        if ok_fd:
            rel = np.max(np.abs(grad_fd - grad_root)) / max(1e-30, np.max(np.abs(grad_root)))
            props["quotient-root-gradient-fd"].add(1e-6 - rel)
        # concavity along a random cone segment
        lam2, n_try = sample_gamma_cone(rng, m, k)
        tries += n_try
        mid = 0.5 * (lam + lam2)
        if symfun.in_gamma_cone(k, mid).ok:
            vmid = symfun.quotient_root(k, l, mid)
            vavg = 0.5 * (val + symfun.quotient_root(k, l, lam2))
            props["quotient-root-concavity"].add(vmid - vavg)
        # sorted top-entry bound
        lam_sorted = np.sort(lam)[::-1]
        lhs = lam_sorted[0] * symfun.sigma_minor(k - 1, lam_sorted, [0])
        props["top-entry-bound"].add((lhs - (k / m) * e[k]) / scale)
        # generalized Newton-MacLaurin on an admissible level tuple
        mm = int(rng.integers(1, m + 1))
        lam_m, n_try = sample_gamma_cone(rng, m, mm)
        tries += n_try
        ll = int(rng.integers(0, mm))
        r = int(rng.integers(ll + 1, mm + 1))
        s = int(rng.integers(0, min(ll, r - 1) + 1))
        em = symfun.sigma_all(lam_m)
        lhs = ((em[mm] / comb(m, mm)) / (em[ll] / comb(m, ll))) ** (1.0 / (mm - ll))
        rhs = ((em[r] / comb(m, r)) / (em[s] / comb(m, s))) ** (1.0 / (r - s))
        props["newton-maclaurin"].add((rhs - lhs) / max(abs(rhs), 1e-30))
    reports = [p.report(seed) for p in props.values()]
    rate = trials * 3 / max(tries, 1)
    for r in reports:
        r.note += f" | cone acceptance rate {rate:.2f}"
    return reports


# -- exterior suite ----------------------------------------------------------------


def _exterior_configs(dims, max_size=20):
    out = []
    for n in dims:
        for p in range(1, n + 1):
            if comb(n, p) <= max_size:
                out.append((n, p))
    return out


def run_exterior_suite(trials: int, seed: int, dims=(3, 4, 5, 6)) -> list[PropertyReport]:
    """Derivation-matrix and quotient-operator battery on random samples."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    configs = _exterior_configs(dims)
    tables = {cfg: exterior.build_table(*cfg) for cfg in configs}
    line_tables: dict[int, exterior.MultiIndexTable] = {}
    props = {
        "eigenvalue-sums": _Slack(
            "eigenvalue-sums", 1e-9,
            note="spectrum of the derivation matrix vs index sums, relative"),
        "rotation-equivariance": _Slack(
            "rotation-equivariance", 1e-9,
            note="spectrum invariant under orthogonal conjugation, relative"),
        "ellipticity-gradient": _Slack(
            "ellipticity-gradient", 0.0,
            note="min_i d[(s_k/s_l)(Lam)]^(1/(k-l))/d(kappa_i) in the cone"),
        "gradient-sum-bound": _Slack(
            "gradient-sum-bound", 1e-9,
            note="sum_i d(root)/d(kappa_i) >= p (C_N^k/C_N^l)^(1/(k-l))"),
        "root-concavity": _Slack(
            "root-concavity", 1e-7,
            note="max eigenvalue of the FD Hessian of the quotient root in kappa, "
                 "normalized by the root value"),
        "inverse-convexity": _Slack(
            "inverse-convexity", 1e-8,
            note="augmented quadratic form of -(s_k/s_l)^(-1/(k-l)), unit direction"),
        "curvature-derivative-bound": _Slack(
            "curvature-derivative-bound", 1e-8,
            note="upper bound on the sigma_k second-derivative form, sigma_k-normalized"),
        "reduction-p1": _Slack(
            "reduction-p1", 1e-12,
            note="p=1 operator agrees with the direct eigenvalue quotient, relative"),
    }
    alphas = (0.5, 1.0, 2.0)
    for t in range(trials):
        n, p = configs[t % len(configs)]
        table = tables[(n, p)]
        N = table.size
        k = int(rng.integers(1, N + 1))
        l = int(rng.integers(0, k))
        # eigenvalue sums + equivariance
        A = _random_sym(rng, n, unit=False)
        W = exterior.derivation_matrix(A, table)
        ew = np.sort(np.linalg.eigvalsh(W))
        sums = np.sort(exterior.index_sums(np.linalg.eigvalsh(A), table))
        scale = max(1.0, float(np.max(np.abs(sums))))
        props["eigenvalue-sums"].add(-np.max(np.abs(ew - sums)) / scale)
        R = _rotation(rng, n)
        ew2 = np.sort(np.linalg.eigvalsh(exterior.derivation_matrix(R.T @ A @ R, table)))
        props["rotation-equivariance"].add(-np.max(np.abs(ew - ew2)) / scale)
        # ellipticity and concavity of the root in kappa
        kap, _ = sample_pk_cone(rng, table, k)
        F, grad_kappa = exterior.quotient_in_kappa(kap, k, l, table)
        root = 1.0 / (k - l)
        groot = root * F ** (root - 1.0) * grad_kappa
        props["ellipticity-gradient"].add(float(np.min(groot)))
        bound = p * (comb(N, k) / comb(N, l)) ** root
        props["gradient-sum-bound"].add(float(np.sum(groot)) - bound)
        hfd = 5e-4  # roundoff-limited below this; truncation still ~1e-9
        H = np.empty((n, n))
        base = F**root
        good = True
        for i in range(n):
            for j in range(i, n):
                dp = np.zeros(n)
                dp[i] += hfd
                dp[j] += hfd
                pts = [kap + dp, kap - dp]
                if i != j:
                    dm = np.zeros(n)
                    dm[i] += hfd
                    dm[j] -= hfd
                    pts += [kap + dm, kap - dm]
                vals = []
                for pt in pts:
                    if not exterior.in_pk_cone(pt, k, table).ok:
                        good = False
                        break
                    vals.append(exterior.quotient_in_kappa(pt, k, l, table)[0] ** root)
                if not good:
                    break
                if i == j:
                    H[i, i] = (vals[0] - 2 * base + vals[1]) / hfd**2
                else:
                    H[i, j] = H[j, i] = (vals[0] + vals[1] - vals[2] - vals[3]) / (
                        4 * hfd**2
                    )
            if not good:
                break
        if good:
            props["root-concavity"].add(
                -float(np.max(np.linalg.eigvalsh(H))) / max(1.0, base)
            )
        # inverse convexity on positive definite samples
        kpd = np.abs(rng.normal(1.0, 0.3, n)) + 0.05
        Q = _rotation(rng, n)
        apd = (Q * kpd) @ Q.T
        xi = _random_sym(rng, n)
        props["inverse-convexity"].add(
            exterior.inverse_convexity_form(apd, xi, k, l, table)
        )
        # second-derivative upper bound for sigma_k along matrix directions
        kap2, _ = sample_pk_cone(rng, table, k)
        Q2 = _rotation(rng, n)
        hmat = (Q2 * kap2) @ Q2.T
        eta = _random_sym(rng, n)
        Wh = exterior.derivation_matrix(hmat, table)
        Wd = exterior.derivation_matrix(eta, table)
        if N not in line_tables:
            line_tables[N] = exterior.build_table(N, 1)
        tline = line_tables[N]
        lhs = exterior.hessian_quadratic_form(Wh, Wd, k, 0, tline)
        point = exterior.quotient_and_gradient(Wh, k, 0, tline)
        sk = point.F
        dsk = float(np.sum(point.F_grad * Wd))
        s1 = float(np.trace(Wh))
        ds1 = float(np.trace(Wd))
        alpha = alphas[t % len(alphas)]
        rel_k = dsk / sk
        rel_1 = ds1 / s1
        rhs = sk * (rel_k - rel_1) * ((alpha + 1.0) * rel_k - (alpha - 1.0) * rel_1)
        props["curvature-derivative-bound"].add((rhs - lhs) / sk)
        # p = 1 reduction
        if p == 1:
            kap1, _ = sample_pk_cone(rng, table, k)
            a1 = np.diag(kap1)
            assert np.allclose(exterior.derivation_matrix(a1, table), a1)
            F1, _ = exterior.quotient_in_kappa(kap1, k, l, table)
            e1 = symfun.sigma_all(np.asarray(kap1))
            direct = e1[k] / e1[l]
            props["reduction-p1"].add(-abs(F1 - direct) / max(1.0, abs(direct)))
    return [p.report(seed) for p in props.values()]


# -- solution-level audits ---------------------------------------------------------


def run_solution_audits(report: SolveReport, spec: pde.ProblemSpec,
                        residual_tol: float = 1e-8) -> list[PropertyReport]:
    """Audit a solve report: residual, radial bounds, cone, convexity, scaling.

    When the residual audit fails (non-solution field), the remaining
    audits are reported as not applicable (passed = None).
    """
    seed = 0
    out = []
    field = report.u_final
    if field is None:
        return [PropertyReport("residual-sup", 0, float("nan"), residual_tol,
                               False, seed, note="no final field in report")]
    state = pde.evaluate_state(field, spec)
    if report.regime == "homogeneous" and report.gamma is not None:
        # the normalized shape satisfies the limit equation only up to the
        # O(eps) truncation of the regularization path
        from .solver import _ScaledRhs

        state = pde.evaluate_state(field, spec.with_rhs(_ScaledRhs(spec.f, report.gamma)))
        eps_last = report.audits.epsilon if report.audits else 0.0
        res_tol = max(residual_tol, 0.5 * eps_last * float(np.nanmax(np.abs(state.F))))
    else:
        res_tol = residual_tol
    res_sup = state.sup_norm
    residual_ok = bool(res_sup <= res_tol)
    out.append(PropertyReport("residual-sup", 1, res_tol - res_sup, res_tol,
                              residual_ok, seed,
                              note=f"sup-norm {res_sup:.3e}"))

    def na(name, note=""):
        return PropertyReport(name, 0, float("nan"), 0.0, None, seed, note=note)

    if not residual_ok:
        out += [na("radial-bounds", "skipped: residual audit failed"),
                na("gradient-finite", "skipped: residual audit failed"),
                na("cone-margin", "skipped: residual audit failed"),
                na("convexity-consistency", "skipped: residual audit failed"),
                na("dilation-law", "skipped: residual audit failed")]
        return out

    if report.regime == "homogeneous" and report.audits is not None:
        # the radial interval constrains the raw regularized solution, which
        # the solver audited before normalizing; reuse that record
        audit = report.audits
    else:
        audit = pde.audit_bounds(field, spec)
    if audit.c0_slack is not None:
        out.append(PropertyReport("radial-bounds", 1, audit.c0_slack,
                                  audit.c0_tolerance, bool(audit.c0_pass), seed,
                                  note=f"[{audit.interval_lo}, {audit.interval_hi}]"))
    else:
        out.append(na("radial-bounds", "no closed-form interval in this regime"))
    out.append(PropertyReport("gradient-finite", 1,
                              1.0 if audit.grad_finite else -np.inf, 0.0,
                              audit.grad_finite, seed,
                              note=f"max |grad log rho| = {audit.max_grad_log_rho:.4g}"))
    out.append(PropertyReport("cone-margin", 1, audit.cone_margin, 0.0,
                              bool(audit.cone_margin > 0), seed))
    cert = report.certificate
    if cert is None:
        out.append(na("convexity-consistency", "no certificate in report"))
    elif cert.hypothesis_q_ok and cert.hypothesis_concave:
        out.append(PropertyReport("convexity-consistency", 1,
                                  cert.min_h_eigenvalue, 0.0,
                                  bool(cert.min_h_eigenvalue > 0), seed))
    else:
        out.append(na("convexity-consistency",
                      f"hypotheses not met (min h-eig {cert.min_h_eigenvalue:.4g})"))
    # exact discrete scaling law
    if spec.regime == "nonhomogeneous":
        c = spec.exponent
        scaled = pde.evaluate_state(
            field.shifted(-np.log(2.0) / c),
            spec.with_rhs(_Doubled(spec.f)),
        )
        dev = float(np.max(np.abs(scaled.r - state.r)))
        tol = 1e-9 * max(1.0, float(np.max(np.abs(state.F))))
        out.append(PropertyReport("dilation-law", 1, tol - dev, tol,
                                  bool(dev <= tol), seed,
                                  note="f -> 2f matches rho -> 2^(1/c) rho"))
    elif spec.regime == "homogeneous":
        shifted = pde.evaluate_state(field.shifted(-np.log(2.0)), spec)
        dev = float(np.max(np.abs(shifted.r - state.r)))
        tol = 1e-10 * max(1.0, float(np.max(np.abs(state.F))))
        out.append(PropertyReport("dilation-law", 1, tol - dev, tol,
                                  bool(dev <= tol), seed,
                                  note="residual invariant under rho -> 2 rho"))
    return out


class _Doubled(pde.RhsFunction):
    kind = "scaled"

    def __init__(self, base):
        self.base = base

    def values(self, grid):
        return 2.0 * self.base.values(grid)

    def to_json(self):
        return {"type": "scaled", "scale": 2.0, "base": self.base.to_json()}


def format_reports(reports: list[PropertyReport]) -> str:
    """Fixed-width table for terminal output."""
    lines = [f"{'property':34s} {'trials':>7s} {'worst slack':>13s} {'tol':>9s} {'pass':>5s}"]
    for r in reports:
        status = "n/a" if r.passed is None else ("ok" if r.passed else "FAIL")
        slack = f"{r.worst_slack:+.3e}" if np.isfinite(r.worst_slack) else "--"
        lines.append(
            f"{r.name:34s} {r.trials:7d} {slack:>13s} {r.tolerance:9.1e} {status:>5s}"
        )
    return "\n".join(lines)
