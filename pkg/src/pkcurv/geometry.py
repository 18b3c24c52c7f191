"""Radial-graph geometry on a structured grid over S^2 or S^3.

Grid layout
-----------
Hyperspherical angles (theta_1, ..., theta_n): every colatitude axis is
cell-centred, theta_i = (j + 1/2) * pi / res, so no node sits on a pole;
the last axis is the 2*pi-periodic azimuth with theta = j * 2*pi / res.
Scalar fields extend across the poles by exact antipodal identifications
(for S^2: u(-t, phi) = u(t, phi + pi); for S^3 the analogous nested
rules), which makes every interior stencil usable everywhere, at fourth
order.  The azimuthal axis must have even length so the pi-shift lands
on grid points.

Tensors are expressed in the orthonormal frame of the round metric
(e_a = coordinate direction / scale factor), so the shape matrix of the
graph rho = e^{-u} is

    a = gbar (I + du x du + D^2 u) gbar,
    gbar = I - du x du / (v (1 + v)),   v = sqrt(1 + |du|^2),

whose eigenvalues, divided by rho*v, are the principal curvatures.  The
``embed`` path recomputes curvature straight from the position vector
with coordinate stencils and a generalized eigenproblem; it never touches
the frame formulas, so the two pipelines cross-check each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import json

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

__all__ = [
    "SphereGrid",
    "RadialField",
    "GeometryData",
    "EmbedData",
    "frame_derivatives",
    "shape_matrix",
    "shape_pieces",
    "support_function",
    "geometry_points",
    "embed",
    "codazzi_residual",
    "save_field_csv",
    "load_field_csv",
]

# fourth-order centred stencils on offsets (-2, -1, 0, 1, 2)
_OFFS = (-2, -1, 0, 1, 2)
_C1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_C2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_PAD = 2


def _cell_integral_sin(lo, hi):
    return np.cos(lo) - np.cos(hi)


def _cell_integral_sin2(lo, hi):
    anti = lambda t: 0.5 * (t - np.sin(t) * np.cos(t))
    return anti(hi) - anti(lo)


class SphereGrid:
    """Cell-centred tensor-product grid on S^n, n in {2, 3}."""

    def __init__(self, n: int, res: int):
        if n not in (2, 3):
            raise DomainError(f"grid supports n in {{2, 3}}, got n={n}")
        if res < 8 or res % 2 != 0:
            raise DomainError(f"resolution must be even and >= 8, got {res}")
        self.n = n
        self.res = res
        self.shape = (res,) * n
        self.size = res**n
        # colatitude axes span (0, pi); azimuth spans [0, 2*pi)
        self.steps = tuple([np.pi / res] * (n - 1) + [2.0 * np.pi / res])
        axes = [(np.arange(res) + 0.5) * np.pi / res for _ in range(n - 1)]
        axes.append(np.arange(res) * 2.0 * np.pi / res)
        self.axes = axes
        mesh = np.meshgrid(*axes, indexing="ij")
        self.coords = np.stack([m.ravel() for m in mesh], axis=1)
        self._mesh = mesh
        self.weights = self._quadrature_weights()
        self.pole_adjacent = self._pole_mask()

    # -- bookkeeping ---------------------------------------------------------

    def _quadrature_weights(self) -> np.ndarray:
        res = self.res
        h = np.pi / res
        t = self.axes[0]
        if self.n == 2:
            w_theta = _cell_integral_sin(t - h / 2, t + h / 2)
            w = np.outer(w_theta, np.full(res, self.steps[1]))
        else:
            w1 = _cell_integral_sin2(t - h / 2, t + h / 2)
            w2 = _cell_integral_sin(t - h / 2, t + h / 2)
            w = w1[:, None, None] * w2[None, :, None] * self.steps[2]
        return w.ravel()

    def _pole_mask(self) -> np.ndarray:
        res = self.res
        near = np.zeros(res, dtype=bool)
        near[:2] = near[-2:] = True
        if self.n == 2:
            mask = np.broadcast_to(near[:, None], self.shape)
        else:
            mask = near[:, None, None] | near[None, :, None]
            mask = np.broadcast_to(mask, self.shape)
        return mask.ravel()

    def scale_factors(self) -> list[np.ndarray]:
        """Orthonormal-frame scale factor per axis at every node."""
        c = self.coords
        if self.n == 2:
            return [np.ones(self.size), np.sin(c[:, 0])]
        return [
            np.ones(self.size),
            np.sin(c[:, 0]),
            np.sin(c[:, 0]) * np.sin(c[:, 1]),
        ]

    def unit_points(self) -> np.ndarray:
        """Embedding S^n -> R^{n+1} of the grid nodes."""
        c = self.coords
        if self.n == 2:
            t, p = c[:, 0], c[:, 1]
            return np.stack(
                [np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=1
            )
        t1, t2, t3 = c[:, 0], c[:, 1], c[:, 2]
        s1, s2 = np.sin(t1), np.sin(t2)
        return np.stack(
            [
                s1 * s2 * np.cos(t3),
                s1 * s2 * np.sin(t3),
                s1 * np.cos(t2),
                np.cos(t1),
            ],
            axis=1,
        )

    # -- scalar padding across poles ----------------------------------------

    def pad(self, values: np.ndarray) -> np.ndarray:
        """Extend a scalar grid array by the exact pole/periodic rules.

        Works for any dtype whose values are permuted verbatim (used with
        index arrays to build the sparse stencil operators).
        """
        a = np.asarray(values).reshape(self.shape)
        half = self.res // 2
        if self.n == 2:
            lo = np.roll(a[1::-1, :], -half, axis=1)
            hi = np.roll(a[-1:-3:-1, :], -half, axis=1)
            b = np.concatenate([lo, a, hi], axis=0)
            return np.concatenate([b[:, -_PAD:], b, b[:, :_PAD]], axis=1)
        lo2 = np.roll(a[:, 1::-1, :], -half, axis=2)
        hi2 = np.roll(a[:, -1:-3:-1, :], -half, axis=2)
        b = np.concatenate([lo2, a, hi2], axis=1)
        lo1 = np.roll(np.flip(b[1::-1, :, :], axis=1), -half, axis=2)
        hi1 = np.roll(np.flip(b[-1:-3:-1, :, :], axis=1), -half, axis=2)
        c = np.concatenate([lo1, b, hi1], axis=0)
        return np.concatenate([c[:, :, -_PAD:], c, c[:, :, :_PAD]], axis=2)

    @cached_property
    def _pad_index(self) -> np.ndarray:
        return self.pad(np.arange(self.size, dtype=np.intp))

    # -- sparse stencil operators ---------------------------------------------

    def _window(self, arr: np.ndarray, shifts: tuple[int, ...]) -> np.ndarray:
        sl = tuple(
            slice(_PAD + s, _PAD + s + m) for s, m in zip(shifts, self.shape)
        )
        return arr[sl]

    def _stencil_op(self, terms) -> sp.csr_matrix:
        """Assemble sum_t coeff_t * shift_t as one sparse matrix."""
        idx = self._pad_index
        rows, cols, data = [], [], []
        base = np.arange(self.size, dtype=np.intp)
        for shifts, coeff in terms:
            cols.append(self._window(idx, shifts).ravel())
            rows.append(base)
            data.append(np.full(self.size, coeff))
        mat = sp.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        )
        return mat.tocsr()

    def _axis_terms(self, axis: int, coeffs: np.ndarray, power: int):
        h = self.steps[axis]
        out = []
        for off, c in zip(_OFFS, coeffs):
            if c == 0.0:
                continue
            shifts = [0] * self.n
            shifts[axis] = off
            out.append((tuple(shifts), c / h**power))
        return out

    @cached_property
    def partial_ops(self) -> dict:
        """Coordinate partial-derivative operators: d_a and d_a d_b."""
        ops = {}
        for a in range(self.n):
            ops[(a,)] = self._stencil_op(self._axis_terms(a, _C1, 1))
            ops[(a, a)] = self._stencil_op(self._axis_terms(a, _C2, 2))
        for a in range(self.n):
            for b in range(a + 1, self.n):
                terms = []
                for oa, ca in zip(_OFFS, _C1):
                    if ca == 0.0:
                        continue
                    for ob, cb in zip(_OFFS, _C1):
                        if cb == 0.0:
                            continue
                        shifts = [0] * self.n
                        shifts[a], shifts[b] = oa, ob
                        terms.append(
                            (tuple(shifts), ca * cb / (self.steps[a] * self.steps[b]))
                        )
                ops[(a, b)] = self._stencil_op(terms)
        return ops

    def _christoffel_terms(self):
        """Gamma^c_{ab} coefficient fields of the round metric, nonzero only
        for the nested colatitude structure."""
        c = self.coords
        if self.n == 2:
            t = c[:, 0]
            return {
                (0, 1): [(1, np.cos(t) / np.sin(t))],
                (1, 1): [(0, -np.sin(t) * np.cos(t))],
            }
        t1, t2 = c[:, 0], c[:, 1]
        cot1 = np.cos(t1) / np.sin(t1)
        cot2 = np.cos(t2) / np.sin(t2)
        return {
            (0, 1): [(1, cot1)],
            (0, 2): [(2, cot1)],
            (1, 1): [(0, -np.sin(t1) * np.cos(t1))],
            (1, 2): [(2, cot2)],
            (2, 2): [
                (0, -np.sin(t1) * np.cos(t1) * np.sin(t2) ** 2),
                (1, -np.sin(t2) * np.cos(t2)),
            ],
        }

    @cached_property
    def frame_gradient_ops(self) -> list[sp.csr_matrix]:
        scales = self.scale_factors()
        return [
            sp.diags(1.0 / scales[a]) @ self.partial_ops[(a,)] for a in range(self.n)
        ]

    @cached_property
    def frame_hessian_ops(self) -> dict:
        """Covariant Hessian in the orthonormal frame, upper-triangle keys."""
        scales = self.scale_factors()
        gamma = self._christoffel_terms()
        ops = {}
        for a in range(self.n):
            for b in range(a, self.n):
                m = self.partial_ops[(a, b)].copy()
                for axis, coeff in gamma.get((a, b), []):
                    m = m - sp.diags(coeff) @ self.partial_ops[(axis,)]
                ops[(a, b)] = sp.diags(1.0 / (scales[a] * scales[b])) @ m
        return ops

    # -- field-level derivative evaluation ------------------------------------

    def gradient(self, u: np.ndarray) -> np.ndarray:
        # constant part is annihilated exactly; removing it first keeps the
        # pole-frame 1/sin factors from amplifying its roundoff
        u = np.asarray(u, dtype=float).ravel()
        u = u - u.mean()
        return np.stack([op @ u for op in self.frame_gradient_ops], axis=1)

    def hessian(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float).ravel()
        u = u - u.mean()
        out = np.empty((self.size, self.n, self.n))
        for (a, b), op in self.frame_hessian_ops.items():
            v = op @ u
            out[:, a, b] = v
            out[:, b, a] = v
        return out

    def to_json(self) -> dict:
        return {"n": self.n, "res": self.res}

    @classmethod
    def from_json(cls, obj: dict) -> "SphereGrid":
        return cls(int(obj["n"]), int(obj["res"]))


@dataclass
class RadialField:
    """Scalar field u = -log(rho) on a sphere grid.

    The constant part of u may be carried in ``offset`` (a plain scalar)
    so the per-node array keeps small values and full relative precision;
    derivatives never see the offset, and shifts through ``shifted`` are
    exact.  Total value at a node is u[i] + offset.
    """

    grid: SphereGrid
    u: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).ravel()
        if self.u.shape != (self.grid.size,):
            raise DomainError(
                f"field length {self.u.size} does not match grid size {self.grid.size}"
            )
        if not np.all(np.isfinite(self.u)) or not np.isfinite(self.offset):
            raise DomainError("field values must be finite")

    @classmethod
    def constant(cls, grid: SphereGrid, value: float = 0.0) -> "RadialField":
        return cls(grid, np.zeros(grid.size), offset=float(value))

    @property
    def total_u(self) -> np.ndarray:
        return self.u + self.offset

    @property
    def rho(self) -> np.ndarray:
        return np.exp(-(self.u + self.offset))

    def shifted(self, c: float) -> "RadialField":
        return RadialField(self.grid, self.u, offset=self.offset + float(c))


def frame_derivatives(field: RadialField):
    """Orthonormal-frame gradient (M, n) and covariant Hessian (M, n, n)."""
    return field.grid.gradient(field.u), field.grid.hessian(field.u)


def shape_pieces(grad: np.ndarray, hess: np.ndarray):
    """(v, gbar, hbar, a) for batched frame data."""
    n = grad.shape[-1]
    eye = np.eye(n)
    v = np.sqrt(1.0 + np.sum(grad**2, axis=-1))
    beta = 1.0 / (v * (1.0 + v))
    outer = grad[..., :, None] * grad[..., None, :]
    gbar = eye - beta[..., None, None] * outer
    hbar = eye + outer + hess
    a = gbar @ hbar @ gbar
    return v, gbar, hbar, a


def shape_matrix(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """Scale-invariant shape matrix a = gbar (I + du x du + D^2 u) gbar."""
    return shape_pieces(np.asarray(grad, float), np.asarray(hess, float))[3]


def support_function(rho, grad_rho):
    """Support <X, nu> = rho^2 (rho^2 + |grad rho|^2)^(-1/2) of a radial graph."""
    rho = np.asarray(rho, dtype=float)
    g = np.asarray(grad_rho, dtype=float)
    g2 = g**2 if g.ndim == rho.ndim else np.sum(g**2, axis=-1)
    return rho**2 / np.sqrt(rho**2 + g2)


@dataclass
class GeometryData:
    """Pointwise geometry of the radial graph, frame pipeline."""

    rho: np.ndarray
    grad_u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    kappa_a: np.ndarray
    kappa: np.ndarray  # principal curvatures = kappa_a / (rho * v)
    support: np.ndarray


def geometry_points(field: RadialField) -> GeometryData:
    grad, hess = frame_derivatives(field)
    v, _, _, a = shape_pieces(grad, hess)
    kappa_a = np.linalg.eigvalsh(a)
    rho = field.rho
    kappa = kappa_a / (rho * v)[:, None]
    return GeometryData(
        rho=rho,
        grad_u=grad,
        v=v,
        a=a,
        kappa_a=kappa_a,
        kappa=kappa,
        support=rho / v,
    )


@dataclass
class EmbedData:
    """Embedding-side geometry, computed only from the position vector."""

    X: np.ndarray
    nu: np.ndarray
    g: np.ndarray  # induced metric, coordinate basis
    h: np.ndarray  # second fundamental form, coordinate basis
    support: np.ndarray
    kappa: np.ndarray  # generalized eigenvalues of (h, g)


def _normal_from_tangents(T: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Unit normal orthogonal to the rows of T, oriented outward (<nu,x> > 0)."""
    M, n, dim = T.shape
    if n == 2:
        nu = np.cross(T[:, 0, :], T[:, 1, :])
    else:
        nu = np.empty((M, 4))
        for A in range(4):
            cols = [c for c in range(4) if c != A]
            minors = np.linalg.det(T[:, :, cols])
            nu[:, A] = ((-1) ** A) * minors
    sign = np.sign(np.sum(nu * x, axis=1))
    sign[sign == 0] = 1.0
    nu *= sign[:, None]
    return nu / np.linalg.norm(nu, axis=1, keepdims=True)


def embed(field: RadialField) -> EmbedData:
    """Position, normal, fundamental forms and curvatures of the graph.

    Uses coordinate stencils on the ambient components of X = rho * x and
    a generalized symmetric eigenproblem det(h - kappa g) = 0, so the
    result is independent of the frame/Christoffel machinery.
    """
    grid = field.grid
    n, M = grid.n, grid.size
    x = grid.unit_points()
    X = field.rho[:, None] * x
    ops = grid.partial_ops
    T = np.empty((M, n, n + 1))
    S = np.empty((M, n, n, n + 1))
    for A in range(n + 1):
        col = X[:, A]
        for a in range(n):
            T[:, a, A] = ops[(a,)] @ col
        for a in range(n):
            for b in range(a, n):
                val = ops[(a, b)] @ col
                S[:, a, b, A] = val
                S[:, b, a, A] = val
    nu = _normal_from_tangents(T, x)
    g = np.einsum("maA,mbA->mab", T, T)
    h = -np.einsum("mabA,mA->mab", S, nu)
    support = np.sum(X * nu, axis=1)
    L = np.linalg.cholesky(g)
    tmp = np.linalg.solve(L, h)
    sym = np.linalg.solve(L, np.transpose(tmp, (0, 2, 1)))
    kappa = np.linalg.eigvalsh(0.5 * (sym + np.transpose(sym, (0, 2, 1))))
    return EmbedData(X=X, nu=nu, g=g, h=h, support=support, kappa=kappa)


# -- Codazzi symmetry diagnostic (n = 2, interior band) -----------------------


def _band_dtheta(arr: np.ndarray, h: float) -> np.ndarray:
    out = np.full_like(arr, np.nan)
    m = arr.shape[0]
    acc = np.zeros_like(arr[2 : m - 2])
    for off, c in zip(_OFFS, _C1):
        if c != 0.0:
            acc += c * arr[2 + off : m - 2 + off]
    out[2 : m - 2] = acc / h
    return out


def _dphi(arr: np.ndarray, h: float) -> np.ndarray:
    acc = np.zeros_like(arr)
    for off, c in zip(_OFFS, _C1):
        if c != 0.0:
            acc += c * np.roll(arr, -off, axis=1)
    return acc / h


def codazzi_residual(field: RadialField) -> float:
    """Max |grad_k h_ij - grad_j h_ik| over an interior latitude band.

    Discretization-consistency diagnostic (the continuum value is zero);
    n = 2 only.  Tensor components are differentiated in coordinates, so
    the two pole-adjacent rows on each side are excluded.
    """
    grid = field.grid
    if grid.n != 2:
        raise DomainError("codazzi diagnostic is implemented for n = 2 only")
    m0, m1 = grid.shape
    ht, hp = grid.steps
    data = embed(field)
    g = data.g.reshape(m0, m1, 2, 2)
    h = data.h.reshape(m0, m1, 2, 2)
    dg = np.empty((2, m0, m1, 2, 2))
    dh = np.empty((2, m0, m1, 2, 2))
    for i in range(2):
        for j in range(2):
            dg[0, :, :, i, j] = _band_dtheta(g[:, :, i, j], ht)
            dg[1, :, :, i, j] = _dphi(g[:, :, i, j], hp)
            dh[0, :, :, i, j] = _band_dtheta(h[:, :, i, j], ht)
            dh[1, :, :, i, j] = _dphi(h[:, :, i, j], hp)
    ginv = np.linalg.inv(g)
    dgt = dg.transpose(1, 2, 0, 3, 4)  # [theta, phi, k, i, j]
    # Gamma^m_{ki} = 1/2 g^{ml} (d_k g_li + d_i g_lk - d_l g_ki)
    gamma = 0.5 * np.einsum("tpml,tpkli->tpmki", ginv, dgt)
    gamma += 0.5 * np.einsum("tpml,tpilk->tpmki", ginv, dgt)
    gamma -= 0.5 * np.einsum("tpml,tplki->tpmki", ginv, dgt)
    dht = dh.transpose(1, 2, 0, 3, 4)
    # residual_kij = d_k h_ij - d_j h_ik - Gamma^m_{ki} h_mj + Gamma^m_{ij} h_mk
    res = (
        np.einsum("tpkij->tpkij", dht)
        - np.einsum("tpjik->tpkij", dht)
        - np.einsum("tpmki,tpmj->tpkij", gamma, h)
        + np.einsum("tpmij,tpmk->tpkij", gamma, h)
    )
    band = res[2 : m0 - 2]
    return float(np.nanmax(np.abs(band)))


# -- field import/export -------------------------------------------------------


def save_field_csv(field: RadialField, path) -> None:
    grid = field.grid
    cols = [grid.coords[:, a] for a in range(grid.n)] + [field.total_u, field.rho]
    header = ",".join([f"theta_{a+1}" for a in range(grid.n)] + ["u", "rho"])
    np.savetxt(
        path,
        np.column_stack(cols),
        delimiter=",",
        header=header,
        comments="",
        fmt="%.17g",
    )
    meta = json.dumps(grid.to_json())
    with open(str(path) + ".json", "w") as fh:
        fh.write(meta + "\n")


def load_field_csv(path, grid: SphereGrid | None = None) -> RadialField:
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if grid is None:
        try:
            with open(str(path) + ".json") as fh:
                grid = SphereGrid.from_json(json.load(fh))
        except FileNotFoundError:
            n = raw.shape[1] - 2
            res = round(raw.shape[0] ** (1.0 / n))
            grid = SphereGrid(n, res)
    if raw.shape[0] != grid.size:
        raise DomainError(
            f"csv has {raw.shape[0]} rows, grid expects {grid.size}"
        )
    if np.max(np.abs(raw[:, : grid.n] - grid.coords)) > 1e-9:
        raise DomainError("csv node coordinates do not match the grid")
    return RadialField(grid, raw[:, grid.n])
