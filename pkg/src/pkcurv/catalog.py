"""Built-in problem instances and geometry benchmarks used by tests and docs."""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .geometry import RadialField, SphereGrid
from .pde import ConstantRhs, ExpHarmonicRhs, HarmonicRhs, ProblemSpec

__all__ = [
    "PROBLEMS",
    "problem",
    "oblate_field",
    "oblate_curvatures",
]


def _s3_const():
    # exact solution: round sphere of radius 1/12
    return ProblemSpec(n=3, p=2, k=2, l=0, b=-3.0, q=0.0, f=ConstantRhs(1.0))


def _s3_exp_harmonic():
    return ProblemSpec(
        n=3, p=2, k=2, l=0, b=-3.0, q=0.0, f=ExpHarmonicRhs((0.2, 0.0, 0.0, 0.0))
    )


def _s2_mean_q1():
    # mean curvature of the pair sums on S^2 with support-function weight
    return ProblemSpec(
        n=2, p=2, k=1, l=0, b=-3.0, q=1.0, f=ExpHarmonicRhs((0.15, 0.0, 0.0))
    )


def _s2_quotient():
    return ProblemSpec(
        n=2, p=1, k=2, l=1, b=-4.0, q=0.0,
        f=HarmonicRhs(1.0, (0.0, 0.0, 0.1), floor=0.5),
    )


def _s3_homog():
    # scale invariant; gamma = 12 for unit data
    return ProblemSpec(n=3, p=2, k=2, l=0, b=-2.0, q=0.0, f=ConstantRhs(1.0))


def _s2_homog_q():
    # scale invariant through the support-function exponent; gamma = 2
    return ProblemSpec(n=2, p=2, k=1, l=0, b=-2.0, q=1.0, f=ConstantRhs(1.0))


PROBLEMS = {
    "s3-const": _s3_const,
    "s3-exp-harmonic": _s3_exp_harmonic,
    "s2-mean-q1": _s2_mean_q1,
    "s2-quotient": _s2_quotient,
    "s3-homog": _s3_homog,
    "s2-homog-q": _s2_homog_q,
}


def problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise DomainError(
            f"unknown catalog problem {name!r}; available: {sorted(PROBLEMS)}"
        ) from None


def oblate_field(grid: SphereGrid, eccentricity: float = 0.3) -> RadialField:
    """rho = (1 + e cos^2 theta)^(-1/2): an oblate ellipsoid of revolution."""
    if grid.n != 2:
        raise DomainError("the oblate benchmark lives on S^2")
    theta = grid.coords[:, 0]
    rho = (1.0 + eccentricity * np.cos(theta) ** 2) ** -0.5
    return RadialField(grid, -np.log(rho))


def oblate_curvatures(theta: np.ndarray, eccentricity: float = 0.3):
    """Closed-form principal curvatures of the oblate benchmark.

    One-dimensional surface-of-revolution formulas with hand-differentiated
    profile terms; independent of every grid operator.
    """
    e = eccentricity
    ct, st = np.cos(theta), np.sin(theta)
    w = 1.0 + e * ct**2
    rho = w**-0.5
    dw = -2.0 * e * ct * st
    ddw = -2.0 * e * np.cos(2.0 * theta)
    dr = -0.5 * w**-1.5 * dw
    ddr = 0.75 * w**-2.5 * dw**2 - 0.5 * w**-1.5 * ddw
    s = rho * st
    s1 = dr * st + rho * ct
    z1 = dr * ct - rho * st
    s2 = ddr * st + 2.0 * dr * ct - rho * st
    z2 = ddr * ct - 2.0 * dr * st - rho * ct
    w2 = s1**2 + z1**2
    kappa_meridian = (z1 * s2 - s1 * z2) / w2**1.5
    kappa_parallel = -z1 / (s * np.sqrt(w2))
    return kappa_meridian, kappa_parallel
