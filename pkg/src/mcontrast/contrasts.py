"""Contrast families generated by a scalar transform of density values.

A contrast family is built from a strictly increasing generator ``phi`` on
``(0, inf)``.  Two derived quantities drive everything else:

* the integrated-slope transform ``psi(u) = int_0^u v * phi'(v) dv``, and
* the pairing ``theta(u, v) = u * phi(v) - psi(v)``.

For a fixed first argument the pairing is maximized exactly on the diagonal
``v = u``, so ``theta_gap(u, v) = theta(u, v) - theta(u, u)`` is nonpositive
and vanishes only at ``v = u``.  Averaging ``theta`` against data produces
per-observation contrast values (`m_value`) whose population maximizer is the
data-generating parameter; that is the mechanism the estimation layer relies
on.

Generators are evaluated elementwise: ``phi`` and ``phi_prime`` must accept
scalars and ndarrays alike.  Nonpositive density arguments raise
`ContrastDomainError` except where an explicit zero-density limit exists,
in which case `m_value` returns ``-inf`` as an explicit sentinel.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContrastDomainError
from .quadrature import integrate_adaptive

NEG_INF = float("-inf")

# module-level numerical configuration
PSI_QUAD_ABS_TOL = 1e-10
PSI_QUAD_LIMIT = 2 ** 15
FIRST_DIFF_STEP = 1e-6
SECOND_DIFF_STEP = 1e-5
CONCAVITY_TOL = 1e-7


@dataclass(frozen=True)
class PhiContrast:
    """A contrast family described by its generator.

    Parameters
    ----------
    name : str
        Registry identifier.
    phi : callable
        Strictly increasing generator on ``(0, inf)``, vectorized.
    phi_prime : callable
        Derivative of ``phi``, vectorized.
    psi_closed_form : callable or None
        Closed form of the integrated-slope transform when one exists;
        ``None`` means `psi` falls back to adaptive quadrature.
    bounded : bool
        Whether ``phi`` is bounded above on ``(0, inf)``.
    """

    name: str
    phi: Callable
    phi_prime: Callable
    psi_closed_form: Callable | None = None
    bounded: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("contrast needs a nonempty name")


def _require_positive(values, what: str):
    values = np.asarray(values, dtype=float)
    if values.size and (np.any(values <= 0) or np.any(~np.isfinite(values))):
        raise ContrastDomainError(f"{what} must be finite and strictly positive")
    return values


def _scalar_like(result, *inputs):
    # return a bare float when every input was scalar
    if all(np.ndim(x) == 0 for x in inputs):
        return float(np.asarray(result))
    return np.asarray(result, dtype=float)


def psi(contrast: PhiContrast, u):
    """Integrated-slope transform ``int_0^u v * phi'(v) dv``.

    Accepts scalars or arrays with ``u > 0``.  Uses the registered closed
    form when available, otherwise adaptive quadrature to absolute tolerance
    `PSI_QUAD_ABS_TOL`.
    """
    u_arr = _require_positive(u, "psi argument")
    if contrast.psi_closed_form is not None:
        return _scalar_like(contrast.psi_closed_form(u_arr), u)
    flat = np.atleast_1d(u_arr).ravel()
    out = np.empty(flat.shape)
    integrand = lambda v: v * contrast.phi_prime(v)
    for i, ui in enumerate(flat):
        out[i] = integrate_adaptive(integrand, 0.0, float(ui),
                                    abs_tol=PSI_QUAD_ABS_TOL, limit=PSI_QUAD_LIMIT)
    return _scalar_like(out.reshape(np.shape(u_arr)), u)


def theta(contrast: PhiContrast, u, v):
    """Pairing ``u * phi(v) - psi(v)`` for positive ``u`` and ``v``.

    Linear in ``u`` for fixed ``v``; maximized over ``v`` at ``v = u``.
    Scalar or broadcastable array arguments.
    """
    u_arr = _require_positive(u, "first pairing argument")
    v_arr = _require_positive(v, "second pairing argument")
    value = u_arr * contrast.phi(v_arr) - psi(contrast, v_arr)
    return _scalar_like(value, u, v)


def theta_gap(contrast: PhiContrast, u, v):
    """Diagonal deficit ``theta(u, v) - theta(u, u)``; nonpositive, zero iff ``v = u``."""
    u_arr = _require_positive(u, "first pairing argument")
    v_arr = _require_positive(v, "second pairing argument")
    u_arr, v_arr = np.broadcast_arrays(u_arr, v_arr)
    value = (u_arr * (contrast.phi(v_arr) - contrast.phi(u_arr))
             - psi(contrast, v_arr) + psi(contrast, u_arr))
    return _scalar_like(value, u, v)


@dataclass(frozen=True)
class ConcavityCheck:
    """Pointwise numerical evidence for the simplex-concavity conditions."""

    v: float
    phi_curvature: float          # phi'' via central difference of phi_prime
    phi_slope: float              # phi_prime(v)
    transform_curvature: float    # phi'(v) + v * phi''(v), curvature of psi
    phi_concave: bool
    phi_nondecreasing: bool
    transform_convex: bool

    @property
    def ok(self) -> bool:
        return self.phi_concave and self.phi_nondecreasing and self.transform_convex


@dataclass(frozen=True)
class ConcavityReport:
    """Result of `check_concavity_condition` over a grid."""

    checks: tuple[ConcavityCheck, ...]
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def violations(self) -> tuple[ConcavityCheck, ...]:
        return tuple(c for c in self.checks if not c.ok)


def check_concavity_condition(contrast: PhiContrast, grid, tol: float = CONCAVITY_TOL) -> ConcavityReport:
    """Probe whether mixture objectives built from ``contrast`` are concave.

    The objective over mixing weights is concave exactly when, on the range
    of density values that occur, ``phi`` is concave and nondecreasing and
    the integrated-slope transform is convex, i.e.
    ``phi'(v) + v * phi''(v) >= 0``.  The curvature is estimated by a
    central finite difference of ``phi_prime`` with step
    ``SECOND_DIFF_STEP * max(v, 1)`` (a raw second difference of ``phi``
    values would carry rounding noise of order ``eps * v / h^2``, enough to
    flip the verdict for a linear generator); each flag allows slack
    ``tol``.
    """
    grid = _require_positive(grid, "concavity probe grid")
    checks = []
    for v in np.atleast_1d(grid).ravel():
        v = float(v)
        h = SECOND_DIFF_STEP * max(v, 1.0)
        if h >= v:
            h = v / 2.0
        slope_m, slope_p = (float(contrast.phi_prime(x)) for x in (v - h, v + h))
        phi_curv = (slope_p - slope_m) / (2.0 * h)
        phi_slope = float(contrast.phi_prime(v))
        transform_curv = phi_slope + v * phi_curv
        checks.append(ConcavityCheck(
            v=v,
            phi_curvature=phi_curv,
            phi_slope=phi_slope,
            transform_curvature=transform_curv,
            phi_concave=phi_curv <= tol,
            phi_nondecreasing=phi_slope >= -tol,
            transform_convex=transform_curv >= -tol,
        ))
    return ConcavityReport(checks=tuple(checks), tol=tol)


def m_value(contrast: PhiContrast, density_at_x: float, psi_integral: float,
            total_mass: float) -> float:
    """Per-observation contrast ``phi(f(x)) - int psi(f) dQ + total_mass``.

    ``density_at_x`` may be zero when ``phi`` has a well-defined limit there
    (for instance a logarithmic generator), in which case the value ``-inf``
    is returned as an explicit sentinel; negative densities are a domain
    error.  ``psi_integral`` and ``total_mass`` must be finite.
    """
    d = float(density_at_x)
    if not np.isfinite(d) or d < 0:
        raise ContrastDomainError(f"density value must be finite and >= 0, got {d}")
    if not (np.isfinite(psi_integral) and np.isfinite(total_mass)):
        raise ValueError("psi_integral and total_mass must be finite")
    if d == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            phi_val = float(np.asarray(contrast.phi(0.0)))
        if np.isnan(phi_val):
            raise ContrastDomainError(
                f"generator {contrast.name!r} has no zero-density limit"
            )
    else:
        phi_val = float(np.asarray(contrast.phi(d)))
    if phi_val == NEG_INF:
        return NEG_INF
    return phi_val - float(psi_integral) + float(total_mass)


def log_contrast() -> PhiContrast:
    """Logarithmic generator; recovers average log-density contrasts."""
    return PhiContrast(
        name="log",
        phi=np.log,
        phi_prime=lambda u: 1.0 / np.asarray(u, dtype=float),
        psi_closed_form=lambda u: np.asarray(u, dtype=float),
        bounded=False,
    )


def identity_contrast() -> PhiContrast:
    """Identity generator; pairing is ``u * v - v**2 / 2``."""
    return PhiContrast(
        name="identity",
        phi=lambda u: np.asarray(u, dtype=float),
        phi_prime=lambda u: np.ones_like(np.asarray(u, dtype=float)),
        psi_closed_form=lambda u: np.asarray(u, dtype=float) ** 2 / 2.0,
        bounded=False,
    )


def inv_sq_1p_contrast() -> PhiContrast:
    """Bounded generator ``-(1 + u)**-2`` with transform ``u**2 / (1 + u)**2``."""
    return PhiContrast(
        name="inv_sq_1p",
        phi=lambda u: -(1.0 + np.asarray(u, dtype=float)) ** -2,
        phi_prime=lambda u: 2.0 * (1.0 + np.asarray(u, dtype=float)) ** -3,
        psi_closed_form=lambda u: (lambda a: a * a / ((1.0 + a) * (1.0 + a)))(
            np.asarray(u, dtype=float)),
        bounded=True,
    )


def inv_1p_sq_contrast() -> PhiContrast:
    """Bounded generator ``-1 / (1 + u**2)``; transform left to quadrature."""
    return PhiContrast(
        name="inv_1p_sq",
        phi=lambda u: -1.0 / (1.0 + np.asarray(u, dtype=float) ** 2),
        phi_prime=lambda u: (lambda a: 2.0 * a / (1.0 + a * a) ** 2)(
            np.asarray(u, dtype=float)),
        psi_closed_form=None,
        bounded=True,
    )


CONTRAST_FACTORIES = {
    "log": log_contrast,
    "identity": identity_contrast,
    "inv_sq_1p": inv_sq_1p_contrast,
    "inv_1p_sq": inv_1p_sq_contrast,
}


def get_contrast(name: str) -> PhiContrast:
    """Build a registered contrast family by name."""
    try:
        factory = CONTRAST_FACTORIES[name]
    except KeyError:
        known = ", ".join(sorted(CONTRAST_FACTORIES))
        raise ValueError(f"unknown contrast {name!r}; known: {known}") from None
    return factory()
