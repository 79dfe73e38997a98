"""Numerical audits of the population-level separation conditions.

Consistency of a contrast maximizer rests on two facts about the population
objective: every fixed parameter ``theta`` is strictly beaten by a point
``a*(theta)`` attracted toward the truth, and the advantage survives
uniformly over a small neighborhood of ``theta``.  These are population
statements, so this module certifies them numerically, by Monte Carlo with
explicit confidence bands and by closed-form convexity floors, rather than
assuming them.

`estimate_gap` certifies the pointwise advantage; `check_log_lower_bound`
and `check_jensen_bound` validate the two analytic inequalities available
to the logarithmic generator under contraction attractors; and
`check_A2_over_grid` sweeps a parameter grid, combining the pointwise
certificate with an envelope integrability proxy over a neighborhood net.
"""

from dataclasses import dataclass

import numpy as np

from .contrasts import PhiContrast, get_contrast
from .errors import VerificationError
from .estimation import EmpiricalContrast
from .models import (MixingMeasure, ParametricFamily, Rng, combine,
                     contraction, wasserstein1)

Z_99 = 2.576            # two-sided 99% normal quantile
TAIL_QUANTILE = 0.999
TAIL_RATIO_CEILING = 50.0
DEFAULT_NET_SIZE = 32
DEFAULT_MC_BUDGET = 100_000


@dataclass(frozen=True)
class AStarSpec:
    """Attractor map ``theta -> a*(theta)`` used in the separation audits.

    ``contraction`` moves a fraction ``lam`` toward the truth, ``constant``
    jumps to the truth, and ``identity`` leaves ``theta`` unchanged (useful
    as a negative control: it can never certify separation).
    """

    kind: str = "contraction"
    lam: float = 0.5

    def __post_init__(self):
        if self.kind not in ("contraction", "constant", "identity"):
            raise ValueError(f"unknown attractor kind {self.kind!r}")
        if self.kind == "contraction" and not 0.0 < self.lam < 1.0:
            raise ValueError("contraction coefficient must be in (0, 1)")

    def apply(self, theta, theta_star):
        if self.kind == "constant":
            return theta_star
        if self.kind == "identity":
            return theta
        return contraction(theta, theta_star, self.lam)


@dataclass(frozen=True)
class GapEstimate:
    """Monte Carlo estimate of a population contrast difference.

    ``ci_upper_99`` is ``mean + 2.576 * std_error``; a negative value
    certifies the difference as strictly negative at the 99% level.
    """

    mean: float
    std_error: float
    n_mc: int
    ci_upper_99: float

    @property
    def certified_negative(self) -> bool:
        return self.ci_upper_99 < 0.0


def _mc_mean(diff: np.ndarray) -> GapEstimate:
    n = diff.size
    if np.any(np.isneginf(diff)):
        # a -inf difference is strictly negative with certainty
        return GapEstimate(mean=float("-inf"), std_error=0.0, n_mc=n,
                           ci_upper_99=float("-inf"))
    mean = float(diff.mean())
    se = float(diff.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    return GapEstimate(mean=mean, std_error=se, n_mc=n,
                       ci_upper_99=mean + Z_99 * se)


def estimate_gap(contrast: PhiContrast, family, theta, a_star_of_theta,
                 theta_star, n_mc: int, rng: Rng) -> GapEstimate:
    """Estimate ``E*[m_theta - m_a*(theta)]`` from a fresh truth sample.

    All three terms of each per-observation contrast (generator value,
    reference integral, total mass) are included, so parameters of unequal
    mass compare correctly.  ``theta = theta_star`` is legal; the difference
    is then identically zero and nothing is certified.  If the attracted
    parameter itself scores ``-inf`` on a sampled point the comparison is
    vacuous and a `VerificationError` is raised; attractors are expected to
    stay where the objective is finite.
    """
    if n_mc < 2:
        raise ValueError("need at least two Monte Carlo draws")
    x = family.sample(theta_star, n_mc, rng)
    ec = EmpiricalContrast(contrast, family, x)
    m_attracted = ec.m_values(a_star_of_theta)
    if np.any(np.isneginf(m_attracted)):
        raise VerificationError(
            "attracted parameter has -inf contrast on sampled points; "
            "the gap estimate would be vacuous")
    m_theta = ec.m_values(theta)
    return _mc_mean(m_theta - m_attracted)


def check_log_lower_bound(family, theta, theta_star, lam: float, x) -> float:
    """Worst-case margin of the pointwise floor for contraction attractors.

    Mixing a fraction ``lam`` of the truth into ``theta`` multiplies the
    density by at least ``1 - lam`` at every point, so under the
    logarithmic generator the per-observation contrast can drop by at most
    ``-log(1 - lam)``.  Returns ``min over x of
    (m_attracted(x) - m_theta(x) - log(1 - lam))``, which is nonnegative up
    to rounding; a clearly negative margin falsifies the floor.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must be in (0, 1)")
    attracted = contraction(theta, theta_star, lam)
    ec = EmpiricalContrast(get_contrast("log"), family, x)
    m_attracted = ec.m_values(attracted)
    if np.any(np.isneginf(m_attracted)):
        raise VerificationError("attracted parameter scored -inf; bound is vacuous")
    m_theta = ec.m_values(theta)
    floor = float(np.log1p(-lam))
    # -inf for theta makes the margin +inf, which satisfies the floor
    margin = np.where(np.isneginf(m_theta), np.inf, m_attracted - m_theta - floor)
    return float(margin.min())


@dataclass(frozen=True)
class JensenBoundReport:
    """Two sides of the convexity floor on the population advantage.

    ``lhs`` is the advantage integral
    ``int f* log(lam * f*/f_theta + 1 - lam) dQ`` and ``rhs`` the floor
    ``log(lam / mass + 1 - lam)`` obtained by convexity; ``slack`` is their
    difference, nonnegative up to quadrature error.  When ``mass < 1`` the
    floor itself is strictly positive so the advantage is certified by mass
    deficit alone (``mass_deficit_branch``); at full mass the floor is zero
    and strictness must come from ``lhs > 0``, which happens exactly when
    the two densities differ (``needs_strict_lhs``).
    """

    lhs: float
    rhs: float
    slack: float
    mass: float
    mass_deficit_branch: bool
    needs_strict_lhs: bool


def check_jensen_bound(family, theta, theta_star, lam: float,
                       q_rule=None) -> JensenBoundReport:
    """Evaluate both sides of the convexity floor by quadrature.

    Intended for mixture families under the logarithmic generator, where
    the floor underwrites strict separation; ``theta`` may be any
    sub-probability parameter with positive mass (zero mass leaves an
    infinite advantage and is rejected).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must be in (0, 1)")
    rule = q_rule if q_rule is not None else family.q_rule
    mass = float(family.total_mass(theta))
    if mass <= 0.0:
        raise ValueError("theta has zero mass; the advantage is infinite")
    f_star = np.asarray(family.density(theta_star, rule.nodes), dtype=float)
    f_theta = np.asarray(family.density(theta, rule.nodes), dtype=float)
    support = f_star > 0
    if np.any(support & (f_theta <= 0)):
        # density ratio diverges: the advantage is +inf, the floor trivial
        lhs = float("inf")
    else:
        ratio = np.zeros_like(f_star)
        ratio[support] = f_star[support] / f_theta[support]
        integrand = np.where(support,
                             f_star * np.log(lam * ratio + (1.0 - lam)), 0.0)
        lhs = rule.integrate_values(integrand)
    rhs = float(np.log(lam / mass + (1.0 - lam)))
    mass_deficit = mass < 1.0 - 1e-9
    return JensenBoundReport(
        lhs=lhs,
        rhs=rhs,
        slack=lhs - rhs,
        mass=mass,
        mass_deficit_branch=mass_deficit,
        needs_strict_lhs=not mass_deficit,
    )


@dataclass(frozen=True)
class NeighborhoodAudit:
    """Separation evidence for one grid parameter."""

    index: int
    theta_repr: str
    gap: GapEstimate
    envelope_pos_mean: float      # mean of the positive-part envelope
    envelope_tail: float          # its TAIL_QUANTILE quantile
    tail_ratio: float
    certified_negative: bool
    integrable: bool

    @property
    def passed(self) -> bool:
        return self.certified_negative and self.integrable


@dataclass(frozen=True)
class SeparationReport:
    """Sweep of the separation conditions over a parameter grid."""

    audits: tuple
    a_star: AStarSpec
    neighborhood_radius: float
    net_size: int
    n_mc: int
    tail_ceiling: float

    @property
    def verdict(self) -> bool:
        return all(a.passed for a in self.audits)

    def to_dict(self) -> dict:
        return {
            "verdict": "PASS" if self.verdict else "FAIL",
            "a_star": {"kind": self.a_star.kind, "lam": self.a_star.lam},
            "neighborhood_radius": self.neighborhood_radius,
            "net_size": self.net_size,
            "n_mc": self.n_mc,
            "tail_ratio_ceiling": self.tail_ceiling,
            "points": [
                {
                    "index": a.index,
                    "theta": a.theta_repr,
                    "gap_mean": a.gap.mean,
                    "gap_std_error": a.gap.std_error,
                    "gap_ci_upper_99": a.gap.ci_upper_99,
                    "envelope_pos_mean": a.envelope_pos_mean,
                    "envelope_tail": a.envelope_tail,
                    "tail_ratio": a.tail_ratio,
                    "certified_negative": a.certified_negative,
                    "integrable": a.integrable,
                    "passed": a.passed,
                }
                for a in self.audits
            ],
        }


def _theta_repr(theta) -> str:
    if isinstance(theta, MixingMeasure):
        pruned = theta.pruned(1e-12)
        atoms = ", ".join(f"{a:.4g}" for a in pruned.atoms)
        weights = ", ".join(f"{w:.4g}" for w in pruned.weights)
        return f"measure(atoms=[{atoms}], weights=[{weights}])"
    return np.array2string(np.atleast_1d(np.asarray(theta, dtype=float)),
                           precision=4)


def _neighborhood_net(family, theta, radius: float, size: int, rng: Rng):
    """Parameters within ``radius`` of ``theta``, the point itself included."""
    net = [theta]
    if isinstance(family, ParametricFamily):
        dim = family.dim
        center = np.atleast_1d(np.asarray(theta, dtype=float))
        directions = rng.generator.standard_normal((size, dim))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radii = radius * rng.generator.random(size) ** (1.0 / dim)
        points = center[None, :] + directions / norms * radii[:, None]
        points = np.clip(points, family.theta_lower, family.theta_upper)
        net.extend(points)
    else:
        lo, hi = family.z_domain
        for z in rng.generator.uniform(lo, hi, size):
            spike = MixingMeasure.dirac(float(z))
            if theta.mass > 0:
                normalized = MixingMeasure(theta.atoms, theta.weights / theta.mass)
                base_dist = wasserstein1(normalized, spike)
            else:
                base_dist = radius
            frac = min(1.0, radius / base_dist) if base_dist > 0 else 1.0
            # transport convexity keeps the mix within radius of theta
            net.append(combine(theta, spike, 1.0 - frac, frac))
    return net


def check_A2_over_grid(contrast: PhiContrast, family, theta_star,
                       a_star_spec: AStarSpec, theta_grid,
                       neighborhood_radius: float,
                       net_size: int = DEFAULT_NET_SIZE,
                       n_mc: int = DEFAULT_MC_BUDGET,
                       rng: Rng = None,
                       tail_ceiling: float = TAIL_RATIO_CEILING) -> SeparationReport:
    """Certify strict separation with neighborhood control over a grid.

    For each grid parameter the attractor advantage is estimated by Monte
    Carlo and must be negative at the 99% level.  A net of ``net_size``
    parameters inside the ``neighborhood_radius`` ball is then scored
    pointwise; the positive part of the per-observation envelope (the best
    score in the net minus the attractor's score) must be finite with a
    controlled upper tail: its `TAIL_QUANTILE` quantile may exceed its mean
    by at most a factor of ``tail_ceiling``.  Failing points are recorded,
    not raised.  Every grid point gets an independent child stream of
    ``rng``, so the audit is reproducible regardless of evaluation order.
    """
    if rng is None:
        raise ValueError("an Rng is required for a reproducible audit")
    if neighborhood_radius <= 0:
        raise ValueError("neighborhood radius must be positive")
    theta_grid = list(theta_grid)
    if not theta_grid:
        raise ValueError("theta grid must be nonempty")
    audits = []
    for i, theta in enumerate(theta_grid):
        point_rng = rng.spawn(i)
        attracted = a_star_spec.apply(theta, theta_star)
        x = family.sample(theta_star, n_mc, point_rng.spawn(0))
        ec = EmpiricalContrast(contrast, family, x)
        m_attracted = ec.m_values(attracted)
        if np.any(np.isneginf(m_attracted)):
            raise VerificationError(
                "attracted parameter has -inf contrast on sampled points; "
                "the gap estimate would be vacuous")
        gap = _mc_mean(ec.m_values(theta) - m_attracted)

        envelope = np.full(x.shape, -np.inf)
        for member in _neighborhood_net(family, theta, neighborhood_radius,
                                        net_size, point_rng.spawn(1)):
            envelope = np.maximum(envelope, ec.m_values(member) - m_attracted)
        positive_part = np.maximum(envelope, 0.0)
        pos_mean = float(positive_part.mean())
        tail = float(np.quantile(positive_part, TAIL_QUANTILE))
        if tail <= 0.0:
            tail_ratio = 0.0
        else:
            tail_ratio = tail / max(pos_mean, 1e-12)
        integrable = bool(np.isfinite(positive_part).all()
                          and tail_ratio <= tail_ceiling)

        audits.append(NeighborhoodAudit(
            index=i,
            theta_repr=_theta_repr(theta),
            gap=gap,
            envelope_pos_mean=pos_mean,
            envelope_tail=tail,
            tail_ratio=float(tail_ratio),
            certified_negative=gap.certified_negative,
            integrable=integrable,
        ))
    return SeparationReport(audits=tuple(audits), a_star=a_star_spec,
                            neighborhood_radius=neighborhood_radius,
                            net_size=net_size, n_mc=n_mc,
                            tail_ceiling=tail_ceiling)
