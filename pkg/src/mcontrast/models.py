"""Observation models: finite mixing measures, mixture kernels, location families.

Two kinds of model live here.  A `ParametricFamily` indexes densities by a
vector in a box.  A `MixtureFamily` indexes densities by a `MixingMeasure`,
a finite atomic measure of total mass at most one pushed through a kernel
``k(x, z)``; mass strictly below one is allowed and simply scales the
density.  Both expose the same surface the estimation layer needs: density
values, total mass of the modeled measure, and seeded sampling.

Randomness is counter-based: every `Rng` is derived from an explicit integer
key path, so replicate ``r`` of an experiment with master seed ``s`` uses a
stream determined by ``(s, ..., r)`` alone, independent of execution order.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .contrasts import PhiContrast, psi as psi_transform
from .quadrature import QuadratureRule, gauss_legendre

MASS_SLACK = 1e-12
ATOM_MERGE_TOL = 1e-9


class Rng:
    """Deterministic random stream keyed by a path of nonnegative integers.

    Wraps a counter-based bit generator seeded through an entropy mix of the
    full key path.  Identical key paths give identical streams on every
    platform and thread layout; `spawn` extends the path to produce
    independent child streams.
    """

    def __init__(self, *key: int):
        if not key:
            raise ValueError("Rng needs at least one integer key")
        self.key = tuple(int(k) for k in key)
        if any(k < 0 for k in self.key):
            raise ValueError("Rng keys must be nonnegative integers")
        seq = np.random.SeedSequence(self.key)
        self.generator = np.random.Generator(np.random.Philox(seed=seq))

    def spawn(self, *subkey: int) -> "Rng":
        """Child stream keyed by ``self.key + subkey``; independent of the parent."""
        return Rng(*self.key, *subkey)

    def __repr__(self):
        return f"Rng{self.key!r}"


@dataclass(frozen=True, eq=False)
class MixingMeasure:
    """Finite atomic measure ``sum_j w_j * delta(z_j)`` with mass at most one.

    Atoms are strictly increasing; weights are nonnegative and sum to at
    most ``1 + MASS_SLACK``.  Zero weights are legal (a fixed support grid
    with inactive atoms is a common state for the simplex optimizers).
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if atoms.ndim != 1 or atoms.shape != weights.shape:
            raise ValueError("atoms and weights must be 1-d arrays of equal length")
        if atoms.size == 0:
            raise ValueError("mixing measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if np.any(np.diff(atoms) <= 0):
            raise ValueError("atoms must be strictly increasing")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        if weights.sum() > 1.0 + MASS_SLACK:
            raise ValueError(f"total mass {weights.sum()} exceeds 1 + {MASS_SLACK}")

    @classmethod
    def dirac(cls, z: float) -> "MixingMeasure":
        return cls(atoms=np.array([float(z)]), weights=np.array([1.0]))

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= MASS_SLACK

    def scaled(self, alpha: float) -> "MixingMeasure":
        """Same atoms, weights multiplied by ``alpha`` in ``[0, 1]``."""
        if not 0.0 <= alpha <= 1.0 + MASS_SLACK:
            raise ValueError("scale factor must lie in [0, 1]")
        return MixingMeasure(self.atoms, self.weights * alpha)

    def pruned(self, min_weight: float = 0.0) -> "MixingMeasure":
        """Drop atoms with weight <= ``min_weight`` (keeps one atom minimum)."""
        keep = self.weights > min_weight
        if not keep.any():
            # totally pruned: represent as a single zero-weight atom
            return MixingMeasure(self.atoms[:1], np.zeros(1))
        return MixingMeasure(self.atoms[keep], self.weights[keep])


def merge_close_atoms(atoms, weights, tol: float = ATOM_MERGE_TOL):
    """Sort atoms and pool weights of atoms closer than ``tol``.

    Returns arrays forming a valid strictly increasing support.  The merged
    atom keeps the position of the first member of each run; with runs no
    wider than ``tol`` this moves no mass further than ``tol``.
    """
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(atoms, kind="stable")
    atoms, weights = atoms[order], weights[order]
    merged_a, merged_w = [atoms[0]], [weights[0]]
    for a, w in zip(atoms[1:], weights[1:]):
        if a - merged_a[-1] <= tol:
            merged_w[-1] += w
        else:
            merged_a.append(a)
            merged_w.append(w)
    return np.array(merged_a), np.array(merged_w)


def combine(first: MixingMeasure, second: MixingMeasure, coef_first: float,
            coef_second: float) -> MixingMeasure:
    """Linear combination ``coef_first * first + coef_second * second``.

    Coefficients must be nonnegative with a combined mass of at most one.
    Atoms closer than `ATOM_MERGE_TOL` are pooled.
    """
    if coef_first < 0 or coef_second < 0:
        raise ValueError("combination coefficients must be nonnegative")
    atoms = np.concatenate([first.atoms, second.atoms])
    weights = np.concatenate([coef_first * first.weights,
                              coef_second * second.weights])
    atoms, weights = merge_close_atoms(atoms, weights)
    return MixingMeasure(atoms, weights)


def contraction(theta, theta_star, lam: float):
    """Move ``theta`` a fraction ``lam`` of the way toward ``theta_star``.

    For vector parameters this is the convex combination
    ``lam * theta_star + (1 - lam) * theta``; for mixing measures it is the
    corresponding mixture of measures.  ``lam`` must lie in ``(0, 1)``.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"contraction coefficient must be in (0, 1), got {lam}")
    if isinstance(theta, MixingMeasure):
        if not isinstance(theta_star, MixingMeasure):
            raise TypeError("cannot contract a mixing measure toward a vector")
        return combine(theta_star, theta, lam, 1.0 - lam)
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    return lam * theta_star + (1.0 - lam) * theta


def wasserstein1(mu: MixingMeasure, nu: MixingMeasure) -> float:
    """First-order transport distance between two probability mixing measures.

    Both measures must have mass one (normalize sub-probability measures
    first; mass mismatch makes the transport problem infeasible).  Computed
    exactly as the integral of ``|CDF_mu - CDF_nu|`` over the merged atom
    grid.
    """
    if not (mu.is_probability and nu.is_probability):
        raise ValueError("transport distance needs two probability measures")
    support = np.union1d(mu.atoms, nu.atoms)
    cdf_mu = _cdf_on(mu, support)
    cdf_nu = _cdf_on(nu, support)
    gaps = np.diff(support)
    return float(np.sum(np.abs(cdf_mu[:-1] - cdf_nu[:-1]) * gaps))


def _cdf_on(measure: MixingMeasure, points: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(measure.atoms, points, side="right")
    cum = np.concatenate([[0.0], np.cumsum(measure.weights)])
    return cum[idx]


@dataclass(frozen=True, eq=False)
class MixtureKernel:
    """Jointly continuous kernel ``k(x, z) > 0`` with a seeded sampler.

    ``evaluate(x, z)`` broadcasts over its arguments and must be a
    probability density in ``x`` over ``x_domain`` for every latent value;
    ``sample_given_z`` draws one observation for each entry of a
    latent-value array, confined to ``x_domain`` by rejection so samples
    and density agree on the truncated window.
    """

    name: str
    x_domain: tuple[float, float]
    z_domain: tuple[float, float]
    evaluate: Callable
    sample_given_z: Callable

    def matrix(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Kernel matrix ``K[i, j] = k(x_i, z_j)``."""
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return self.evaluate(x[:, None], z[None, :])


@dataclass(frozen=True, eq=False)
class MixtureFamily:
    """Densities ``f_theta(x) = sum_j w_j * k(x, z_j)`` for mixing measures theta."""

    kernel: MixtureKernel
    q_rule: QuadratureRule

    @property
    def name(self) -> str:
        return self.kernel.name

    @property
    def x_domain(self) -> tuple[float, float]:
        return self.kernel.x_domain

    @property
    def z_domain(self) -> tuple[float, float]:
        return self.kernel.z_domain

    def density(self, theta: MixingMeasure, x) -> np.ndarray:
        return mixture_density(self.kernel, theta, x)

    def total_mass(self, theta: MixingMeasure) -> float:
        # the kernel is a probability density in x for every z
        return theta.mass

    def sample(self, theta: MixingMeasure, n: int, rng: Rng) -> np.ndarray:
        return sample_mixture(self.kernel, theta, n, rng)

    def contains(self, theta) -> bool:
        if not isinstance(theta, MixingMeasure):
            return False
        lo, hi = self.z_domain
        return bool(np.all(theta.atoms >= lo) and np.all(theta.atoms <= hi))

    def default_support(self, size: int = 201) -> np.ndarray:
        lo, hi = self.z_domain
        return np.linspace(lo, hi, size)


def mixture_density(kernel: MixtureKernel, theta: MixingMeasure, x) -> np.ndarray:
    """Evaluate ``sum_j w_j * k(x, z_j)`` at each point of ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return kernel.matrix(x, theta.atoms) @ theta.weights


def sample_mixture(kernel: MixtureKernel, theta: MixingMeasure, n: int, rng: Rng) -> np.ndarray:
    """Draw ``n`` observations from the mixture; ``theta`` must have mass one."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    if not theta.is_probability:
        raise ValueError("can only sample from a probability mixing measure")
    p = theta.weights / theta.weights.sum()
    idx = rng.generator.choice(theta.atoms.size, size=n, p=p)
    return kernel.sample_given_z(theta.atoms[idx], rng)


@dataclass(frozen=True, eq=False)
class ParametricFamily:
    """Densities indexed by a vector parameter confined to a box."""

    name: str
    theta_lower: np.ndarray
    theta_upper: np.ndarray
    true_theta: np.ndarray
    x_domain: tuple[float, float]
    q_rule: QuadratureRule
    density_fn: Callable
    sampler: Callable

    def __post_init__(self):
        for attr in ("theta_lower", "theta_upper", "true_theta"):
            object.__setattr__(self, attr,
                               np.atleast_1d(np.asarray(getattr(self, attr), dtype=float)))
        if not (self.theta_lower.shape == self.theta_upper.shape == self.true_theta.shape):
            raise ValueError("parameter box and true parameter must share a shape")
        if np.any(self.theta_lower >= self.theta_upper):
            raise ValueError("parameter box must have positive volume")
        if not self.contains(self.true_theta):
            raise ValueError("true parameter must lie inside the box")

    @property
    def dim(self) -> int:
        return self.theta_lower.size

    def contains(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return bool(theta.shape == self.theta_lower.shape
                    and np.all(theta >= self.theta_lower)
                    and np.all(theta <= self.theta_upper))

    def require(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if not self.contains(theta):
            raise ValueError(f"parameter {theta} outside box for family {self.name!r}")
        return theta

    def density(self, theta, x) -> np.ndarray:
        theta = self.require(theta)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.density_fn(theta, x)

    def total_mass(self, theta) -> float:
        # modeled measure restricted to the truncated observation window
        return self.q_rule.integrate_values(self.density(theta, self.q_rule.nodes))

    def sample(self, theta, n: int, rng: Rng) -> np.ndarray:
        if n < 1:
            raise ValueError("sample size must be at least 1")
        return self.sampler(self.require(theta), n, rng)


def psi_integral(contrast: PhiContrast, family, theta, q_rule: QuadratureRule | None = None) -> float:
    """Reference integral ``int psi(f_theta) dQ`` over the observation window."""
    rule = q_rule if q_rule is not None else family.q_rule
    f_vals = np.asarray(family.density(theta, rule.nodes), dtype=float)
    if np.any(f_vals < 0):
        raise ValueError("negative density values on the quadrature grid")
    psi_vals = np.zeros_like(f_vals)
    pos = f_vals > 0
    if pos.any():
        psi_vals[pos] = psi_transform(contrast, f_vals[pos])
    return rule.integrate_values(psi_vals)


def population_contrast(contrast: PhiContrast, family, theta, theta_star,
                        q_rule: QuadratureRule | None = None) -> float:
    """Population average of the per-observation contrast under ``theta_star``.

    Computed entirely by quadrature:
    ``int phi(f_theta) f_star dQ - int psi(f_theta) dQ + mass(theta)``.
    ``theta_star`` must be a probability parameter; the value may be ``-inf``
    when ``phi`` is unbounded below and ``f_theta`` vanishes on a set where
    ``f_star`` does not.
    """
    rule = q_rule if q_rule is not None else family.q_rule
    f_star = np.asarray(family.density(theta_star, rule.nodes), dtype=float)
    f_theta = np.asarray(family.density(theta, rule.nodes), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi_vals = np.asarray(contrast.phi(f_theta), dtype=float)
    integrand = np.where(f_star > 0, phi_vals * f_star, 0.0)
    if np.any(np.isnan(integrand)):
        raise ValueError("generator produced NaN on the quadrature grid")
    if np.any(np.isneginf(integrand)):
        return float("-inf")
    first = rule.integrate_values(integrand)
    return first - psi_integral(contrast, family, theta, rule) + family.total_mass(theta)


# ---------------------------------------------------------------------------
# registry

GAUSSIAN_Z_BOX = (-3.0, 3.0)
GAUSSIAN_X_PAD = 8.0           # keeps truncation error far below quadrature tolerance
EXPONENTIAL_Z_BOX = (0.2, 5.0)
EXPONENTIAL_X_MAX = 100.0      # exp(-0.2 * 100) = 2e-9 tail at the slowest rate

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _gaussian_pdf(u):
    return _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def _rejection_fill(draw, lo, hi, rng):
    """Redraw entries outside [lo, hi]; keeps sampling exact on the window."""
    x = draw()
    bad = (x < lo) | (x > hi)
    while bad.any():
        x = np.where(bad, draw(), x)
        bad = (x < lo) | (x > hi)
    return x


NORMALIZATION_PROBE_SIZE = 32
NORMALIZATION_TOL = 1e-6


def _check_kernel_normalization(family: MixtureFamily):
    """Registration gate: the kernel must be a density in x for every z."""
    lo, hi = family.z_domain
    probe = np.linspace(lo, hi, NORMALIZATION_PROBE_SIZE)
    masses = family.q_rule.weights @ family.kernel.matrix(family.q_rule.nodes, probe)
    worst = float(np.abs(masses - 1.0).max())
    if worst > NORMALIZATION_TOL:
        raise ValueError(
            f"kernel {family.kernel.name!r} mis-normalized: worst |mass - 1| = {worst:.3e}")
    return family


def gaussian_location_family(true_theta: float = 0.0) -> ParametricFamily:
    """Unit-variance location family on a box, observations truncated to a wide window."""
    lo, hi = GAUSSIAN_Z_BOX
    x_lo, x_hi = lo - GAUSSIAN_X_PAD, hi + GAUSSIAN_X_PAD
    rule = gauss_legendre(x_lo, x_hi)

    def density_fn(theta, x):
        return _gaussian_pdf(x - theta[0])

    def sampler(theta, n, rng):
        mean = theta[0]
        return _rejection_fill(lambda: mean + rng.generator.standard_normal(n),
                               x_lo, x_hi, rng)

    return ParametricFamily(
        name="gaussian_location",
        theta_lower=np.array([lo]),
        theta_upper=np.array([hi]),
        true_theta=np.array([float(true_theta)]),
        x_domain=(x_lo, x_hi),
        q_rule=rule,
        density_fn=density_fn,
        sampler=sampler,
    )


def gaussian_mixture_family() -> MixtureFamily:
    """Location mixtures of the unit-variance bell kernel over a compact latent box."""
    z_lo, z_hi = GAUSSIAN_Z_BOX
    x_lo, x_hi = z_lo - GAUSSIAN_X_PAD, z_hi + GAUSSIAN_X_PAD

    def evaluate(x, z):
        # mass beyond the +-8 sigma window is ~1e-15, below quadrature noise
        return _gaussian_pdf(x - z)

    def sample_given_z(z, rng):
        z = np.asarray(z, dtype=float)
        return _rejection_fill(lambda: z + rng.generator.standard_normal(z.shape),
                               x_lo, x_hi, rng)

    kernel = MixtureKernel(
        name="gaussian_mixture",
        x_domain=(x_lo, x_hi),
        z_domain=(z_lo, z_hi),
        evaluate=evaluate,
        sample_given_z=sample_given_z,
    )
    family = MixtureFamily(kernel=kernel, q_rule=gauss_legendre(x_lo, x_hi))
    return _check_kernel_normalization(family)


def exponential_mixture_family() -> MixtureFamily:
    """Scale mixtures of the decay kernel ``z * exp(-z * x)`` on a positive window."""
    z_lo, z_hi = EXPONENTIAL_Z_BOX
    x_lo, x_hi = 0.0, EXPONENTIAL_X_MAX

    def evaluate(x, z):
        # renormalized over the truncated window so the kernel is an exact
        # density there and matches the rejection sampler
        return z * np.exp(-z * x) / (1.0 - np.exp(-z * x_hi))

    def sample_given_z(z, rng):
        z = np.asarray(z, dtype=float)
        return _rejection_fill(
            lambda: rng.generator.standard_exponential(z.shape) / z,
            x_lo, x_hi, rng)

    kernel = MixtureKernel(
        name="exponential_mixture",
        x_domain=(x_lo, x_hi),
        z_domain=(z_lo, z_hi),
        evaluate=evaluate,
        sample_given_z=sample_given_z,
    )
    family = MixtureFamily(kernel=kernel, q_rule=gauss_legendre(x_lo, x_hi))
    return _check_kernel_normalization(family)


MODEL_REGISTRY = {
    "gaussian_location": gaussian_location_family,
    "gaussian_mixture": gaussian_mixture_family,
    "exponential_mixture": exponential_mixture_family,
}


def build_model(model_id: str):
    """Instantiate a registered model by identifier."""
    try:
        factory = MODEL_REGISTRY[model_id]
    except KeyError:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise ValueError(f"unknown model {model_id!r}; known: {known}") from None
    return factory()
