"""Fixed quadrature rules for the reference measure, plus adaptive integration.

All population-side integrals in this package are taken against a dominating
measure realized as a fixed composite Gauss-Legendre rule on a bounded
interval.  Keeping the rule explicit (nodes, weights, domain) makes every
integral reproducible bit for bit and lets callers trade accuracy for speed
by swapping rules.  Adaptive integration is reserved for one-off scalar
integrals where no closed form exists.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import QuadratureError

NODES_PER_PANEL = 64


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and positive weights approximating integrals over ``[a, b]``.

    Parameters
    ----------
    nodes : ndarray
        Evaluation points, all inside the domain.
    weights : ndarray
        Strictly positive weights, one per node.  For a rule over ``[a, b]``
        the weights sum to ``b - a``.
    domain : (float, float)
        Closed interval the rule integrates over.
    degree : int
        Largest polynomial degree integrated exactly on each panel.
    """

    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple[float, float]
    degree: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        a, b = self.domain
        if not (np.isfinite(a) and np.isfinite(b) and a < b):
            raise ValueError(f"domain must be a finite interval, got {self.domain}")
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if nodes.size == 0:
            raise ValueError("rule must have at least one node")
        if np.any(weights <= 0):
            raise ValueError("all quadrature weights must be strictly positive")
        if np.any(nodes < a) or np.any(nodes > b):
            raise ValueError("all nodes must lie inside the domain")

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, fn) -> float:
        """Integrate a callable over the domain: ``sum_q w_q * fn(node_q)``."""
        values = np.asarray(fn(self.nodes), dtype=float)
        return self.integrate_values(values)

    def integrate_values(self, values) -> float:
        """Integrate from values already evaluated at ``self.nodes``."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.nodes.shape:
            raise ValueError(
                f"values shape {values.shape} does not match node shape {self.nodes.shape}"
            )
        return float(self.weights @ values)


def gauss_legendre(a: float, b: float, nodes_per_panel: int = NODES_PER_PANEL) -> QuadratureRule:
    """Composite Gauss-Legendre rule over ``[a, b]``, one panel per unit length.

    The interval is split into ``ceil(b - a)`` equal panels (so panels are at
    most one unit wide) and an ``nodes_per_panel``-point Gauss-Legendre rule
    is mapped onto each.  The composite rule is exact for polynomials up to
    degree ``2 * nodes_per_panel - 1`` on every panel.
    """
    if not (np.isfinite(a) and np.isfinite(b) and a < b):
        raise ValueError(f"need a finite interval with a < b, got [{a}, {b}]")
    if nodes_per_panel < 1:
        raise ValueError("nodes_per_panel must be at least 1")
    panels = max(1, int(np.ceil(b - a)))
    ref_nodes, ref_weights = np.polynomial.legendre.leggauss(nodes_per_panel)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    # map the [-1, 1] reference rule onto each panel
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    return QuadratureRule(
        nodes=nodes,
        weights=weights,
        domain=(float(a), float(b)),
        degree=2 * nodes_per_panel - 1,
    )


def integrate_adaptive(fn, a: float, b: float, abs_tol: float = 1e-10,
                       limit: int = 2 ** 15) -> float:
    """Adaptively integrate ``fn`` over ``[a, b]`` to absolute tolerance.

    Raises
    ------
    QuadratureError
        If the integrator reports a failure or the achieved error estimate
        exceeds the requested tolerance by more than a factor of ten.
    """
    result = integrate.quad(fn, a, b, epsabs=abs_tol, limit=limit, full_output=True)
    value, abserr = result[0], result[1]
    if len(result) > 3:
        raise QuadratureError(
            f"adaptive integration on [{a}, {b}] failed: {result[3]}",
            achieved_tolerance=abserr,
        )
    if abserr > 10 * max(abs_tol, abs(value) * 1e-8):
        raise QuadratureError(
            f"adaptive integration on [{a}, {b}] reached error estimate "
            f"{abserr:.3e}, wanted {abs_tol:.3e}",
            achieved_tolerance=abserr,
        )
    return float(value)
