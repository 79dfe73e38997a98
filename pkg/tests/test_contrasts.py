import dataclasses
import math

import numpy as np
import pytest

from mcontrast.contrasts import (PhiContrast, check_concavity_condition,
                                 get_contrast, m_value, psi, theta, theta_gap)
from mcontrast.errors import ContrastDomainError

LOG_GRID = np.geomspace(1e-2, 1e2, 20)
UU, VV = np.meshgrid(LOG_GRID, LOG_GRID, indexing="ij")

ALL_NAMES = ("log", "identity", "inv_sq_1p", "inv_1p_sq")


def test_registry_rejects_unknown_name():
    with pytest.raises(ValueError):
        get_contrast("nope")


def test_psi_closed_forms():
    assert np.max(np.abs(psi(get_contrast("log"), LOG_GRID) - LOG_GRID)) <= 1e-12
    expected = LOG_GRID**2 / 2.0
    assert np.max(np.abs(psi(get_contrast("identity"), LOG_GRID) - expected)) <= 1e-12


def test_inv_sq_1p_closed_forms():
    c = get_contrast("inv_sq_1p")
    closed_theta = -(UU + VV**2) / (1.0 + VV) ** 2
    assert np.max(np.abs(theta(c, UU, VV) - closed_theta)) <= 1e-12
    closed_gap = -((VV - UU) ** 2) / ((1.0 + UU) * (1.0 + VV) ** 2)
    assert np.max(np.abs(theta_gap(c, UU, VV) - closed_gap)) <= 1e-12


def test_quadratic_pairing_identity():
    c = get_contrast("identity")
    assert np.max(np.abs(theta(c, UU, VV) - (UU * VV - VV**2 / 2.0))) <= 1e-12
    closed_gap = -((VV - UU) ** 2) / 2.0
    # relative scale: the two expansions differ by cancellation noise near v=100
    err = np.abs(theta_gap(c, UU, VV) - closed_gap) / np.maximum(1.0, np.abs(closed_gap))
    assert np.max(err) <= 1e-12


def test_phi_prime_matches_finite_difference():
    grid = np.geomspace(1e-3, 1e3, 25)
    for name in ALL_NAMES:
        c = get_contrast(name)
        for v in grid:
            h = 1e-6 * max(v, 1.0)
            fd = (c.phi(v + h) - c.phi(v - h)) / (2.0 * h)
            assert c.phi_prime(v) == pytest.approx(fd, rel=1e-6), name


def test_psi_quadrature_matches_closed_form():
    grid = np.geomspace(1e-2, 1e2, 8)
    for name in ("log", "identity", "inv_sq_1p"):
        closed = get_contrast(name)
        quad_only = dataclasses.replace(closed, psi_closed_form=None)
        for u in grid:
            assert psi(quad_only, float(u)) == pytest.approx(
                float(psi(closed, float(u))), rel=1e-8, abs=1e-12), name


def test_theta_closed_vs_quadrature_psi():
    grid = np.geomspace(1e-2, 1e2, 6)
    for name in ("log", "identity", "inv_sq_1p"):
        closed = get_contrast(name)
        quad_only = dataclasses.replace(closed, psi_closed_form=None)
        for u in grid:
            for v in grid:
                a = theta(closed, float(u), float(v))
                b = theta(quad_only, float(u), float(v))
                assert b == pytest.approx(a, rel=1e-8, abs=1e-10), name


def test_gap_nonpositive_and_zero_on_diagonal():
    for name in ALL_NAMES:
        c = get_contrast(name)
        assert float(np.max(theta_gap(c, UU, VV))) <= 1e-12, name
        diag = theta_gap(c, LOG_GRID, LOG_GRID)
        assert float(np.max(np.abs(diag))) <= 1e-12, name


def test_theta_linear_in_phi():
    alpha, beta = 0.7, 1.3
    log_c = get_contrast("log")
    ident = get_contrast("identity")
    combo = PhiContrast(
        name="combo",
        phi=lambda u: alpha * np.log(u) + beta * u,
        phi_prime=lambda u: alpha / u + beta,
        psi_closed_form=lambda u: alpha * u + beta * u**2 / 2.0,
        bounded=False,
    )
    expected = alpha * theta(log_c, UU, VV) + beta * theta(ident, UU, VV)
    assert np.max(np.abs(theta(combo, UU, VV) - expected)) <= 1e-10


def test_positive_arguments_required():
    c = get_contrast("log")
    with pytest.raises(ContrastDomainError):
        psi(c, -1.0)
    with pytest.raises(ContrastDomainError):
        theta(c, 0.0, 1.0)
    with pytest.raises(ContrastDomainError):
        theta_gap(c, 1.0, 0.0)


def test_concavity_log_identity_pass():
    for name in ("log", "identity"):
        report = check_concavity_condition(get_contrast(name), [0.5, 1.0, 2.0])
        assert report.passed, name
    # the log family sits exactly on the transform-convexity boundary
    report = check_concavity_condition(get_contrast("log"), [0.5, 1.0, 2.0])
    for check in report.checks:
        assert abs(check.transform_curvature) <= 1e-7


def test_concavity_rejects_convex_phi():
    convex = PhiContrast(name="plus_sq", phi=lambda u: u**2,
                         phi_prime=lambda u: 2.0 * u,
                         psi_closed_form=None, bounded=False)
    report = check_concavity_condition(convex, [1.0])
    assert not report.passed
    assert not report.checks[0].phi_concave


def test_concavity_rejects_bounded_families():
    grid = np.geomspace(0.2, 100.0, 41)
    for name in ("inv_sq_1p", "inv_1p_sq"):
        report = check_concavity_condition(get_contrast(name), grid)
        assert not report.passed, name


def test_concavity_requires_positive_grid():
    with pytest.raises(ContrastDomainError):
        check_concavity_condition(get_contrast("log"), [1.0, 0.0])


def test_m_value_basics():
    log_c = get_contrast("log")
    assert m_value(log_c, 1.0, 1.0, 1.0) == 0.0
    assert m_value(log_c, math.e, 0.5, 0.25) == pytest.approx(0.75)
    # zero density under the log generator is the explicit sentinel
    assert m_value(log_c, 0.0, 1.0, 1.0) == -math.inf
    # zero density under a generator finite at zero
    ident = get_contrast("identity")
    assert m_value(ident, 0.0, 0.3, 0.9) == pytest.approx(0.6)


def test_m_value_domain_errors():
    log_c = get_contrast("log")
    with pytest.raises(ContrastDomainError):
        m_value(log_c, -0.1, 1.0, 1.0)
    with pytest.raises(ContrastDomainError):
        m_value(log_c, math.nan, 1.0, 1.0)
    with pytest.raises(ValueError):
        m_value(log_c, 1.0, math.inf, 1.0)


def test_bounded_flags():
    assert get_contrast("inv_sq_1p").bounded
    assert get_contrast("inv_1p_sq").bounded
    assert not get_contrast("log").bounded
    assert not get_contrast("identity").bounded
