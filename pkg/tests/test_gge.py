import math

import numpy as np
import pytest

from ffmagic import gaussian as G
from ffmagic.gge import GgeSpec, gge_covariance, gge_sre, gge_string_probability
from ffmagic.sampler import exact_sre_enumeration


def test_spec_validation():
    with pytest.raises(ValueError):
        GgeSpec(n=-0.1, ell=2)
    with pytest.raises(ValueError):
        GgeSpec(n=0.3, ell=0)


def test_covariance_limits():
    vac = gge_covariance(GgeSpec(n=0.0, ell=3))
    assert np.array_equal(vac.gamma, G.build_vacuum(3).gamma)
    mixed = gge_covariance(GgeSpec(n=0.5, ell=2))
    assert np.all(mixed.gamma == 0.0)
    quarter = gge_covariance(GgeSpec(n=0.25, ell=1))
    assert np.allclose(quarter.gamma, [[0.0, 0.5], [-0.5, 0.0]])
    assert G.purity(quarter) == pytest.approx(0.625)


def test_string_probability_values():
    spec = GgeSpec(n=0.25, ell=1)
    assert gge_string_probability(spec, 0) == pytest.approx(0.8)
    assert gge_string_probability(spec, 1) == pytest.approx(0.2)
    half = GgeSpec(n=0.5, ell=4)
    assert gge_string_probability(half, 0) == pytest.approx(1.0)  # 0^0 = 1
    assert gge_string_probability(half, 2) == 0.0
    with pytest.raises(ValueError):
        gge_string_probability(spec, 2)


def test_string_probability_normalization():
    for n in (0.0, 0.1, 0.25, 0.5, 0.9):
        for ell in (1, 5, 20):
            total = sum(math.comb(ell, m) * gge_string_probability(GgeSpec(n, ell), m)
                        for m in range(ell + 1))
            assert total == pytest.approx(1.0, abs=1e-12)


def test_sre_closed_form_values():
    assert gge_sre(GgeSpec(n=0.5, ell=3), 2) == pytest.approx(-3 * math.log(2.0))
    assert gge_sre(GgeSpec(n=0.5, ell=3), 1) == pytest.approx(-3 * math.log(2.0))
    assert gge_sre(GgeSpec(n=0.0, ell=7), 1.7) == 0.0
    assert gge_sre(GgeSpec(n=1.0, ell=7), 2) == 0.0
    expected = math.log(25.0 / 17.0) - math.log(2.0)
    assert gge_sre(GgeSpec(n=0.25, ell=1), 2) == pytest.approx(expected, abs=1e-14)


def test_sre_rejects_bad_alpha():
    with pytest.raises(ValueError):
        gge_sre(GgeSpec(n=0.25, ell=1), 0.0)


def test_consistency_with_enumeration():
    for n in (0.0, 0.125, 0.25, 0.5):
        for ell in (1, 2, 3, 4, 5):
            for alpha in (1, 2, 3):
                closed = gge_sre(GgeSpec(n, ell), alpha)
                enum = exact_sre_enumeration(gge_covariance(GgeSpec(n, ell)), alpha)
                assert closed == pytest.approx(enum, abs=1e-10)


def test_particle_hole_symmetry():
    for alpha in (1, 2, 3.5):
        for ell in (1, 4):
            assert gge_sre(GgeSpec(0.3, ell), alpha) == pytest.approx(
                gge_sre(GgeSpec(0.7, ell), alpha), abs=1e-12)


def test_extensivity_exact():
    for n in (0.1, 0.25):
        for alpha in (1, 2):
            assert gge_sre(GgeSpec(n, 8), alpha) == pytest.approx(
                2.0 * gge_sre(GgeSpec(n, 4), alpha), abs=1e-12)


def test_alpha_one_is_analytic_limit():
    spec = GgeSpec(n=0.2, ell=3)
    eps = 1e-7
    numerical = (gge_sre(spec, 1 + eps) + gge_sre(spec, 1 - eps)) / 2
    assert gge_sre(spec, 1) == pytest.approx(numerical, abs=1e-6)
