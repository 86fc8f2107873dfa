import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mscn.distributions import (
    ContaminationPattern,
    McnParams,
    MscnParams,
    cn_logpdf,
    mcn_logpdf,
    mcn_pdf,
    mcn_posterior_good,
    mn_logpdf,
    mscn_covariance,
    mscn_density_grid,
    mscn_logpdf,
    mscn_logpdf_enumerated,
    mscn_sample,
    rotation_matrix,
)

from conftest import random_orthogonal, random_params, random_spd

LOG_PHI0 = -0.5 * math.log(2 * math.pi)  # -0.9189385...


def phi(x, var):
    return math.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)


ROTATED_EXAMPLE = MscnParams([0, 0], rotation_matrix(math.pi / 6), [0.75, 0.75], [0.7, 0.6], [3, 2])


class TestMultivariateNormal:
    def test_standard_normal_at_zero(self):
        assert mn_logpdf([0.0], [0.0], [[1.0]]) == pytest.approx(-0.9189385332046727, abs=1e-15)

    def test_at_mean(self, rng):
        sigma = random_spd(rng, 3)
        expected = -1.5 * math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(sigma))
        assert mn_logpdf(np.ones(3), np.ones(3), sigma) == pytest.approx(expected, rel=1e-12)

    def test_unit_point(self):
        assert mn_logpdf([1.0, 1.0], [0, 0], np.eye(2)) == pytest.approx(2 * LOG_PHI0 - 1, abs=1e-14)

    def test_integrates_to_one(self):
        sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
        g = np.linspace(-8, 8, 401)
        gx, gy = np.meshgrid(g, g)
        dens = np.exp(mn_logpdf(np.column_stack([gx.ravel(), gy.ravel()]), [0, 0], sigma))
        assert dens.sum() * (g[1] - g[0]) ** 2 == pytest.approx(1, abs=1e-3)

    def test_rejects_non_pd(self):
        with pytest.raises(ValueError):
            mn_logpdf([0, 0], [0, 0], [[1, 2], [2, 1]])


class TestContaminatedNormal:
    def test_gaussian_limit(self, rng):
        sigma = random_spd(rng, 2)
        p = McnParams([0, 1], sigma, 1 - 1e-12, 1 + 1e-12)
        for x in rng.standard_normal((10, 2)):
            assert mcn_pdf(x, p) == pytest.approx(math.exp(mn_logpdf(x, [0, 1], sigma)), rel=1e-11)

    def test_two_normal_sum_at_mode(self):
        p = McnParams([0.0], [[1.0]], 0.5, 4.0)
        assert mcn_pdf([0.0], p) == pytest.approx(0.5 * phi(0, 1) + 0.5 * phi(0, 4), rel=1e-14)

    def test_symmetric(self, rng):
        p = McnParams([1, -1], random_spd(rng, 2), 0.8, 5)
        for t in rng.standard_normal((20, 2)):
            assert mcn_logpdf(p.mu + t, p) == pytest.approx(mcn_logpdf(p.mu - t, p), abs=1e-13)

    def test_posterior_good_near_gaussian(self, rng):
        p = McnParams([0, 0], np.eye(2), 1 - 1e-12, 3)
        assert np.all(mcn_posterior_good(rng.normal(0, 1.5, (20, 2)), p) > 1 - 1e-9)

    def test_posterior_good_at_mode_by_hand(self):
        p = McnParams([0.0], [[1.0]], 0.9, 9.0)
        expected = 0.9 * phi(0, 1) / (0.9 * phi(0, 1) + 0.1 * phi(0, 9))
        assert mcn_posterior_good([0.0], p) == pytest.approx(expected, rel=1e-14)

    def test_posterior_good_decreases_along_rays(self, rng):
        p = McnParams([0.5, -0.5], random_spd(rng, 2), 0.85, 6)
        for direction in rng.standard_normal((5, 2)):
            ts = np.linspace(0, 6, 60)
            post = mcn_posterior_good(p.mu + ts[:, None] * direction, p)
            assert np.all(np.diff(post) < 0)
            assert np.all((post > 0) & (post < 1))


class TestMscnDensity:
    def test_univariate_is_contaminated_normal(self):
        p = MscnParams([0.5], [[1.0]], [2.0], [0.8], [6.0])
        q = McnParams([0.5], [[2.0]], 0.8, 6.0)
        for x in np.linspace(-10, 10, 41):
            assert mscn_logpdf([x], p) == pytest.approx(float(mcn_logpdf([x], q)), abs=1e-12)

    def test_gaussian_limit(self, rng):
        d = 3
        gamma = random_orthogonal(rng, d)
        lam = np.array([2.0, 1.0, 0.5])
        p = MscnParams(np.zeros(d), gamma, lam, np.full(d, 1 - 1e-12), np.full(d, 1 + 1e-12))
        x = rng.standard_normal((30, d))
        np.testing.assert_allclose(
            mscn_logpdf(x, p), mn_logpdf(x, np.zeros(d), (gamma * lam) @ gamma.T), atol=1e-9
        )

    def test_rotated_example_matches_enumeration(self):
        x = np.array([1.0, 0.5])
        assert mscn_logpdf(x, ROTATED_EXAMPLE) == pytest.approx(mscn_logpdf_enumerated(x, ROTATED_EXAMPLE), abs=1e-12)
        # four patterns written out by hand
        r = ROTATED_EXAMPLE.gamma.T @ x
        total = 0.0
        for v1 in (0, 1):
            for v2 in (0, 1):
                f1 = phi(r[0], 0.75 * (1 if v1 else 3))
                f2 = phi(r[1], 0.75 * (1 if v2 else 2))
                total += (0.7 if v1 else 0.3) * (0.6 if v2 else 0.4) * f1 * f2
        assert mscn_logpdf(x, ROTATED_EXAMPLE) == pytest.approx(math.log(total), abs=1e-12)

    def test_random_enumeration_oracle(self, rng):
        for _ in range(200):
            d = int(rng.integers(1, 7))
            p = random_params(rng, d)
            x = p.mu + rng.normal(0, 3, d)
            assert abs(mscn_logpdf(x, p) - mscn_logpdf_enumerated(x, p)) < 1e-9

    def test_independent_axes_factorize(self, rng):
        d = 4
        p = random_params(rng, d).replace(gamma=np.eye(d))
        x = rng.standard_normal((25, d))
        by_axis = sum(
            cn_logpdf(x[:, h] - p.mu[h], p.lam[h], p.alpha[h], p.eta[h]) for h in range(d)
        )
        np.testing.assert_allclose(mscn_logpdf(x, p), by_axis, atol=1e-10)

    @settings(max_examples=100, deadline=None)
    @given(
        d=st.integers(1, 5),
        seed=st.integers(0, 2**32 - 1),
        scale=st.floats(0, 50),
    )
    def test_positive_and_finite(self, d, seed, scale):
        r = np.random.default_rng(seed)
        p = random_params(r, d)
        x = p.mu + scale * r.standard_normal(d)
        val = mscn_logpdf(x, p)
        assert np.isfinite(val)

    def test_pattern_weights(self):
        pat = ContaminationPattern((1, 0))
        np.testing.assert_allclose(pat.inverse_weights([3.0, 2.0]), [1.0, 2.0])
        assert pat.log_prob([0.7, 0.6]) == pytest.approx(math.log(0.7 * 0.4))
        with pytest.raises(ValueError):
            ContaminationPattern((1, 2))

    def test_parameter_validation(self):
        with pytest.raises(ValueError, match="orthogonal"):
            MscnParams([0, 0], [[1, 1], [0, 1]], [1, 1], [0.9, 0.9], [2, 2])
        with pytest.raises(ValueError, match="alpha"):
            MscnParams([0], [[1]], [1], [0.0], [2])
        with pytest.raises(ValueError, match="eta"):
            MscnParams([0], [[1]], [1], [0.5], [0.5])
        with pytest.raises(ValueError, match="length"):
            MscnParams([0, 0], np.eye(2), [1], [0.5, 0.5], [2, 2])

    def test_parameters_are_immutable(self):
        with pytest.raises(ValueError):
            ROTATED_EXAMPLE.mu[0] = 3.0


class TestSampling:
    def test_deterministic_given_seed(self):
        a = mscn_sample(ROTATED_EXAMPLE, 100, seed=5)
        b = mscn_sample(ROTATED_EXAMPLE, 100, seed=5)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, mscn_sample(ROTATED_EXAMPLE, 100, seed=6))

    def test_gaussian_limit_covariance(self):
        p = ROTATED_EXAMPLE.replace(eta=[1 + 1e-12, 1 + 1e-12])
        x = mscn_sample(p, 100_000, seed=1)
        np.testing.assert_allclose(np.cov(x, rowvar=False), p.sigma, atol=0.02)

    def test_mean(self):
        n = 50_000
        x = mscn_sample(ROTATED_EXAMPLE.replace(mu=[1.0, -2.0]), n, seed=2)
        sd = np.sqrt(np.diag(mscn_covariance(ROTATED_EXAMPLE)))
        assert np.all(np.abs(x.mean(axis=0) - [1.0, -2.0]) < 4 * sd / math.sqrt(n))

    def test_covariance_formula(self):
        # axis variance lam * (alpha + (1 - alpha) eta), rotated back
        n = 200_000
        x = mscn_sample(ROTATED_EXAMPLE, n, seed=3)
        target = mscn_covariance(ROTATED_EXAMPLE)
        centred = x - x.mean(axis=0)
        for a in range(2):
            for b in range(2):
                prod = centred[:, a] * centred[:, b]
                se = prod.std(ddof=1) / math.sqrt(n)
                assert abs(prod.mean() - target[a, b]) < 4 * se

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            mscn_sample(ROTATED_EXAMPLE, 0, seed=0)


class TestGrid:
    def test_rotation_matrix(self):
        np.testing.assert_array_equal(rotation_matrix(0), np.eye(2))
        np.testing.assert_allclose(rotation_matrix(math.pi / 2), [[0, -1], [1, 0]], atol=1e-16)
        r = rotation_matrix(math.pi / 6)
        assert r[0, 0] == pytest.approx(math.sqrt(3) / 2, abs=1e-15)
        assert np.linalg.det(r) == pytest.approx(1, abs=1e-14)

    def test_point_symmetry(self):
        grid = mscn_density_grid(ROTATED_EXAMPLE, (-3, 3), (-3, 3), 61)
        np.testing.assert_allclose(grid.logpdf, grid.logpdf[::-1, ::-1], atol=1e-12)

    def test_mass(self):
        grid = mscn_density_grid(ROTATED_EXAMPLE, (-15, 15), (-15, 15), 301)
        cell = (grid.xs[1] - grid.xs[0]) * (grid.ys[1] - grid.ys[0])
        assert np.exp(grid.logpdf).sum() * cell == pytest.approx(1, abs=1e-2)

    def test_rotated_contours_are_not_elliptical(self):
        # a Gaussian's level sets are ellipses: the distance to a fixed level
        # scales by the same factor along every direction; check this fails
        # along the two rotated axes versus the diagonal between them
        def radius_at(level, direction):
            ts = np.linspace(0, 10, 20001)
            vals = mscn_logpdf(ts[:, None] * direction, ROTATED_EXAMPLE)
            return ts[np.argmax(vals < level)]

        g = ROTATED_EXAMPLE.gamma
        axis1, axis2 = g[:, 0], g[:, 1]
        diag = (axis1 + axis2) / math.sqrt(2)
        ratios = []
        for level in (-2.5, -4.0, -6.0):
            r1, r2, rd = (radius_at(level, u) for u in (axis1, axis2, diag))
            ratios.append((r1 / r2, rd / r2))
        # anisotropy between the rotated axes changes with the level
        assert abs(ratios[0][0] - ratios[-1][0]) > 0.02
        # and the diagonal radius is not what an ellipse through r1, r2 gives
        r1, r2, rd = (radius_at(-4.0, u) for u in (axis1, axis2, diag))
        ellipse = 1 / math.sqrt(0.5 / r1**2 + 0.5 / r2**2)
        assert abs(rd - ellipse) / ellipse > 0.02

    def test_requires_bivariate(self):
        p = MscnParams([0], [[1]], [1], [0.9], [2])
        with pytest.raises(ValueError):
            mscn_density_grid(p, (-1, 1), (-1, 1), 10)
