"""Mahalanobis filter tests, including the chi-square(3) tail oracle."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from scopenav.geometry.outliers import OutlierError, mahalanobis_distances, mahalanobis_filter
from scopenav.geometry.trajectory import TrackedSample, Trajectory


def make_trajectory(positions, frame="tracker"):
    return Trajectory(
        [TrackedSample(float(i), p) for i, p in enumerate(positions)], frame=frame
    )


def chi2_3_tail(threshold: float) -> float:
    """P(chi2_3 > threshold^2) by quadrature of the density, no stats library."""
    pdf = lambda x: math.sqrt(x) * math.exp(-x / 2) / (2**1.5 * math.gamma(1.5))
    value, err = quad(pdf, threshold**2, math.inf)
    assert err < 1e-8
    return value


class TestChiSquareOracle:
    def test_tail_at_3(self):
        # frozen from the quadrature oracle; the closed form
        # erfc(3/sqrt2) + sqrt(2/pi)*3*exp(-4.5) agrees to 1e-12
        assert chi2_3_tail(3.0) == pytest.approx(0.0292908865, abs=1e-9)


class TestMahalanobisFilter:
    def test_standard_normal_fraction(self):
        rng = np.random.default_rng(2024)
        traj = make_trajectory(rng.standard_normal((10_000, 3)))
        report = mahalanobis_filter(traj, threshold=3.0)
        assert report.outlier_fraction == pytest.approx(chi2_3_tail(3.0), abs=0.005)
        assert report.threshold == 3.0
        assert len(report.inliers) + len(report.outlier_indices) == 10_000

    def test_dominant_outlier(self):
        rng = np.random.default_rng(1)
        positions = rng.normal(0, 1.0, (50, 3))
        positions[17] = [500.0, -500.0, 300.0]
        report = mahalanobis_filter(make_trajectory(positions), threshold=3.0)
        assert 17 in report.outlier_indices

    def test_infinite_threshold(self):
        rng = np.random.default_rng(3)
        traj = make_trajectory(rng.normal(size=(100, 3)))
        report = mahalanobis_filter(traj, threshold=math.inf)
        assert report.outlier_indices == []
        assert report.outlier_fraction == 0.0
        assert np.array_equal(report.inliers.positions, traj.positions)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(9)
        positions = rng.normal(0, 2.0, (500, 3))
        positions[::50] *= 8.0  # force some outliers
        base = mahalanobis_filter(make_trajectory(positions), 3.0).outlier_indices
        for _ in range(20):
            q, r = np.linalg.qr(rng.normal(size=(3, 3)))
            q = q @ np.diag(np.sign(np.diag(r)))
            if np.linalg.det(q) < 0:
                q[:, 0] = -q[:, 0]
            moved = positions @ q.T + rng.uniform(-100, 100, 3)
            assert mahalanobis_filter(make_trajectory(moved), 3.0).outlier_indices == base

    def test_too_few_samples(self):
        with pytest.raises(OutlierError):
            mahalanobis_filter(make_trajectory(np.zeros((3, 3))))

    def test_zero_variance(self):
        with pytest.raises(OutlierError):
            mahalanobis_filter(make_trajectory(np.ones((10, 3))))

    def test_coplanar_regularized(self):
        # rank-2 covariance: regularization must keep distances finite
        rng = np.random.default_rng(5)
        flat = rng.normal(size=(200, 3))
        flat[:, 2] = 0.0
        d = mahalanobis_distances(flat)
        assert np.isfinite(d).all()

    def test_fraction_definition(self):
        rng = np.random.default_rng(8)
        traj = make_trajectory(rng.normal(size=(640, 3)))
        report = mahalanobis_filter(traj, threshold=1.0)
        assert report.outlier_fraction == len(report.outlier_indices) / 640
