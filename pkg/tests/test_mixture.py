import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import ortho_group

from conftest import one_d
from modalpp.errors import ContractViolation, DegenerateModelError
from modalpp.mixture import (
    ALL_FAMILIES,
    CovarianceFamily,
    EigenDecomposedCovariance,
    MixtureModel,
    check_family,
    dumps_model,
    log_density,
    mixture_moments,
    n_parameters,
    project_model,
    random_model,
    responsibilities,
    sample,
)


def normal_pdf(x, mu, var):
    return math.exp(-0.5 * (x - mu) ** 2 / var) / math.sqrt(2 * math.pi * var)


class TestMixtureModel:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ContractViolation):
            MixtureModel([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(ContractViolation):
            MixtureModel([1.5, -0.5], [[0.0], [1.0]], [[[1.0]], [[1.0]]])

    def test_asymmetric_covariance_rejected(self):
        with pytest.raises(ContractViolation):
            MixtureModel([1.0], [[0.0, 0.0]], [[[1.0, 0.1], [0.0, 1.0]]])

    def test_indefinite_covariance_is_degenerate(self):
        with pytest.raises(DegenerateModelError):
            MixtureModel([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [2.0, 1.0]]])

    def test_shape_mismatch(self):
        with pytest.raises(ContractViolation):
            MixtureModel([0.5, 0.5], [[0.0, 0.0]], [np.eye(2)])

    def test_arrays_are_read_only(self, std2):
        with pytest.raises(ValueError):
            std2.means[0, 0] = 3.0

    def test_dict_round_trip_is_exact(self, rng):
        m = random_model(rng, 3, 4)
        back = MixtureModel.from_dict(json.loads(dumps_model(m)))
        assert np.array_equal(back.weights, m.weights)
        assert np.array_equal(back.means, m.means)
        assert np.array_equal(back.covariances, m.covariances)
        assert back.family is m.family

    def test_serialized_fields(self, std2):
        obj = std2.to_dict()
        for key in ("n_components", "dim", "family", "weights", "means", "covariances"):
            assert key in obj
        assert obj["covariances"] == [[[1.0, 0.0], [0.0, 1.0]]]


class TestFamilies:
    @pytest.mark.parametrize(
        "family,expected",
        [("EII", 1), ("VII", 3), ("EEI", 4), ("VVI", 12), ("EEE", 10), ("VVV", 30)],
    )
    def test_covariance_parameter_counts(self, family, expected):
        assert CovarianceFamily.parse(family).n_cov_params(3, 4) == expected

    def test_total_parameter_count(self):
        # (G-1) + G p + nu_cov
        assert n_parameters("VVV", 3, 4) == 2 + 12 + 30
        assert n_parameters("EII", 1, 50) == 0 + 50 + 1

    def test_parse_is_case_insensitive(self):
        assert CovarianceFamily.parse("vvi") is CovarianceFamily.VVI

    def test_unknown_family(self):
        with pytest.raises(ContractViolation):
            CovarianceFamily.parse("VEV")

    def test_check_family_detects_violations(self):
        eii = MixtureModel([0.5, 0.5], [[0, 0], [1, 1]], [2 * np.eye(2), 2 * np.eye(2)], "EII")
        assert check_family(eii)
        vii = MixtureModel([0.5, 0.5], [[0, 0], [1, 1]], [2 * np.eye(2), np.eye(2)])
        assert check_family(vii, "VII") and not check_family(vii, "EII")
        vvi = MixtureModel([0.5, 0.5], [[0, 0], [1, 1]], [np.diag([1, 2]), np.diag([3, 1])])
        assert check_family(vvi, "VVI") and not check_family(vvi, "EEI")
        full = MixtureModel([1.0], [[0, 0]], [[[2, 0.5], [0.5, 1]]])
        assert not check_family(full, "VVI") and check_family(full, "EEE")


class TestEigenDecomposition:
    @given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=6))
    @settings(max_examples=40, deadline=None)
    def test_reconstruction_and_constraints(self, seed, p):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((p, p))
        cov = a @ a.T + 0.1 * np.eye(p)
        dec = EigenDecomposedCovariance.from_covariance(cov)
        rec = dec.reconstruct()
        assert np.linalg.norm(rec - cov) <= 1e-10 * np.linalg.norm(cov)
        assert abs(np.prod(dec.shape) - 1.0) <= 1e-10
        assert np.linalg.norm(dec.orientation.T @ dec.orientation - np.eye(p)) <= 1e-10
        assert dec.volume == pytest.approx(np.linalg.det(cov) ** (1 / p), rel=1e-10)


class TestLogDensity:
    def test_standard_bivariate_at_mode(self, std2):
        assert log_density(std2, [[0.0, 0.0]])[0] == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
        assert log_density(std2, [[0.0, 0.0]])[0] == pytest.approx(-1.837877, abs=1e-6)

    def test_identical_components_collapse(self, std2, rng):
        twin = MixtureModel([0.5, 0.5], [[0, 0], [0, 0]], [np.eye(2), np.eye(2)])
        x = rng.standard_normal((20, 2))
        assert np.allclose(log_density(twin, x), log_density(std2, x), atol=1e-14)

    def test_one_d_hand_oracle(self):
        m = one_d([0.3, 0.7], [-1.0, 2.0], [1.0, 4.0])
        expected = math.log(0.3 * normal_pdf(0, -1, 1) + 0.7 * normal_pdf(0, 2, 4))
        assert log_density(m, [0.0])[0] == pytest.approx(expected, rel=1e-13)

    def test_far_tail_is_finite(self):
        m = one_d([0.5, 0.5], [-1.0, 1.0], [1e-4, 1e-4])
        out = log_density(m, [1e4])
        assert np.isfinite(out).all()

    def test_dimension_mismatch(self, std2):
        with pytest.raises(ContractViolation):
            log_density(std2, np.zeros((3, 3)))

    def test_integrates_to_one_1d(self):
        m = one_d([0.3, 0.7], [-1.0, 2.0], [1.0, 4.0])
        val, _ = integrate.quad(lambda t: math.exp(log_density(m, [t])[0]), -1 - 16, 2 + 16,
                                points=[-1, 2], limit=200)
        assert val == pytest.approx(1.0, abs=1e-4)

    def test_integrates_to_one_2d(self):
        m = MixtureModel([0.4, 0.6], [[0, 0], [2, 1]],
                         [[[1, 0.3], [0.3, 0.5]], [[0.7, -0.2], [-0.2, 1.2]]])
        # +-8 sigma box on a midpoint grid
        lo, hi = -8.0, 10.0
        n = 700
        g = lo + (np.arange(n) + 0.5) * (hi - lo) / n
        xx, yy = np.meshgrid(g, g)
        f = np.exp(log_density(m, np.column_stack([xx.ravel(), yy.ravel()])))
        assert f.sum() * ((hi - lo) / n) ** 2 == pytest.approx(1.0, abs=1e-4)


class TestResponsibilities:
    def test_single_component(self, std2, rng):
        assert np.array_equal(responsibilities(std2, rng.standard_normal((5, 2))), np.ones((5, 1)))

    def test_identical_components_give_weights(self, rng):
        m = MixtureModel([0.25, 0.75], [[1, 1], [1, 1]], [np.eye(2), np.eye(2)])
        r = responsibilities(m, rng.standard_normal((10, 2)))
        assert np.allclose(r, [[0.25, 0.75]], atol=1e-15)

    def test_symmetric_point(self):
        m = one_d([0.5, 0.5], [-2.0, 2.0], [1.0, 1.0])
        assert np.allclose(responsibilities(m, [0.0]), [[0.5, 0.5]], atol=1e-15)

    def test_rows_sum_to_one_even_under_underflow(self):
        m = one_d([0.5, 0.5], [-1.0, 1.0], [1e-3, 1e-3])
        r = responsibilities(m, [-1e3, 0.3, 1e3])
        assert np.all(np.isfinite(r))
        assert np.allclose(r.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((r >= 0) & (r <= 1))


class TestSample:
    def test_mean_of_large_sample(self, std2):
        x, _ = sample(std2, 100_000, seed=3)
        assert np.all(np.abs(x.mean(axis=0)) < 0.02)

    def test_single_component_labels(self, std2):
        _, labels = sample(std2, 50, seed=0)
        assert np.all(labels == 1)

    def test_deterministic(self, rng):
        m = random_model(rng, 3, 2)
        a, la = sample(m, 200, seed=11)
        b, lb = sample(m, 200, seed=11)
        assert np.array_equal(a, b) and np.array_equal(la, lb)

    def test_label_range(self, rng):
        m = random_model(rng, 4, 3)
        _, labels = sample(m, 500, seed=1)
        assert labels.min() >= 1 and labels.max() <= 4

    def test_n_must_be_positive(self, std2):
        with pytest.raises(ContractViolation):
            sample(std2, 0)


class TestProjectModel:
    def test_identity(self, rng):
        m = random_model(rng, 3, 4)
        out = project_model(m, np.eye(4))
        assert np.array_equal(out.weights, m.weights)
        assert np.allclose(out.means, m.means, atol=0)
        assert np.allclose(out.covariances, m.covariances, atol=0)
        assert out.family is CovarianceFamily.VVV

    def test_coordinate_marginal(self):
        m = MixtureModel([1.0], [[0, 0]], [np.diag([4.0, 1.0])])
        assert project_model(m, np.array([[1.0], [0.0]])).covariances[0, 0, 0] == 4.0

    def test_dimension_mismatch(self, std2):
        with pytest.raises(ContractViolation):
            project_model(std2, np.eye(3)[:, :2])

    def test_composition(self, rng):
        m = random_model(rng, 3, 6)
        b = ortho_group.rvs(6, random_state=1)[:, :4]
        c = ortho_group.rvs(4, random_state=2)[:, :2]
        once = project_model(m, b @ c)
        twice = project_model(project_model(m, b), c)
        assert np.allclose(once.means, twice.means, atol=1e-12)
        assert np.allclose(once.covariances, twice.covariances, atol=1e-12)

    def test_matches_projected_samples(self, rng):
        m = random_model(rng, 3, 5)
        b = ortho_group.rvs(5, random_state=7)[:, :2]
        proj = project_model(m, b)
        x, labels = sample(m, 100_000, seed=5)
        z = x @ b
        for k in range(3):
            zk = z[labels == k + 1]
            nk = len(zk)
            cov = proj.covariances[k]
            se_mean = np.sqrt(np.diag(cov) / nk)
            assert np.all(np.abs(zk.mean(axis=0) - proj.means[k]) <= 3 * se_mean)
            emp = np.cov(zk, rowvar=False)
            # standard error of a Gaussian sample covariance entry
            se_cov = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / nk)
            assert np.all(np.abs(emp - cov) <= 3 * se_cov)


class TestMoments:
    def test_against_samples(self, rng):
        m = random_model(rng, 3, 2)
        mean, cov = mixture_moments(m)
        x, _ = sample(m, 200_000, seed=2)
        assert np.allclose(mean, x.mean(axis=0), atol=0.05)
        assert np.allclose(cov, np.cov(x, rowvar=False), rtol=0.03, atol=0.05)


def test_all_families_order():
    assert [f.value for f in ALL_FAMILIES] == ["EII", "VII", "EEI", "VVI", "EEE", "VVV"]
