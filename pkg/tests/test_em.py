import math

import numpy as np
import pytest

from modalpp.data import gen_two_group
from modalpp.em import (
    EmConfig,
    GridCell,
    bic_value,
    default_regularization,
    em_fit,
    fit_grid,
    select_from_grid,
    select_model,
)
from modalpp.errors import ContractViolation, DegenerateFitError, NoModelError
from modalpp.mixture import ALL_FAMILIES, CovarianceFamily, check_family, log_density, n_parameters


def two_blobs(seed=0, n=200):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, 2)) + [5.0, 5.0]
    b = rng.standard_normal((n, 2)) - [5.0, 5.0]
    return np.vstack([a, b]), np.repeat([1, 2], n)


class TestEmFit:
    def test_single_gaussian_eii(self):
        x = np.random.default_rng(1).standard_normal((500, 3))
        rep = em_fit(x, 1, "EII")
        assert np.allclose(rep.model.means[0], x.mean(axis=0), atol=1e-12)
        lam = np.mean(np.var(x, axis=0))
        assert rep.model.covariances[0, 0, 0] == pytest.approx(lam + default_regularization(x), rel=1e-12)
        assert check_family(rep.model, "EII")

    def test_two_blobs_vii(self):
        x, labels = two_blobs()
        rep = em_fit(x, 2, "VII")
        order = np.argsort(rep.model.means[:, 0])
        means = rep.model.means[order]
        # oracle: sample statistics of the true partition
        truth = np.array([x[labels == 2].mean(axis=0), x[labels == 1].mean(axis=0)])
        assert np.all(np.abs(means - truth) < 1e-6)
        assert np.all(np.abs(means - [[-5, -5], [5, 5]]) < 0.2)
        assert np.all(np.abs(rep.model.weights - 0.5) < 0.05)
        assert rep.converged

    @pytest.mark.parametrize("family", [f.value for f in ALL_FAMILIES])
    def test_monotone_and_family_constraints(self, family):
        x = np.random.default_rng(4).standard_normal((150, 3)) @ [[1, 0.4, 0], [0, 1, 0.3], [0, 0, 0.5]]
        x[:50] += [3, 0, 1]
        rep = em_fit(x, 3, family)
        assert np.all(np.diff(rep.history) >= -1e-10)
        assert check_family(rep.model, family, rtol=1e-8)
        assert rep.n_iterations == len(rep.history)

    def test_reported_loglik_matches_model(self):
        x, _ = two_blobs(3)
        rep = em_fit(x, 2, "VVV")
        assert rep.log_likelihood == pytest.approx(log_density(rep.model, x).sum(), rel=1e-12)

    def test_bic_identity(self):
        x, _ = two_blobs(5)
        rep = em_fit(x, 2, "EEE")
        assert rep.n_parameters == n_parameters("EEE", 2, 2) == 1 + 4 + 3
        assert rep.bic == 2 * rep.log_likelihood - rep.n_parameters * math.log(len(x))

    def test_converged_flag_respects_max_iter(self):
        x, _ = two_blobs(6)
        rep = em_fit(x, 3, "VVV", EmConfig(max_iter=2, n_starts=1))
        assert not rep.converged and rep.n_iterations == 2

    def test_needs_more_points_than_components(self):
        with pytest.raises(ContractViolation):
            em_fit(np.zeros((3, 2)), 3, "EII")

    def test_rejects_non_finite(self):
        x = np.ones((10, 2))
        x[0, 0] = np.nan
        with pytest.raises(ContractViolation):
            em_fit(x, 1, "EII")

    def test_collapse_reported_with_component(self):
        # three distinct points, G=2 VVV in 2-d: any 2-cluster split has a
        # cluster of at most 2 points, whose covariance is singular
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DegenerateFitError) as info:
            em_fit(x, 2, "VVV")
        assert info.value.component in (1, 2)

    def test_deterministic(self):
        x, _ = two_blobs(8)
        a = em_fit(x, 3, "VVI", EmConfig(seed=4))
        b = em_fit(x, 3, "VVI", EmConfig(seed=4))
        assert np.array_equal(a.model.means, b.model.means)
        assert a.log_likelihood == b.log_likelihood


class TestSelectModel:
    def test_single_gaussian_selects_one_component(self):
        x = np.random.default_rng(2).standard_normal((300, 2))
        cells = fit_grid(x, [1, 2, 3], ["EII", "VVV"])
        best = select_from_grid(cells)
        assert best.model.n_components == 1
        # oracle: recompute every BIC from the returned log-likelihoods
        bics = [bic_value(c.report.log_likelihood, c.report.n_parameters, len(x)) for c in cells if c.ok]
        assert best.bic == max(bics)
        for c in cells:
            if c.ok:
                assert c.report.bic == bic_value(c.report.log_likelihood, c.report.n_parameters, len(x))

    def test_singleton_grid(self):
        x, _ = two_blobs(1)
        rep = select_model(x, [2], ["VII"])
        direct = em_fit(x, 2, "VII")
        assert rep.log_likelihood == direct.log_likelihood

    def test_tie_break_prefers_fewer_parameters(self):
        x, _ = two_blobs(2)
        a = em_fit(x, 1, "VVV")
        b = em_fit(x, 1, "EII")
        # same BIC forced on both cells
        a = type(a)(**{**a.__dict__, "bic": 0.0})
        b = type(b)(**{**b.__dict__, "bic": 0.0})
        cells = [GridCell(1, CovarianceFamily.VVV, a), GridCell(1, CovarianceFamily.EII, b)]
        assert select_from_grid(cells) is b

    def test_failed_cells_are_recorded_and_skipped(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        cells = fit_grid(x, [1, 3, 4], ["VVV"])
        assert cells[0].ok
        assert not cells[1].ok and cells[1].error
        assert not cells[2].ok
        assert select_from_grid(cells).model.n_components == 1

    def test_no_model(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(NoModelError) as info:
            select_model(x, [2], ["VVV"])
        assert (2, "VVV") in info.value.failures

    def test_empty_grid(self):
        with pytest.raises(ContractViolation):
            select_model(np.zeros((5, 2)), [], ["VVV"])


@pytest.mark.xfail(
    strict=True,
    reason="with this EM a two-component model has the higher BIC on the raw 50-d data",
)
def test_two_group_raw_space_selects_single_component():
    x = gen_two_group(0).data
    rep = select_model(x, range(1, 6), ALL_FAMILIES)
    assert rep.model.n_components == 1
