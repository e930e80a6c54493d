"""Maximum-likelihood fitting of parsimonious Gaussian mixtures by EM, and BIC
model selection over a grid of component counts and covariance families.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DegenerateFitError, DegenerateModelError, NoModelError
from .mixture import ALL_FAMILIES, CovarianceFamily, MixtureModel, _logsumexp_rows, n_parameters

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmConfig:
    """EM settings.

    ``regularization=None`` means ``1e-8`` times the mean diagonal of the total
    data covariance. A component is collapsed when its smallest covariance
    eigenvalue is below ``max(1e-12, collapse_factor * regularization)``, i.e.
    when the regularization term dominates some direction.
    """

    tol: float = 1e-8
    max_iter: int = 1000
    n_starts: int = 10
    regularization: float | None = None
    collapse_factor: float = 10.0
    lloyd_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter < 1 or self.n_starts < 1:
            raise ContractViolation("tol must be positive, max_iter and n_starts at least 1")


@dataclass(frozen=True, eq=False)
class FitReport:
    model: MixtureModel
    log_likelihood: float
    bic: float
    n_parameters: int
    n_iterations: int
    converged: bool
    n_obs: int
    history: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        obj = self.model.to_dict()
        obj.update(
            log_likelihood=self.log_likelihood,
            bic=self.bic,
            n_parameters=self.n_parameters,
            n_iterations=self.n_iterations,
            converged=self.converged,
            n_obs=self.n_obs,
            bic_convention="2*loglik - n_parameters*log(n), larger is better",
        )
        return obj


def bic_value(log_likelihood: float, n_params: int, n_obs: int) -> float:
    return 2.0 * log_likelihood - n_params * math.log(n_obs)


def _kmeanspp_labels(x, k, rng, lloyd_iter):
    """k-means++ seeding refined by Lloyd steps; returns hard labels."""
    n = x.shape[0]
    centres = np.empty((k, x.shape[1]))
    centres[0] = x[rng.integers(n)]
    d2 = np.sum((x - centres[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centres[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centres[j]) ** 2, axis=1))
    labels = None
    for _ in range(lloyd_iter + 1):
        dist = ((x[:, None, :] - centres[None]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        if np.any(counts == 0):
            break
        centres = np.stack([x[labels == j].mean(axis=0) for j in range(k)])
    return labels


def _m_step(x, resp, family, reg, floor):
    n, p = x.shape
    nk = resp.sum(axis=0)
    g = len(nk)
    if np.any(nk < 1e-8 * n):
        k = int(np.argmin(nk))
        raise DegenerateFitError(f"component {k + 1} is empty", component=k + 1)
    weights = nk / n
    means = (resp.T @ x) / nk[:, None]
    name = family.value
    if name[2] == "I":
        # diagonal scatter only
        sq = np.stack([resp[:, k] @ (x - means[k]) ** 2 for k in range(g)])  # (g, p)
        if name == "EII":
            lam = sq.sum() / (n * p)
            diag = np.full((g, p), lam)
        elif name == "VII":
            diag = np.repeat((sq.sum(axis=1) / (nk * p))[:, None], p, axis=1)
        elif name == "EEI":
            diag = np.repeat((sq.sum(axis=0) / n)[None], g, axis=0)
        else:  # VVI
            diag = sq / nk[:, None]
        diag = diag + reg
        covs = np.zeros((g, p, p))
        covs[:, np.arange(p), np.arange(p)] = diag
        evmin = diag.min(axis=1)
    else:
        scat = np.empty((g, p, p))
        for k in range(g):
            c = x - means[k]
            scat[k] = (c * resp[:, k : k + 1]).T @ c
        if name == "EEE":
            common = scat.sum(axis=0) / n
            covs = np.repeat(common[None], g, axis=0)
        else:  # VVV
            covs = scat / nk[:, None, None]
        covs = 0.5 * (covs + covs.transpose(0, 2, 1)) + reg * np.eye(p)
        evmin = np.linalg.eigvalsh(covs)[:, 0]
    if np.any(evmin < floor):
        k = int(np.argmin(evmin))
        raise DegenerateFitError(
            f"component {k + 1} collapsed (smallest covariance eigenvalue {evmin[k]:.3g})",
            component=k + 1,
        )
    weights = weights / weights.sum()
    return MixtureModel(weights, means, covs, family)


def _e_step(model, x):
    lc = model.component_log_densities(x)
    ll_rows = _logsumexp_rows(lc)
    resp = np.exp(lc - ll_rows[:, None])
    return float(ll_rows.sum()), resp


def _run_em(x, resp, family, config, reg, floor):
    model = _m_step(x, resp, family, reg, floor)
    ll, resp = _e_step(model, x)
    history = [ll]
    converged = False
    for _ in range(config.max_iter - 1):
        model = _m_step(x, resp, family, reg, floor)
        ll_new, resp = _e_step(model, x)
        history.append(ll_new)
        if abs(ll_new - ll) < config.tol * abs(ll_new):
            converged = True
            ll = ll_new
            break
        ll = ll_new
    return model, ll, np.array(history), converged


def default_regularization(x) -> float:
    if x.shape[0] < 2:
        return 1e-8
    var = np.var(x, axis=0, ddof=1)
    return 1e-8 * float(np.mean(var)) if np.mean(var) > 0 else 1e-8


def em_fit(data, n_components: int, family, config: EmConfig | None = None) -> FitReport:
    """Fit a ``n_components`` mixture under ``family`` by EM with random restarts.

    Each restart seeds hard labels by k-means++; the restart with the highest
    final log-likelihood is returned. Raises :class:`DegenerateFitError` when
    every restart collapses.
    """
    config = config or EmConfig()
    family = CovarianceFamily.parse(family)
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n_components < 1:
        raise ContractViolation("n_components must be at least 1")
    if n <= n_components:
        raise ContractViolation(f"need more observations ({n}) than components ({n_components})")
    if not np.all(np.isfinite(x)):
        raise ContractViolation("data contain non-finite entries")
    reg = config.regularization if config.regularization is not None else default_regularization(x)
    floor = max(1e-12, config.collapse_factor * reg)

    rng = np.random.default_rng(config.seed)
    starts = 1 if n_components == 1 else config.n_starts
    best = None
    last_error = None
    seen = []
    for _ in range(starts):
        labels = _kmeanspp_labels(x, n_components, rng, config.lloyd_iter)
        # same partition under another numbering gives the same EM path
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        key = np.argsort(np.argsort(first))[inverse]
        if any(np.array_equal(key, s) for s in seen):
            continue
        seen.append(key)
        resp = np.zeros((n, n_components))
        resp[np.arange(n), labels] = 1.0
        try:
            result = _run_em(x, resp, family, config, reg, floor)
        except (DegenerateFitError, DegenerateModelError) as exc:
            last_error = exc
            continue
        if best is None or result[1] > best[1]:
            best = result
    if best is None:
        component = getattr(last_error, "component", None)
        raise DegenerateFitError(
            f"{family.value} with G={n_components}: every start failed ({last_error})",
            component=component,
        )
    model, ll, history, converged = best
    nu = n_parameters(family, n_components, p)
    return FitReport(
        model=model,
        log_likelihood=ll,
        bic=bic_value(ll, nu, n),
        n_parameters=nu,
        n_iterations=len(history),
        converged=converged,
        n_obs=n,
        history=history,
    )


@dataclass(frozen=True)
class GridCell:
    n_components: int
    family: CovarianceFamily
    report: FitReport | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


def fit_grid(data, components_range, families=ALL_FAMILIES, config: EmConfig | None = None):
    """Fit every (G, family) cell; failures are kept with their reason."""
    components_range = list(components_range)
    families = [CovarianceFamily.parse(f) for f in families]
    if not components_range or not families:
        raise ContractViolation("components_range and families must be non-empty")
    cells = []
    n = np.shape(data)[0]
    for g in components_range:
        for fam in families:
            if n <= g:
                cells.append(GridCell(g, fam, None, f"n={n} not larger than G={g}"))
                continue
            try:
                rep = em_fit(data, g, fam, config)
            except (DegenerateFitError, DegenerateModelError) as exc:
                log.debug("G=%d %s failed: %s", g, fam.value, exc)
                cells.append(GridCell(g, fam, None, str(exc)))
            else:
                cells.append(GridCell(g, fam, rep))
    return cells


def select_from_grid(cells) -> FitReport:
    ok = [c for c in cells if c.ok]
    if not ok:
        raise NoModelError(
            "no model in the grid could be fitted",
            failures={(c.n_components, c.family.value): c.error for c in cells},
        )
    best = min(ok, key=lambda c: (-c.report.bic, c.report.n_parameters, c.family.value))
    return best.report


def select_model(data, components_range, families=ALL_FAMILIES, config: EmConfig | None = None):
    """Highest-BIC fit over ``components_range`` x ``families``.

    Ties go to fewer parameters, then to the alphabetically first family.
    """
    return select_from_grid(fit_grid(data, components_range, families, config))
