"""Gaussian mixture models: representation, evaluation, sampling, projection.

A :class:`MixtureModel` is immutable. Evaluation routines work on the
Cholesky factors of the component covariances, which are computed once and
cached on the instance.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ContractViolation, DegenerateModelError

LOG_2PI = math.log(2.0 * math.pi)


class CovarianceFamily(str, enum.Enum):
    """Parsimonious covariance structures with closed-form M-steps.

    The three letters give volume, shape and orientation of
    ``Sigma_g = lambda_g U_g Delta_g U_g^T``: ``E`` equal across components,
    ``V`` variable, ``I`` identity (shape or orientation fixed to the axes).
    """

    EII = "EII"
    VII = "VII"
    EEI = "EEI"
    VVI = "VVI"
    EEE = "EEE"
    VVV = "VVV"

    def n_cov_params(self, n_components: int, dim: int) -> int:
        g, p = n_components, dim
        return {
            "EII": 1,
            "VII": g,
            "EEI": p,
            "VVI": g * p,
            "EEE": p * (p + 1) // 2,
            "VVV": g * p * (p + 1) // 2,
        }[self.value]

    @classmethod
    def parse(cls, value) -> "CovarianceFamily":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ContractViolation(
                f"unknown covariance family {value!r}; expected one of "
                + ", ".join(f.value for f in cls)
            ) from None


ALL_FAMILIES = tuple(CovarianceFamily)


def n_parameters(family: CovarianceFamily, n_components: int, dim: int) -> int:
    """Free parameters of a mixture: weights, means and covariances."""
    family = CovarianceFamily.parse(family)
    return (n_components - 1) + n_components * dim + family.n_cov_params(n_components, dim)


@dataclass(frozen=True)
class EigenDecomposedCovariance:
    """``Sigma = volume * orientation @ diag(shape) @ orientation.T`` with ``prod(shape) == 1``."""

    volume: float
    shape: np.ndarray
    orientation: np.ndarray

    @classmethod
    def from_covariance(cls, cov) -> "EigenDecomposedCovariance":
        cov = np.asarray(cov, dtype=float)
        evals, evecs = np.linalg.eigh(cov)
        if evals[0] <= 0:
            raise DegenerateModelError("covariance is not positive definite")
        # descending order, like a principal-axes listing
        evals, evecs = evals[::-1], evecs[:, ::-1]
        volume = float(np.exp(np.mean(np.log(evals))))
        return cls(volume=volume, shape=evals / volume, orientation=evecs)

    def reconstruct(self) -> np.ndarray:
        u = self.orientation
        return self.volume * (u * self.shape) @ u.T


def _as_points(points, dim: int) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, dim) if dim == 1 else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ContractViolation(
            f"points must have {dim} columns, got array of shape {np.shape(points)}"
        )
    return x


@dataclass(frozen=True, eq=False)
class MixtureModel:
    """Finite mixture of multivariate Gaussians.

    Parameters
    ----------
    weights : (G,) array
        Mixing proportions, positive and summing to one.
    means : (G, d) array
    covariances : (G, d, d) array
        Symmetric positive-definite component covariances.
    family : CovarianceFamily
        Structure the model was fitted under. Purely descriptive; the
        constructor does not enforce it (see :func:`check_family`).
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    family: CovarianceFamily = CovarianceFamily.VVV
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        mu = np.array(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(len(w), -1)
        g, d = mu.shape
        cov = np.array(self.covariances, dtype=float)
        if len(w) != g or cov.size != g * d * d:
            raise ContractViolation(
                "weights, means and covariances must agree on the number of "
                f"components and dimension (weights {np.shape(self.weights)}, "
                f"means {np.shape(self.means)}, covariances {np.shape(self.covariances)})"
            )
        cov = cov.reshape(g, d, d)
        if g < 1 or d < 1:
            raise ContractViolation("a mixture needs at least one component and one dimension")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(cov))):
            raise ContractViolation("mixture parameters must be finite")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"weights must be positive and sum to 1, got {w}")
        scale = np.max(np.abs(cov), axis=(1, 2))
        asym = np.max(np.abs(cov - cov.transpose(0, 2, 1)), axis=(1, 2))
        if np.any(asym > 1e-12 * scale):
            raise ContractViolation("covariance matrices must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            bad = [k for k in range(g) if np.linalg.eigvalsh(cov[k])[0] <= 0]
            raise DegenerateModelError(
                f"covariance of component(s) {[k + 1 for k in bad]} is not positive definite"
            ) from None
        for arr in (w, mu, cov, chol):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "family", CovarianceFamily.parse(self.family))
        object.__setattr__(self, "_chol", chol)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def log_dets(self) -> np.ndarray:
        return 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)

    @cached_property
    def _inv_chol(self) -> np.ndarray:
        eye = np.broadcast_to(np.eye(self.dim), self._chol.shape)
        return np.linalg.solve(self._chol, eye)

    @cached_property
    def precisions(self) -> np.ndarray:
        inv_chol = self._inv_chol
        prec = inv_chol.transpose(0, 2, 1) @ inv_chol
        return 0.5 * (prec + prec.transpose(0, 2, 1))

    def component_log_densities(self, points) -> np.ndarray:
        """``log(pi_g) + log phi(x_i; mu_g, Sigma_g)`` as an (n, G) array."""
        x = _as_points(points, self.dim)
        inv = self._inv_chol
        shift = np.einsum("kij,kj->ki", inv, self.means)
        white = np.matmul(x[None], inv.transpose(0, 2, 1)) - shift[:, None, :]
        maha = np.sum(white * white, axis=2).T
        const = np.log(self.weights) - 0.5 * (self.dim * LOG_2PI + self.log_dets)
        return const - 0.5 * maha

    def log_density(self, points) -> np.ndarray:
        return log_density(self, points)

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "dim": self.dim,
            "family": self.family.value,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MixtureModel":
        try:
            model = cls(
                weights=obj["weights"],
                means=obj["means"],
                covariances=obj["covariances"],
                family=obj.get("family", "VVV"),
            )
        except KeyError as exc:
            raise ContractViolation(f"model JSON lacks field {exc.args[0]!r}") from None
        for key, expected in (("n_components", model.n_components), ("dim", model.dim)):
            if key in obj and int(obj[key]) != expected:
                raise ContractViolation(f"model JSON field {key}={obj[key]} disagrees with arrays")
        return model


def _logsumexp_rows(a: np.ndarray, keepdims: bool = False) -> np.ndarray:
    top = np.max(a, axis=1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    out = np.log(np.sum(np.exp(a - top), axis=1, keepdims=True)) + top
    return out if keepdims else out[:, 0]


def log_density(model: MixtureModel, points) -> np.ndarray:
    """Mixture log density at each row of ``points`` (log-sum-exp over components)."""
    return _logsumexp_rows(model.component_log_densities(points))


def responsibilities(model: MixtureModel, points) -> np.ndarray:
    """Posterior component probabilities, normalized in log space.

    Rows sum to one even where every component density underflows.
    """
    lc = model.component_log_densities(points)
    lc -= _logsumexp_rows(lc, keepdims=True)
    resp = np.exp(lc)
    return resp / resp.sum(axis=1, keepdims=True)


def sample(model: MixtureModel, n: int, seed=None):
    """Ancestral sampling.

    Returns
    -------
    x : (n, d) array
    labels : (n,) int array with values in ``1..G``
    """
    if n < 1:
        raise ContractViolation("n must be at least 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(model.n_components, size=n, p=model.weights)
    z = rng.standard_normal((n, model.dim))
    x = np.einsum("nij,nj->ni", model._chol[comp], z) + model.means[comp]
    return x, comp + 1


def project_model(model: MixtureModel, basis) -> MixtureModel:
    """Distribution of ``B^T x`` for ``x`` drawn from ``model``.

    ``basis`` is a (p, d) matrix or anything with a ``matrix`` attribute.
    The result is tagged VVV since projection does not preserve constrained
    families in general.
    """
    b = np.asarray(getattr(basis, "matrix", basis), dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if b.shape[0] != model.dim:
        raise ContractViolation(f"basis has {b.shape[0]} rows, model has dimension {model.dim}")
    cov = b.T @ model.covariances @ b
    cov = 0.5 * (cov + cov.transpose(0, 2, 1))
    return MixtureModel(model.weights, model.means @ b, cov, CovarianceFamily.VVV)


def mixture_moments(model: MixtureModel) -> tuple[np.ndarray, np.ndarray]:
    """Overall mean and covariance of the mixture distribution."""
    w = model.weights
    mean = w @ model.means
    centred = model.means - mean
    cov = np.einsum("k,kij->ij", w, model.covariances) + (centred.T * w) @ centred
    return mean, 0.5 * (cov + cov.T)


def check_family(model: MixtureModel, family=None, rtol: float = 1e-8) -> bool:
    """Whether the covariances satisfy the structural constraints of ``family``."""
    family = CovarianceFamily.parse(family or model.family)
    cov = model.covariances
    scale = np.max(np.abs(cov))
    tol = rtol * scale
    d = model.dim
    off = cov - np.einsum("kii->ki", cov)[:, :, None] * np.eye(d)
    name = family.value
    if name[2] == "I" and np.max(np.abs(off)) > tol:
        return False
    if name in ("EII", "VII"):
        diag = np.einsum("kii->ki", cov)
        if np.max(np.abs(diag - diag[:, :1])) > tol:
            return False
    if name in ("EII", "EEI", "EEE") and np.max(np.abs(cov - cov[:1])) > tol:
        return False
    return True


def dumps_model(model: MixtureModel, **extra) -> str:
    """JSON text for a model; floats use the shortest round-trip repr."""
    obj = model.to_dict()
    obj.update(extra)
    return json.dumps(obj, indent=2)


def random_model(
    rng: np.random.Generator,
    n_components: int,
    dim: int,
    *,
    mean_scale: float = 3.0,
    max_condition: float = 100.0,
    var_range: tuple[float, float] = (0.2, 2.0),
) -> MixtureModel:
    """A random VVV mixture, used by tests and demos.

    Component covariances have condition number at most ``max_condition``.
    """
    weights = rng.dirichlet(np.full(n_components, 2.0))
    weights = np.maximum(weights, 0.02)
    weights /= weights.sum()
    weights[-1] = 1.0 - weights[:-1].sum()
    means = rng.normal(scale=mean_scale, size=(n_components, dim))
    covs = []
    for _ in range(n_components):
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        top = rng.uniform(*var_range)
        evals = top * np.exp(rng.uniform(-math.log(max_condition), 0.0, size=dim))
        evals[0] = top
        c = (q * evals) @ q.T
        covs.append(0.5 * (c + c.T))
    return MixtureModel(weights, means, np.array(covs), CovarianceFamily.VVV)

