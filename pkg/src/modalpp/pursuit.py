"""Negentropy projection pursuit for Gaussian mixtures.

The index of a d-dimensional orthonormal basis ``B`` is the negentropy of the
projected mixture: entropy of the Gaussian with the mixture's overall
covariance minus the mixture entropy, the latter approximated by the
unscented transformation (UT) or by Monte Carlo. The index is maximized over
bases with a real-coded genetic algorithm whose genotype is a vector of
Givens rotation angles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .errors import ContractViolation
from .mixture import LOG_2PI, MixtureModel, log_density, mixture_moments, project_model, sample

log = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi
LOG_2PIE = LOG_2PI + 1.0


# ---------------------------------------------------------------------------
# bases
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    """Column-orthonormal (p, d) matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        b = np.array(self.matrix, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2 or b.shape[1] > b.shape[0]:
            raise ContractViolation(f"basis must be p x d with d <= p, got shape {b.shape}")
        err = np.linalg.norm(b.T @ b - np.eye(b.shape[1]))
        if err > 1e-10:
            raise ContractViolation(f"basis columns are not orthonormal (error {err:.2e})")
        b.setflags(write=False)
        object.__setattr__(self, "matrix", b)

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def project(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.matrix

    def canonical(self) -> "ProjectionBasis":
        return ProjectionBasis(canonical_signs(self.matrix))


def canonical_signs(b: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    b = np.array(b, dtype=float)
    idx = np.argmax(np.abs(b), axis=-2)
    picked = np.take_along_axis(b, idx[..., None, :], axis=-2)
    return b * np.where(picked < 0, -1.0, 1.0)


def n_angles(p: int, d: int) -> int:
    return d * p - d * (d + 1) // 2


def rotation_pairs(p: int, d: int) -> list[tuple[int, int]]:
    """Plane schedule (i, j), 0-based, for i < d and i < j < p, in genotype order."""
    return [(i, j) for i in range(d) for j in range(i + 1, p)]


@dataclass(frozen=True, eq=False)
class AngleGenotype:
    """Givens angles encoding a (p, d) basis; each angle in ``[-pi/2, pi/2]``."""

    angles: np.ndarray
    p: int
    d: int

    def __post_init__(self):
        a = np.array(self.angles, dtype=float).reshape(-1)
        if not 1 <= self.d <= self.p:
            raise ContractViolation(f"need 1 <= d <= p, got p={self.p}, d={self.d}")
        if a.size != n_angles(self.p, self.d):
            raise ContractViolation(
                f"genotype for p={self.p}, d={self.d} must have {n_angles(self.p, self.d)} "
                f"angles, got {a.size}"
            )
        if np.any(np.abs(a) > HALF_PI + 1e-12):
            raise ContractViolation("angles must lie in [-pi/2, pi/2]")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    def basis(self) -> "ProjectionBasis":
        return basis_from_angles(self.angles, self.p, self.d)


def bases_from_angles(angles, p: int, d: int) -> np.ndarray:
    """Vectorized :func:`basis_from_angles` over a leading population axis.

    ``angles`` has shape (N, L); returns (N, p, d).
    """
    theta = np.atleast_2d(np.asarray(angles, dtype=float))
    pairs = rotation_pairs(p, d)
    if theta.shape[1] != len(pairs):
        raise ContractViolation(
            f"genotype for p={p}, d={d} must have {len(pairs)} angles, got {theta.shape[1]}"
        )
    out = np.zeros((theta.shape[0], p, d))
    out[:, np.arange(d), np.arange(d)] = 1.0
    # B = G_1 G_2 ... G_L E, so the last rotation in the schedule acts first
    for col in range(len(pairs) - 1, -1, -1):
        i, j = pairs[col]
        c = np.cos(theta[:, col])[:, None]
        s = np.sin(theta[:, col])[:, None]
        ri, rj = out[:, i, :].copy(), out[:, j, :]
        out[:, i, :] = c * ri + s * rj
        out[:, j, :] = c * rj - s * ri
    return out


def basis_from_angles(angles, p: int | None = None, d: int | None = None) -> ProjectionBasis:
    """Orthonormal basis ``G_1 ... G_L [e_1 .. e_d]`` from Givens angles.

    ``G(i, j, t)`` rotates the (i, j) plane and maps ``e_i`` to
    ``cos(t) e_i - sin(t) e_j``; the plane schedule is :func:`rotation_pairs`.
    For p=2, d=1 and t=pi/4 the basis is ``(cos t, -sin t)``.
    ``angles`` may be an :class:`AngleGenotype`, in which case p and d come
    from it.
    """
    if isinstance(angles, AngleGenotype):
        angles, p, d = angles.angles, angles.p, angles.d
    elif p is None or d is None:
        raise ContractViolation("p and d are required with a raw angle vector")
    return ProjectionBasis(bases_from_angles(np.asarray(angles, dtype=float)[None], p, d)[0])


def angles_from_basis(basis) -> np.ndarray:
    """A genotype whose basis equals ``basis`` up to column signs.

    Peels the rotations off from the left in schedule order: ``G(i, j, t)^T``
    with ``t = atan2(-b_ji, b_ii)`` zeroes entry j of column i while keeping
    entry i nonnegative, so every angle lands in ``[-pi/2, pi/2]``.
    """
    work = np.array(getattr(basis, "matrix", basis), dtype=float)
    p, d = work.shape
    pairs = rotation_pairs(p, d)
    theta = np.zeros(len(pairs))
    for k, (i, j) in enumerate(pairs):
        if j == i + 1 and work[i, i] < 0:
            work[:, i] = -work[:, i]
        t = math.atan2(-work[j, i], work[i, i])
        theta[k] = t
        c, s = math.cos(t), math.sin(t)
        ri, rj = work[i].copy(), work[j].copy()
        work[i] = c * ri - s * rj
        work[j] = s * ri + c * rj
    return theta


# ---------------------------------------------------------------------------
# entropies and the negentropy index
# ---------------------------------------------------------------------------


def gaussian_entropy(covariance) -> float:
    """Differential entropy ``0.5 * log((2 pi e)^d |Sigma|)`` of a Gaussian."""
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or np.linalg.eigvalsh(cov)[0] <= 0:
        raise ContractViolation("covariance must be symmetric positive definite")
    return 0.5 * (cov.shape[0] * LOG_2PIE + logdet)


def _principal_frame(weights, means, covs):
    """Rotate batched mixtures into the principal axes of their overall covariance.

    Makes the UT sigma-point set, and so the entropy approximation, depend only
    on the distribution and not on how the coordinates are rotated.
    """
    centre = np.einsum("k,nkd->nd", weights, means)
    dev = means - centre[:, None, :]
    total = np.einsum("k,nkde->nde", weights, covs) + np.einsum("k,nkd,nke->nde", weights, dev, dev)
    _, vecs = np.linalg.eigh(0.5 * (total + np.swapaxes(total, -1, -2)))
    vecs = canonical_signs(vecs)
    means_r = np.einsum("nkd,nde->nke", dev, vecs)
    covs_r = np.swapaxes(vecs, -1, -2)[:, None] @ covs @ vecs[:, None]
    return means_r, 0.5 * (covs_r + np.swapaxes(covs_r, -1, -2))


def _batch_ut_entropy(weights, means, covs, frame="principal"):
    """UT entropy for N mixtures sharing ``weights``; means (N,K,d), covs (N,K,d,d)."""
    n, k, d = means.shape
    if frame == "principal":
        means, covs = _principal_frame(weights, means, covs)
    elif frame != "native":
        raise ContractViolation(f"unknown frame {frame!r}")
    evals, evecs = np.linalg.eigh(covs)
    if np.any(evals <= 0):
        raise ContractViolation("component covariance is not positive definite")
    root = (evecs * np.sqrt(evals)[..., None, :]) @ np.swapaxes(evecs, -1, -2)
    offsets = math.sqrt(d) * np.concatenate([root, -root], axis=-2)  # rows are the sigma offsets
    pts = (means[:, :, None, :] + offsets).reshape(n, k * 2 * d, d)
    prec = np.linalg.inv(covs)
    _, logdet = np.linalg.slogdet(covs)
    diff = pts[:, :, None, :] - means[:, None, :, :]
    maha = np.einsum("nmkd,nkde,nmke->nmk", diff, prec, diff)
    comp = np.log(weights) - 0.5 * (d * LOG_2PI + logdet[:, None, :] + maha)
    logf = logsumexp(comp, axis=2).reshape(n, k, 2 * d)
    return -np.einsum("k,nk->n", weights, logf.mean(axis=2))


def entropy_ut(model: MixtureModel, frame: str = "principal") -> float:
    """Unscented-transform approximation of the mixture entropy.

    For each component, ``log f`` is averaged over the 2d sigma points
    ``mean +/- sqrt(d) * S[:, s]`` with ``S`` the symmetric square root of
    the component covariance; the component averages are weighted by the
    mixing proportions. Exact for a single Gaussian. With
    ``frame="principal"`` (default) the mixture is first rotated to the
    principal axes of its overall covariance.
    """
    return float(
        _batch_ut_entropy(model.weights, model.means[None], model.covariances[None], frame)[0]
    )


def entropy_mc(model: MixtureModel, n_samples: int = 100_000, seed=0) -> float:
    """Monte Carlo entropy estimate ``-mean(log f(z_i))`` over ``z_i ~ model``."""
    if n_samples < 1:
        raise ContractViolation("n_samples must be at least 1")
    z, _ = sample(model, n_samples, seed)
    return float(-np.mean(log_density(model, z)))


def _project_arrays(model: MixtureModel, bases):
    means = np.einsum("kp,npd->nkd", model.means, bases)
    covs = np.swapaxes(bases, -1, -2)[:, None] @ model.covariances[None] @ bases[:, None]
    return means, 0.5 * (covs + np.swapaxes(covs, -1, -2))


def _batch_negentropy(model: MixtureModel, bases, frame="principal"):
    """(negentropy, entropy, gaussian entropy) arrays for a stack of bases."""
    means, covs = _project_arrays(model, bases)
    w = model.weights
    centre = np.einsum("k,nkd->nd", w, means)
    dev = means - centre[:, None, :]
    total = np.einsum("k,nkde->nde", w, covs) + np.einsum("k,nkd,nke->nde", w, dev, dev)
    d = bases.shape[-1]
    h_gauss = 0.5 * (d * LOG_2PIE + np.linalg.slogdet(total)[1])
    h = _batch_ut_entropy(w, means, covs, frame)
    return h_gauss - h, h, h_gauss


def negentropy(model_p: MixtureModel, basis, method: str = "ut", *, n_samples=100_000, seed=0,
               frame="principal") -> float:
    """Negentropy of the projection of ``model_p`` onto ``basis``.

    ``method`` is ``"ut"`` (unscented transform) or ``"mc"`` (Monte Carlo).
    """
    b = np.asarray(getattr(basis, "matrix", basis), dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if b.shape[0] != model_p.dim:
        raise ContractViolation(f"basis has {b.shape[0]} rows, model has dimension {model_p.dim}")
    method = method.lower()
    if method == "ut":
        return float(_batch_negentropy(model_p, b[None], frame)[0][0])
    if method == "mc":
        proj = project_model(model_p, b)
        _, cov = mixture_moments(proj)
        return gaussian_entropy(cov) - entropy_mc(proj, n_samples, seed)
    raise ContractViolation(f"unknown negentropy method {method!r}")


# ---------------------------------------------------------------------------
# genetic algorithm
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaConfig:
    """Real-coded GA settings.

    ``local_search`` polishes the GA's best genotype with bounded L-BFGS-B on
    the same fitness before the result is returned.
    """

    population_size: int = 100
    max_generations: int = 200
    stagnation_generations: int = 50
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    elitism_count: int = 2
    seed: int = 0
    local_search: bool = True
    local_maxiter: int = 200

    def __post_init__(self):
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractViolation(f"{name} must lie in [0, 1]")
        for name in ("population_size", "max_generations", "stagnation_generations"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"{name} must be at least 1")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ContractViolation("elitism_count must lie in [0, population_size]")


@dataclass(frozen=True, eq=False)
class PpResult:
    basis: ProjectionBasis
    negentropy: float
    entropy: float
    gaussian_entropy: float
    generations_run: int
    history: np.ndarray = field(repr=False)
    genotype: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.matrix.tolist(),
            "negentropy": self.negentropy,
            "entropy": self.entropy,
            "gaussian_entropy": self.gaussian_entropy,
            "generations_run": self.generations_run,
            "history": [float(v) for v in self.history],
        }


def informed_bases(model_p: MixtureModel, d: int) -> list[np.ndarray]:
    """Candidate starting bases derived from the mixture itself.

    The leading generalized eigenvectors of the between-component scatter
    against the overall covariance (directions separating component means),
    and the leading principal axes of the overall covariance.
    """
    from scipy.linalg import eigh

    _, total = mixture_moments(model_p)
    centred = model_p.means - model_p.weights @ model_p.means
    between = (centred.T * model_p.weights) @ centred
    out = []
    for mat, metric in ((between, total), (total, None)):
        _, vecs = eigh(mat, metric)
        q, _ = np.linalg.qr(vecs[:, ::-1][:, :d])
        out.append(q)
    return out


def _rank_probabilities(n: int) -> np.ndarray:
    """Linear ranking: best gets 2/n, worst 0."""
    if n == 1:
        return np.ones(1)
    ranks = np.arange(n)
    return 2.0 / n - ranks * 2.0 / (n * (n - 1))


def ga_optimize(model_p: MixtureModel, d: int, config: GaConfig | None = None,
                initial_bases="informed") -> PpResult:
    """Search for the d-dimensional basis of maximal UT negentropy.

    Fitness is evaluated for the whole population at once. Selection is
    linear-rank, crossover whole-arithmetic with a uniform blend factor per
    pair, and mutation resets one uniformly chosen gene of a selected child
    to a uniform draw within ``[-pi/2, pi/2]``. The ``elitism_count`` best
    individuals survive unchanged, so the best-fitness history never
    decreases. ``initial_bases`` seeds part of the first population: a list
    of (p, d) bases, ``"informed"`` for :func:`informed_bases`, or ``None``.
    """
    config = config or GaConfig()
    p = model_p.dim
    if not 1 <= d < p:
        raise ContractViolation(f"subspace dimension must satisfy 1 <= d < p={p}, got d={d}")
    n_genes = n_angles(p, d)
    rng = np.random.default_rng(config.seed)
    size = config.population_size

    def fitness(pop):
        j = _batch_negentropy(model_p, bases_from_angles(pop, p, d))[0]
        return np.where(np.isfinite(j), j, -np.inf)

    pop = rng.uniform(-HALF_PI, HALF_PI, size=(size, n_genes))
    if isinstance(initial_bases, str) and initial_bases == "informed":
        initial_bases = informed_bases(model_p, d)
    if initial_bases is not None:
        seeds = [angles_from_basis(b) for b in initial_bases][:size]
        for i, g in enumerate(seeds):
            pop[i] = np.clip(g, -HALF_PI, HALF_PI)
    fit = fitness(pop)
    history = []
    best_val = -np.inf
    stale = 0
    probs = _rank_probabilities(size)
    n_elite = config.elitism_count
    gen = 0
    for gen in range(1, config.max_generations + 1):
        order = np.argsort(-fit, kind="stable")
        pop, fit = pop[order], fit[order]
        history.append(float(fit[0]))
        if fit[0] > best_val + 1e-6:
            stale = 0
        else:
            stale += 1
        best_val = max(best_val, fit[0])
        if stale >= config.stagnation_generations or gen == config.max_generations:
            break
        n_child = size - n_elite
        if n_child == 0:
            continue
        parents = pop[rng.choice(size, size=n_child + (n_child % 2), p=probs)]
        children = parents.copy()
        for a in range(0, len(parents) - 1, 2):
            if rng.random() < config.crossover_rate:
                u = rng.random()
                children[a] = u * parents[a] + (1.0 - u) * parents[a + 1]
                children[a + 1] = (1.0 - u) * parents[a] + u * parents[a + 1]
        children = children[:n_child]
        mutate = rng.random(n_child) < config.mutation_rate
        for i in np.flatnonzero(mutate):
            children[i, rng.integers(n_genes)] = rng.uniform(-HALF_PI, HALF_PI)
        pop = np.vstack([pop[:n_elite], children])
        fit = np.concatenate([fit[:n_elite], fitness(children)])

    best = pop[int(np.argmax(fit))].copy()
    best_fit = float(np.max(fit))
    if config.local_search:
        res = minimize(
            lambda g: -fitness(g[None])[0],
            best,
            method="L-BFGS-B",
            bounds=[(-HALF_PI, HALF_PI)] * n_genes,
            options={"maxiter": config.local_maxiter},
        )
        if np.isfinite(res.fun) and -res.fun > best_fit:
            best, best_fit = np.asarray(res.x, dtype=float), float(-res.fun)
    basis = basis_from_angles(best, p, d).canonical()
    j, h, hg = _batch_negentropy(model_p, basis.matrix[None])
    h, hg = float(h[0]), float(hg[0])
    return PpResult(
        basis=basis,
        negentropy=hg - h,
        entropy=h,
        gaussian_entropy=hg,
        generations_run=gen,
        history=np.array(history),
        genotype=best,
    )
