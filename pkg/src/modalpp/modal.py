"""Modal EM: ascend a Gaussian mixture density from each data point to a local
maximum, then group points by the mode they reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .errors import AlgorithmFault, ContractViolation
from .mixture import MixtureModel, _as_points, log_density, responsibilities


@dataclass(frozen=True)
class MemConfig:
    """Modal EM settings.

    The step size at iteration t is ``1 - exp(-step_rate * t)``. Points stop
    when the relative change of their density falls below ``tol``. Converged
    points closer than ``merge_eps`` times the bounding-box diagonal of the
    starting points are merged (single linkage).
    """

    step_rate: float = 0.1
    tol: float = 1e-8
    max_iter: int = 1000
    merge_eps: float = 1e-3
    record_paths: bool = False
    monotone_slack: float = 1e-12

    def __post_init__(self):
        if self.step_rate <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ContractViolation("step_rate, tol and max_iter must be positive")
        if not 0 < self.merge_eps < 1:
            raise ContractViolation("merge_eps must lie in (0, 1)")


def step_size(t, step_rate: float = 0.1):
    """``omega_t = 1 - exp(-step_rate * t)``."""
    return -np.expm1(-step_rate * np.asarray(t, dtype=float))


@dataclass(frozen=True, eq=False)
class Ascent:
    """Per-point outcome of :func:`mem_ascend`, before modes are merged."""

    points: np.ndarray
    log_density: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    paths: list | None = field(default=None, repr=False)
    log_density_paths: list | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class ModalResult:
    modes: np.ndarray
    assignments: np.ndarray  # 1-based
    density_at_modes: np.ndarray
    iterations: np.ndarray
    paths: list | None = field(default=None, repr=False)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    def to_dict(self) -> dict:
        obj = {
            "modes": self.modes.tolist(),
            "n_modes": self.n_modes,
            "density_at_modes": self.density_at_modes.tolist(),
            "assignments": [int(a) for a in self.assignments],
            "iterations": [int(i) for i in self.iterations],
        }
        if self.paths is not None:
            obj["paths"] = [p.tolist() for p in self.paths]
        return obj


def mem_proposal(model: MixtureModel, points, resp=None) -> np.ndarray:
    """Closed-form M-step for every row at once.

    ``z* = (sum_k zeta_k P_k)^-1 sum_k zeta_k P_k eta_k`` with ``P_k`` the
    component precisions and ``zeta`` the responsibilities at ``points``.
    """
    z = _as_points(points, model.dim)
    if resp is None:
        resp = responsibilities(model, z)
    prec = model.precisions
    a = np.einsum("nk,kij->nij", resp, prec)
    b = np.einsum("nk,kij,kj->ni", resp, prec, model.means)
    return np.linalg.solve(a, b[..., None])[..., 0]


def m_step_objective(model: MixtureModel, resp_row, z) -> float:
    """``Q(z) = sum_k zeta_k log phi(z; eta_k, Gamma_k)`` for fixed ``zeta``."""
    lc = model.component_log_densities(np.atleast_2d(z))[0] - np.log(model.weights)
    return float(np.dot(resp_row, lc))


def m_step_gradient(model: MixtureModel, resp_row, z) -> np.ndarray:
    """``grad Q(z) = -sum_k zeta_k Gamma_k^-1 (z - eta_k)``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    return -np.einsum("k,kij,kj->i", resp_row, model.precisions, z - model.means)


def mem_ascend(model: MixtureModel, start_points, config: MemConfig | None = None) -> Ascent:
    """Damped Modal EM from each starting point, all rows advanced together.

    ``z_t = (1 - w_t) z_{t-1} + w_t z*`` with ``w_t = 1 - exp(-c t)``.
    A row is frozen once its relative density change drops below
    ``config.tol``. Density must never decrease (up to
    ``config.monotone_slack`` relative); a decrease raises
    :class:`AlgorithmFault`.
    """
    config = config or MemConfig()
    z = _as_points(start_points, model.dim).copy()
    n = z.shape[0]
    logf = log_density(model, z)
    active = np.ones(n, dtype=bool)
    iterations = np.zeros(n, dtype=int)
    log_slack = math.log1p(-config.monotone_slack)
    paths = [[row.copy()] for row in z] if config.record_paths else None
    lpaths = [[v] for v in logf] if config.record_paths else None

    for t in range(1, config.max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cur = z[idx]
        prop = mem_proposal(model, cur)
        omega = step_size(t, config.step_rate)
        new = (1.0 - omega) * cur + omega * prop
        new_logf = log_density(model, new)
        delta = new_logf - logf[idx]
        bad = delta < log_slack
        if np.any(bad):
            i = idx[np.flatnonzero(bad)[0]]
            raise AlgorithmFault(
                f"density decreased at point {i + 1}, iteration {t} "
                f"(log f {logf[i]!r} -> {new_logf[np.flatnonzero(bad)[0]]!r})"
            )
        z[idx] = new
        logf[idx] = new_logf
        iterations[idx] = t
        if paths is not None:
            for r, i in enumerate(idx):
                paths[i].append(new[r].copy())
                lpaths[i].append(new_logf[r])
        # relative density change; large jumps are clipped before expm1
        done = np.abs(np.expm1(np.minimum(delta, 1.0))) < config.tol
        active[idx[done]] = False

    return Ascent(
        points=z,
        log_density=logf,
        iterations=iterations,
        converged=~active,
        paths=[np.array(p) for p in paths] if paths is not None else None,
        log_density_paths=[np.array(p) for p in lpaths] if lpaths is not None else None,
    )


def bounding_diagonal(points) -> float:
    x = np.asarray(points, dtype=float)
    return float(np.linalg.norm(x.max(axis=0) - x.min(axis=0)))


def merge_modes(converged, densities, config: MemConfig | None = None, reference=None,
                iterations=None, paths=None) -> ModalResult:
    """Group converged points by single linkage and pick one mode per group.

    The link threshold is ``config.merge_eps`` times the bounding-box diagonal
    of ``reference`` (the starting points; defaults to ``converged``). Each
    group's mode is its highest-density member. Modes are numbered in order
    of their first member.
    """
    config = config or MemConfig()
    x = np.asarray(converged, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    dens = np.asarray(densities, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ContractViolation("converged points must be finite")
    n = x.shape[0]
    diag = bounding_diagonal(x if reference is None else reference)
    threshold = config.merge_eps * diag
    if n == 1:
        groups = np.zeros(1, dtype=int)
    elif threshold <= 0:
        _, groups = np.unique(x, axis=0, return_inverse=True)
    else:
        raw = fcluster(linkage(x, method="single"), t=threshold, criterion="distance")
        groups = raw - 1
    # renumber by first appearance
    _, first = np.unique(groups, return_index=True)
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(len(order))
    groups = relabel[groups.reshape(-1)]
    m = len(order)
    modes = np.empty((m, x.shape[1]))
    dmodes = np.empty(m)
    for g in range(m):
        members = np.flatnonzero(groups == g)
        top = members[np.argmax(dens[members])]
        modes[g] = x[top]
        dmodes[g] = dens[top]
    return ModalResult(
        modes=modes,
        assignments=groups + 1,
        density_at_modes=dmodes,
        iterations=np.zeros(n, dtype=int) if iterations is None else np.asarray(iterations),
        paths=paths,
    )


def modal_cluster(model: MixtureModel, points, config: MemConfig | None = None) -> ModalResult:
    """Modal EM from every point followed by mode merging."""
    config = config or MemConfig()
    start = _as_points(points, model.dim)
    asc = mem_ascend(model, start, config)
    return merge_modes(
        asc.points,
        np.exp(asc.log_density),
        config,
        reference=start,
        iterations=asc.iterations,
        paths=asc.paths,
    )


def map_assign(model: MixtureModel, points) -> np.ndarray:
    """Maximum a posteriori component (1-based); ties go to the smaller index."""
    return np.argmax(model.component_log_densities(points), axis=1) + 1
