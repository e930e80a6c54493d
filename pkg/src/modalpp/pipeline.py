"""Pipeline stages: fit -> project -> cluster -> evaluate.

Each stage reads its inputs, writes its artifacts atomically into an output
directory and returns the in-memory results, so the CLI subcommands and the
composite ``pipeline`` command share one code path.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    LabeledDataset,
    adjusted_rand_index,
    labels_to_csv,
    load_csv,
    matrix_to_csv,
    standardize,
)
from .em import EmConfig, FitReport, fit_grid, select_from_grid, select_model
from .errors import ContractViolation
from .mixture import ALL_FAMILIES, CovarianceFamily, MixtureModel
from .modal import MemConfig, ModalResult, map_assign, modal_cluster
from .pursuit import GaConfig, PpResult, ga_optimize

log = logging.getLogger(__name__)

MODEL_FILE = "model.json"
BIC_FILE = "bic_grid.csv"
PP_FILE = "pp_result.json"
PROJECTED_FILE = "projected.csv"
PROJECTED_MODEL_FILE = "projected_model.json"
MODAL_FILE = "modal.json"
LABELS_FILE = "labels.csv"
TRUTH_FILE = "labels_true.csv"
MANIFEST_FILE = "run-manifest.json"


def parse_int_range(text) -> tuple[int, ...]:
    """``"1-9"``, ``"2,4,8"``, ``"3"`` or a mix like ``"1-3,5"``."""
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ContractViolation(f"cannot parse integer range {text!r}") from None
    if not out or min(out) < 1:
        raise ContractViolation(f"range {text!r} must list positive integers")
    return tuple(out)


def parse_families(text) -> tuple[CovarianceFamily, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(CovarianceFamily.parse(f) for f in text)
    if str(text).strip().lower() == "all":
        return ALL_FAMILIES
    return tuple(CovarianceFamily.parse(f) for f in str(text).split(",") if f.strip())


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ContractViolation(f"cannot parse boolean {value!r}")


@dataclass
class PipelineConfig:
    input: str | None = None
    output_dir: str = "modalpp-out"
    standardize: bool = True
    components: tuple[int, ...] = tuple(range(1, 10))
    families: tuple[CovarianceFamily, ...] = ALL_FAMILIES
    dim: tuple[int, ...] = (2,)
    label_column: str = "class"
    seed: int = 0
    record_paths: bool = False
    ga: GaConfig = field(default_factory=GaConfig)
    mem: MemConfig = field(default_factory=MemConfig)
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if not self.dim or min(self.dim) < 1:
            raise ContractViolation("subspace dimension must be at least 1")

    def em_config(self) -> EmConfig:
        return dataclasses.replace(self.em, seed=self.seed)

    def ga_config(self) -> GaConfig:
        return dataclasses.replace(self.ga, seed=self.seed)

    def mem_config(self) -> MemConfig:
        return dataclasses.replace(self.mem, record_paths=self.record_paths)

    def to_dict(self) -> dict:
        return {
            "input": self.input,
            "output_dir": self.output_dir,
            "standardize": self.standardize,
            "components": list(self.components),
            "families": [f.value for f in self.families],
            "dim": list(self.dim),
            "label_column": self.label_column,
            "seed": self.seed,
            "record_paths": self.record_paths,
            "ga": dataclasses.asdict(self.ga) | {"seed": self.seed},
            "mem": dataclasses.asdict(self.mem) | {"record_paths": self.record_paths},
            "em": dataclasses.asdict(self.em) | {"seed": self.seed},
        }


# keys accepted in config files (and their nested target)
_NESTED = {"ga": GaConfig, "mem": MemConfig, "em": EmConfig}
_TOP_PARSERS = {
    "input": str,
    "output_dir": str,
    "standardize": _parse_bool,
    "components": parse_int_range,
    "families": parse_families,
    "dim": parse_int_range,
    "label_column": str,
    "seed": int,
    "record_paths": _parse_bool,
}


def _coerce(cls, name, value):
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    if "bool" in str(ftype):
        return _parse_bool(value)
    if "int" in str(ftype) and "float" not in str(ftype):
        return int(value)
    if value is None or str(value).lower() == "none":
        return None
    return float(value)


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Resolve a config from ``key = value`` settings with overrides on top.

    Nested settings use a prefix: ``ga_population_size``, ``mem_step_rate``,
    ``em_n_starts``.
    """
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    top, nested = {}, {key: {} for key in _NESTED}
    for key, value in merged.items():
        key = key.strip().lower().replace("-", "_")
        if key in _TOP_PARSERS:
            top[key] = _TOP_PARSERS[key](value)
            continue
        prefix, _, rest = key.partition("_")
        cls = _NESTED.get(prefix)
        if cls is None or rest not in {f.name for f in dataclasses.fields(cls)}:
            raise ContractViolation(f"unknown configuration key {key!r}")
        try:
            nested[prefix][rest] = _coerce(cls, rest, value)
        except ValueError:
            raise ContractViolation(f"bad value {value!r} for {key!r}") from None
    for prefix, cls in _NESTED.items():
        top[prefix] = cls(**nested[prefix])
    return PipelineConfig(**top)


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ContractViolation(f"{path}: malformed config file ({exc})") from None
    return dict(parser["run"])


# ---------------------------------------------------------------------------
# file output
# ---------------------------------------------------------------------------


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2) + "\n")


def write_manifest(out_dir, command: str, config: PipelineConfig, **extra) -> Path:
    obj = {"command": command, "version": __version__, "seed": config.seed, "config": config.to_dict()}
    obj.update(extra)
    return write_json(Path(out_dir) / MANIFEST_FILE, obj)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def read_dataset(path, label_column: str | None) -> LabeledDataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh), [])
    use = label_column if label_column and label_column in [h.strip() for h in header] else None
    return load_csv(path, use)


def prepare(dataset: LabeledDataset, config: PipelineConfig) -> np.ndarray:
    return standardize(dataset.data)[0] if config.standardize else dataset.data


def bic_grid_csv(cells) -> str:
    lines = ["G,family,logL,nu,BIC,converged"]
    for c in cells:
        if c.ok:
            r = c.report
            lines.append(
                f"{c.n_components},{c.family.value},{r.log_likelihood!r},{r.n_parameters},"
                f"{r.bic!r},{str(r.converged).lower()}"
            )
        else:
            lines.append(f"{c.n_components},{c.family.value},,,,failed")
    return "\n".join(lines) + "\n"


def stage_fit(x, config: PipelineConfig, out_dir) -> FitReport:
    """BIC grid in the feature space; writes the grid table and the selected model."""
    cells = fit_grid(x, config.components, config.families, config.em_config())
    atomic_write(Path(out_dir) / BIC_FILE, bic_grid_csv(cells))
    report = select_from_grid(cells)
    write_json(Path(out_dir) / MODEL_FILE, report.to_dict())
    return report


def stage_project(x, model: MixtureModel, d: int, config: PipelineConfig, out_dir):
    """Negentropy projection pursuit; writes the basis diagnostics and ``PP1..PPd``.

    A single Gaussian has zero negentropy along every direction, so when the
    selected model has one component the search uses the best BIC model with
    at least two components instead.
    """
    p = x.shape[1]
    if not 1 <= d < p:
        raise ContractViolation(f"subspace dimension d={d} must satisfy 1 <= d < p={p}")
    if model.dim != p:
        raise ContractViolation(f"model dimension {model.dim} does not match data ({p} columns)")
    refit = False
    if model.n_components == 1:
        comps = tuple(g for g in config.components if g >= 2) or (2,)
        model = select_model(x, comps, config.families, config.em_config()).model
        refit = True
        log.info("single-component model; projection pursuit uses G=%d %s", model.n_components,
                 model.family.value)
    result = ga_optimize(model, d, config.ga_config())
    z = x @ result.basis.matrix
    obj = result.to_dict()
    obj["model_refit"] = refit
    write_json(Path(out_dir) / PP_FILE, obj)
    atomic_write(Path(out_dir) / PROJECTED_FILE, matrix_to_csv(z, [f"PP{j + 1}" for j in range(d)]))
    return result, z


def stage_cluster(z, config: PipelineConfig, out_dir):
    """Mixture fit by BIC on the projected data, then Modal EM clustering."""
    report = select_model(z, config.components, config.families, config.em_config())
    write_json(Path(out_dir) / PROJECTED_MODEL_FILE, report.to_dict())
    modal = modal_cluster(report.model, z, config.mem_config())
    obj = modal.to_dict()
    obj["map_assignments"] = [int(v) for v in map_assign(report.model, z)]
    write_json(Path(out_dir) / MODAL_FILE, obj)
    atomic_write(Path(out_dir) / LABELS_FILE, labels_to_csv(modal.assignments))
    return report, modal


@dataclass
class PipelineRun:
    d: int
    fit: FitReport
    pp: PpResult
    projected_fit: FitReport
    modal: ModalResult
    ari: float | None


def run_pipeline(config: PipelineConfig, dataset: LabeledDataset | None = None) -> list[PipelineRun]:
    """Full pipeline for every requested subspace dimension.

    With one dimension the artifacts go straight into ``output_dir``; with a
    sweep each dimension gets a ``d<k>`` subdirectory and a ``sweep.csv``
    summary is written at the top.
    """
    if dataset is None:
        if config.input is None:
            raise ContractViolation("no input file given")
        dataset = read_dataset(config.input, config.label_column)
    out = Path(config.output_dir)
    x = prepare(dataset, config)
    if max(config.dim) >= dataset.p:
        raise ContractViolation(f"subspace dimension must be below p={dataset.p}")
    fit = stage_fit(x, config, out)
    if dataset.labels is not None:
        atomic_write(out / TRUTH_FILE, labels_to_csv(dataset.labels, "class"))
    runs = []
    for d in config.dim:
        sub = out if len(config.dim) == 1 else out / f"d{d}"
        pp, z = stage_project(x, fit.model, d, config, sub)
        pfit, modal = stage_cluster(z, config, sub)
        ari = None
        if dataset.labels is not None:
            ari = adjusted_rand_index(modal.assignments, dataset.labels)
            write_json(sub / "evaluation.json", {"ari": ari, "n_modes": modal.n_modes})
        runs.append(PipelineRun(d, fit, pp, pfit, modal, ari))
    if len(config.dim) > 1:
        lines = ["d,negentropy,n_modes,ARI"]
        for r in runs:
            ari = "" if r.ari is None else repr(r.ari)
            lines.append(f"{r.d},{r.pp.negentropy!r},{r.modal.n_modes},{ari}")
        atomic_write(out / "sweep.csv", "\n".join(lines) + "\n")
    write_manifest(out, "pipeline", config)
    return runs
