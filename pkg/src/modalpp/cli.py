"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``project``, ``cluster``, ``evaluate`` and
``pipeline`` (fit -> project -> cluster -> evaluate in one go).

Exit status: 0 on success, 2 for usage and contract errors (including
unreadable or malformed input), 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import GENERATORS, adjusted_rand_index, dataset_to_csv, load_labels
from .errors import ContractViolation, NumericalError
from .mixture import MixtureModel
from .pipeline import (
    MODEL_FILE,
    PROJECTED_FILE,
    atomic_write,
    build_config,
    prepare,
    read_config_file,
    read_dataset,
    run_pipeline,
    stage_cluster,
    stage_fit,
    stage_project,
    write_manifest,
)

EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _add_common(p: argparse.ArgumentParser, *, dim=True, input_help="input CSV with header row"):
    p.add_argument("--input", "-i", help=input_help)
    p.add_argument("--output-dir", "-o", help="directory for results (default: modalpp-out)")
    p.add_argument("--config", "-c", help="key = value configuration file; flags override it")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--components", help="component counts to try, e.g. 1-9 or 2,3,5")
    p.add_argument("--families", help="covariance families, e.g. EII,VVV or all")
    p.add_argument("--no-standardize", dest="standardize", action="store_const", const=False,
                   help="fit on the raw columns instead of standardized ones")
    p.add_argument("--label-column", help="name of the class column (default: class)")
    if dim:
        p.add_argument("--dim", "-d", help="projection dimension, or a range such as 1-5")
    p.add_argument("--record-paths", action="store_const", const=True,
                   help="store Modal EM iteration paths in modal.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modalpp",
        description="Projection pursuit with Gaussian mixtures and Modal EM clustering.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic dataset as CSV")
    p.add_argument("generator", choices=sorted(GENERATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="output CSV path (default: standard output)")

    p = sub.add_parser("fit", help="BIC grid of Gaussian mixtures on the input data")
    _add_common(p, dim=False)

    p = sub.add_parser("project", help="negentropy projection pursuit")
    _add_common(p)
    p.add_argument("--model", help=f"model JSON from 'fit' (default: OUTPUT_DIR/{MODEL_FILE})")

    p = sub.add_parser("cluster", help="Modal EM clustering of projected data")
    _add_common(p, dim=False, input_help=f"projected CSV (default: OUTPUT_DIR/{PROJECTED_FILE})")

    p = sub.add_parser("pipeline", help="fit, project, cluster and evaluate")
    _add_common(p)

    p = sub.add_parser("evaluate", help="adjusted Rand index of two label files")
    p.add_argument("labels_a")
    p.add_argument("labels_b")
    return parser


def _resolve(args) -> "PipelineConfig":  # noqa: F821
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {
        key: getattr(args, key, None)
        for key in ("input", "output_dir", "seed", "components", "families", "standardize",
                    "label_column", "dim", "record_paths")
    }
    return build_config(file_values, overrides)


def _cmd_simulate(args) -> int:
    text = dataset_to_csv(GENERATORS[args.generator](args.seed))
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_fit(args) -> int:
    config = _resolve(args)
    if config.input is None:
        raise ContractViolation("--input is required")
    dataset = read_dataset(config.input, config.label_column)
    report = stage_fit(prepare(dataset, config), config, config.output_dir)
    write_manifest(config.output_dir, "fit", config)
    m = report.model
    print(f"selected G={m.n_components} {m.family.value}  logL={report.log_likelihood:.4f}  "
          f"BIC={report.bic:.4f}")
    return 0


def _cmd_project(args) -> int:
    config = _resolve(args)
    if config.input is None:
        raise ContractViolation("--input is required")
    if len(config.dim) != 1:
        raise ContractViolation("project takes a single --dim; use 'pipeline' for sweeps")
    model_path = Path(args.model) if args.model else Path(config.output_dir) / MODEL_FILE
    if not model_path.is_file():
        raise FileNotFoundError(f"model file not found: {model_path}")
    try:
        model = MixtureModel.from_dict(json.loads(model_path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{model_path}: invalid JSON ({exc})") from None
    dataset = read_dataset(config.input, config.label_column)
    result, _ = stage_project(prepare(dataset, config), model, config.dim[0], config,
                              config.output_dir)
    write_manifest(config.output_dir, "project", config, model=str(model_path))
    print(f"d={config.dim[0]}  negentropy={result.negentropy:.4f}  "
          f"generations={result.generations_run}")
    return 0


def _cmd_cluster(args) -> int:
    config = _resolve(args)
    path = Path(config.input) if config.input else Path(config.output_dir) / PROJECTED_FILE
    z = read_dataset(path, None).data
    report, modal = stage_cluster(z, config, config.output_dir)
    write_manifest(config.output_dir, "cluster", config)
    print(f"K={report.model.n_components} {report.model.family.value}  modes={modal.n_modes}")
    return 0


def _cmd_pipeline(args) -> int:
    config = _resolve(args)
    for run in run_pipeline(config):
        line = (f"d={run.d}  negentropy={run.pp.negentropy:.4f}  modes={run.modal.n_modes}")
        if run.ari is not None:
            line += f"  ARI={run.ari:.4f}"
        print(line)
    return 0


def _cmd_evaluate(args) -> int:
    a = load_labels(args.labels_a)
    b = load_labels(args.labels_b)
    if a.size != b.size:
        raise ContractViolation(f"label files differ in length ({a.size} vs {b.size})")
    print(f"{adjusted_rand_index(a, b):.4f}")
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "project": _cmd_project,
    "cluster": _cmd_cluster,
    "pipeline": _cmd_pipeline,
    "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        missing = exc.filename or exc
        print(f"modalpp: error: file not found: {missing}" if exc.filename
              else f"modalpp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractViolation as exc:
        print(f"modalpp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"modalpp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
