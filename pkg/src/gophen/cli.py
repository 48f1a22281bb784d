"""Batch command-line driver.

Subcommands: ``score`` (symptom inventory -> phenotype table), ``synth``
(synthetic benchmark bundle), ``run`` (grid + consensus over a dataset) and
``consensus`` (re-run the consensus layer on saved results). Options come
from a ``key = value`` config file; command-line flags override config
values. Exit codes: 0 success, 2 input/validation error, 3 internal
numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .consensus import (
    Scenario,
    build_report,
    write_common_terms_tsv,
    write_model_correlation_tsv,
    write_top_overlap_tsv,
)
from .data import (
    InputError,
    assemble_dataset,
    load_term_mapping_tsv,
    make_folds,
    save_expression_tsv,
    save_labels_tsv,
    save_phenotypes_tsv,
    save_term_mapping_tsv,
)
from .pipeline import (
    CVResult,
    ModelSpec,
    build_grid,
    grid_search,
    parse_float_list,
    parse_int_list,
    parse_key_value_config,
    parse_str_list,
    threshold_classify,
)
from .scoring import derive_phenotypes, load_symptoms_tsv
from .synth import config_from_mapping, generate_synthetic
from .terms import TermCoefficients

logger = logging.getLogger("gophen")

CONSENSUS_STAGES = ("go_start", "go_mid")


def _fmt(x: float) -> str:
    return repr(float(x))


def _model_id(spec: ModelSpec) -> str:
    return (f"{spec.phenotype}.{spec.stage}.{spec.screen_stat}"
            f".t{spec.threshold:g}.k{spec.n_components}")


# ---------------------------------------------------------------------------
# score


def cmd_score(args) -> int:
    records = load_symptoms_tsv(args.symptoms)
    subject_ids, scores = derive_phenotypes(records)
    save_phenotypes_tsv(subject_ids, scores, args.out)
    logger.info("wrote %d subjects x %d phenotypes to %s",
                len(subject_ids), len(scores), args.out)
    return 0


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    values = parse_key_value_config(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = str(args.seed)
    config = config_from_mapping(values)
    result = generate_synthetic(config)
    out = args.out
    import os
    os.makedirs(out, exist_ok=True)
    save_expression_tsv(result.dataset, os.path.join(out, "expression.tsv"))
    save_term_mapping_tsv(result.mapping, os.path.join(out, "mapping.tsv"))
    save_phenotypes_tsv(result.dataset.subject_ids, result.dataset.phenotypes,
                        os.path.join(out, "phenotypes.tsv"))
    save_labels_tsv(result.dataset.subject_ids, result.dataset.binary_labels,
                    os.path.join(out, "labels.tsv"))
    with open(os.path.join(out, "planted_terms.tsv"), "w",
              encoding="utf-8", newline="") as fh:
        fh.write("term_id\tweight\n")
        for term, w in zip(result.planted_term_ids, config.effect_weights):
            fh.write(f"{term}\t{_fmt(w)}\n")
    logger.info("wrote synthetic bundle (%d subjects, %d features, %d terms,"
                " %d planted) to %s", config.n_subjects, config.n_features,
                config.n_terms, config.n_planted_terms, out)
    return 0


# ---------------------------------------------------------------------------
# run


class RunSettings:
    """Resolved run configuration (config file + flag overrides)."""

    def __init__(self, values: dict):
        def get(key, default=None):
            return values.get(key, default)

        self.expression = get("expression")
        self.mapping = get("mapping")
        self.phenotypes = get("phenotypes")
        self.symptoms = get("symptoms")
        self.labels = get("labels")
        self.output_dir = get("output_dir", "gophen_out")
        self.stages = parse_str_list(get("stages", "go_start,go_mid"))
        self.phenotype_names = (parse_str_list(get("phenotype_names"))
                                if get("phenotype_names") else None)
        self.family = get("family", "linear")
        self.screen_stat = get("screen_stat", "pearson")
        self.thresholds = parse_float_list(get("thresholds", "default"))
        self.components = parse_int_list(get("components", "1..54"))
        self.k = int(get("k", 5))
        self.seed = int(get("seed", 0))
        self.q = float(get("q", 0.2))
        self.delta = float(get("delta", 0.05))
        self.jobs = int(get("jobs", 1))
        if self.expression is None:
            raise InputError("config needs an 'expression' path")
        if self.screen_stat == "t_test" and get("thresholds", "default") == "default":
            raise InputError(
                "t_test screening has no default thresholds; set 'thresholds'")


def _settings_from_args(args) -> RunSettings:
    values = parse_key_value_config(args.config) if args.config else {}
    overrides = {
        "expression": args.expression, "mapping": args.mapping,
        "phenotypes": args.phenotypes, "symptoms": args.symptoms,
        "labels": args.labels, "output_dir": args.out,
        "stages": args.stages, "phenotype_names": args.phenotype_names,
        "family": args.family, "screen_stat": args.screen_stat,
        "thresholds": args.thresholds, "components": args.components,
        "k": args.k, "seed": args.seed, "q": args.q, "delta": args.delta,
        "jobs": args.jobs,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = str(value)
    return RunSettings(values)


def _load_run_inputs(settings: RunSettings):
    dataset = assemble_dataset(settings.expression, settings.phenotypes,
                               settings.labels)
    if settings.symptoms:
        records = load_symptoms_tsv(settings.symptoms)
        subject_ids, scores = derive_phenotypes(records)
        if tuple(subject_ids) != dataset.subject_ids:
            order = {s: i for i, s in enumerate(subject_ids)}
            missing = [s for s in dataset.subject_ids if s not in order]
            if missing:
                raise InputError(
                    f"symptom file is missing subjects: {missing[:5]}")
            idx = np.asarray([order[s] for s in dataset.subject_ids])
            scores = {n: v[idx] for n, v in scores.items()}
        dataset = dataset.with_phenotypes(scores)
    mapping = (load_term_mapping_tsv(settings.mapping)
               if settings.mapping else None)
    return dataset, mapping


def _scenario_grid(settings: RunSettings, stage: str, phenotype: str):
    return build_grid(stage, phenotype, family=settings.family,
                      screen_stat=settings.screen_stat,
                      thresholds=settings.thresholds,
                      components=settings.components)


def _run_one_scenario(payload):
    dataset, mapping, settings, stage, phenotype = payload
    grid = _scenario_grid(settings, stage, phenotype)
    folds = make_folds(dataset.n_subjects, settings.k, settings.seed)
    results = grid_search(dataset, mapping, grid, folds)
    return results


def _grid_hash(all_specs) -> str:
    canon = "\n".join(
        f"{s.phenotype}\t{s.stage}\t{s.screen_stat}\t{s.threshold!r}"
        f"\t{s.n_components}\t{s.family}" for s in all_specs)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _write_summary(path, results, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model_id\tphenotype\tstage\tfamily\tscreen_stat\tthreshold"
                 "\tn_components\tn_folds\tpredictive_correlation"
                 "\tn_degenerate_folds\tclassification_accuracy\n")
        for r in results:
            s = r.spec
            acc = ""
            if labels is not None and r.oof_predictions is not None:
                acc = _fmt(threshold_classify(r.oof_predictions, labels))
            fh.write("\t".join([
                _model_id(s), s.phenotype, s.stage, s.family, s.screen_stat,
                _fmt(s.threshold), str(s.n_components), str(r.n_folds),
                _fmt(r.predictive_correlation), str(len(r.degenerate_folds)),
                acc]) + "\n")


def _write_coefficients(path, results) -> None:
    joint = [r for r in results if r.consolidated_term_coefs is not None]
    if not joint:
        return
    universe = joint[0].consolidated_term_coefs.term_ids
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("term_id\t" + "\t".join(_model_id(r.spec) for r in joint) + "\n")
        columns = [r.consolidated_term_coefs.coefficients for r in joint]
        for i, term in enumerate(universe):
            fh.write(term + "\t" + "\t".join(_fmt(c[i]) for c in columns) + "\n")


def _write_phenotype_summary(path, dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("phenotype\tlabel\tmin\tq1\tmedian\tq3\tmax\n")
        for name, vec in dataset.phenotypes.items():
            for label in ("NF", "CFS"):
                group = vec[dataset.binary_labels == label]
                if group.size == 0:
                    continue
                qs = np.percentile(group, [0, 25, 50, 75, 100])
                fh.write(name + "\t" + label + "\t" +
                         "\t".join(f"{v:.6g}" for v in qs) + "\n")


def _write_reports(out, results_by_scenario, q, delta, term_names) -> None:
    import os
    report = build_report(results_by_scenario, q=q, delta=delta)
    write_model_correlation_tsv(
        report, os.path.join(out, "report_model_correlations.tsv"))
    write_top_overlap_tsv(report, os.path.join(out, "report_top_overlap.tsv"))
    write_common_terms_tsv(
        report, os.path.join(out, "report_common_terms.tsv"), term_names)
    logger.info("consensus over %d scenarios: %d common terms at q=%g",
                len(results_by_scenario), len(report.common_terms), q)


def cmd_run(args) -> int:
    import os
    settings = _settings_from_args(args)
    dataset, mapping = _load_run_inputs(settings)
    os.makedirs(settings.output_dir, exist_ok=True)
    phenotype_names = settings.phenotype_names
    if phenotype_names is None:
        phenotype_names = (list(dataset.phenotypes)
                           if settings.family == "linear" else ["labels"])
        if not phenotype_names:
            raise InputError("no phenotypes available; provide 'phenotypes', "
                             "'symptoms' or 'phenotype_names'")
    scenarios = [(stage, pheno) for pheno in phenotype_names
                 for stage in settings.stages]
    payloads = [(dataset, mapping, settings, stage, pheno)
                for stage, pheno in scenarios]
    if settings.jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=settings.jobs) as pool:
            per_scenario = list(pool.map(_run_one_scenario, payloads))
    else:
        per_scenario = [_run_one_scenario(p) for p in payloads]

    all_results = [r for results in per_scenario for r in results]
    labels = dataset.binary_labels
    _write_summary(os.path.join(settings.output_dir, "models_summary.tsv"),
                   all_results, labels)
    _write_coefficients(
        os.path.join(settings.output_dir, "model_coefficients.tsv"),
        all_results)
    if labels is not None and dataset.phenotypes:
        _write_phenotype_summary(
            os.path.join(settings.output_dir, "phenotype_summary.tsv"),
            dataset)

    results_by_scenario = {}
    for (stage, pheno), results in zip(scenarios, per_scenario):
        if stage in CONSENSUS_STAGES:
            results_by_scenario[Scenario(pheno, stage)] = results
    if results_by_scenario:
        term_names = mapping.term_names if mapping else None
        _write_reports(settings.output_dir, results_by_scenario,
                       settings.q, settings.delta, term_names)

    manifest = {
        "tool": "gophen",
        "versions": {
            "gophen": __version__,
            "numpy": np.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "seed": settings.seed,
        "k": settings.k,
        "q": settings.q,
        "delta": settings.delta,
        "family": settings.family,
        "screen_stat": settings.screen_stat,
        "scenarios": [f"{p}/{s}" for s, p in scenarios],
        "grid_hash": _grid_hash([r.spec for r in all_results]),
        "n_models": len(all_results),
        "inputs": {
            "expression": settings.expression,
            "mapping": settings.mapping,
            "phenotypes": settings.phenotypes,
            "symptoms": settings.symptoms,
            "labels": settings.labels,
        },
    }
    with open(os.path.join(settings.output_dir, "manifest.json"), "w",
              encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("run complete: %d models over %d scenarios -> %s",
                len(all_results), len(scenarios), settings.output_dir)
    return 0


# ---------------------------------------------------------------------------
# consensus (re-run on saved results)


def _load_saved_results(results_dir):
    import os
    summary_path = os.path.join(results_dir, "models_summary.tsv")
    coef_path = os.path.join(results_dir, "model_coefficients.tsv")
    for path in (summary_path, coef_path):
        if not os.path.exists(path):
            raise InputError(f"missing saved results file: {path}")
    with open(summary_path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split("\t")
    idx = {name: i for i, name in enumerate(header)}
    rows = {}
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split("\t")
        rows[cells[idx["model_id"]]] = cells
    with open(coef_path, "r", encoding="utf-8", newline="") as fh:
        clines = fh.read().splitlines()
    model_ids = clines[0].split("\t")[1:]
    term_ids, matrix = [], []
    for line in clines[1:]:
        if not line:
            continue
        cells = line.split("\t")
        term_ids.append(cells[0])
        matrix.append([float(v) for v in cells[1:]])
    coefs = np.asarray(matrix, dtype=np.float64)
    results = []
    for j, model_id in enumerate(model_ids):
        cells = rows.get(model_id)
        if cells is None:
            raise InputError(f"model {model_id!r} missing from summary")
        spec = ModelSpec(
            stage=cells[idx["stage"]],
            screen_stat=cells[idx["screen_stat"]],
            threshold=float(cells[idx["threshold"]]),
            n_components=int(cells[idx["n_components"]]),
            family=cells[idx["family"]],
            phenotype=cells[idx["phenotype"]],
        )
        term_coefs = TermCoefficients(tuple(term_ids), coefs[:, j], "joint")
        results.append(CVResult(
            spec, None, float(cells[idx["predictive_correlation"]]), (),
            term_coefs, None, (), int(cells[idx["n_folds"]])))
    return results


def cmd_consensus(args) -> int:
    import os
    results = _load_saved_results(args.results)
    out = args.out or args.results
    os.makedirs(out, exist_ok=True)
    results_by_scenario = {}
    for r in results:
        if r.spec.stage not in CONSENSUS_STAGES:
            continue
        scenario = Scenario(r.spec.phenotype, r.spec.stage)
        results_by_scenario.setdefault(scenario, []).append(r)
    if not results_by_scenario:
        raise InputError("saved results contain no consensus-eligible models")
    term_names = None
    if args.mapping:
        term_names = load_term_mapping_tsv(args.mapping).term_names
    _write_reports(out, results_by_scenario, args.q, args.delta, term_names)
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gophen",
        description="Supervised principal component phenotype prediction "
                    "with term-level integration and consensus reports.")
    parser.add_argument("--verbose", "-v", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="symptom inventory -> phenotypes")
    p_score.add_argument("--symptoms", required=True,
                         help="symptom TSV (subject_id, instrument, "
                              "symptom_id, severity_code, frequency_code)")
    p_score.add_argument("--out", required=True, help="output phenotype TSV")
    p_score.set_defaults(func=cmd_score)

    p_synth = sub.add_parser("synth", help="generate a synthetic bundle")
    p_synth.add_argument("--config", help="key = value synthetic config")
    p_synth.add_argument("--seed", type=int, help="override the seed")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_run = sub.add_parser("run", help="grid + consensus over a dataset")
    p_run.add_argument("--config", help="key = value run config")
    for flag in ("expression", "mapping", "phenotypes", "symptoms", "labels",
                 "stages", "phenotype-names", "family", "screen-stat",
                 "thresholds", "components"):
        p_run.add_argument(f"--{flag}", dest=flag.replace("-", "_"))
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--k", type=int, help="fold count")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--q", type=float, help="top coefficient fraction")
    p_run.add_argument("--delta", type=float,
                       help="near-best window for Alternate models")
    p_run.add_argument("--jobs", type=int,
                       help="max parallel scenario evaluations")
    p_run.set_defaults(func=cmd_run)

    p_cons = sub.add_parser("consensus",
                            help="re-run consensus on saved results")
    p_cons.add_argument("--results", required=True,
                        help="directory with models_summary.tsv and "
                             "model_coefficients.tsv")
    p_cons.add_argument("--mapping", help="mapping TSV for term names")
    p_cons.add_argument("--out", help="output directory (default: results)")
    p_cons.add_argument("--q", type=float, default=0.2)
    p_cons.add_argument("--delta", type=float, default=0.05)
    p_cons.set_defaults(func=cmd_consensus)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
