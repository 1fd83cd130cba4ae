"""Config-driven experiment pipeline.

Stages communicate through files in the output directory so that ``run-all``
is exactly the composition of the individual subcommands:

    generate -> dataset.csv + dataset.schema + labels.csv
    inject   -> labels_biased.csv + bias_report.txt
    tune     -> tuned_params.json (advisory; copy into [train] to adopt)
    train    -> model_<method>.txt x4 + model_benchmark.txt
    debias   -> scores_<method>.csv + thresholds.json + audit_max.csv
    evaluate -> report.json + auc.csv + denial_rates.csv +
                disposition_panels.csv + disposition_panels.svg

Every stage rewrites manifest.json with the sha256 of each artifact written
so far. All randomness is seeded from the config; rerunning a stage with the
same config reproduces its json/csv artifacts byte for byte.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._util import round_half_up, sha256_file
from .bias import BiasInjectionReport, inject_location_bias, inject_random_bias
from .boosting import (
    BoostParams,
    ParamGrid,
    cross_validate,
    load_model,
    save_model,
)
from .debias import (
    METHODS,
    DebiasSpec,
    calibrate_threshold,
    run_method,
)
from .errors import InvalidConfig
from .evaluation import (
    EvalReport,
    auc_matrix,
    denial_rate_table,
    disposition_panel,
    write_auc_csv,
    write_denial_rates_csv,
    write_disposition_csv,
    write_disposition_svg,
    write_report_json,
)
from .tabular import (
    ApplicationTable,
    CrossingRegion,
    DISPOSITION_NAMES,
    LabelSet,
    SyntheticConfig,
    build_bins,
    generate_synthetic,
    load_csv,
    read_schema,
    split_train_test,
)

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

BENCHMARK = "benchmark"

FILES = {
    "dataset": "dataset.csv",
    "schema": "dataset.schema",
    "labels": "labels.csv",
    "labels_biased": "labels_biased.csv",
    "bias_report": "bias_report.txt",
    "tuned_params": "tuned_params.json",
    "thresholds": "thresholds.json",
    "audit_max": "audit_max.csv",
    "report": "report.json",
    "auc_csv": "auc.csv",
    "denial_csv": "denial_rates.csv",
    "panel_csv": "disposition_panels.csv",
    "panel_svg": "disposition_panels.svg",
    "manifest": "manifest.json",
}


@dataclass(frozen=True)
class CsvSource:
    path: str
    schema_path: str


@dataclass(frozen=True)
class BiasScenario:
    scenario: str  # "random_group" | "location_proxy" | "none"
    seed: int = 0
    rate_multiplier: float = 2.0
    flip_count: Optional[int] = None
    match_rate_multiplier: Optional[float] = None


@dataclass(frozen=True)
class TuneConfig:
    grid: ParamGrid
    folds: int = 5
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    data_source: Union[SyntheticConfig, CsvSource]
    split_fraction: float
    split_seed: int
    bias: BiasScenario
    params: BoostParams
    methods: dict[str, DebiasSpec]
    out_dir: str
    features: Optional[tuple[str, ...]] = None
    tune: Optional[TuneConfig] = None


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _want(table: dict, key: str, types, path: str, default=None, required=False):
    if key not in table:
        if required:
            raise InvalidConfig(f"{path}.{key}: required field is missing")
        return default
    val = table[key]
    if not isinstance(val, types):
        raise InvalidConfig(f"{path}.{key}: expected {types}, got {type(val).__name__}")
    return val


def _parse_data(raw: dict):
    source = _want(raw, "source", str, "data", default="synthetic")
    if source == "csv":
        return CsvSource(
            path=_want(raw, "path", str, "data", required=True),
            schema_path=_want(raw, "schema", str, "data", required=True),
        )
    if source != "synthetic":
        raise InvalidConfig(f"data.source: unknown source {source!r}")
    crossing = None
    if "crossing_region" in raw:
        cr = raw["crossing_region"]
        crossing = CrossingRegion(
            dti_threshold=float(_want(cr, "dti_threshold", (int, float), "data.crossing_region", default=80.0)),
            group_coefficient_delta=float(
                _want(cr, "group_coefficient_delta", (int, float), "data.crossing_region", default=0.6)
            ),
        )
    defaults = SyntheticConfig()
    coeffs = raw.get("fair_rule_coefficients", list(defaults.fair_rule_coefficients))
    if not isinstance(coeffs, list):
        raise InvalidConfig("data.fair_rule_coefficients: expected a list")
    cfg = SyntheticConfig(
        n_rows=int(_want(raw, "n_rows", int, "data", default=defaults.n_rows)),
        group_share=float(_want(raw, "group_share", (int, float), "data", default=defaults.group_share)),
        n_counties=int(_want(raw, "n_counties", int, "data", default=defaults.n_counties)),
        tracts_per_county=int(
            _want(raw, "tracts_per_county", int, "data", default=defaults.tracts_per_county)
        ),
        segregation_strength=float(
            _want(raw, "segregation_strength", (int, float), "data", default=defaults.segregation_strength)
        ),
        fair_rule_coefficients=tuple(float(c) for c in coeffs),
        noise_scale=float(_want(raw, "noise_scale", (int, float), "data", default=defaults.noise_scale)),
        crossing_region=crossing,
        seed=int(_want(raw, "seed", int, "data", default=0)),
    )
    try:
        cfg.validate()
    except InvalidConfig as e:
        raise InvalidConfig(f"data: {e}") from None
    return cfg


def _parse_bias(raw: dict) -> BiasScenario:
    scenario = _want(raw, "scenario", str, "bias", default="none")
    if scenario not in ("random_group", "location_proxy", "none"):
        raise InvalidConfig(f"bias.scenario: unknown scenario {scenario!r}")
    flip_count = _want(raw, "flip_count", int, "bias")
    match_mult = _want(raw, "match_rate_multiplier", (int, float), "bias")
    if scenario == "location_proxy" and flip_count is None and match_mult is None:
        raise InvalidConfig(
            "bias.flip_count: location_proxy needs flip_count or match_rate_multiplier"
        )
    return BiasScenario(
        scenario=scenario,
        seed=int(_want(raw, "seed", int, "bias", default=0)),
        rate_multiplier=float(_want(raw, "rate_multiplier", (int, float), "bias", default=2.0)),
        flip_count=None if flip_count is None else int(flip_count),
        match_rate_multiplier=None if match_mult is None else float(match_mult),
    )


def _parse_train(raw: dict) -> BoostParams:
    try:
        return BoostParams(
            n_rounds=int(_want(raw, "n_rounds", int, "train", required=True)),
            learning_rate=float(_want(raw, "learning_rate", (int, float), "train", default=0.3)),
            max_depth=int(_want(raw, "max_depth", int, "train", default=6)),
            min_child_weight=float(
                _want(raw, "min_child_weight", (int, float), "train", default=1.0)
            ),
            l2_reg=float(_want(raw, "l2_reg", (int, float), "train", default=1.0)),
            split_gain_floor=float(
                _want(raw, "split_gain_floor", (int, float), "train", default=0.0)
            ),
            max_bins=int(_want(raw, "max_bins", int, "train", default=256)),
        )
    except InvalidConfig as e:
        raise InvalidConfig(f"train: {e}") from None


def _parse_method(name: str, raw: dict, default_draw_seed: int) -> DebiasSpec:
    path = f"methods.{name}"
    prohibited = raw.get("prohibited", ["group"])
    if not isinstance(prohibited, list):
        raise InvalidConfig(f"{path}.prohibited: expected a list")
    try:
        return DebiasSpec(
            method=name,
            prohibited_vars=tuple(prohibited),
            mu=float(_want(raw, "mu", (int, float), path, default=0.2)),
            gamma_mode=_want(raw, "gamma_mode", str, path, default="fixed"),
            gamma=float(_want(raw, "gamma", (int, float), path, default=1.0)),
            mode=_want(raw, "mode", str, path, default="sampled"),
            n_draws=int(_want(raw, "n_draws", int, path, default=500)),
            draw_seed=int(_want(raw, "draw_seed", int, path, default=default_draw_seed)),
            rescale=bool(_want(raw, "rescale", bool, path, default=False)),
        )
    except InvalidConfig as e:
        raise InvalidConfig(f"{path}: {e}") from None


def _parse_tune(raw: dict) -> TuneConfig:
    def tup(key, default, caster):
        vals = raw.get(key, list(default))
        if not isinstance(vals, list) or not vals:
            raise InvalidConfig(f"tune.{key}: expected a nonempty list")
        return tuple(caster(v) for v in vals)

    grid = ParamGrid(
        learning_rates=tup("learning_rates", ParamGrid.learning_rates, float),
        max_depths=tup("max_depths", ParamGrid.max_depths, int),
        min_child_weights=tup("min_child_weights", ParamGrid.min_child_weights, float),
        max_rounds=int(_want(raw, "max_rounds", int, "tune", default=500)),
        l2_reg=float(_want(raw, "l2_reg", (int, float), "tune", default=1.0)),
        max_bins=int(_want(raw, "max_bins", int, "tune", default=256)),
    )
    return TuneConfig(
        grid=grid,
        folds=int(_want(raw, "folds", int, "tune", default=5)),
        seed=int(_want(raw, "seed", int, "tune", default=0)),
    )


def load_config(path, seed_override: Optional[int] = None, out_dir_override=None) -> ExperimentConfig:
    """Parse and validate a TOML experiment config; errors carry field paths."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    data = _parse_data(raw.get("data", {}))
    split_raw = raw.get("split", {})
    fraction = float(_want(split_raw, "fraction", (int, float), "split", default=0.8))
    if not (0.0 < fraction < 1.0):
        raise InvalidConfig("split.fraction: must be in (0, 1)")
    split_seed = int(_want(split_raw, "seed", int, "split", default=0))
    bias = _parse_bias(raw.get("bias", {}))
    params = _parse_train(raw.get("train", {}))

    methods_raw = raw.get("methods", {})
    method_list = methods_raw.get("list")
    if not isinstance(method_list, list) or not method_list:
        raise InvalidConfig("methods.list: required nonempty list of method names")
    for m in method_list:
        if m not in METHODS:
            raise InvalidConfig(
                f"methods.list: unknown method {m!r} (valid: {', '.join(METHODS)})"
            )
    if len(set(method_list)) != len(method_list):
        raise InvalidConfig("methods.list: duplicate method names")
    methods = {
        m: _parse_method(m, methods_raw.get(m, {}), default_draw_seed=0)
        for m in method_list
    }

    features = None
    if "features" in raw.get("train", {}):
        feats = raw["train"]["features"]
        if not isinstance(feats, list) or not feats:
            raise InvalidConfig("train.features: expected a nonempty list")
        features = tuple(str(f) for f in feats)

    tune = _parse_tune(raw["tune"]) if "tune" in raw else None

    out_raw = raw.get("output", {})
    out_dir = out_dir_override or _want(out_raw, "dir", str, "output", default="out")

    cfg = ExperimentConfig(
        data_source=data,
        split_fraction=fraction,
        split_seed=split_seed,
        bias=bias,
        params=params,
        methods=methods,
        out_dir=str(out_dir),
        features=features,
        tune=tune,
    )
    if seed_override is not None:
        cfg = _apply_seed_override(cfg, seed_override)
    return cfg


def _apply_seed_override(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Derive all stage seeds from one master seed (data, split, bias, draws, tune)."""
    from dataclasses import replace

    data = cfg.data_source
    if isinstance(data, SyntheticConfig):
        data = replace(data, seed=seed)
    methods = {
        name: replace(spec, draw_seed=seed + 3) for name, spec in cfg.methods.items()
    }
    tune = replace(cfg.tune, seed=seed + 4) if cfg.tune else None
    return replace(
        cfg,
        data_source=data,
        split_seed=seed + 1,
        bias=replace(cfg.bias, seed=seed + 2),
        methods=methods,
        tune=tune,
    )


# ---------------------------------------------------------------------------
# Artifact IO helpers
# ---------------------------------------------------------------------------

class ArtifactWriter:
    """Tracks files written by one stage; removes them if the stage fails."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.written: list[str] = []
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out_dir, name)
        self.written.append(p)
        return p

    def cleanup(self):
        for p in self.written:
            if os.path.exists(p):
                os.remove(p)

    def update_manifest(self, extra: Optional[dict] = None):
        mpath = os.path.join(self.out_dir, FILES["manifest"])
        manifest = {"files": {}, "run": {}}
        if os.path.exists(mpath):
            with open(mpath, "r", encoding="utf-8") as fh:
                manifest = json.load(fh)
        for p in self.written:
            rel = os.path.relpath(p, self.out_dir)
            manifest["files"][rel] = sha256_file(p)
        if extra:
            manifest["run"].update(extra)
        with open(mpath, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _stage(fn):
    """Run a stage body with cleanup-on-failure semantics."""

    def wrapper(cfg: ExperimentConfig, n_threads: int = 1):
        w = ArtifactWriter(cfg.out_dir)
        try:
            extra = fn(cfg, w, n_threads)
        except BaseException:
            w.cleanup()
            raise
        w.update_manifest(extra)
        return w.written

    wrapper.__name__ = fn.__name__
    return wrapper


def _num_repr(v: float) -> str:
    if np.isnan(v):
        return ""
    return repr(float(v))


def write_dataset(table: ApplicationTable, labels: LabelSet, dataset_path, schema_path):
    """Write the feature table (labels carried separately in labels.csv)."""
    numeric = list(table.numeric_features)
    categorical = list(table.categorical_features)
    cats = {name: table.categories[name] for name in categorical}
    with open(dataset_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["approved", "group"] + numeric + categorical)
        for i in range(table.n_rows):
            row = [str(int(labels.actual[i])), str(int(table.group[i]))]
            for name in numeric:
                row.append(_num_repr(table.numeric_features[name][i]))
            for name in categorical:
                row.append(cats[name][table.categorical_features[name][i]])
            w.writerow(row)
    lines = ["approved = approval", "group = group"]
    for name in numeric:
        lines.append(f"{name} = numeric_feature")
    for name in categorical:
        if name == table.county_feature:
            lines.append(f"{name} = county")
        elif name == table.tract_feature:
            lines.append(f"{name} = tract")
        else:
            lines.append(f"{name} = categorical_feature")
    with open(schema_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_labels(labels: LabelSet, path):
    disp_names = {int(k): v for k, v in DISPOSITION_NAMES.items()}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "actual", "biased", "disposition"])
        for i in range(labels.n_rows):
            w.writerow(
                [i, int(labels.actual[i]), int(labels.biased[i]), disp_names[int(labels.disposition[i])]]
            )


def read_labels(path) -> LabelSet:
    name_to_disp = {v: int(k) for k, v in DISPOSITION_NAMES.items()}
    actual, biased, disp = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            actual.append(int(row[1]))
            biased.append(int(row[2]))
            disp.append(name_to_disp[row[3]])
    return LabelSet(
        actual=np.asarray(actual, dtype=np.uint8),
        biased=np.asarray(biased, dtype=np.uint8),
        disposition=np.asarray(disp, dtype=np.int8),
    )


def load_dataset(out_dir) -> tuple[ApplicationTable, LabelSet]:
    table, _ = load_csv(
        os.path.join(out_dir, FILES["dataset"]),
        read_schema(os.path.join(out_dir, FILES["schema"])),
    )
    biased_path = os.path.join(out_dir, FILES["labels_biased"])
    labels_path = biased_path if os.path.exists(biased_path) else os.path.join(out_dir, FILES["labels"])
    return table, read_labels(labels_path)


def _base_features(cfg: ExperimentConfig, table: ApplicationTable) -> tuple[str, ...]:
    if cfg.features is not None:
        return cfg.features
    # default predictors: everything except the tract column
    return tuple(f for f in table.feature_names if f != table.tract_feature)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

@_stage
def stage_generate(cfg: ExperimentConfig, w: ArtifactWriter, n_threads: int):
    if isinstance(cfg.data_source, SyntheticConfig):
        table, labels = generate_synthetic(cfg.data_source)
        seed = cfg.data_source.seed
    else:
        table, labels = load_csv(cfg.data_source.path, read_schema(cfg.data_source.schema_path))
        seed = None
    write_dataset(table, labels, w.path(FILES["dataset"]), w.path(FILES["schema"]))
    write_labels(labels, w.path(FILES["labels"]))
    return {"data_seed": seed, "n_rows": table.n_rows}


@_stage
def stage_inject(cfg: ExperimentConfig, w: ArtifactWriter, n_threads: int):
    table, _ = load_csv(
        os.path.join(cfg.out_dir, FILES["dataset"]),
        read_schema(os.path.join(cfg.out_dir, FILES["schema"])),
    )
    labels = read_labels(os.path.join(cfg.out_dir, FILES["labels"]))
    sc = cfg.bias
    if sc.scenario == "random_group":
        labels2, report = inject_random_bias(labels, table.group, sc.rate_multiplier, sc.seed)
    elif sc.scenario == "location_proxy":
        flip_count = sc.flip_count
        if flip_count is None:
            flip_count = _matched_flip_count(labels, table.group, sc.match_rate_multiplier)
        labels2, report = inject_location_bias(
            labels,
            table.group,
            table.categorical_features[table.tract_feature],
            flip_count,
            sc.seed,
        )
    else:
        labels2 = labels
        report = BiasInjectionReport(
            scenario="none",
            flips=(),
            target_count=0,
            achieved_group_denial_rate=float((labels.biased[table.group] == 0).mean()),
            seed=sc.seed,
        )
    write_labels(labels2, w.path(FILES["labels_biased"]))
    with open(w.path(FILES["bias_report"]), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    return {"bias_seed": sc.seed, "bias_scenario": sc.scenario, "flips": report.target_count}


def _matched_flip_count(labels: LabelSet, group, multiplier: float) -> int:
    """The flip count the random scenario would have produced at this multiplier."""
    g = np.asarray(group, dtype=bool)
    n_g = int(g.sum())
    denied = int((labels.biased[g] == 0).sum())
    target_rate = multiplier * denied / n_g
    return round_half_up(target_rate * n_g) - denied


@_stage
def stage_tune(cfg: ExperimentConfig, w: ArtifactWriter, n_threads: int):
    if cfg.tune is None:
        raise InvalidConfig("tune: section missing from config")
    table, labels = load_dataset(cfg.out_dir)
    train_ids, _ = split_train_test(table, cfg.split_fraction, cfg.split_seed)
    features = _base_features(cfg, table) + ("group",)
    binned = build_bins(table, train_ids, cfg.tune.grid.max_bins, feature_names=features)
    denial = (1 - labels.biased).astype(np.uint8)
    result = cross_validate(
        binned.subset(train_ids),
        denial[train_ids],
        cfg.tune.grid,
        folds=cfg.tune.folds,
        seed=cfg.tune.seed,
        n_threads=n_threads,
    )
    p = result.best_params
    payload = {
        "best_params": {
            "n_rounds": p.n_rounds,
            "learning_rate": p.learning_rate,
            "max_depth": p.max_depth,
            "min_child_weight": p.min_child_weight,
            "l2_reg": p.l2_reg,
            "split_gain_floor": p.split_gain_floor,
            "max_bins": p.max_bins,
        },
        "best_mean_auc": result.best_mean_auc,
        "folds": cfg.tune.folds,
        "seed": cfg.tune.seed,
    }
    with open(w.path(FILES["tuned_params"]), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"tune_seed": cfg.tune.seed}


def model_file(method: str) -> str:
    return f"model_{method}.txt"


def scores_file(method: str) -> str:
    return f"scores_{method}.csv"


@_stage
def stage_train(cfg: ExperimentConfig, w: ArtifactWriter, n_threads: int):
    table, labels = load_dataset(cfg.out_dir)
    train_ids, test_ids = split_train_test(table, cfg.split_fraction, cfg.split_seed)
    base = _base_features(cfg, table)
    for name, spec in cfg.methods.items():
        result = run_method(
            spec, table, labels, train_ids, test_ids, cfg.params, base, n_threads
        )
        save_model(result.model, w.path(model_file(name)))
    # benchmark: same exclusion-style model trained on the actual labels
    bench_spec = DebiasSpec(method="exclusion")
    actual_labels = LabelSet.from_actual(labels.actual)
    bench = run_method(
        bench_spec, table, actual_labels, train_ids, test_ids, cfg.params, base, n_threads
    )
    save_model(bench.model, w.path(model_file(BENCHMARK)))
    return {"split_seed": cfg.split_seed, "split_fraction": cfg.split_fraction}


def _write_scores(path, row_ids, scores, denied):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row_id", "approval_score", "denied"])
        for rid, s, d in zip(row_ids, scores, denied):
            w.writerow([int(rid), repr(float(s)), int(d)])


def read_scores(path):
    row_ids, scores, denied = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            row_ids.append(int(row[0]))
            scores.append(float(row[1]))
            denied.append(bool(int(row[2])))
    return np.asarray(row_ids), np.asarray(scores), np.asarray(denied)


@_stage
def stage_debias(cfg: ExperimentConfig, w: ArtifactWriter, n_threads: int):
    table, labels = load_dataset(cfg.out_dir)
    train_ids, test_ids = split_train_test(table, cfg.split_fraction, cfg.split_seed)
    base = _base_features(cfg, table)
    biased_train_rate = float((labels.biased[train_ids] == 0).mean())
    actual_train_rate = float((labels.actual[train_ids] == 0).mean())

    thresholds: dict = {"target_denial_rate": biased_train_rate, "methods": {}}
    audit_stats = {}
    for name, spec in cfg.methods.items():
        model_path = os.path.join(cfg.out_dir, model_file(name))
        model = load_model(model_path) if os.path.exists(model_path) else None
        result = run_method(
            spec, table, labels, train_ids, test_ids, cfg.params, base, n_threads,
            model=model,
        )
        thr, denied = calibrate_threshold(result.approval_scores, biased_train_rate, test_ids)
        _write_scores(w.path(scores_file(name)), test_ids, result.approval_scores, denied)
        thresholds["methods"][name] = {
            "threshold": thr.threshold,
            "target_rate": thr.target_rate,
            "achieved_rate": thr.achieved_rate,
            "gamma": result.gamma,
        }
        if name == "max_over_groups":
            own = table.group[test_ids].astype(int)
            with open(w.path(FILES["audit_max"]), "w", encoding="utf-8", newline="") as fh:
                cw = csv.writer(fh)
                cw.writerow(["row_id", "own_group", "argmax_group", "approval_if_non_group", "approval_if_group"])
                for i, rid in enumerate(test_ids):
                    cw.writerow(
                        [
                            int(rid),
                            int(own[i]),
                            int(result.argmax_group[i]),
                            repr(float(result.conditional_scores[i, 0])),
                            repr(float(result.conditional_scores[i, 1])),
                        ]
                    )
            grp = own == 1
            if grp.any():
                audit_stats["max_group_rows_assigned_other_group"] = float(
                    (result.argmax_group[grp] != 1).mean()
                )

    # benchmark scored against the actual-data training rate
    bench_spec = DebiasSpec(method="exclusion")
    actual_labels = LabelSet.from_actual(labels.actual)
    bench_path = os.path.join(cfg.out_dir, model_file(BENCHMARK))
    bench_model = load_model(bench_path) if os.path.exists(bench_path) else None
    bench = run_method(
        bench_spec, table, actual_labels, train_ids, test_ids, cfg.params, base, n_threads,
        model=bench_model,
    )
    thr, denied = calibrate_threshold(bench.approval_scores, actual_train_rate, test_ids)
    _write_scores(w.path(scores_file(BENCHMARK)), test_ids, bench.approval_scores, denied)
    thresholds["methods"][BENCHMARK] = {
        "threshold": thr.threshold,
        "target_rate": thr.target_rate,
        "achieved_rate": thr.achieved_rate,
        "gamma": 1.0,
    }
    thresholds["audit"] = audit_stats
    with open(w.path(FILES["thresholds"]), "w", encoding="utf-8") as fh:
        json.dump(thresholds, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"draw_seeds": {m: s.draw_seed for m, s in cfg.methods.items()}}


@_stage
def stage_evaluate(cfg: ExperimentConfig, w: ArtifactWriter, n_threads: int):
    table, labels = load_dataset(cfg.out_dir)
    train_ids, test_ids = split_train_test(table, cfg.split_fraction, cfg.split_seed)
    with open(os.path.join(cfg.out_dir, FILES["thresholds"]), "r", encoding="utf-8") as fh:
        thresholds = json.load(fh)

    method_names = list(cfg.methods) + [BENCHMARK]
    denial_scores = {}
    decisions = {}
    for name in method_names:
        rids, scores, denied = read_scores(os.path.join(cfg.out_dir, scores_file(name)))
        if not np.array_equal(rids, test_ids):
            raise InvalidConfig(
                f"scores for {name!r} do not match the configured split; rerun debias"
            )
        denial_scores[name] = 1.0 - scores
        decisions[name] = denied

    test_labels = LabelSet(
        actual=labels.actual[test_ids].copy(),
        biased=labels.biased[test_ids].copy(),
        disposition=labels.disposition[test_ids].copy(),
    )
    test_group = table.group[test_ids]

    aucs = auc_matrix(denial_scores, test_labels, test_group)
    rates, rate_meta = denial_rate_table(
        decisions, test_group, labels, table.group, test_ids
    )
    panels, panel_meta = disposition_panel(decisions, test_labels, test_group)

    report = EvalReport(
        auc=aucs,
        denial_rates=rates,
        disposition_panels=panels,
        metadata={
            "n_train": int(train_ids.size),
            "n_test": int(test_ids.size),
            "split_seed": cfg.split_seed,
            "split_fraction": cfg.split_fraction,
            "bias_scenario": cfg.bias.scenario,
            "bias_seed": cfg.bias.seed,
            "thresholds": thresholds,
            "denial_rate_cells": rate_meta,
            "panel_cells": panel_meta,
            "benchmark": "exclusion model trained on actual labels",
        },
    )
    write_report_json(report, w.path(FILES["report"]))
    write_auc_csv(aucs, w.path(FILES["auc_csv"]))
    write_denial_rates_csv(rates, w.path(FILES["denial_csv"]))
    write_disposition_csv(panels, panel_meta["cell_n"], w.path(FILES["panel_csv"]))
    write_disposition_svg(
        panels, w.path(FILES["panel_svg"]), benchmark=BENCHMARK, method_order=method_names
    )
    return {"evaluated_methods": method_names}


def run_experiment(cfg: ExperimentConfig, n_threads: int = 1) -> list[str]:
    """Full pipeline: the exact composition of the individual stages."""
    written = []
    written += stage_generate(cfg, n_threads)
    written += stage_inject(cfg, n_threads)
    written += stage_train(cfg, n_threads)
    written += stage_debias(cfg, n_threads)
    written += stage_evaluate(cfg, n_threads)
    return written
