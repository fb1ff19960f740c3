"""Batch command-line surface: synth, analyze, train, ablate, report.

Every command writes its outputs plus a ``manifest.json`` holding the
resolved-config hash and sha256 digests of inputs and outputs. Errors print a
single ``error[CODE]: message`` line on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import design_matrix, fit_logistic, fit_meld_classifier
from .dataio import (
    Cohort,
    Preprocessor,
    SynthConfig,
    bias_manifest,
    kfold_split,
    load_cohort,
    read_schema,
    synth_generate,
    write_cohort,
    write_schema,
)
from .errors import ConfigError, DataError, FairGraftError
from .fusion import TrainConfig, two_step_train
from .metrics import cohort_rates, evaluate_folds, pearson
from .trees import GbdtModel, GbdtParams, RfParams, fit_gbdt, fit_random_forest

MODELS = ("meld", "logistic", "rf", "gbdt", "fair")
ABLATIONS = (
    ("full", None, None),
    ("w/o first-step", None, 0.0),
    ("w/o second-step", 0.0, None),
    ("undebiased", 0.0, 0.0),
)
EXIT_ERROR = 1
EXIT_USAGE = 2


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class LogisticParams:
    epochs: int = 200
    lr: float = 0.1
    l2: float = 1e-4


@dataclass
class ExperimentConfig:
    """Everything one run needs. ``dataset`` wins over ``synth`` when both are set."""

    model: str = "fair"
    dataset: str | None = None
    schema: str | None = None
    synth: dict | None = None
    train: dict = field(default_factory=dict)
    gbdt: dict = field(default_factory=dict)
    rf: dict = field(default_factory=dict)
    logistic: dict = field(default_factory=dict)
    sensitive: str = "race"
    report_attributes: list | None = None
    folds: int = 5
    threshold: float = 0.5
    seed: int = 0
    out: str = "run"
    jobs: int = 1

    def check(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.dataset is None and self.synth is None:
            raise ConfigError("config needs either 'dataset' or 'synth'")
        if self.dataset is not None:
            if not Path(self.dataset).is_file():
                raise ConfigError(f"dataset not found: {self.dataset}")
            if self.schema is None or not Path(self.schema).is_file():
                raise ConfigError("a dataset needs an existing 'schema' file")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must be in [0, 1]")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        self.train_config()
        self.gbdt_params()
        self.rf_params()
        self.logistic_params()

    def _section(self, cls, values: dict, **defaults):
        names = {f.name for f in fields(cls)}
        unknown = set(values) - names
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        merged = {k: v for k, v in defaults.items() if k in names}
        merged.update(values)
        try:
            return cls(**merged)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        return self._section(TrainConfig, self.train, seed=self.seed, sensitive=self.sensitive)

    def gbdt_params(self) -> GbdtParams:
        return self._section(GbdtParams, self.gbdt, seed=self.seed)

    def rf_params(self) -> RfParams:
        return self._section(RfParams, self.rf, seed=self.seed)

    def logistic_params(self) -> LogisticParams:
        return self._section(LogisticParams, self.logistic)

    def synth_config(self) -> SynthConfig:
        values = dict(self.synth or {})
        values.setdefault("seed", self.seed)
        return SynthConfig.from_dict(values)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of everything that can change results (not ``out``/``jobs``)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("jobs")
        return _sha256_bytes(_canonical(d).encode())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def resolve_config(args) -> ExperimentConfig:
    """flag > file > default."""
    file_values = _read_json(args.config) if getattr(args, "config", None) else {}
    cfg = ExperimentConfig.from_dict(file_values)
    plain = {
        "model": "model",
        "seed": "seed",
        "sensitive": "sensitive",
        "folds": "folds",
        "threshold": "threshold",
        "out": "out",
        "jobs": "jobs",
        "dataset": "dataset",
        "schema": "schema",
    }
    for attr, key in plain.items():
        value = getattr(args, attr, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "seed", None) is not None:
        # an explicit root seed reseeds every stage
        cfg.synth = None if cfg.synth is None else {**cfg.synth, "seed": args.seed}
        for section in ("train", "gbdt", "rf"):
            setattr(cfg, section, {**getattr(cfg, section), "seed": args.seed})
    train = dict(cfg.train)
    if getattr(args, "alpha", None) is not None:
        train["alpha"] = args.alpha
    if getattr(args, "alpha_kg", None) is not None:
        train["alpha_kg"] = args.alpha_kg
    if getattr(args, "freeze_dense", False):
        train["freeze_dense"] = True
    if getattr(args, "no_standardize", False):
        train["standardize"] = False
    if getattr(args, "squash_step1", False):
        train["squash_step1"] = True
    if getattr(args, "sensitive", None) is not None:
        train["sensitive"] = args.sensitive
    cfg.train = train
    cfg.check()
    return cfg


# ---------------------------------------------------------------- io helpers


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunWriter:
    """Collects output files so the manifest can hash them."""

    def __init__(self, out) -> None:
        self.root = Path(out)
        self.root.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.outputs:
            self.outputs.append(name)
        return p

    def json(self, name: str, obj) -> None:
        self.path(name).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")

    def csv(self, name: str, header, rows) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else _fmt(v) for v in row])
        self.path(name).write_text(buf.getvalue(), encoding="utf-8")

    def text(self, name: str, text: str) -> None:
        self.path(name).write_text(text, encoding="utf-8")

    def manifest(self, command: str, config_hash: str, inputs=()) -> dict:
        man = {
            "command": command,
            "version": __version__,
            "config_hash": config_hash,
            "inputs": {str(p): sha256_file(p) for p in inputs},
            "outputs": {name: sha256_file(self.root / name) for name in sorted(self.outputs)},
        }
        (self.root / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return man


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


# ---------------------------------------------------------------- data


def load_data(cfg: ExperimentConfig) -> tuple[Cohort, list]:
    """The run's cohort, plus the input files it came from."""
    if cfg.dataset is not None:
        return load_cohort(cfg.dataset, read_schema(cfg.schema)), [cfg.dataset, cfg.schema]
    return synth_generate(cfg.synth_config()), []


def _cohort_digest(cohort: Cohort) -> str:
    h = hashlib.sha256()
    for cols in (cohort.recipient_features, cohort.organ_features, cohort.sensitive):
        for name, col in cols.items():
            h.update(name.encode())
            h.update(repr(np.asarray(col).tolist()).encode())
    h.update(np.asarray(cohort.labels).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- model factories


def _baseline_factory(cfg: ExperimentConfig, models: dict):
    """``model_factory(train, fold) -> predict`` for the non-fair models."""
    name = cfg.model

    def factory(train: Cohort, fold: int):
        if name == "meld":
            if train.score is None:
                raise DataError("the meld model needs a score column")
            p = cfg.logistic_params()
            model = fit_meld_classifier(train.score, train.labels, p.epochs, p.lr, p.l2)
            models[fold] = {"model": model.to_dict()}
            return lambda c: model.predict_proba(c.score)
        pre = Preprocessor.fit(train, standardize=True)
        views = pre.views(train)
        if name == "logistic":
            p = cfg.logistic_params()
            model = fit_logistic(design_matrix(views, pre.standardizer), train.labels, p.epochs, p.lr, p.l2)
            models[fold] = {"preprocessor": pre.to_dict(), "model": model.to_dict()}
            return lambda c: model.predict_proba(design_matrix(pre.views(c), pre.standardizer))
        if name == "rf":
            model = fit_random_forest(views.dense, train.labels, cfg.rf_params())
        else:
            model = fit_gbdt(views.dense, train.labels, cfg.gbdt_params())
        models[fold] = {"preprocessor": pre.to_dict(), "model": model.to_dict()}
        return lambda c: model.predict_proba(pre.views(c).dense)

    return factory


def _attributes(cfg: ExperimentConfig, cohort: Cohort) -> list:
    attrs = cfg.report_attributes or [cfg.sensitive]
    missing = [a for a in attrs if a not in cohort.sensitive]
    if missing:
        raise ConfigError(f"unknown sensitive attribute(s) {missing}; cohort has {sorted(cohort.sensitive)}")
    return attrs


def run_model(cfg: ExperimentConfig, cohort: Cohort, teachers: dict | None = None, train: TrainConfig | None = None):
    """Cross-validate the configured model; returns (report, per-fold model dicts)."""
    plan = kfold_split(cohort.n_rows, cfg.folds, cfg.seed)
    attrs = _attributes(cfg, cohort)
    if cfg.model == "fair":
        result = two_step_train(
            cohort,
            train or cfg.train_config(),
            cfg.gbdt_params(),
            plan,
            teachers=teachers,
            threshold=cfg.threshold,
            report_attributes=attrs,
            jobs=cfg.jobs,
        )
        return result.report, {f: m.to_dict() for f, m in enumerate(result.models)}
    models: dict = {}
    report = evaluate_folds(_baseline_factory(cfg, models), cohort, plan, attrs, cfg.threshold, cfg.jobs)
    return report, models


# ---------------------------------------------------------------- report tables

METRICS = ("roc_auc", "dpd", "eod")


def _metric_row(label, report_dict: dict, attrs) -> list:
    row = [label]
    for a in attrs:
        summary = report_dict["attributes"].get(a)
        for m in METRICS:
            cell = None if summary is None else summary[m]
            row += [None, None] if cell is None else [cell["mean"], cell["std"]]
    return row


def _metric_header(attrs) -> list:
    head = ["model"]
    for a in attrs:
        for m in METRICS:
            head += [f"{a}_{m}_mean", f"{a}_{m}_std"]
    return head


def _group_rate_rows(label, report_dict: dict):
    for attr, summary in report_dict["attributes"].items():
        for group, rate in summary["group_positive_rates"].items():
            yield [label, attr, group, rate]


def _markdown(header, rows) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row in rows:
        lines.append("| " + " | ".join("" if v is None else _fmt(v) for v in row) + " |")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    values = _read_json(args.config) if args.config else {}
    values = values.get("synth", values)
    if "n_rows" not in values and args.rows is None:
        raise ConfigError("synth config needs n_rows (or pass --rows)")
    if args.rows is not None:
        values["n_rows"] = args.rows
    if args.seed is not None:
        values["seed"] = args.seed
    config = SynthConfig.from_dict(values)
    cohort = synth_generate(config)
    out = RunWriter(args.out)
    schema = write_cohort(cohort, out.path("cohort.csv"))
    write_schema(schema, out.path("schema.txt"))
    out.json("bias_manifest.json", bias_manifest(config, cohort))
    out.json("synth_config.json", config.to_dict())
    out.manifest("synth", _sha256_bytes(_canonical(config.to_dict()).encode()), [args.config] if args.config else [])
    return 0


def read_counts(path) -> list[dict]:
    """Rows of ``subgroup,n_w,n_r,n_f[,mean_score]``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"counts file not found: {path}") from None
    reader = csv.DictReader(io.StringIO(text))
    need = {"subgroup", "n_w", "n_r", "n_f"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise DataError(f"{path}: header must include {sorted(need)}")
    rows = []
    for lineno, rec in enumerate(reader, 2):
        try:
            row = {
                "subgroup": rec["subgroup"].strip(),
                "n_w": int(rec["n_w"]),
                "n_r": int(rec["n_r"]),
                "n_f": int(rec["n_f"]),
            }
            score = (rec.get("mean_score") or "").strip()
            row["mean_score"] = float(score) if score else None
        except (TypeError, ValueError):
            raise DataError(f"{path}:{lineno}: counts must be integers") from None
        rows.append(row)
    if not rows:
        raise DataError(f"{path}: no subgroup rows")
    return rows


def analyze_counts(rows: list[dict]) -> dict:
    """Subgroup rate table and the score/size vs ORR/GFR correlation matrix."""
    table = []
    for r in rows:
        rates = cohort_rates(r["subgroup"], r["n_w"], r["n_r"], r["n_f"])
        table.append({**r, "orr": rates.orr, "gfr": rates.gfr})
    size = [t["n_w"] for t in table]
    orr = [t["orr"] for t in table]
    matrix = {"orr": {}, "gfr": {}}
    with_gfr = [t for t in table if t["gfr"] is not None]
    matrix["orr"]["size"] = pearson(size, orr)
    matrix["gfr"]["size"] = pearson([t["n_w"] for t in with_gfr], [t["gfr"] for t in with_gfr])
    if all(t["mean_score"] is not None for t in table):
        matrix["orr"]["score"] = pearson([t["mean_score"] for t in table], orr)
        matrix["gfr"]["score"] = pearson([t["mean_score"] for t in with_gfr], [t["gfr"] for t in with_gfr])
    return {"subgroups": table, "pearson": matrix}


def audit_cohort(cohort: Cohort) -> dict:
    """Per sensitive group: size, outcome rate and mean score."""
    out = {}
    for attr, col in cohort.sensitive.items():
        col = np.asarray(col, dtype=object)
        rows = []
        for g in sorted({str(v) for v in col if v is not None}):
            mask = col == g
            rows.append(
                {
                    "group": g,
                    "size": int(mask.sum()),
                    "outcome_rate": float(cohort.labels[mask].mean()),
                    "mean_score": None if cohort.score is None else float(np.nanmean(cohort.score[mask])),
                }
            )
        out[attr] = rows
    return out


def cmd_analyze(args) -> int:
    rows = read_counts(args.counts)
    inputs = [args.counts]
    audit = None
    if args.dataset:
        if not args.schema:
            raise ConfigError("--dataset needs --schema")
        cohort = load_cohort(args.dataset, read_schema(args.schema))
        inputs += [args.dataset, args.schema]
        audit = audit_cohort(cohort)
        if args.sensitive in audit:
            means = {r["group"]: r["mean_score"] for r in audit[args.sensitive]}
            for r in rows:
                if r["mean_score"] is None:
                    r["mean_score"] = means.get(r["subgroup"])
    result = analyze_counts(rows)
    out = RunWriter(args.out)
    out.json("analysis.json", {**result, "cohort_audit": audit})
    out.csv(
        "subgroups.csv",
        ["subgroup", "mean_score", "size", "orr", "gfr"],
        [[t["subgroup"], t["mean_score"], t["n_w"], t["orr"], t["gfr"]] for t in result["subgroups"]],
    )
    cols = [c for c in ("score", "size") if c in result["pearson"]["orr"]]
    out.csv(
        "pearson.csv",
        ["rate"] + cols,
        [[rate] + [result["pearson"][rate][c] for c in cols] for rate in ("orr", "gfr")],
    )
    out.csv("plot_subgroup_rates.csv", ["subgroup", "orr", "gfr"], [[t["subgroup"], t["orr"], t["gfr"]] for t in result["subgroups"]])
    out.manifest("analyze", _sha256_bytes(_canonical({"sensitive": args.sensitive}).encode()), inputs)
    return 0


def _write_run(out: RunWriter, cfg: ExperimentConfig, label: str, report_dict: dict, models: dict) -> None:
    attrs = list(report_dict["attributes"])
    out.json("report.json", {"model": label, "config_hash": cfg.digest(), "config": cfg.to_dict() | {"out": None, "jobs": None}, "report": report_dict})
    out.csv("report.csv", _metric_header(attrs), [_metric_row(label, report_dict, attrs)])
    out.csv("plot_group_rates.csv", ["model", "attribute", "group", "positive_rate"], _group_rate_rows(label, report_dict))
    for fold, model in sorted(models.items()):
        out.json(f"models/fold{fold}.json", model)


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    cohort, inputs = load_data(cfg)
    report, models = run_model(cfg, cohort)
    out = RunWriter(cfg.out)
    _write_run(out, cfg, cfg.model, report.to_dict(), models)
    out.manifest("train", cfg.digest(), ([args.config] if args.config else []) + inputs)
    return 0


def _teacher_key(cfg: ExperimentConfig, cohort: Cohort, fold: int) -> str:
    payload = {"data": _cohort_digest(cohort), "gbdt": asdict(cfg.gbdt_params()), "folds": cfg.folds, "seed": cfg.seed, "fold": fold}
    return _sha256_bytes(_canonical(payload).encode())[:16]


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    cfg.model = "fair"
    cohort, inputs = load_data(cfg)
    base = cfg.train_config()
    out = RunWriter(cfg.out)
    cache = Path(cfg.out) / "teachers"
    cache.mkdir(parents=True, exist_ok=True)
    teachers, keys = {}, {}
    for fold in range(cfg.folds):
        keys[fold] = _teacher_key(cfg, cohort, fold)
        path = cache / f"fold{fold}-{keys[fold]}.json"
        if path.is_file():
            teachers[fold] = GbdtModel.loads(path.read_text(encoding="utf-8"))
    rows, reports = [], {}
    for label, alpha, alpha_kg in ABLATIONS:
        train = replace(
            base,
            alpha=base.alpha if alpha is None else alpha,
            alpha_kg=base.alpha_kg if alpha_kg is None else alpha_kg,
        )
        report, _ = run_model(cfg, cohort, teachers=teachers, train=train)
        reports[label] = {"alpha": train.alpha, "alpha_kg": train.alpha_kg, "report": report.to_dict()}
        for fold, teacher in teachers.items():
            path = cache / f"fold{fold}-{keys[fold]}.json"
            if not path.is_file():
                path.write_text(teacher.dumps(), encoding="utf-8")
    attrs = _attributes(cfg, cohort)
    for label, entry in reports.items():
        rows.append(_metric_row(label, entry["report"], attrs))
    out.json("ablation.json", {"config_hash": cfg.digest(), "rows": reports})
    out.csv("ablation.csv", _metric_header(attrs), rows)
    out.text("ablation.md", _markdown(_metric_header(attrs), rows))
    out.csv(
        "plot_group_rates.csv",
        ["model", "attribute", "group", "positive_rate"],
        [r for label, e in reports.items() for r in _group_rate_rows(label, e["report"])],
    )
    for fold in range(cfg.folds):
        out.path(f"teachers/fold{fold}-{keys[fold]}.json")
    out.manifest("ablate", cfg.digest(), ([args.config] if args.config else []) + inputs)
    return 0


def _find_runs(root: Path) -> list[Path]:
    runs = []
    for man in sorted(root.rglob("manifest.json")):
        try:
            command = json.loads(man.read_text(encoding="utf-8")).get("command")
        except (json.JSONDecodeError, AttributeError):
            command = None
        if command in ("report", "synth", "analyze"):
            continue
        runs.append(man.parent)
    return runs


def cmd_report(args) -> int:
    root = Path(args.run_dir)
    if not root.is_dir():
        raise DataError(f"run directory not found: {root}")
    rows, absent, rates, attrs = [], [], [], []
    entries = []
    for run in _find_runs(root):
        name = run.relative_to(root).as_posix() if run != root else "."
        if (run / "report.json").is_file():
            data = json.loads((run / "report.json").read_text(encoding="utf-8"))
            entries.append((f"{name}:{data['model']}", data["report"]))
        elif (run / "ablation.json").is_file():
            data = json.loads((run / "ablation.json").read_text(encoding="utf-8"))
            for label, e in data["rows"].items():
                entries.append((f"{name}:{label}", e["report"]))
        elif name != ".":
            absent.append(name)
    for _, rep in entries:
        for a in rep["attributes"]:
            if a not in attrs:
                attrs.append(a)
    for label, rep in entries:
        rows.append(_metric_row(label, rep, attrs))
        rates.extend(_group_rate_rows(label, rep))
    rows += [[name] + [None] * (6 * len(attrs)) for name in absent]
    out = RunWriter(args.out or root)
    header = _metric_header(attrs)
    out.csv("summary.csv", header, rows)
    md = _markdown(header, rows)
    if absent:
        md += "\nabsent runs: " + ", ".join(absent) + "\n"
    out.text("summary.md", md)
    out.csv("plot_group_rates.csv", ["model", "attribute", "group", "positive_rate"], rates)
    out.manifest("report", _sha256_bytes(_canonical({"runs": [r[0] for r in rows]}).encode()))
    sys.stdout.write(md)
    return 0


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error[USAGE]: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--seed", type=int, help="root seed; reseeds every stage")
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--alpha", type=float, help="step-two fairness weight")
    p.add_argument("--alpha-kg", type=float, help="step-one fairness weight")
    p.add_argument("--sensitive", help="sensitive attribute used for debiasing and reporting")
    p.add_argument("--folds", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--jobs", type=int, help="parallel folds")
    p.add_argument("--freeze-dense", action="store_true", help="keep distilled parameters fixed in step two")
    p.add_argument("--no-standardize", action="store_true", help="feed raw numerics to the networks")
    p.add_argument("--squash-step1", action="store_true", help="apply the step-one penalty to sigmoid(y_KD)")
    p.add_argument("--dataset", help="cohort CSV (overrides the config)")
    p.add_argument("--schema", help="column descriptor file for --dataset")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairgraft", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"fairgraft {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a biased synthetic cohort")
    p.add_argument("--config", help="SynthConfig JSON (or an experiment config with a 'synth' section)")
    p.add_argument("--rows", type=int, help="override n_rows")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="subgroup rate table and correlation audit")
    p.add_argument("--counts", required=True, help="CSV with subgroup,n_w,n_r,n_f[,mean_score]")
    p.add_argument("--dataset")
    p.add_argument("--schema")
    p.add_argument("--sensitive", default="race")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="cross-validate one model")
    _experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="full / w/o first-step / w/o second-step / undebiased")
    _experiment_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="aggregate run directories")
    p.add_argument("run_dir")
    p.add_argument("--out", help="where to write the summary (default: run_dir)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FairGraftError as exc:
        sys.stderr.write(f"error[{exc.code}]: {exc}\n")
        return EXIT_ERROR
    except OSError as exc:
        sys.stderr.write(f"error[IO]: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
