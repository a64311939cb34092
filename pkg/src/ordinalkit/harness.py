"""Experiment orchestration: ingestion, loss x fraction x seed grids, reports."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, bundled_path
from .errors import (DomainError, IngestionError, InvalidLabelError, OrdinalError,
                     RunNotFoundError)
from .losses import LossSpec
from .metrics import MetricReport, mean_std_over_seeds, metric_report
from .model import (OrdinalDataset, TrainConfig, _assign_splits, featurize_text,
                    generate_synthetic, train)
from .properties import render_matrix, property_matrix, um_fraction
from .simplex import LabelSpace

log = logging.getLogger(__name__)

CERTIFY_LOSSES = ("CE", "OLL", "MLL", "SOFT", "EMD", "WKL")
RESULT_COLUMNS = ("dataset", "fraction", "loss", "runs", "F1", "MSE", "MAE", "OB1", "note")
_METRIC_KEYS = (("F1", "f1_weighted"), ("MSE", "mse"), ("MAE", "mae"), ("OB1", "ob1"))


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def _parse_label(raw: str, space: LabelSpace | None, line: int) -> int | str:
    raw = raw.strip()
    if space is None:
        try:
            value = int(raw)
        except ValueError:
            raise IngestionError(line, f"label {raw!r} is not an integer and no label names are given")
        if value < 1:
            raise IngestionError(line, f"label {value} must be >= 1")
        return value
    try:
        return space.index(int(raw) if raw.lstrip("-").isdigit() else raw)
    except InvalidLabelError as exc:
        raise IngestionError(line, f"unknown label {raw!r} ({exc})")


def ingest_file(path, space: LabelSpace | None = None, text_dim: int = 1024, seed: int = 0,
                test_fraction: float = 0.2) -> OrdinalDataset:
    """Load a ``label,text`` or ``label,f1..fD`` delimited file.

    Tabs are used as delimiter when the header contains one, commas otherwise.
    Without ``space`` labels must be integers and K is their maximum.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(0, f"cannot read {path}: {exc}")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise IngestionError(1, "empty file")
    delimiter = "\t" if "\t" in lines[0] else ","
    rows = list(csv.reader(lines, delimiter=delimiter))
    header = [h.strip().lower() for h in rows[0]]
    if not header or header[0] != "label" or len(header) < 2:
        raise IngestionError(1, "header must start with 'label'")
    schema = "text" if header[1:] == ["text"] else "numeric"
    body = [(i + 2, r) for i, r in enumerate(rows[1:]) if any(c.strip() for c in r)]
    if not body:
        raise IngestionError(2, "no data rows")
    labels, payload = [], []
    for line, row in body:
        if len(row) != len(header):
            raise IngestionError(line, f"expected {len(header)} fields, found {len(row)}")
        labels.append(_parse_label(row[0], space, line))
        if schema == "text":
            payload.append(row[1])
        else:
            try:
                values = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise IngestionError(line, f"non-numeric feature ({exc})")
            if not np.all(np.isfinite(values)):
                raise IngestionError(line, "non-finite feature value")
            payload.append(values)
    if space is None:
        space = LabelSpace.of_size(max(max(labels), 2))
    X = featurize_text(payload, text_dim, seed) if schema == "text" else np.array(payload, dtype=float)
    y = np.array(labels, dtype=int)
    rng = np.random.default_rng(seed)
    split = _assign_splits(rng, y.size, test_fraction, 0.0)
    prov = {"source": "file", "path": str(path), "schema": schema, "N": int(y.size), "K": space.K}
    if schema == "text":
        empty = int(np.sum(~X.any(axis=1)))
        prov["text_dim"] = text_dim
        if empty:
            prov["empty_documents"] = empty
    return OrdinalDataset(X, y, space, split, prov)


def dataset_summary(data: OrdinalDataset) -> dict:
    hist = np.bincount(data.y, minlength=data.K + 1)[1:]
    return {"N": int(data.y.size), "D": data.D, "K": data.K,
            "histogram": {str(k + 1): int(c) for k, c in enumerate(hist)}}


def save_dataset(data: OrdinalDataset, directory) -> Path:
    """Persist ``data`` as ``X.npy``, ``y.npy``, ``split.npy`` plus ``provenance.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / "X.npy", data.X)
    np.save(directory / "y.npy", data.y)
    np.save(directory / "split.npy", data.split.astype(str))
    meta = {"labels": list(data.space.labels), "provenance": data.provenance,
            "summary": dataset_summary(data)}
    (directory / "provenance.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_saved_dataset(directory) -> OrdinalDataset:
    directory = Path(directory)
    meta_path = directory / "provenance.json"
    if not meta_path.exists():
        raise RunNotFoundError(f"no stored dataset in {directory}")
    meta = json.loads(meta_path.read_text())
    return OrdinalDataset(np.load(directory / "X.npy"), np.load(directory / "y.npy"),
                          LabelSpace(tuple(meta["labels"])), np.load(directory / "split.npy").astype(object),
                          meta["provenance"])


def build_dataset(cfg: ExperimentConfig) -> OrdinalDataset:
    ds = cfg.dataset
    if ds.synthetic:
        data = generate_synthetic(ds.N, ds.D, ds.K, ds.sigma, ds.seed, ds.skew, ds.test_fraction)
        if cfg.space.labels != data.space.labels:
            data.space = cfg.space
        return data
    return ingest_file(ds.source, cfg.space, ds.text_dim, ds.seed, ds.test_fraction)


# ---------------------------------------------------------------------------
# benchmark grid
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    config_hash: str
    dataset: str
    loss: str
    fraction: float
    seed: int
    model: str
    status: str
    metrics: dict | None = None
    um: float | None = None
    trace: dict | None = None
    reason: str = ""
    wall_time: float = field(default=0.0, compare=False)

    @property
    def run_id(self) -> str:
        return f"{self.loss}__f{self.fraction:g}__s{self.seed}"

    def to_record(self) -> dict:
        rec = asdict(self)
        rec.pop("wall_time")
        rec["run_id"] = self.run_id
        return rec


def _trace_summary(trace) -> dict:
    arr = np.asarray(trace, dtype=float)
    if arr.size == 0:
        return {"epochs": 0}
    return {"epochs": int(arr.size), "first": float(arr[0]), "last": float(arr[-1]),
            "min": float(np.nanmin(arr)) if np.any(np.isfinite(arr)) else None}


def model_kind_for(spec: LossSpec, default: str) -> str:
    return "binomial" if spec.kind == "BINOMIAL_NLL" else default


def run_cell(data: OrdinalDataset, cfg: ExperimentConfig, spec: LossSpec, fraction: float,
             seed: int, dataset_name: str):
    """Train and evaluate one (loss, fraction, seed) cell; failures become records."""
    kind = model_kind_for(spec, cfg.model)
    base = cfg.train
    tc = TrainConfig(spec, base.lr, base.epochs, base.batch_size, seed, base.optimizer,
                     base.momentum, fraction, base.weight_decay)
    start = time.perf_counter()
    common = dict(config_hash=cfg.hash(), dataset=dataset_name, loss=spec.label,
                  fraction=float(fraction), seed=int(seed), model=kind)
    try:
        result = train(kind, data, tc)
        X_test, y_test = data.part("test")
        P = result.model.predict_proba(X_test)
        pred = np.argmax(P, axis=1) + 1
        report = metric_report(pred, y_test, data.K)
    except OrdinalError as exc:
        return RunRecord(status="failed", reason=f"{type(exc).__name__}: {exc}",
                         wall_time=time.perf_counter() - start, **common), None
    rec = RunRecord(status="ok", metrics=report.to_record(), um=100.0 * um_fraction(P),
                    trace=_trace_summary(result.trace), wall_time=time.perf_counter() - start, **common)
    return rec, P


def run_grid(cfg: ExperimentConfig, data: OrdinalDataset | None = None):
    """Run every cell of the grid; returns ``(records, predictions)`` keyed by run id."""
    data = build_dataset(cfg) if data is None else data
    name = cfg.name
    records, predictions = [], {}
    for fraction in cfg.fractions:
        for spec in cfg.losses:
            for seed in cfg.seeds:
                rec, P = run_cell(data, cfg, spec, fraction, seed, name)
                records.append(rec)
                if P is not None:
                    predictions[rec.run_id] = P
                log.info("%s %s", rec.run_id, rec.status)
    return records, predictions


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def results_table(records) -> str:
    """Rows (dataset, fraction, loss); metric cells are ``mean (std)`` over ok seeds."""
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.dataset, rec.fraction, rec.loss), []).append(rec)
    lines = ["\t".join(RESULT_COLUMNS)]
    for (dataset, fraction, loss), recs in groups.items():
        ok = [r for r in recs if r.status == "ok"]
        failed = [r for r in recs if r.status != "ok"]
        note = "; ".join(f"seed {r.seed} failed: {r.reason}" for r in failed)
        cells = [dataset, f"{fraction:g}", loss, f"{len(ok)}/{len(recs)}"]
        if ok:
            agg = mean_std_over_seeds([_report_from_record(r.metrics) for r in ok])
            cells += [f"{_fmt(agg.mean[key])} ({_fmt(agg.std[key])})" for _, key in _METRIC_KEYS]
        else:
            cells += [""] * len(_METRIC_KEYS)
        lines.append("\t".join(cells + [note]))
    return "\n".join(lines) + "\n"


def _report_from_record(metrics: dict) -> MetricReport:
    return MetricReport(metrics["f1_weighted"], metrics["mse"], metrics["mae"],
                        {int(k): v for k, v in metrics["ob_k"].items()})


def plot_records(records) -> list:
    """Long-format rows: one per (run, metric)."""
    out = []
    for rec in records:
        if rec.status != "ok":
            continue
        for col, key in _METRIC_KEYS + (("UM", "um"),):
            value = rec.um if key == "um" else _report_from_record(rec.metrics).get(key)
            out.append({"dataset": rec.dataset, "fraction": rec.fraction, "loss": rec.loss,
                        "seed": rec.seed, "metric": col, "value": value, "run_id": rec.run_id})
    return out


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def write_bench_outputs(out_dir, cfg: ExperimentConfig, records, predictions, data: OrdinalDataset) -> Path:
    """Write results.tsv, plot_data.jsonl, runs.jsonl, timing.jsonl and stored predictions.

    Everything except ``timing.jsonl`` is a pure function of the config.
    """
    out = Path(out_dir)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    if "tsv" in cfg.formats:
        (out / "results.tsv").write_text(results_table(records))
    if "jsonl" in cfg.formats:
        (out / "plot_data.jsonl").write_text(_jsonl(plot_records(records)))
    (out / "runs.jsonl").write_text(_jsonl(r.to_record() for r in records))
    (out / "timing.jsonl").write_text(_jsonl({"run_id": r.run_id, "wall_time": r.wall_time} for r in records))
    (out / "config.json").write_text(json.dumps({"hash": cfg.hash(), **cfg.canonical()},
                                                sort_keys=True, indent=2) + "\n")
    _, y_test = data.part("test")
    np.save(out / "predictions" / "y_test.npy", y_test)
    for run_id, P in predictions.items():
        np.save(out / "predictions" / f"{run_id}.npy", P)
    return out


def cmd_bench(cfg: ExperimentConfig, out_dir=None):
    data = build_dataset(cfg)
    records, predictions = run_grid(cfg, data)
    out = write_bench_outputs(out_dir or cfg.out_dir, cfg, records, predictions, data)
    return out, records


# ---------------------------------------------------------------------------
# unimodality report
# ---------------------------------------------------------------------------


def load_runs(run_dir) -> list:
    path = Path(run_dir) / "runs.jsonl"
    if not path.exists():
        raise RunNotFoundError(f"no runs.jsonl in {run_dir}")
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def cmd_um_report(run_dir) -> list:
    """Per-loss %UM recomputed from the stored test prediction matrices."""
    run_dir = Path(run_dir)
    by_loss: dict = {}
    for rec in load_runs(run_dir):
        if rec["status"] != "ok":
            continue
        path = run_dir / "predictions" / f"{rec['run_id']}.npy"
        if not path.exists():
            raise RunNotFoundError(f"missing stored predictions for {rec['run_id']}")
        by_loss.setdefault((rec["loss"], rec["model"]), []).append(100.0 * um_fraction(np.load(path)))
    if not by_loss:
        raise RunNotFoundError(f"no successful runs in {run_dir}")
    rows = []
    for (loss, model), values in by_loss.items():
        vals = np.sort(np.array(values))
        rows.append({"loss": loss, "model": model, "runs": int(vals.size),
                     "um_percent": float(vals.mean()), "um_std": float(vals.std())})
    return rows


def render_um_report(rows) -> str:
    lines = ["loss\tmodel\truns\tUM%"]
    for r in rows:
        lines.append(f"{r['loss']}\t{r['model']}\t{r['runs']}\t{r['um_percent']:.1f} ({r['um_std']:.1f})")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------


def read_golden(path=None) -> dict:
    path = bundled_path("properties_golden.tsv") if path is None else Path(path)
    if not Path(path).exists():
        raise RunNotFoundError(f"golden file {path} not found")
    with open(path, newline="") as fh:
        return {row["loss"]: row for row in csv.DictReader(fh, delimiter="\t")}


@dataclass
class CertifyOutcome:
    reports: list
    mismatches: list
    inconclusive: list
    table: str

    def exit_code(self, strict: bool = False) -> int:
        if self.mismatches:
            return 1
        if strict and self.inconclusive:
            return 2
        return 0


def cmd_certify(specs=None, out_dir=None, golden=None, K: int = 5, trials: int = 10000,
                seed: int = 0, restarts: int = 20) -> CertifyOutcome:
    """Build the property matrix; compare PSR/UM/CX/Ord with ``golden`` when given."""
    specs = [LossSpec(k) for k in CERTIFY_LOSSES] if specs is None else list(specs)
    reports = property_matrix(specs, K=K, trials=trials, seed=seed, restarts=restarts)
    table = render_matrix(reports)
    inconclusive = [r.loss.kind for r in reports if r.psr_verdict == "inconclusive"]
    mismatches = []
    if golden is not None:
        expected = read_golden(None if golden is True else golden)
        for rep in reports:
            want = expected.get(rep.loss.kind)
            if want is None:
                continue
            got = rep.row()
            for col in ("PSR", "UM", "CX", "Ord"):
                if col in want and want[col] != got[col]:
                    mismatches.append(f"{rep.loss.kind} {col}: expected {want[col]}, got {got[col]}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "properties.tsv").write_text(table)
        (out / "properties_details.jsonl").write_text(_jsonl(r.to_record() for r in reports))
    return CertifyOutcome(reports, mismatches, inconclusive, table)


def cmd_ingest(path, out_dir, space: LabelSpace | None = None, text_dim: int = 1024, seed: int = 0):
    data = ingest_file(path, space, text_dim, seed)
    stem = Path(path).stem
    target = save_dataset(data, Path(out_dir) / "datasets" / stem)
    return stem, target, dataset_summary(data)


def require_dims(data: OrdinalDataset, D: int) -> None:
    if data.D != D:
        raise DomainError(f"dataset has {data.D} features, expected {D}")
