"""Nominal and ordinal evaluation metrics over 1-based class indices."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, InvalidLabelError

METRIC_NAMES = ("f1_weighted", "mse", "mae", "ob1")


@dataclass
class MetricReport:
    f1_weighted: float
    mse: float
    mae: float
    ob_k: dict = field(default_factory=dict)

    @property
    def ob1(self) -> float:
        return self.ob_k[1]

    def get(self, name: str) -> float:
        if name.startswith("ob") and name[2:].isdigit():
            return self.ob_k[int(name[2:])]
        return getattr(self, name)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["ob_k"] = {str(k): v for k, v in self.ob_k.items()}
        return rec


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=int).ravel()
    truth = np.asarray(truth, dtype=int).ravel()
    if pred.size == 0 or truth.size == 0:
        raise DomainError("metrics need at least one prediction")
    if pred.size != truth.size:
        raise DomainError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    return pred, truth


def weighted_f1(pred, truth, K: int) -> float:
    """Per-class F1 averaged with true-class support weights (0/0 counts as 0)."""
    pred, truth = _pair(pred, truth)
    if min(pred.min(), truth.min()) < 1 or max(pred.max(), truth.max()) > K:
        raise InvalidLabelError(f"class indices must lie in 1..{K}")
    conf = np.zeros((K, K))
    np.add.at(conf, (truth - 1, pred - 1), 1)
    tp = np.diag(conf)
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    denom = support + predicted
    f1 = np.divide(2 * tp, denom, out=np.zeros(K), where=denom > 0)
    return float((f1 * support).sum() / support.sum())


def mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((truth - pred) ** 2))


def mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(truth - pred)))


def ob_k(pred, truth, k: int) -> float:
    """Fraction of predictions within ``k`` classes of the truth."""
    if k < 0:
        raise DomainError("k must be >= 0")
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(truth - pred) <= k))


def metric_report(pred, truth, K: int, ks=None) -> MetricReport:
    ks = range(K) if ks is None else ks
    return MetricReport(weighted_f1(pred, truth, K), mse(pred, truth), mae(pred, truth),
                        {int(k): ob_k(pred, truth, k) for k in ks})


@dataclass
class AggregateReport:
    n: int
    mean: dict
    std: dict

    def cell(self, name: str, digits: int = 3) -> str:
        return f"{self.mean[name]:.{digits}f} ({self.std[name]:.{digits}f})"


def mean_std_over_seeds(reports) -> AggregateReport:
    """Mean and population standard deviation of every metric across runs."""
    reports = list(reports)
    if not reports:
        raise DomainError("need at least one report to aggregate")
    names = ["f1_weighted", "mse", "mae"] + [f"ob{k}" for k in sorted(reports[0].ob_k)]
    mean, std = {}, {}
    for name in names:
        vals = np.sort(np.array([r.get(name) for r in reports], dtype=float))
        mean[name] = float(vals.mean())
        std[name] = float(vals.std())
    return AggregateReport(len(reports), mean, std)
