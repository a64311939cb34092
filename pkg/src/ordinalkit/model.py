"""Desk-scale ordinal classifiers, synthetic data and a hashed text featurizer."""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .errors import DegenerateBatchError, DomainError, InvalidInputError, TrainingDivergedError
from .losses import LossSpec, binomial_pmf, evaluate
from .simplex import LabelSpace, argmax_label, softmax

log = logging.getLogger(__name__)

FRACTION_GRID = (1.0, 0.5, 0.25, 0.1)
SPLITS = ("train", "validation", "test")
WKL_MIN_BATCH = 32
_TOKEN = re.compile(r"[a-z0-9']+")


@dataclass
class OrdinalDataset:
    X: np.ndarray
    y: np.ndarray
    space: LabelSpace
    split: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        self.split = np.asarray(self.split, dtype=object)
        if self.X.ndim != 2 or self.X.shape[0] == 0 or self.X.shape[1] == 0:
            raise DomainError("dataset needs N > 0 rows and D > 0 features")
        if self.y.shape != (self.X.shape[0],) or self.split.shape != self.y.shape:
            raise DomainError("labels and split tags must have one entry per row")
        if self.y.min() < 1 or self.y.max() > self.space.K:
            raise DomainError(f"labels must lie in 1..{self.space.K}")
        unknown = set(self.split.tolist()) - set(SPLITS)
        if unknown:
            raise DomainError(f"unknown split tags {sorted(unknown)}")

    @property
    def K(self) -> int:
        return self.space.K

    @property
    def D(self) -> int:
        return self.X.shape[1]

    def part(self, name: str):
        mask = self.split == name
        return self.X[mask], self.y[mask]


def _assign_splits(rng, N, test_fraction, val_fraction):
    order = rng.permutation(N)
    n_test = int(round(test_fraction * N))
    n_val = int(round(val_fraction * N))
    split = np.full(N, "train", dtype=object)
    split[order[:n_test]] = "test"
    split[order[n_test:n_test + n_val]] = "validation"
    return split


def latent_scale(sigma: float) -> float:
    """Standard deviation of ``v . x + sigma * eps`` with standard logistic ``eps``."""
    return float(np.sqrt(1.0 + (sigma * np.pi) ** 2 / 3.0))


def synthetic_thresholds(K: int, sigma: float, skew: float = 0.0, reach: float = 2.0) -> np.ndarray:
    """K - 1 evenly spaced cut points over +-``reach`` latent standard deviations."""
    return latent_scale(sigma) * (np.linspace(-reach, reach, K + 1)[1:-1] + skew)


def generate_synthetic(N: int, D: int, K: int, sigma: float, seed: int = 0, skew: float = 0.0,
                       test_fraction: float = 0.2, val_fraction: float = 0.0) -> OrdinalDataset:
    """Ordered-logit data: label = bucket of ``v . x + sigma * eps``.

    ``x`` is standard normal, ``v`` a seeded unit direction and ``eps``
    standard logistic noise.
    """
    if N <= 0 or D <= 0 or K < 2:
        raise InvalidInputError("need N > 0, D > 0 and K >= 2")
    if sigma < 0:
        raise InvalidInputError("noise sigma must be >= 0")
    rng = np.random.default_rng(seed)
    v = rng.normal(size=D)
    v /= np.linalg.norm(v)
    X = rng.normal(size=(N, D))
    latent = X @ v + sigma * rng.logistic(size=N)
    y = np.searchsorted(synthetic_thresholds(K, sigma, skew), latent) + 1
    split = _assign_splits(rng, N, test_fraction, val_fraction)
    prov = {"source": "synthetic", "seed": int(seed), "N": N, "D": D, "K": K,
            "sigma": float(sigma), "skew": float(skew)}
    return OrdinalDataset(X, y, LabelSpace.of_size(K), split, prov)


def _token_slot(token: str, D: int, key: bytes):
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    h = int.from_bytes(digest, "little")
    return h % D, 1.0 if (h >> 63) & 1 else -1.0


def featurize_text(docs, D: int = 1024, seed: int = 0) -> np.ndarray:
    """Signed hashed bag of words, rows L2-normalised; empty documents give zero rows."""
    if D < 64:
        raise InvalidInputError("hashed feature dimension must be >= 64")
    key = int(seed).to_bytes(8, "little", signed=True)
    cache = {}
    X = np.zeros((len(docs), D))
    empty = 0
    for i, doc in enumerate(docs):
        tokens = _TOKEN.findall(str(doc).lower())
        if not tokens:
            empty += 1
            continue
        for tok in tokens:
            if tok not in cache:
                cache[tok] = _token_slot(tok, D, key)
            j, s = cache[tok]
            X[i, j] += s
        n = np.linalg.norm(X[i])
        if n > 0:
            X[i] /= n
    if empty:
        log.warning("%d empty document(s) featurized as zero rows", empty)
    return X


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


@dataclass
class LinearSoftmaxModel:
    W: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, K: int, D: int) -> "LinearSoftmaxModel":
        return cls(np.zeros((K, D)), np.zeros(K))

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def D(self) -> int:
        return self.W.shape[1]

    def logits(self, X):
        return X @ self.W.T + self.b

    def predict_proba(self, X):
        return softmax(self.logits(_check_dim(X, self.D)))

    def grad(self, X, y, spec: LossSpec):
        """Mean loss and its gradients with respect to ``W`` and ``b``."""
        P = softmax(self.logits(X))
        ev = evaluate(spec, P, y)
        return ev, ev.grad_z.T @ X, ev.grad_z.sum(axis=0)

    def params(self):
        return [self.W, self.b]


@dataclass
class BinomialModel:
    """Scalar score ``f(x) = logistic(w . x + b)`` feeding a Binomial(K - 1, f) head."""

    w: np.ndarray
    b: float
    K: int

    @classmethod
    def zeros(cls, K: int, D: int) -> "BinomialModel":
        return cls(np.zeros(D), np.zeros(1), K)

    @property
    def D(self) -> int:
        return self.w.size

    def success(self, X):
        return expit(X @ self.w + self.b[0])

    def predict_proba(self, X):
        return binomial_pmf(self.success(_check_dim(X, self.D)), self.K)

    def grad(self, X, y, spec: LossSpec):
        f = self.success(X)
        P = binomial_pmf(f, self.K)
        ev = evaluate(spec, P, y)
        # dp_k/du = p_k * ((k - 1) - (K - 1) f) for u = w . x + b
        dp_du = P * (np.arange(self.K)[None, :] - (self.K - 1) * f[:, None])
        g_u = np.nan_to_num((ev.grad_p * dp_du).sum(axis=1))
        return ev, X.T @ g_u, np.array([g_u.sum()])

    def params(self):
        return [self.w, self.b]


def _check_dim(X, D):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != D:
        raise DomainError(f"expected an N x {D} feature matrix, got shape {X.shape}")
    return X


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(X)


def predict(model, X) -> np.ndarray:
    return np.atleast_1d(argmax_label(model.predict_proba(X)))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec = LossSpec("CE")
    lr: float = 0.1
    epochs: int = 100
    batch_size: int | None = 16
    seed: int = 0
    optimizer: str = "momentum"
    momentum: float = 0.9
    fraction: float = 1.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.weight_decay < 0:
            raise InvalidInputError("weight_decay must be >= 0")
        if self.optimizer not in ("gd", "momentum"):
            raise InvalidInputError("optimizer must be 'gd' or 'momentum'")
        if not 0.0 < self.fraction <= 1.0:
            raise InvalidInputError("subsample fraction must lie in (0, 1]")
        if self.lr <= 0 or self.epochs < 0:
            raise InvalidInputError("need lr > 0 and epochs >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidInputError("batch_size must be positive")


@dataclass
class TrainResult:
    model: object
    trace: list
    skipped_steps: int = 0


def _batches(rng, n, batch_size, min_batch):
    order = rng.permutation(n)
    if batch_size is None or batch_size >= n:
        return [order]
    chunks = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(chunks) > 1 and chunks[-1].size < min_batch:
        chunks[-2] = np.concatenate([chunks[-2], chunks.pop()])
    return chunks


def train(kind: str, data: OrdinalDataset, cfg: TrainConfig) -> TrainResult:
    """Mini-batch gradient descent on the mean loss over the training split.

    Steps whose loss saturates (log of zero) or whose kappa batch is
    degenerate are skipped.  Three consecutive non-finite epoch losses raise
    :class:`TrainingDivergedError`.
    """
    if cfg.fraction < 1.0:
        data = subsample(data, cfg.fraction, cfg.seed)
    X, y = data.part("train")
    if X.shape[0] == 0:
        raise DomainError("training split is empty")
    if kind == "linear":
        model = LinearSoftmaxModel.zeros(data.K, data.D)
    elif kind == "binomial":
        model = BinomialModel.zeros(data.K, data.D)
    else:
        raise InvalidInputError(f"unknown model kind {kind!r}")
    spec = cfg.loss
    min_batch = WKL_MIN_BATCH if spec.kind == "WKL" else 1
    batch_size = cfg.batch_size
    if spec.kind == "WKL" and batch_size is not None:
        batch_size = max(batch_size, WKL_MIN_BATCH)
    rng = np.random.default_rng([cfg.seed, 7])
    velocity = [np.zeros_like(p) for p in model.params()]
    trace, skipped, bad_epochs = [], 0, 0
    for epoch in range(cfg.epochs):
        for idx in _batches(rng, X.shape[0], batch_size, min_batch):
            try:
                ev, *grads = model.grad(X[idx], y[idx], spec)
            except DegenerateBatchError:
                skipped += 1
                continue
            if ev.saturated:
                skipped += 1
                continue
            apply_update(model.params(), grads, velocity, cfg)
        value = _epoch_loss(model, X, y, spec)
        trace.append(value)
        finite_params = all(np.all(np.isfinite(p)) for p in model.params())
        bad_epochs = bad_epochs + 1 if not (np.isfinite(value) and finite_params) else 0
        if bad_epochs >= 3 or not finite_params:
            raise TrainingDivergedError(epoch + 1)
    return TrainResult(model, trace, skipped)


def apply_update(params, grads, velocity, cfg: TrainConfig) -> None:
    """One in-place descent step; the last parameter is the bias and is not decayed."""
    last = len(params) - 1
    for i, (p, g, vel) in enumerate(zip(params, grads, velocity)):
        if cfg.weight_decay and i != last:
            g = g + cfg.weight_decay * p
        if cfg.optimizer == "momentum":
            vel *= cfg.momentum
            vel += g
            p -= cfg.lr * vel
        else:
            p -= cfg.lr * g


def _epoch_loss(model, X, y, spec):
    try:
        return evaluate(spec, model.predict_proba(X), y).value
    except DegenerateBatchError:
        return float("nan")


def subsample(data: OrdinalDataset, fraction: float, seed: int = 0) -> OrdinalDataset:
    """Keep ``round(fraction * N_train)`` training rows chosen uniformly; other splits untouched."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return data
    train_idx = np.flatnonzero(data.split == "train")
    keep_n = int(round(fraction * train_idx.size))
    rng = np.random.default_rng([seed, 11])
    chosen = np.sort(rng.choice(train_idx, size=keep_n, replace=False))
    rows = np.sort(np.concatenate([chosen, np.flatnonzero(data.split != "train")]))
    prov = dict(data.provenance)
    prov["subsample"] = {"fraction": fraction, "seed": int(seed), "n_train": int(keep_n)}
    missing = sorted(set(data.y[train_idx].tolist()) - set(data.y[chosen].tolist()))
    if missing:
        prov["subsample"]["dropped_classes"] = missing
        log.warning("subsample at fraction %s dropped classes %s", fraction, missing)
    return replace(data, X=data.X[rows], y=data.y[rows], split=data.split[rows], provenance=prov)
