"""K-way entailment reformulation with verbaliser feature blocks.

Each datapoint ``x`` is paired with every candidate label ``k`` by
concatenating ``x`` with the verbaliser block ``v_k``.  A binary scorer
learns whether the pair matches; inference scores all K pairs and takes the
softmax argmax.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigError, DegenerateTrainingError, DomainError, TrainingDivergedError
from .metrics import AggregateReport, MetricReport, mean_std_over_seeds, metric_report
from .model import OrdinalDataset, TrainConfig, apply_update, subsample
from .simplex import LabelSpace, argmax_label, softmax

VERBALISER_MODES = ("informative", "uninformative")
DROPOUT_RATE = 0.05
RHO_INIT = -3.0


@dataclass(frozen=True)
class VerbaliserSet:
    """Label templates plus the seeded feature blocks they stand for.

    Informative blocks have cosine similarity ``1 - |i - j| / K`` between
    labels ``i`` and ``j``; uninformative blocks are random orthonormal
    vectors, so they carry no ordering.
    """

    mode: str
    templates: tuple
    dim: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.mode not in VERBALISER_MODES:
            raise ConfigError(f"verbaliser mode must be one of {VERBALISER_MODES}, got {self.mode!r}")
        templates = tuple(str(t) for t in self.templates)
        object.__setattr__(self, "templates", templates)
        if len(templates) < 2:
            raise ConfigError("need at least two verbaliser templates")
        if len(set(templates)) != len(templates):
            raise ConfigError("verbaliser templates must be distinct")
        if self.dim < len(templates):
            raise ConfigError("verbaliser block dimension must be >= K")

    @classmethod
    def default(cls, mode: str, space, dim: int = 16, seed: int = 0) -> "VerbaliserSet":
        if not isinstance(space, LabelSpace):
            space = LabelSpace.of_size(int(space))
        return cls(mode, space.verbalisers[mode], dim, seed)

    @property
    def K(self) -> int:
        return len(self.templates)

    @cached_property
    def blocks(self) -> np.ndarray:
        K, m = self.K, self.dim
        rng = np.random.default_rng([self.seed, K, m])
        if self.mode == "informative":
            idx = np.arange(K)
            gram = 1.0 - np.abs(idx[:, None] - idx[None, :]) / K
            vals, vecs = np.linalg.eigh(gram)
            coords = vecs * np.sqrt(np.clip(vals, 0.0, None))
            basis, _ = np.linalg.qr(rng.normal(size=(m, K)))
            return coords @ basis.T
        basis, _ = np.linalg.qr(rng.normal(size=(m, K)))
        return basis.T


@dataclass(frozen=True)
class EntailmentSample:
    payload: np.ndarray
    indicator: int
    source: int
    candidate: int


@dataclass
class AugmentedSamples:
    """Column-wise storage of entailment samples; iterates as EntailmentSample."""

    payload: np.ndarray
    indicator: np.ndarray
    source: np.ndarray
    candidate: np.ndarray
    n_features: int

    def __len__(self):
        return self.indicator.size

    def __getitem__(self, i) -> EntailmentSample:
        return EntailmentSample(self.payload[i], int(self.indicator[i]), int(self.source[i]), int(self.candidate[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def take(self, idx) -> "AugmentedSamples":
        return AugmentedSamples(self.payload[idx], self.indicator[idx], self.source[idx],
                                self.candidate[idx], self.n_features)


def compose(x: np.ndarray, block: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float), block], axis=-1)


def augment(data: OrdinalDataset, verbs: VerbaliserSet, oversample_positive: bool = False,
            seed: int = 0, split: str | None = "train") -> AugmentedSamples:
    """Pair every row with all K candidates; optionally add one perturbed positive per row.

    The extra positive zeroes a random 5% of the row's feature coordinates.
    ``split=None`` uses every row of ``data``.
    """
    if verbs.K != data.K:
        raise ConfigError(f"{verbs.K} verbalisers for {data.K} labels")
    if split is None:
        X, y = data.X, data.y
    else:
        X, y = data.part(split)
    N, D = X.shape
    K = data.K
    V = verbs.blocks
    payload = np.concatenate([np.repeat(X, K, axis=0), np.tile(V, (N, 1))], axis=1)
    source = np.repeat(np.arange(N), K)
    candidate = np.tile(np.arange(1, K + 1), N)
    indicator = (candidate == np.repeat(y, K)).astype(int)
    if oversample_positive:
        rng = np.random.default_rng([seed, 5])
        n_drop = max(1, int(round(DROPOUT_RATE * D)))
        Xd = X.copy()
        for i in range(N):
            Xd[i, rng.choice(D, size=n_drop, replace=False)] = 0.0
        payload = np.concatenate([payload, compose(Xd, V[y - 1])])
        source = np.concatenate([source, np.arange(N)])
        candidate = np.concatenate([candidate, y])
        indicator = np.concatenate([indicator, np.ones(N, dtype=int)])
    return AugmentedSamples(payload, indicator, source, candidate, D)


@dataclass
class MatchScorer:
    """Logistic match score over composed features.

    With ``e = M^T x`` the input embedded in verbaliser space::

        logit = a . x + c . v + e . v - 0.5 * softplus(rho) * ||e||^2 + b

    ``e . v`` ranks the candidates.  The curvature term is shared by all
    candidates, so it cancels in the softmax, but it lets the binary
    objective fit a middle label whose inputs sit between two others, which a
    logit linear in ``x`` cannot.  Softplus keeps the curvature non-negative
    so logits stay bounded above.
    """

    a: np.ndarray
    c: np.ndarray
    M: np.ndarray
    rho: np.ndarray
    b: np.ndarray

    @classmethod
    def zeros(cls, D: int, m: int) -> "MatchScorer":
        return cls(np.zeros(D), np.zeros(m), np.zeros((D, m)), np.full(1, RHO_INIT), np.zeros(1))

    @property
    def curvature(self) -> float:
        return float(np.logaddexp(0.0, self.rho[0]))

    @property
    def n_features(self) -> int:
        return self.a.size

    def _split(self, payload):
        payload = np.asarray(payload, dtype=float)
        if payload.shape[-1] != self.a.size + self.c.size:
            raise DomainError(f"payload width {payload.shape[-1]} != {self.a.size + self.c.size}")
        return payload[..., :self.a.size], payload[..., self.a.size:]

    def _forward(self, x, v):
        e = x @ self.M
        sq = (e * e).sum(axis=-1)
        z = x @ self.a + v @ self.c + (e * v).sum(axis=-1) - 0.5 * self.curvature * sq + self.b[0]
        return z, e, sq

    def logits(self, payload) -> np.ndarray:
        return self._forward(*self._split(payload))[0]

    def __call__(self, payload):
        return self.logits(payload)

    def params(self):
        # bias last: weight decay skips it
        return [self.a, self.c, self.M, self.rho, self.b]

    def bce(self, payload, indicator):
        """Mean binary cross-entropy and gradients for ``params()``."""
        x, v = self._split(payload)
        t = np.asarray(indicator, dtype=float)
        z, e, sq = self._forward(x, v)
        value = -float(np.mean(t * log_expit(z) + (1.0 - t) * log_expit(-z)))
        r = (expit(z) - t) / t.size
        k = self.curvature
        gM = x.T @ (r[:, None] * (v - k * e))
        g_rho = -0.5 * (r * sq).sum() * expit(self.rho[0])
        return value, [x.T @ r, v.T @ r, gM, np.array([g_rho]), np.array([r.sum()])]


def train_binary_scorer(samples: AugmentedSamples, cfg: TrainConfig) -> tuple:
    """Fit a :class:`MatchScorer` by gradient descent on binary cross-entropy.

    Returns ``(scorer, trace)`` with one mean BCE value per epoch.
    """
    t = np.asarray(samples.indicator)
    if t.size == 0 or t.min() == t.max():
        raise DegenerateTrainingError("binary scorer needs both positive and negative samples")
    D = samples.n_features
    scorer = MatchScorer.zeros(D, samples.payload.shape[1] - D)
    rng = np.random.default_rng([cfg.seed, 13])
    velocity = [np.zeros_like(p) for p in scorer.params()]
    n = len(samples)
    trace = []
    for epoch in range(cfg.epochs):
        if cfg.batch_size is None or cfg.batch_size >= n:
            batches = [np.arange(n)]
        else:
            order = rng.permutation(n)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
        for idx in batches:
            _, grads = scorer.bce(samples.payload[idx], t[idx])
            apply_update(scorer.params(), grads, velocity, cfg)
        value, _ = scorer.bce(samples.payload, t)
        if not math.isfinite(value):
            raise TrainingDivergedError(epoch + 1)
        trace.append(value)
    return scorer, trace


def infer_entailment(x, verbs: VerbaliserSet, scorer) -> tuple:
    """Score the K composed candidates one call each; return (label, probabilities)."""
    x = np.asarray(x, dtype=float)
    scores = np.array([float(scorer(compose(x, block))) for block in verbs.blocks])
    p = softmax(scores)
    return int(argmax_label(p)), p


def infer_entailment_batch(X, verbs: VerbaliserSet, scorer) -> tuple:
    """Vectorised :func:`infer_entailment` over the rows of ``X``."""
    X = np.asarray(X, dtype=float)
    scores = np.column_stack([
        scorer(compose(X, np.broadcast_to(block, (X.shape[0], block.size)))) for block in verbs.blocks
    ])
    P = softmax(scores)
    return np.atleast_1d(argmax_label(P)), P


def constrained_label_argmax(oracle, x, space) -> int:
    """Index (1-based) of the label with the highest oracle log-score.

    NaN scores rank below every number, ties go to the lowest index and
    oracle exceptions propagate.
    """
    K = space.K if isinstance(space, LabelSpace) else int(space)
    best, best_score = 1, -math.inf
    for k in range(1, K + 1):
        s = float(oracle(x, k))
        if s != s:
            s = -math.inf
        if s > best_score:
            best, best_score = k, s
    return best


@dataclass(frozen=True)
class AblationConfig:
    train: TrainConfig = TrainConfig(lr=0.1, epochs=60, batch_size=256)
    fractions: tuple = (0.1, 1.0)
    seeds: tuple = (0, 1, 2, 3, 4)
    dim: int = 16
    oversample_positive: bool = False


@dataclass
class AblationResult:
    reports: dict = field(default_factory=dict)

    def aggregate(self, mode: str, fraction: float) -> AggregateReport:
        return mean_std_over_seeds(self.reports[(mode, fraction)])

    def gap(self, fraction: float, metric: str = "f1_weighted") -> float:
        """Informative minus uninformative mean of ``metric``."""
        info = self.aggregate("informative", fraction).mean[metric]
        unin = self.aggregate("uninformative", fraction).mean[metric]
        return info - unin


def run_entailment(data: OrdinalDataset, verbs: VerbaliserSet, cfg: TrainConfig,
                   oversample_positive: bool = False) -> MetricReport:
    """Train on the train split of ``data`` and score the test split."""
    train_data = subsample(data, cfg.fraction, cfg.seed) if cfg.fraction < 1.0 else data
    samples = augment(train_data, verbs, oversample_positive, seed=cfg.seed)
    scorer, _ = train_binary_scorer(samples, cfg)
    X_test, y_test = data.part("test")
    pred, _ = infer_entailment_batch(X_test, verbs, scorer)
    return metric_report(pred, y_test, data.K)


def ablate_verbalisers(data: OrdinalDataset, cfg: AblationConfig = AblationConfig()) -> AblationResult:
    """Run the pipeline with both verbaliser modes at every fraction and seed."""
    result = AblationResult()
    for mode in VERBALISER_MODES:
        verbs = VerbaliserSet.default(mode, data.space, cfg.dim)
        for fraction in cfg.fractions:
            reports = []
            for seed in cfg.seeds:
                tc = replace(cfg.train, seed=seed, fraction=fraction)
                reports.append(run_entailment(data, verbs, tc, cfg.oversample_positive))
            result.reports[(mode, fraction)] = reports
    return result
