"""Probability vectors on the ordered K-class simplex.

Class indices are 1-based at the API boundary (``y in 1..K``) and 0-based in
storage.  Every function here is pure and returns fresh arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidLabelError

SUM_TOL = 1e-9
MODES = ("informative", "uninformative")

# Default templates for the five-point sentiment scale.
SENTIMENT_LABELS = ("very negative", "negative", "neutral", "positive", "very positive")
UNINFORMATIVE_WORDS = ("cat", "lion", "zebra", "dog", "snake", "owl", "fox", "yak", "emu", "ant")


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label set with one verbaliser template per label and mode."""

    labels: tuple
    verbalisers: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise InvalidInputError("a label space needs K >= 2 labels")
        if len(set(labels)) != len(labels):
            raise InvalidInputError(f"labels must be distinct: {labels}")
        verbs = dict(self.verbalisers) if self.verbalisers else default_verbalisers(labels)
        for mode in MODES:
            templates = tuple(verbs.get(mode, ()))
            if len(templates) != len(labels):
                raise InvalidInputError(
                    f"mode {mode!r} needs exactly {len(labels)} verbalisers, got {len(templates)}")
            if len(set(templates)) != len(templates):
                raise InvalidInputError(f"verbalisers for mode {mode!r} must be distinct")
            verbs[mode] = templates
        object.__setattr__(self, "verbalisers", verbs)

    @property
    def K(self) -> int:
        return len(self.labels)

    @classmethod
    def of_size(cls, K: int) -> "LabelSpace":
        if K == len(SENTIMENT_LABELS):
            return cls(SENTIMENT_LABELS)
        return cls(tuple(f"class {k}" for k in range(1, K + 1)))

    def index(self, label) -> int:
        """1-based index of ``label``; accepts a label name or an integer index."""
        if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
            check_label(int(label), self.K)
            return int(label)
        text = str(label).strip()
        if text in self.labels:
            return self.labels.index(text) + 1
        try:
            value = int(text)
        except ValueError:
            raise InvalidLabelError(f"unknown label {label!r}") from None
        check_label(value, self.K)
        return value

    def verbaliser(self, k: int, mode: str = "informative") -> str:
        check_label(k, self.K)
        return self.verbalisers[mode][k - 1]


def default_verbalisers(labels) -> dict:
    K = len(labels)
    words = list(UNINFORMATIVE_WORDS)
    if K > len(words):
        words += [f"token{i}" for i in range(K - len(words))]
    return {
        "informative": tuple(f"indicates {lab} sentiment" for lab in labels),
        "uninformative": tuple(words[:K]),
    }


def check_label(y: int, K: int) -> None:
    if not 1 <= y <= K:
        raise InvalidLabelError(f"class index {y} outside 1..{K}")


def _size(space_or_K) -> int:
    return space_or_K.K if isinstance(space_or_K, LabelSpace) else int(space_or_K)


def validate_prob(p, tol: float = SUM_TOL) -> np.ndarray:
    """Return ``p`` as a float array after checking the simplex invariants."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("probabilities must be finite")
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise InvalidInputError("probabilities must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > tol):
        raise InvalidInputError("probabilities must sum to 1")
    return p


def is_prob(p, tol: float = SUM_TOL) -> bool:
    try:
        validate_prob(p, tol)
    except InvalidInputError:
        return False
    return True


def softmax(z) -> np.ndarray:
    """Row-wise softmax over the last axis."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def argmax_label(p) -> np.ndarray | int:
    """1-based argmax; ties go to the lowest class index."""
    idx = np.argmax(np.asarray(p), axis=-1) + 1
    return int(idx) if np.ndim(idx) == 0 else idx


def one_hot(y: int, space_or_K) -> np.ndarray:
    K = _size(space_or_K)
    check_label(y, K)
    out = np.zeros(K)
    out[y - 1] = 1.0
    return out


def one_hot_batch(y, K: int) -> np.ndarray:
    y = np.asarray(y, dtype=int)
    if y.size and (y.min() < 1 or y.max() > K):
        raise InvalidLabelError(f"class indices must lie in 1..{K}")
    out = np.zeros((y.size, K))
    out[np.arange(y.size), y - 1] = 1.0
    return out


def cdf(p) -> np.ndarray:
    return np.cumsum(np.asarray(p, dtype=float), axis=-1)


def perturbed_one_hot(k: int, eps: float, space_or_K) -> np.ndarray:
    """Mass ``1 - eps`` on class ``k``, the rest spread evenly over the others."""
    K = _size(space_or_K)
    check_label(k, K)
    if not 0.0 < eps < 1.0:
        raise InvalidInputError(f"eps must lie in (0, 1), got {eps}")
    out = np.full(K, eps / (K - 1))
    out[k - 1] = 1.0 - eps
    return out


def random_simplex(rng: np.random.Generator, n: int, K: int, concentration: float = 1.0) -> np.ndarray:
    """``n`` Dirichlet draws; rows are points on the K-simplex."""
    return rng.dirichlet(np.full(K, concentration), size=n)
