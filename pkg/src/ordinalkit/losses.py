"""Explicit ordinal losses with analytic gradients.

Every per-sample loss returns a :class:`LossEval` holding the value, the
gradient with respect to the probability vector and the gradient with respect
to the logits behind a softmax head.  Batches of per-sample losses are
averaged.  The weighted-kappa loss is only defined on a batch.

Boundary cases where a logarithm hits zero do not raise: the value is
``+inf``, gradient entries are clamped to ``+-1e30`` and ``saturated`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateBatchError, DomainError, InvalidInputError, InvalidLabelError
from .simplex import check_label, softmax

KINDS = ("CE", "OLL", "SOFT", "EMD", "WKL", "MLL", "BINOMIAL_NLL")
PSR_FAMILY = ("CE", "OLL", "MLL", "EMD")
DEFAULT_ALPHA = 1.5
DEFAULT_BETA = 1.0
DEFAULT_LAMBDA = 0.5
WKL_DEGENERATE = 1e-12

_KERNEL_CODE = {
    "CE": _kernels.CE,
    "BINOMIAL_NLL": _kernels.CE,
    "OLL": _kernels.OLL,
    "SOFT": _kernels.SOFT,
    "EMD": _kernels.EMD,
    "MLL": _kernels.MLL,
}


def quadratic_weights(K: int) -> np.ndarray:
    idx = np.arange(K)
    return (idx[:, None] - idx[None, :]).astype(float) ** 2


@dataclass(frozen=True)
class LossSpec:
    """Which loss to use and its hyperparameters.

    ``lam`` is the CE weight of the multitask loss; ``wkl_weights`` defaults to
    quadratic penalties ``(i - j)**2`` sized on first use.
    """

    kind: str = "CE"
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    lam: float = DEFAULT_LAMBDA
    wkl_weights: tuple | None = None

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise InvalidInputError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise InvalidInputError(f"alpha must be > 0, got {self.alpha}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise InvalidInputError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidInputError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.wkl_weights is not None:
            W = np.asarray(self.wkl_weights, dtype=float)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise InvalidInputError("wkl_weights must be a square matrix")
            if np.any(W < 0) or not np.allclose(W, W.T) or np.any(np.diag(W) != 0):
                raise InvalidInputError("wkl_weights must be non-negative, symmetric, zero on the diagonal")
            object.__setattr__(self, "wkl_weights", tuple(tuple(float(x) for x in row) for row in W))

    @property
    def label(self) -> str:
        if self.kind == "OLL":
            return f"OLL(alpha={self.alpha:g})"
        if self.kind == "SOFT":
            return f"SOFT(beta={self.beta:g})"
        if self.kind == "MLL":
            return f"MLL(lambda={self.lam:g},alpha={self.alpha:g})"
        return self.kind

    def weights(self, K: int) -> np.ndarray:
        if self.wkl_weights is None:
            return quadratic_weights(K)
        W = np.asarray(self.wkl_weights, dtype=float)
        if W.shape != (K, K):
            raise DomainError(f"wkl_weights are {W.shape}, expected ({K}, {K})")
        return W


@dataclass
class LossEval:
    value: float
    grad_p: np.ndarray
    grad_z: np.ndarray
    saturated: bool = False


@dataclass
class WklAccumulators:
    O: np.ndarray
    E: np.ndarray
    kappa: float
    weights: np.ndarray = field(repr=False)


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Chain ``dL/dp`` through a softmax head: ``p * (g - <p, g>)`` row-wise."""
    inner = (p * grad_p).sum(axis=-1, keepdims=True)
    out = p * (grad_p - inner)
    return np.clip(np.nan_to_num(out, nan=0.0), -_kernels.CLAMP, _kernels.CLAMP)


def _prep(p, y):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise DomainError("expected a single probability vector of length K >= 2")
    check_label(int(y), p.size)
    return p, int(y)


def _single(kind_code, p, y, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, lam=DEFAULT_LAMBDA) -> LossEval:
    p, y = _prep(p, y)
    v, g, s = _kernels.loss_grad_rows(kind_code, p[None, :], np.array([y - 1]), alpha, beta, lam)
    grad_p = g[0]
    return LossEval(float(v[0]), grad_p, softmax_backward(p, grad_p), bool(s[0]))


def ce(p, y) -> LossEval:
    return _single(_kernels.CE, p, y)


def oll(p, y, alpha: float = DEFAULT_ALPHA) -> LossEval:
    if alpha <= 0:
        raise InvalidInputError("alpha must be > 0")
    return _single(_kernels.OLL, p, y, alpha=alpha)


def soft_labels(y: int, beta: float, K) -> np.ndarray:
    """Exponential-decay target distribution peaked at class ``y``."""
    K = getattr(K, "K", K)
    check_label(y, K)
    if beta <= 0:
        raise InvalidInputError("beta must be > 0")
    logits = -beta * np.abs(np.arange(1, K + 1) - y)
    return softmax(logits)


def soft_loss(p, y, beta: float = DEFAULT_BETA) -> LossEval:
    if beta <= 0:
        raise InvalidInputError("beta must be > 0")
    return _single(_kernels.SOFT, p, y, beta=beta)


def emd(p, y) -> LossEval:
    return _single(_kernels.EMD, p, y)


def mll(p, y, lam: float = DEFAULT_LAMBDA, alpha: float = DEFAULT_ALPHA) -> LossEval:
    if not 0.0 <= lam <= 1.0:
        raise InvalidInputError("lambda must lie in [0, 1]")
    return _single(_kernels.MLL, p, y, alpha=alpha, lam=lam)


@dataclass(frozen=True)
class BinomialHead:
    """Scalar success parameter ``f`` inducing a Binomial(K - 1, f) PMF."""

    f: float
    K: int

    def pmf(self) -> np.ndarray:
        return binomial_pmf(self.f, self.K)


def binomial_pmf(f, K: int | None = None) -> np.ndarray:
    """PMF of Binomial(K - 1, f) over classes 1..K; ``f`` may be an array or a head."""
    if isinstance(f, BinomialHead):
        f, K = f.f, f.K
    if K is None or K < 2:
        raise InvalidInputError("binomial head needs K >= 2")
    f = np.asarray(f, dtype=float)
    if np.any((f < 0) | (f > 1)) or not np.all(np.isfinite(f)):
        raise InvalidInputError("binomial success parameter must lie in [0, 1]")
    k = np.arange(K)
    coef = np.array([math.comb(K - 1, j) for j in k], dtype=float)
    fe = f[..., None]
    return coef * fe ** k * (1.0 - fe) ** (K - 1 - k)


def wkl_accumulators(P, y, weights=None) -> WklAccumulators:
    P = np.asarray(P, dtype=float)
    y = np.asarray(y, dtype=int)
    if P.ndim != 2 or P.shape[0] != y.size:
        raise DomainError("WKL needs an N x K prediction matrix and N labels")
    N, K = P.shape
    if N < 2:
        raise DomainError("WKL needs a batch of at least two samples")
    if y.min() < 1 or y.max() > K:
        raise InvalidLabelError(f"class indices must lie in 1..{K}")
    W = quadratic_weights(K) if weights is None else np.asarray(weights, dtype=float)
    truth = np.zeros((N, K))
    truth[np.arange(N), y - 1] = 1.0
    O = truth.T @ P / N
    E = np.outer(truth.mean(axis=0), P.mean(axis=0))
    den = float((W * E).sum())
    if den < WKL_DEGENERATE:
        raise DegenerateBatchError(f"chance agreement sum {den:.3g} is below {WKL_DEGENERATE}")
    kappa = 1.0 - float((W * O).sum()) / den
    return WklAccumulators(O, E, kappa, W)


def wkl(P, y, weights=None) -> LossEval:
    """Negated weighted kappa over a batch, with soft confusion counts.

    ``grad_p`` has the shape of ``P``; the loss does not decompose per sample.
    """
    acc = wkl_accumulators(P, y, weights)
    P = np.asarray(P, dtype=float)
    y = np.asarray(y, dtype=int)
    N, K = P.shape
    W = acc.weights
    num = float((W * acc.O).sum())
    den = float((W * acc.E).sum())
    class_freq = np.bincount(y - 1, minlength=K) / N
    dnum = W[y - 1, :] / N
    dden = np.broadcast_to(class_freq @ W / N, P.shape)
    grad_p = (dnum * den - num * dden) / den ** 2
    return LossEval(-acc.kappa, grad_p, softmax_backward(P, grad_p), False)


def evaluate(spec: LossSpec, P, y) -> LossEval:
    """Loss of ``spec`` on one vector or a batch (mean over rows)."""
    P = np.asarray(P, dtype=float)
    single = P.ndim == 1
    if spec.kind == "WKL":
        if single:
            raise DomainError("WKL is defined on batches only")
        return wkl(P, y, spec.weights(P.shape[1]))
    P2 = P[None, :] if single else P
    y_arr = np.atleast_1d(np.asarray(y, dtype=int))
    if y_arr.size != P2.shape[0]:
        raise DomainError("one label per prediction row is required")
    K = P2.shape[1]
    if y_arr.min() < 1 or y_arr.max() > K:
        raise InvalidLabelError(f"class indices must lie in 1..{K}")
    v, g, s = _kernels.loss_grad_rows(_KERNEL_CODE[spec.kind], P2, y_arr - 1, spec.alpha, spec.beta, spec.lam)
    n = P2.shape[0]
    if single:
        return LossEval(float(v[0]), g[0], softmax_backward(P, g[0]), bool(s[0]))
    grad_p = g / n
    return LossEval(float(v.mean()), grad_p, softmax_backward(P2, grad_p), bool(s.any()))


def loss_value(spec: LossSpec, P, y) -> float:
    return evaluate(spec, P, y).value


def grad_check(spec: LossSpec, point, y, h: float = 1e-6, through_softmax: bool = False,
               floor: float = 1e-4) -> float:
    """Max coordinate-wise relative error between analytic and central-difference gradients.

    ``point`` is a probability vector (or batch for WKL), or logits when
    ``through_softmax`` is set.  ``floor`` bounds the relative-error
    denominator away from zero for coordinates whose gradient vanishes.
    """
    x = np.array(point, dtype=float)

    def f(arr):
        p = softmax(arr) if through_softmax else arr
        return evaluate(spec, p, y).value

    res = evaluate(spec, softmax(x) if through_softmax else x, y)
    analytic = res.grad_z if through_softmax else res.grad_p
    numeric = np.zeros_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        num_flat[i] = (up - down) / (2 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
