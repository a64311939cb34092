"""Numerical certificates for proper scoring, convexity, unimodality and ordinality.

All verdicts are sampling or optimisation based.  A convexity ``holds`` means
no violation turned up in the trials that were run, and a PSR verdict is
about where the located minimiser sits, not about the loss value there.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import DomainError, InvalidInputError
from .losses import _KERNEL_CODE, LossSpec, evaluate, soft_labels, wkl
from .simplex import one_hot, perturbed_one_hot, random_simplex

PSR_TOL = 1e-3
CONVERGED_GAP = 1e-6
CONVEX_SLACK = 1e-9
CONVEX_FAIL = 1e-7
HESSIAN_TOL = 1e-5
FLAT_SPREAD = 1e-9
DEFAULT_EPS = 0.1

HOLDS, FAILS, INCONCLUSIVE = "holds", "fails", "inconclusive"


@dataclass
class PsrResult:
    verdict: str
    y: int
    K: int
    minimizer: np.ndarray
    gap: float
    value: float
    fw_gap: float
    iterations: int

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["minimizer"] = np.round(self.minimizer, 9).tolist()
        return rec


@dataclass
class ConvexityResult:
    holds: bool
    trials: int
    max_violation: float
    marginal: int
    min_curvature: float
    witness: dict | None = None

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class OrdinalityProfile:
    y: int
    eps: float
    points: list
    shape: str

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class PropertyReport:
    loss: LossSpec
    K: int
    psr: PsrResult
    psr_per_label: list
    convex: ConvexityResult
    ordinality: OrdinalityProfile
    um_guarantee: str
    um_stats: dict | None = field(default=None)

    @property
    def psr_verdict(self) -> str:
        verdicts = {r.verdict for r in self.psr_per_label}
        if FAILS in verdicts:
            return FAILS
        if INCONCLUSIVE in verdicts:
            return INCONCLUSIVE
        return HOLDS

    def row(self) -> dict:
        return {
            "loss": self.loss.kind,
            "PSR": _mark(self.psr_verdict),
            "UM": self.um_guarantee,
            "CX": "yes" if self.convex.holds else "no",
            "Ord": self.ordinality.shape,
        }

    def to_record(self) -> dict:
        return {
            "loss": self.loss.kind,
            "label": self.loss.label,
            "K": self.K,
            "row": self.row(),
            "psr": self.psr.to_record(),
            "psr_per_label": [r.to_record() for r in self.psr_per_label],
            "convex": self.convex.to_record(),
            "ordinality": self.ordinality.to_record(),
            "um": {"guarantee": self.um_guarantee, "stats": self.um_stats},
        }


def _mark(verdict: str) -> str:
    return {HOLDS: "yes", FAILS: "no", INCONCLUSIVE: "inconclusive"}[verdict]


# ---------------------------------------------------------------------------
# unimodality
# ---------------------------------------------------------------------------


def is_unimodal(p) -> bool:
    """No ``p_j > p_l < p_i`` with ``j < l < i``; ties are not dips."""
    return bool(_kernels.unimodal_rows(np.asarray(p, dtype=float)[None, :])[0])


def um_stats(P) -> dict:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] == 0:
        raise DomainError("unimodality fraction needs at least one row")
    ok = _kernels.unimodal_rows(P)
    n = int(ok.size)
    return {"n_checked": n, "n_unimodal": int(ok.sum()), "fraction": float(ok.sum()) / n}


def um_fraction(P) -> float:
    return um_stats(P)["fraction"]


# ---------------------------------------------------------------------------
# proper scoring rule
# ---------------------------------------------------------------------------


def _starts(rng, y, K, restarts):
    rand = random_simplex(rng, restarts, K) * 0.99 + 0.01 / K
    return np.vstack([rand, perturbed_one_hot(y, 1e-3, K), np.full(K, 1.0 / K)])


def _eg_batch(fun, P0, max_iter, tol):
    """Exponentiated gradient over a matrix whose rows each live on a simplex."""
    theta = np.log(P0)
    P = np.exp(theta - theta.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    v, g = fun(P)
    eta = 1.0 / max(float(np.ptp(g)), 1e-12)
    it, stall = 0, 0
    gap = float(((g * P).sum(axis=1) - g.min(axis=1)).sum())
    while it < max_iter and gap > tol and stall < _kernels.STALL_ITERS:
        accepted = False
        while eta > 1e-300:
            cand = theta - eta * g
            Q = np.exp(cand - cand.max(axis=1, keepdims=True))
            Q /= Q.sum(axis=1, keepdims=True)
            vq, gq = fun(Q)
            if vq <= v - 1e-4 * float((g * (P - Q)).sum()):
                stall = stall + 1 if vq >= v else 0
                theta = cand - cand.max(axis=1, keepdims=True)
                P, v, g = Q, vq, gq
                eta *= 2.0
                accepted = True
                break
            eta *= 0.5
        it += 1
        gap = float(((g * P).sum(axis=1) - g.min(axis=1)).sum())
        if not accepted:
            break
    return P, v, gap, it


@lru_cache(maxsize=32)
def _wkl_batch_minimum(spec, K, seed, restarts, max_iter):
    # the balanced batch does not depend on which label is being probed
    rng = np.random.default_rng([seed, K, 0])
    batch_y = np.tile(np.arange(1, K + 1), 2)
    W = spec.weights(K)

    def fun(P):
        res = wkl(P, batch_y, W)
        return res.value, res.grad_p

    best = None
    n = batch_y.size
    starts = [random_simplex(rng, n, K) * 0.99 + 0.01 / K for _ in range(restarts)]
    starts.append(np.array([perturbed_one_hot(int(c), 1e-3, K) for c in batch_y]))
    starts.append(np.full((n, K), 1.0 / K))
    for P0 in starts:
        P, v, fw, it = _eg_batch(fun, P0, max_iter, 1e-12)
        if best is None or v < best[1]:
            best = (P, v, fw, it)
    P, v, fw, it = best
    truth = np.eye(K)[batch_y - 1]
    return P, float(np.abs(P - truth).max()), float(v), fw, it


def _psr_wkl(spec, y, K, seed, restarts, max_iter):
    P, gap, v, fw, it = _wkl_batch_minimum(spec, K, seed, restarts, max_iter)
    return P[y - 1].copy(), gap, v, fw, it


def verify_psr(spec: LossSpec, y: int, K: int, restarts: int = 20, seed: int = 0,
               max_iter: int = 20000) -> PsrResult:
    """Locate the simplex minimiser of ``spec`` for true class ``y``.

    Exponentiated-gradient descent runs from ``restarts`` random interior
    points plus near-one-hot and uniform starts; the best final point is
    compared with ``one_hot(y)`` in the max norm.  Weighted kappa is checked
    on a balanced batch holding every class twice.
    """
    if K < 2:
        raise InvalidInputError("K must be >= 2")
    if spec.kind == "WKL":
        minimizer, gap, value, fw, it = _psr_wkl(spec, y, K, seed, restarts, max_iter)
    else:
        rng = np.random.default_rng([seed, K, y])
        starts = _starts(rng, y, K, restarts)
        P, v, fws, its = _kernels.eg_minimize(_KERNEL_CODE[spec.kind], starts, y - 1, spec.alpha,
                                             spec.beta, spec.lam, max_iter, 1e-12)
        best = int(np.argmin(v))
        minimizer, value, fw, it = P[best], float(v[best]), float(fws[best]), int(its[best])
        gap = float(np.abs(minimizer - one_hot(y, K)).max())
    if fw > CONVERGED_GAP:
        verdict = INCONCLUSIVE
    else:
        verdict = HOLDS if gap <= PSR_TOL else FAILS
    return PsrResult(verdict, y, K, minimizer, gap, value, fw, it)


# ---------------------------------------------------------------------------
# convexity
# ---------------------------------------------------------------------------


def _tangent_basis(K):
    # orthonormal basis of {v : sum(v) = 0}
    q, _ = np.linalg.qr(np.eye(K) - 1.0 / K)
    return q[:, : K - 1]


def _hessian_min_eig(kind, p, t, spec, h):
    K = p.size
    B = _tangent_basis(K)
    m = K - 1
    pts = []
    for i in range(m):
        for j in range(m):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                pts.append(p + h * (si * B[:, i] + sj * B[:, j]))
    pts = np.asarray(pts)
    vals, _, _ = _kernels.loss_grad_rows(kind, pts, np.full(len(pts), t), spec.alpha, spec.beta, spec.lam)
    vals = vals.reshape(m, m, 4)
    H = (vals[..., 0] - vals[..., 1] - vals[..., 2] + vals[..., 3]) / (4 * h * h)
    H = 0.5 * (H + H.T)
    eig = np.linalg.eigvalsh(H)
    return float(eig[0]), float(np.abs(eig).max())


def verify_convexity(spec: LossSpec, K: int, trials: int = 10000, seed: int = 0,
                     hessian_points: int = 100, h: float = 1e-4) -> ConvexityResult:
    """Sampled Jensen-inequality check plus finite-difference curvature probes."""
    if trials < 1000:
        raise InvalidInputError("convexity verification needs at least 1000 trials")
    rng = np.random.default_rng([seed, K, 17])
    if spec.kind == "WKL":
        return _convexity_wkl(spec, K, trials, rng, hessian_points, h)
    kind = _KERNEL_CODE[spec.kind]
    p = random_simplex(rng, trials, K)
    q = random_simplex(rng, trials, K)
    lam = rng.uniform(size=trials)
    t = rng.integers(0, K, size=trials)
    mix = lam[:, None] * p + (1 - lam[:, None]) * q
    rows = np.vstack([p, q, mix])
    vals, _, _ = _kernels.loss_grad_rows(kind, rows, np.tile(t, 3), spec.alpha, spec.beta, spec.lam)
    lp, lq, lm = vals[:trials], vals[trials:2 * trials], vals[2 * trials:]
    with np.errstate(invalid="ignore"):
        violation = lm - (lam * lp + (1 - lam) * lq)
    violation = np.nan_to_num(violation, nan=0.0, posinf=np.inf, neginf=0.0)
    witness = None
    bad = np.flatnonzero(violation > CONVEX_FAIL)
    if bad.size:
        i = int(bad[0])
        witness = {"kind": "jensen", "p": p[i].tolist(), "q": q[i].tolist(), "lambda": float(lam[i]),
                   "y": int(t[i]) + 1, "violation": float(violation[i])}
    # curvature probes at interior points kept away from the boundary
    min_curv = np.inf
    probes = random_simplex(rng, hessian_points, K) * 0.9 + 0.1 / K
    probe_t = rng.integers(0, K, size=hessian_points)
    for pt, yt in zip(probes, probe_t):
        lo, scale = _hessian_min_eig(kind, pt, int(yt), spec, h)
        min_curv = min(min_curv, lo)
        if witness is None and lo < -HESSIAN_TOL * max(1.0, scale):
            witness = {"kind": "hessian", "point": pt.tolist(), "y": int(yt) + 1, "min_eigenvalue": lo}
    return ConvexityResult(witness is None, trials, float(violation.max()),
                           int((violation > CONVEX_SLACK).sum()), float(min_curv), witness)


def _convexity_wkl(spec, K, trials, rng, hessian_points, h):
    batch_y = np.tile(np.arange(1, K + 1), 2)
    n = batch_y.size
    W = spec.weights(K)
    worst, marginal, witness = -np.inf, 0, None
    for _ in range(trials):
        P = random_simplex(rng, n, K)
        Q = random_simplex(rng, n, K)
        lam = rng.uniform()
        lp = wkl(P, batch_y, W).value
        lq = wkl(Q, batch_y, W).value
        lm = wkl(lam * P + (1 - lam) * Q, batch_y, W).value
        viol = lm - (lam * lp + (1 - lam) * lq)
        worst = max(worst, viol)
        marginal += viol > CONVEX_SLACK
        if witness is None and viol > CONVEX_FAIL:
            witness = {"kind": "jensen", "P": P.tolist(), "Q": Q.tolist(), "lambda": float(lam),
                       "y": batch_y.tolist(), "violation": float(viol)}
    min_curv = np.inf
    for _ in range(hessian_points):
        P = random_simplex(rng, n, K) * 0.9 + 0.1 / K
        D = rng.normal(size=(n, K))
        D -= D.mean(axis=1, keepdims=True)
        D /= np.linalg.norm(D)
        f0 = wkl(P, batch_y, W).value
        curv = (wkl(P + h * D, batch_y, W).value - 2 * f0 + wkl(P - h * D, batch_y, W).value) / h ** 2
        min_curv = min(min_curv, curv)
        if witness is None and curv < -HESSIAN_TOL:
            witness = {"kind": "curvature", "P": P.tolist(), "direction": D.tolist(), "curvature": curv}
    return ConvexityResult(witness is None, trials, float(worst), int(marginal), float(min_curv), witness)


# ---------------------------------------------------------------------------
# ordinality
# ---------------------------------------------------------------------------


def _profile_value(spec, k, y, K, eps):
    if spec.kind != "WKL":
        return evaluate(spec, perturbed_one_hot(k, eps, K), y).value
    # the probed sample sits inside a balanced batch predicted near-correctly
    others = np.arange(1, K + 1)
    P = np.vstack([perturbed_one_hot(k, eps, K)] + [perturbed_one_hot(int(c), eps, K) for c in others])
    return evaluate(spec, P, np.concatenate([[y], others])).value


def classify_profile(values) -> str:
    values = np.asarray(values, dtype=float)
    tail = values[1:]
    if tail.size == 0 or tail.max() - tail.min() < FLAT_SPREAD:
        return "FLAT"
    if np.all(np.diff(values) > 0):
        return "INCREASING"
    return "MIXED"


def ordinality_profile(spec: LossSpec, y: int, K: int, eps: float = DEFAULT_EPS) -> OrdinalityProfile:
    """Loss at ``perturbed_one_hot(k, eps)`` grouped by distance ``|k - y|`` (max per distance)."""
    if not 0.0 < eps < 1.0:
        raise InvalidInputError("eps must lie in (0, 1)")
    by_d = {}
    for k in range(1, K + 1):
        d = abs(k - y)
        v = _profile_value(spec, k, y, K, eps)
        by_d[d] = max(by_d.get(d, -np.inf), v)
    ds = sorted(by_d)
    vals = [float(by_d[d]) for d in ds]
    return OrdinalityProfile(y, eps, [(int(d), v) for d, v in zip(ds, vals)], classify_profile(vals))


# ---------------------------------------------------------------------------
# the property matrix
# ---------------------------------------------------------------------------


def property_report(spec: LossSpec, K: int = 5, trials: int = 10000, seed: int = 0,
                    restarts: int = 20, eps: float = DEFAULT_EPS) -> PropertyReport:
    per_label = [verify_psr(spec, y, K, restarts=restarts, seed=seed) for y in range(1, K + 1)]
    worst = max(per_label, key=lambda r: (r.verdict != HOLDS, r.gap))
    convex = verify_convexity(spec, K, trials=trials, seed=seed)
    profile = ordinality_profile(spec, 1, K, eps)
    um = "guaranteed" if spec.kind == "BINOMIAL_NLL" else "not guaranteed"
    return PropertyReport(spec, K, worst, per_label, convex, profile, um)


def property_matrix(specs, K: int = 5, trials: int = 10000, seed: int = 0, restarts: int = 20,
                  eps: float = DEFAULT_EPS) -> list:
    specs = list(specs)
    if not specs:
        raise InvalidInputError("need at least one loss")
    return [property_report(s, K, trials, seed, restarts, eps) for s in specs]


def render_matrix(reports) -> str:
    """Tab-separated PSR/UM/CX/Ord grid, one row per loss."""
    cols = ("loss", "PSR", "UM", "CX", "Ord")
    lines = ["\t".join(cols)]
    for rep in reports:
        row = rep.row()
        lines.append("\t".join(str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def soft_minimizer_distance(report: PsrResult, beta: float) -> float:
    """Max-norm distance between a located minimiser and the soft-label target."""
    return float(np.abs(report.minimizer - soft_labels(report.y, beta, report.K)).max())
