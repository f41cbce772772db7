"""Soft-margin SVM: SMO training, serialization, parallel prediction.

Class convention throughout: pepper (label 0) is the negative class, peduncle
(label 1) the positive class.  A decision score > 0 predicts peduncle.
Features are z-score standardized inside the trainer and the statistics
travel with the model, so callers always pass raw feature rows.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .features import FeatureMatrix

KERNEL_KINDS = ("linear", "rbf")
FEATURE_SETS = ("full", "hsv", "pfh")
MODEL_SCHEMA_VERSION = 1

# dual coefficients at most this far from zero are pruned from the model
SV_EPS = 1e-12


class TrainingError(RuntimeError):
    """Training input or optimisation state is unusable."""


class ModelFormatError(ValueError):
    """A model file does not match the expected schema."""


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    gamma: float | None = 0.01

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf":
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("rbf kernel needs gamma > 0")
        elif self.gamma is not None:
            raise ValueError("linear kernel takes no gamma")


@dataclass(frozen=True)
class TrainConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    c: float = 100.0
    tolerance: float = 1e-3
    max_passes: int = 10
    seed: int = 0
    feature_set: str = "full"

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be > 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"unknown feature_set {self.feature_set!r}")


@dataclass
class ScalingStats:
    mean: np.ndarray
    std: np.ndarray   # raw per-column stddev; 0 marks a constant column

    def apply(self, rows):
        rows = np.asarray(rows, dtype=np.float64)
        safe = np.where(self.std == 0.0, 1.0, self.std)
        scaled = (rows - self.mean) / safe
        scaled[:, self.std == 0.0] = 0.0
        return scaled


@dataclass
class SvmModel:
    kernel: KernelSpec
    c: float
    scaling: ScalingStats
    support_vectors: np.ndarray   # (m, d), scaled space
    dual_coefs: np.ndarray        # (m,), alpha_i * y_i
    bias: float
    meta: dict = field(default_factory=dict)

    @property
    def support_count(self):
        return len(self.dual_coefs)


def _gram(x, kernel):
    if kernel.kind == "linear":
        return x @ x.T
    sq = np.einsum("ij,ij->i", x, x)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * (x @ x.T), 0.0)
    return np.exp(-kernel.gamma * d2)


def _working_pair(yg, up, low):
    """Maximal violating pair; first index wins ties on both sides."""
    up_vals = np.where(up, yg, -np.inf)
    low_vals = np.where(low, yg, np.inf)
    i = int(np.argmax(up_vals))
    j = int(np.argmin(low_vals))
    return i, j, up_vals[i], low_vals[j]


def train_svm(features: FeatureMatrix, config: TrainConfig) -> SvmModel:
    """Train a binary SVM with sequential minimal optimisation.

    Solves min 1/2 a'Qa - e'a s.t. 0 <= a <= C, y'a = 0 using
    maximal-violating-pair working sets; stops when the duality-gap proxy
    m(a) - M(a) drops to config.tolerance or after max_passes * n
    iterations.  The full kernel matrix is held in memory (n^2 floats), so
    cap the row count upstream for large pools.
    """
    x = np.asarray(features.values, dtype=np.float64)
    labels = np.asarray(features.labels)
    if x.ndim != 2 or len(x) == 0:
        raise TrainingError("need a non-empty 2-d feature matrix")
    if not np.all(np.isfinite(x)):
        raise TrainingError("feature matrix contains non-finite values")
    if np.any(labels < 0):
        raise TrainingError("all training rows must be labelled")
    if not np.all(features.valid):
        raise TrainingError("all training rows must have valid descriptors")
    n = len(x)
    y = np.where(labels == 1, 1.0, -1.0)
    npos = int((y > 0).sum())
    if npos == 0 or npos == n:
        raise TrainingError(
            "training data holds a single class; need both pepper and peduncle rows")

    scaling = ScalingStats(x.mean(axis=0), x.std(axis=0))
    xs = scaling.apply(x)

    c = float(config.c)
    tol = float(config.tolerance)
    k = _gram(xs, config.kernel)
    q = (y[:, None] * k) * y[None, :]

    alpha = np.zeros(n)
    grad = -np.ones(n)          # gradient of the dual objective at alpha
    max_iter = config.max_passes * n
    converged = False
    it = 0
    tau = 1e-12
    while it < max_iter:
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            converged = True
            break
        yg = -y * grad
        i, j, m_up, m_low = _working_pair(yg, up, low)
        if m_up - m_low <= tol:
            converged = True
            break

        quad = q[i, i] + q[j, j] - 2.0 * y[i] * y[j] * q[i, j]
        if quad <= 0.0:
            quad = tau
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj = 0.0
                    ai = diff
            else:
                if ai < 0:
                    ai = 0.0
                    aj = -diff
            if diff > 0:
                if ai > c:
                    ai = c
                    aj = c - diff
            else:
                if aj > c:
                    aj = c
                    ai = c + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > c:
                if ai > c:
                    ai = c
                    aj = total - c
            else:
                if aj < 0:
                    aj = 0.0
                    ai = total
            if total > c:
                if aj > c:
                    aj = c
                    ai = total - c
            else:
                if ai < 0:
                    ai = 0.0
                    aj = total
        alpha[i], alpha[j] = ai, aj
        grad += q[:, i] * (ai - ai_old) + q[:, j] * (aj - aj_old)
        it += 1

    # bias from the KKT conditions: average y_i - sum_j a_j y_j K_ij over
    # free support vectors, else the midpoint of the feasible interval
    ky = y * (grad + 1.0)       # sum_j alpha_j y_j K_ij
    free = (alpha > SV_EPS) & (alpha < c - SV_EPS)
    if free.any():
        bias = float(np.mean(y[free] - ky[free]))
    else:
        yg = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        hi = yg[up].max() if up.any() else yg[low].min()
        lo = yg[low].min() if low.any() else yg[up].max()
        bias = float((hi + lo) / 2.0)

    objective = float(0.5 * (alpha.sum() - alpha @ grad))
    sv = np.flatnonzero(alpha > SV_EPS)
    model = SvmModel(
        kernel=config.kernel,
        c=c,
        scaling=scaling,
        support_vectors=np.ascontiguousarray(xs[sv]),
        dual_coefs=np.ascontiguousarray(alpha[sv] * y[sv]),
        bias=bias,
        meta={
            "feature_set": config.feature_set,
            "tolerance": tol,
            "max_passes": config.max_passes,
            "seed": config.seed,
            "iterations": it,
            "converged": bool(converged),
            "dual_objective": objective,
            "support_count": int(sv.size),
            "sv_indices": [int(s) for s in sv],
            "train_rows": n,
            "positive_rows": npos,
        },
    )
    return model


def decision_scores(model: SvmModel, features) -> np.ndarray:
    """Raw signed scores for feature rows (FeatureMatrix or (N, d) array)."""
    rows = features.values if isinstance(features, FeatureMatrix) else features
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != model.support_vectors.shape[1]:
        raise ValueError(
            f"feature rows have dimension {rows.shape[-1] if rows.ndim else '?'}, "
            f"model expects {model.support_vectors.shape[1]}")
    xs = model.scaling.apply(rows)
    kind = _kernels.KERNEL_LINEAR if model.kernel.kind == "linear" \
        else _kernels.KERNEL_RBF
    gamma = model.kernel.gamma if model.kernel.gamma is not None else 0.0
    return _kernels.decision_values(xs, model.support_vectors,
                                    model.dual_coefs, model.bias, kind, gamma)


def predict_parallel(model: SvmModel, features, workers: int = 1):
    """Score rows across a thread pool; output is identical for any worker count.

    Rows are split into contiguous chunks with np.array_split and scored with
    a fixed per-row accumulation order, so the reassembled scores are
    bit-identical whether workers is 1 or 8.  Returns (labels, scores,
    elapsed_seconds); labels are 0 (pepper) / 1 (peduncle), score > 0 means
    peduncle.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    rows = features.values if isinstance(features, FeatureMatrix) else features
    rows = np.asarray(rows, dtype=np.float64)
    start = time.perf_counter()
    if workers == 1 or len(rows) < 2:
        scores = decision_scores(model, rows)
    else:
        chunks = np.array_split(rows, min(workers, len(rows)))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ch: decision_scores(model, ch), chunks))
        scores = np.concatenate(parts)
    elapsed = time.perf_counter() - start
    pred = np.where(scores > 0.0, 1, 0).astype(np.int8)
    return pred, scores, elapsed


def save_model(model: SvmModel, path):
    """Write the model as JSON; floats round-trip exactly via repr."""
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kernel": model.kernel.kind,
        "gamma": model.kernel.gamma,
        "c": model.c,
        "scaling": {
            "mean": model.scaling.mean.tolist(),
            "std": model.scaling.std.tolist(),
        },
        "support_vectors": model.support_vectors.tolist(),
        "dual_coefs": model.dual_coefs.tolist(),
        "bias": model.bias,
        "meta": model.meta,
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def _require(doc, key, types):
    if key not in doc:
        raise ModelFormatError(f"model file is missing field {key!r}")
    value = doc[key]
    if not isinstance(value, types):
        raise ModelFormatError(f"model field {key!r} has the wrong type")
    return value


def load_model(path) -> SvmModel:
    """Read a model written by save_model, validating the schema."""
    try:
        with open(path, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = _require(doc, "schema_version", int)
    if version != MODEL_SCHEMA_VERSION:
        raise ModelFormatError(f"unsupported model schema version {version}")
    kind = _require(doc, "kernel", str)
    gamma = doc.get("gamma")
    if gamma is not None and not isinstance(gamma, (int, float)):
        raise ModelFormatError("model field 'gamma' has the wrong type")
    try:
        kernel = KernelSpec(kind, None if gamma is None else float(gamma))
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc
    c = float(_require(doc, "c", (int, float)))
    scaling_doc = _require(doc, "scaling", dict)
    mean = np.asarray(_require(scaling_doc, "mean", list), dtype=np.float64)
    std = np.asarray(_require(scaling_doc, "std", list), dtype=np.float64)
    sv = np.asarray(_require(doc, "support_vectors", list), dtype=np.float64)
    coef = np.asarray(_require(doc, "dual_coefs", list), dtype=np.float64)
    bias = float(_require(doc, "bias", (int, float)))
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise ModelFormatError("model field 'meta' has the wrong type")
    if sv.ndim != 2 and sv.size > 0:
        raise ModelFormatError("support_vectors must be a list of rows")
    if sv.size == 0:
        sv = sv.reshape(0, mean.size)
    if len(sv) != len(coef):
        raise ModelFormatError("support_vectors and dual_coefs disagree on count")
    if mean.shape != std.shape or (sv.size and sv.shape[1] != mean.size):
        raise ModelFormatError("scaling statistics do not match the vectors")
    return SvmModel(kernel, c, ScalingStats(mean, std), sv, coef, bias, meta)
