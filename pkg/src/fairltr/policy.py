"""Plackett-Luce ranking policies over document scores.

A score vector ``s`` induces a distribution over rankings that is sampled
position by position: the document at the next position is drawn from a
softmax over the scores of the documents not yet placed.  The probability of
a full ranking ``r`` is the product of those stage probabilities,

    pi(r | s) = prod_i exp(s[r_i]) / sum_{k >= i} exp(s[r_k]).

Everything here works in score space.  The scoring models at the bottom of
the module map features to scores and backpropagate score-space gradients to
their parameters, which is all a policy-gradient trainer needs.

Scores are clamped to ``[-SCORE_CLAMP, SCORE_CLAMP]`` before any softmax so
that exp() stays comfortably inside float64 range; at trained scales the
clamp is inactive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ranking import Ranking, as_ranking, positions_of

SCORE_CLAMP = 50.0


def clip_scores(scores: np.ndarray) -> np.ndarray:
    """Safety clamp applied before every softmax stage."""
    return np.clip(np.asarray(scores, dtype=float), -SCORE_CLAMP, SCORE_CLAMP)


def softmax(scores: np.ndarray) -> np.ndarray:
    s = clip_scores(scores)
    z = np.exp(s - s.max())
    return z / z.sum()


def _suffix_logsumexp(permuted: np.ndarray) -> np.ndarray:
    """``out[i] = log sum_{j >= i} exp(permuted[j])`` along the last axis."""
    rev = permuted[..., ::-1]
    acc = np.logaddexp.accumulate(rev, axis=-1)
    return acc[..., ::-1]


def ranking_logprob(scores: np.ndarray, order: Ranking) -> float:
    """Log-probability of drawing ``order`` from the policy at ``scores``."""
    s = clip_scores(scores)
    order = as_ranking(order, s.shape[0])
    permuted = s[order]
    denom = _suffix_logsumexp(permuted)
    return float(np.sum(permuted - denom))


def ranking_logprobs(scores: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """Log-probability of each ranking in a batch of shape ``(size, n)``."""
    s = clip_scores(scores)
    orders = np.asarray(orders, dtype=np.intp)
    permuted = s[orders]
    denom = _suffix_logsumexp(permuted)
    return np.sum(permuted - denom, axis=-1)


def sample_rankings(scores: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` rankings by sequential softmax sampling.

    Returns an integer array of shape ``(size, n)``.  At each stage one
    uniform variate per sample selects a document from the softmax over the
    not-yet-placed documents; placed documents get weight zero so indices
    stay absolute.
    """
    s = clip_scores(scores)
    n = s.shape[0]
    if size < 1:
        raise ValueError("size must be >= 1")
    weights = np.broadcast_to(np.exp(s - s.max()), (size, n)).copy()
    orders = np.empty((size, n), dtype=np.intp)
    rows = np.arange(size)
    for stage in range(n):
        cum = np.cumsum(weights, axis=1)
        u = rng.random(size) * cum[:, -1]
        chosen = np.minimum((cum < u[:, None]).sum(axis=1), n - 1)
        orders[:, stage] = chosen
        weights[rows, chosen] = 0.0
    return orders


def sample_ranking(scores: np.ndarray, rng: np.random.Generator) -> Ranking:
    """Draw a single ranking from the policy at ``scores``."""
    return sample_rankings(scores, 1, rng)[0]


def argmax_ranking(scores: np.ndarray) -> Ranking:
    """Deterministic ranking: descending score, ties broken by lower index.

    This is a mode of the Plackett-Luce distribution at ``scores``.
    """
    s = np.asarray(scores, dtype=float)
    return np.argsort(-s, kind="stable").astype(np.intp)


def logprob_grads_scores(scores: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """Gradient of ``ranking_logprob`` wrt scores for a batch of rankings.

    ``orders`` has shape ``(size, n)``; the result matches it.  For the
    document placed at position k the gradient is

        1 - exp(s_d) * sum_{i <= k} exp(-L_i),

    where ``L_i`` is the log of the stage-i softmax denominator.  Each row
    sums to zero exactly in expectation and to float precision in practice.
    """
    s = clip_scores(scores)
    orders = np.asarray(orders, dtype=np.intp)
    squeeze = orders.ndim == 1
    if squeeze:
        orders = orders[None, :]
    permuted = s[orders]
    denom = _suffix_logsumexp(permuted)
    inv_cum = np.cumsum(np.exp(-denom), axis=1)
    by_position = 1.0 - np.exp(permuted) * inv_cum
    grads = np.empty_like(by_position)
    np.put_along_axis(grads, orders, by_position, axis=1)
    return grads[0] if squeeze else grads


def logprob_grad_scores(scores: np.ndarray, order: Ranking) -> np.ndarray:
    """Gradient of the log-probability of one ranking wrt the scores."""
    s = np.asarray(scores, dtype=float)
    order = as_ranking(order, s.shape[0])
    return logprob_grads_scores(s, order)


def softmax_entropy(scores: np.ndarray) -> tuple[float, np.ndarray]:
    """Entropy of Softmax(scores) in nats and its gradient wrt the scores.

    The gradient of ``H = -sum_d p_d log p_d`` is ``-p_d (log p_d + H)``,
    which sums to zero.
    """
    p = softmax(scores)
    logp = np.log(p)
    entropy = float(-np.sum(p * logp))
    grad = -p * (logp + entropy)
    return entropy, grad


@dataclass
class PolicySample:
    """Monte-Carlo draw from a policy: rankings plus their score gradients.

    ``rankings`` has shape ``(size, n)`` and ``logprob_grads`` matches it;
    row ``i`` of ``logprob_grads`` is the gradient of the log-probability of
    ranking ``i`` wrt the scores.
    """

    rankings: np.ndarray
    logprob_grads: np.ndarray

    @property
    def size(self) -> int:
        return self.rankings.shape[0]


def draw_policy_sample(scores: np.ndarray, size: int, rng: np.random.Generator) -> PolicySample:
    orders = sample_rankings(scores, size, rng)
    grads = logprob_grads_scores(scores, orders)
    return PolicySample(rankings=orders, logprob_grads=grads)


# ---------------------------------------------------------------------------
# Scoring models
# ---------------------------------------------------------------------------


class LinearModel:
    """Linear scoring function ``s = X w (+ b)``; the bias is optional and
    off by default."""

    kind = "linear"

    def __init__(self, weights: np.ndarray, bias: np.ndarray | None = None):
        self.weights = np.asarray(weights, dtype=float)
        self.bias = None if bias is None else np.asarray(bias, dtype=float).reshape(1)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")

    @classmethod
    def init(cls, feature_dim: int, rng: np.random.Generator,
             use_bias: bool = False, scale: float = 0.001) -> "LinearModel":
        w = rng.uniform(-scale, scale, size=feature_dim)
        b = rng.uniform(-scale, scale, size=1) if use_bias else None
        return cls(w, b)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    def scores(self, features: np.ndarray) -> np.ndarray:
        out = np.asarray(features, dtype=float) @ self.weights
        if self.bias is not None:
            out = out + self.bias[0]
        return out

    def param_arrays(self) -> list[np.ndarray]:
        params = [self.weights]
        if self.bias is not None:
            params.append(self.bias)
        return params

    def backprop(self, features: np.ndarray, score_grads: np.ndarray) -> list[np.ndarray]:
        """Map a gradient wrt the per-document scores to parameter space."""
        X = np.asarray(features, dtype=float)
        g = np.asarray(score_grads, dtype=float)
        grads = [X.T @ g]
        if self.bias is not None:
            grads.append(np.array([g.sum()]))
        return grads

    def copy(self) -> "LinearModel":
        return LinearModel(self.weights.copy(),
                           None if self.bias is None else self.bias.copy())


class MLP1Model:
    """One-hidden-layer scorer: ``s = relu(X W + b_h) w_out + b_out``.

    The ReLU subgradient at zero is taken to be zero.
    """

    kind = "mlp1"

    def __init__(self, hidden_weights: np.ndarray, hidden_bias: np.ndarray,
                 out_weights: np.ndarray, out_bias: np.ndarray):
        self.hidden_weights = np.asarray(hidden_weights, dtype=float)
        self.hidden_bias = np.asarray(hidden_bias, dtype=float)
        self.out_weights = np.asarray(out_weights, dtype=float)
        self.out_bias = np.asarray(out_bias, dtype=float).reshape(1)
        d, h = self.hidden_weights.shape
        if self.hidden_bias.shape != (h,) or self.out_weights.shape != (h,):
            raise ValueError("inconsistent hidden layer shapes")

    @classmethod
    def init(cls, feature_dim: int, rng: np.random.Generator,
             hidden_units: int = 32) -> "MLP1Model":
        bound = 1.0 / np.sqrt(hidden_units)
        W = rng.uniform(-bound, bound, size=(feature_dim, hidden_units))
        b_h = rng.uniform(-bound, bound, size=hidden_units)
        w_out = rng.uniform(-bound, bound, size=hidden_units)
        b_out = rng.uniform(-bound, bound, size=1)
        return cls(W, b_h, w_out, b_out)

    @property
    def feature_dim(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def hidden_units(self) -> int:
        return self.hidden_weights.shape[1]

    def scores(self, features: np.ndarray) -> np.ndarray:
        X = np.asarray(features, dtype=float)
        hidden = np.maximum(X @ self.hidden_weights + self.hidden_bias, 0.0)
        return hidden @ self.out_weights + self.out_bias[0]

    def param_arrays(self) -> list[np.ndarray]:
        return [self.hidden_weights, self.hidden_bias,
                self.out_weights, self.out_bias]

    def backprop(self, features: np.ndarray, score_grads: np.ndarray) -> list[np.ndarray]:
        X = np.asarray(features, dtype=float)
        g = np.asarray(score_grads, dtype=float)
        pre = X @ self.hidden_weights + self.hidden_bias
        act = np.maximum(pre, 0.0)
        d_pre = (g[:, None] * self.out_weights[None, :]) * (pre > 0.0)
        return [X.T @ d_pre, d_pre.sum(axis=0), act.T @ g, np.array([g.sum()])]

    def copy(self) -> "MLP1Model":
        return MLP1Model(self.hidden_weights.copy(), self.hidden_bias.copy(),
                         self.out_weights.copy(), self.out_bias.copy())


ScoringModel = LinearModel | MLP1Model


def init_model(kind: str, feature_dim: int, rng: np.random.Generator,
               hidden_units: int = 32, use_bias: bool = False) -> ScoringModel:
    if kind == "linear":
        return LinearModel.init(feature_dim, rng, use_bias=use_bias)
    if kind == "mlp1":
        return MLP1Model.init(feature_dim, rng, hidden_units=hidden_units)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CHECKPOINT_MAGIC = "fairltr-model 1"


def _fmt(values: np.ndarray) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(values, dtype=float).ravel())


def save_model(model: ScoringModel, path: str) -> None:
    """Write a model as decimal text; round trips are bit exact."""
    lines = [_CHECKPOINT_MAGIC, f"kind {model.kind}",
             f"feature_dim {model.feature_dim}"]
    if isinstance(model, LinearModel):
        lines.append(f"bias {0 if model.bias is None else 1}")
        lines.append("w " + _fmt(model.weights))
        if model.bias is not None:
            lines.append("b " + _fmt(model.bias))
    else:
        lines.append(f"hidden {model.hidden_units}")
        for row in model.hidden_weights:
            lines.append("W " + _fmt(row))
        lines.append("b_hidden " + _fmt(model.hidden_bias))
        lines.append("w_out " + _fmt(model.out_weights))
        lines.append("b_out " + _fmt(model.out_bias))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class CheckpointError(ValueError):
    """Raised when a model file is malformed."""


def load_model(path: str) -> ScoringModel:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != _CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a recognized model file")

    fields: dict[str, str] = {}
    vectors: list[tuple[str, np.ndarray]] = []
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        if key in ("kind",):
            fields[key] = rest.strip()
        elif key in ("feature_dim", "bias", "hidden"):
            fields[key] = rest.strip()
        else:
            vectors.append((key, np.array([float(tok) for tok in rest.split()])))

    kind = fields.get("kind")
    try:
        feature_dim = int(fields["feature_dim"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad or missing feature_dim") from exc

    named = {}
    for key, vec in vectors:
        named.setdefault(key, []).append(vec)

    if kind == "linear":
        if "w" not in named:
            raise CheckpointError(f"{path}: missing weight line")
        w = named["w"][0]
        if w.shape[0] != feature_dim:
            raise CheckpointError(f"{path}: weight length {w.shape[0]} != "
                                  f"feature_dim {feature_dim}")
        has_bias = fields.get("bias") == "1"
        b = named["b"][0] if has_bias else None
        if has_bias and "b" not in named:
            raise CheckpointError(f"{path}: bias declared but missing")
        return LinearModel(w, b)
    if kind == "mlp1":
        try:
            hidden = int(fields["hidden"])
            W = np.vstack(named["W"])
            b_h, w_out, b_out = (named[k][0] for k in ("b_hidden", "w_out", "b_out"))
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"{path}: incomplete mlp1 checkpoint") from exc
        if W.shape != (feature_dim, hidden):
            raise CheckpointError(f"{path}: hidden weight shape {W.shape} != "
                                  f"({feature_dim}, {hidden})")
        return MLP1Model(W, b_h, w_out, b_out)
    raise CheckpointError(f"{path}: unknown model kind {kind!r}")


def models_equal(a: ScoringModel, b: ScoringModel) -> bool:
    if a.kind != b.kind:
        return False
    pa, pb = a.param_arrays(), b.param_arrays()
    return len(pa) == len(pb) and all(
        x.shape == y.shape and np.array_equal(x, y) for x, y in zip(pa, pb))
