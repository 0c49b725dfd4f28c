"""Siamese deep distance metric.

Two parameter-shared MLP branches map composed inputs into a feature
subspace where squared Euclidean distance separates incompatible phrase
pairs from same-phrase pairs. With a single linear layer and zero bias
the squared distance reduces to the Mahalanobis form
(x_i - x_j)^T W^T W (x_i - x_j).

Training minimizes softplus(1 - l * (t - d^2)) / 2 summed over pairs plus
an L2 penalty on the MLP weights and biases, by per-pair stochastic
gradient descent with exact backpropagation through both branches (and,
optionally, through the attention scores and the word embeddings).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .composition import AttentionParams, attention_weights, compose_vectors
from .errors import DimensionMismatchError, DivergenceError, FormatError

MODEL_FORMAT_VERSION = 1


def softplus(omega, beta):
    """log(1 + exp(beta * omega)) / beta, overflow-safe."""
    return np.logaddexp(0.0, beta * omega) / beta


def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def _identity(z):
    return z


ACTIVATIONS = {"tanh": np.tanh, "identity": _identity}


def _activation_grad(name, activated):
    """f'(z) expressed through f(z); valid for tanh and identity."""
    if name == "tanh":
        return 1.0 - activated ** 2
    return np.ones_like(activated)


def interior_dims(input_dim, output_dim, n_layers):
    """Hidden widths by geometric interpolation between input and output."""
    dims = []
    for i in range(1, n_layers):
        w = round(input_dim ** ((n_layers - i) / n_layers) * output_dim ** (i / n_layers))
        dims.append(max(1, int(w)))
    return dims


@dataclass
class TrainConfig:
    """Hyperparameters for pair training.

    ``margin_t`` is the distance threshold t (> 1, so that t - 1 > 0);
    same-phrase pairs are pushed below t - 1 and incompatible pairs above
    t + 1. ``beta`` sharpens the softplus, ``reg_lambda`` scales the L2
    penalty, ``learning_rate`` is the SGD step.
    """
    margin_t: float = 3.0
    beta: float = 2.0
    reg_lambda: float = 0.002
    learning_rate: float = 0.03
    epochs: int = 30
    seed: int = 42
    finetune_attention: bool = True
    finetune_embeddings: bool = False
    dropout_rate: float = 0.5

    def __post_init__(self):
        if not self.margin_t > 1:
            raise ValueError("margin_t must exceed 1")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")


class MetricNetwork:
    """MLP branch shared by both sides of the Siamese pair."""

    def __init__(self, weights, biases, activation="tanh", attention=None,
                 dropout_rate=0.5, composition_mode="attention"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for m, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DimensionMismatchError(f"layer {m}: weight/bias shapes disagree")
            if m and w.shape[1] != self.weights[m - 1].shape[0]:
                raise DimensionMismatchError(
                    f"layer {m}: input width {w.shape[1]} does not chain with "
                    f"previous output {self.weights[m - 1].shape[0]}")
        self.activation = activation
        self.dropout_rate = float(dropout_rate)
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        self.composition_mode = composition_mode
        self.attention = attention if attention is not None else AttentionParams.zeros(
            self.input_dim if composition_mode == "ap" else self.input_dim // 2)

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    @property
    def n_layers(self):
        return len(self.weights)

    @classmethod
    def create(cls, word_dim, mode="attention", output_dim=50, n_layers=3,
               hidden_dims=None, activation="tanh", dropout_rate=0.5, seed=0):
        """Fresh network with Glorot-uniform weights and zero biases.

        The attention parameter starts at zero so the first weighting is
        uniform. Hidden widths default to geometric interpolation.
        """
        input_dim = word_dim if mode == "ap" else 2 * word_dim
        if hidden_dims is None:
            hidden_dims = interior_dims(input_dim, output_dim, n_layers)
        if len(hidden_dims) != n_layers - 1:
            raise ValueError(f"{n_layers} layers need {n_layers - 1} hidden widths")
        dims = [input_dim] + list(hidden_dims) + [output_dim]
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, activation=activation,
                   attention=AttentionParams.zeros(word_dim),
                   dropout_rate=dropout_rate, composition_mode=mode)

    def copy(self):
        return MetricNetwork(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            activation=self.activation,
            attention=self.attention.copy(),
            dropout_rate=self.dropout_rate,
            composition_mode=self.composition_mode,
        )

    def forward(self, x, rng=None):
        """Map x through the layers; returns (output, cache).

        Passing ``rng`` enables inverted dropout on the hidden layers, so
        evaluation needs no rescaling; with it None (or rate 0) the pass
        is deterministic. The cache carries everything backprop needs.
        """
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise DimensionMismatchError(
                f"input has shape {x.shape}, expected ({self.input_dim},)")
        a = x
        inputs, acts, masks = [], [], []
        last = self.n_layers - 1
        for m, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            h = ACTIVATIONS[self.activation](w @ a + b)
            acts.append(h)
            if m < last and rng is not None and self.dropout_rate > 0:
                keep = 1.0 - self.dropout_rate
                mask = (rng.random(h.shape) < keep) / keep
                a = h * mask
            else:
                mask = None
                a = h
            masks.append(mask)
        return a, {"inputs": inputs, "acts": acts, "masks": masks}

    def backward(self, cache, grad_out):
        """Gradients of a scalar through the cached pass.

        Returns per-layer weight and bias gradients plus the gradient with
        respect to the input vector.
        """
        u = grad_out
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        for m in range(self.n_layers - 1, -1, -1):
            mask = cache["masks"][m]
            if mask is not None:
                u = u * mask
            delta = u * _activation_grad(self.activation, cache["acts"][m])
            grads_w[m] = np.outer(delta, cache["inputs"][m])
            grads_b[m] = delta
            u = self.weights[m].T @ delta
        return grads_w, grads_b, u

    def distance_sq(self, x_i, x_j):
        """Squared Euclidean distance between the mapped inputs (eval mode)."""
        h_i, _ = self.forward(x_i)
        h_j, _ = self.forward(x_j)
        diff = h_i - h_j
        return float(diff @ diff)

    def params_finite(self):
        for w, b in zip(self.weights, self.biases):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                return False
        return bool(np.all(np.isfinite(self.attention.w_a)))


def pair_loss(net, x_i, x_j, label, cfg):
    """Per-pair objective term softplus(omega)/2; returns (loss, omega).

    omega = 1 - label * (t - d^2) measures how far the pair sits from
    satisfying its margin constraint. Evaluation-mode forwards.
    """
    if label not in (1, -1):
        raise ValueError("label must be +1 or -1")
    d2 = net.distance_sq(x_i, x_j)
    omega = 1.0 - label * (cfg.margin_t - d2)
    return 0.5 * float(softplus(omega, cfg.beta)), omega


def regularizer(net, cfg):
    """lambda/2 times the summed squared Frobenius/L2 norms of the layers.

    The attention parameter is deliberately excluded; the penalty covers
    the MLP weights and biases only.
    """
    acc = 0.0
    for w, b in zip(net.weights, net.biases):
        acc += float((w * w).sum() + (b * b).sum())
    return 0.5 * cfg.reg_lambda * acc


def objective(net, composed_pairs, cfg):
    """Sum of pair losses plus the regularizer."""
    total = 0.0
    for x_i, x_j, label in composed_pairs:
        loss, _ = pair_loss(net, x_i, x_j, label, cfg)
        total += loss
    return total + regularizer(net, cfg)


def pair_gradients(net, x_i, x_j, label, cfg, rng=None):
    """Exact gradients of the per-pair loss term.

    Gradients flow through both branches and sum on the shared weights.
    With ``rng`` given, each branch draws its own dropout masks (branch i
    first) and the returned loss is the dropped-out one actually
    differentiated. Returns a dict with per-layer weight/bias gradients,
    input gradients for both branches, and the loss and omega values.
    """
    if label not in (1, -1):
        raise ValueError("label must be +1 or -1")
    h_i, cache_i = net.forward(x_i, rng=rng)
    h_j, cache_j = net.forward(x_j, rng=rng)
    diff = h_i - h_j
    d2 = float(diff @ diff)
    omega = 1.0 - label * (cfg.margin_t - d2)
    loss = 0.5 * float(softplus(omega, cfg.beta))
    # d loss / d d2 = sigmoid(beta * omega) * label / 2
    coef = 0.5 * _sigmoid(cfg.beta * omega) * label
    gw_i, gb_i, gx_i = net.backward(cache_i, coef * 2.0 * diff)
    gw_j, gb_j, gx_j = net.backward(cache_j, coef * -2.0 * diff)
    grads_w = [a + b for a, b in zip(gw_i, gw_j)]
    grads_b = [a + b for a, b in zip(gb_i, gb_j)]
    return {
        "weights": grads_w,
        "biases": grads_b,
        "x_i": gx_i,
        "x_j": gx_j,
        "loss": loss,
        "omega": omega,
    }


def compose_backward(mode, context, p, weights, w_a, grad_x):
    """Push a gradient on the composed vector back to its ingredients.

    Returns (grad_context, grad_p, grad_w_a); entries are zero arrays
    where the mode gives a component no influence. ``weights`` are the
    attention weights used in the forward composition (None for other
    modes).
    """
    p = np.asarray(p, dtype=float)
    d = p.shape[0]
    if mode == "ap":
        return None, grad_x.copy(), np.zeros(2 * d)
    context = np.asarray(context, dtype=float)
    n = context.shape[0]
    gc = grad_x[:d]
    grad_p = grad_x[d:].copy()
    grad_wa = np.zeros(2 * d)
    if mode == "avg":
        grad_ctx = np.tile(gc / n, (n, 1))
    elif mode in ("min", "max"):
        pick = context.argmin(axis=0) if mode == "min" else context.argmax(axis=0)
        grad_ctx = np.zeros_like(context)
        grad_ctx[pick, np.arange(d)] = gc
    else:  # attention
        g = context @ gc                      # per-word influence on c~
        q = float(weights @ g)
        ds = weights * (g - q)                # softmax Jacobian applied
        grad_wa[:d] = context.T @ ds
        grad_wa[d:] = p * ds.sum()            # exactly zero up to rounding
        grad_ctx = np.outer(weights, gc) + np.outer(ds, w_a[:d])
        grad_p += w_a[d:] * ds.sum()
    return grad_ctx, grad_p, grad_wa


class _SampleParts:
    """Context matrix, kept tokens and phrase vector for one sample."""

    __slots__ = ("context", "kept", "p", "phrase_tokens")

    def __init__(self, context, kept, p, phrase_tokens):
        self.context = context
        self.kept = kept
        self.p = p
        self.phrase_tokens = phrase_tokens


def _build_parts(sample, lookup, dim, policy_zero, mode):
    rows, kept = [], []
    if mode != "ap":
        for tok in sample.context_tokens:
            vec = lookup(tok)
            if vec is None:
                if policy_zero:
                    rows.append(np.zeros(dim))
                    kept.append(tok)
            else:
                rows.append(vec)
                kept.append(tok)
    context = np.array(rows) if rows else np.zeros((0, dim))
    ptoks = sample.phrase.split()
    pvecs = [lookup(t) for t in ptoks]
    if policy_zero:
        pvecs = [np.zeros(dim) if v is None else v for v in pvecs]
    else:
        pvecs = [v for v in pvecs if v is not None]
    p = np.mean(pvecs, axis=0) if pvecs else np.zeros(dim)
    return _SampleParts(context, kept, p, ptoks)


def train(net, pairs, table, cfg, mode="attention"):
    """Stochastic per-pair training; mutates and returns ``net``.

    Every epoch visits a seeded shuffle of the pairs, taking one gradient
    step per pair with L2 weight decay on the MLP parameters. When the
    attention parameter or the embeddings are being tuned, samples are
    recomposed with the live values at every step. The history records
    the evaluation-mode mean objective after each epoch; identical seeds
    and data reproduce it bitwise.

    Raises DivergenceError, naming epoch and pair index, if any parameter
    stops being finite.
    """
    if not pairs:
        raise ValueError("no training pairs")
    if mode not in ("attention", "avg", "min", "max", "ap"):
        raise ValueError(f"unknown composition mode {mode!r}")
    rng = np.random.default_rng(cfg.seed)
    policy_zero = table.unknown_policy == "zero-vector"
    dim = table.dimension

    live_vectors = None
    if cfg.finetune_embeddings:
        live_vectors = {t: v.copy() for t, v in table.vectors.items()}

        def lookup(tok):
            return live_vectors.get(tok.lower())
    else:
        def lookup(tok):
            return table.get(tok)

    samples = []
    index = {}
    for pair in pairs:
        for s in (pair.left, pair.right):
            if s not in index:
                index[s] = len(samples)
                samples.append(s)
    pair_idx = [(index[p.left], index[p.right], p.label) for p in pairs]

    tune_attention = cfg.finetune_attention and mode == "attention"
    recompose = tune_attention or cfg.finetune_embeddings

    parts = [_build_parts(s, lookup, dim, policy_zero, mode) for s in samples]

    def compose_now(k):
        return compose_vectors(parts[k].context, parts[k].p, net.attention, mode)

    static_x = None
    if not recompose:
        static_x = [compose_now(k) for k in range(len(samples))]

    def epoch_objective():
        if recompose:
            composed = [compose_now(k).x for k in range(len(samples))]
        else:
            composed = [c.x for c in static_x]
        total = objective(net, ((composed[a], composed[b], l) for a, b, l in pair_idx), cfg)
        return total / len(pairs)

    lr = cfg.learning_rate
    lam = cfg.reg_lambda
    history = []
    for epoch in range(cfg.epochs):
        for k in rng.permutation(len(pair_idx)):
            a, b, label = pair_idx[k]
            if recompose:
                left, right = compose_now(a), compose_now(b)
            else:
                left, right = static_x[a], static_x[b]
            step_rng = rng if net.dropout_rate > 0 else None
            grads = pair_gradients(net, left.x, right.x, label, cfg, rng=step_rng)
            for m in range(net.n_layers):
                net.weights[m] -= lr * (grads["weights"][m] + lam * net.weights[m])
                net.biases[m] -= lr * (grads["biases"][m] + lam * net.biases[m])
            if tune_attention or cfg.finetune_embeddings:
                for parts_k, weights_k, gx in (
                        (parts[a], left.attention_weights, grads["x_i"]),
                        (parts[b], right.attention_weights, grads["x_j"])):
                    g_ctx, g_p, g_wa = compose_backward(
                        mode, parts_k.context, parts_k.p, weights_k,
                        net.attention.w_a, gx)
                    if tune_attention:
                        net.attention.w_a -= lr * g_wa
                    if cfg.finetune_embeddings:
                        _apply_embedding_grads(
                            live_vectors, parts_k, g_ctx, g_p, lr)
            if not net.params_finite():
                raise DivergenceError(
                    f"non-finite parameter at epoch {epoch + 1}, pair index {int(k)}")
        history.append(epoch_objective())
    if cfg.finetune_embeddings:
        net.tuned_vectors = live_vectors
    return net, history


def _apply_embedding_grads(live_vectors, parts_k, g_ctx, g_p, lr):
    """Scatter composition gradients onto the live embedding rows.

    Unknown tokens (zero-filled rows) have no stored vector to update and
    are skipped.
    """
    if g_ctx is not None:
        for row, tok in enumerate(parts_k.kept):
            vec = live_vectors.get(tok)
            if vec is not None:
                vec -= lr * g_ctx[row]
    share = lr / len(parts_k.phrase_tokens)
    for tok in parts_k.phrase_tokens:
        vec = live_vectors.get(tok)
        if vec is not None:
            vec -= share * g_p


def save_model(net, path, config_hash=None, extra=None):
    """Write a JSON checkpoint; floats round-trip exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "activation": net.activation,
        "dropout_rate": net.dropout_rate,
        "composition_mode": net.composition_mode,
        "attention_w": net.attention.w_a.tolist(),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    if config_hash is not None:
        doc["config_hash"] = config_hash
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a checkpoint; returns (network, metadata dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc.msg})") from exc
    try:
        if doc["format_version"] != MODEL_FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {doc['format_version']}")
        net = MetricNetwork(
            [layer["w"] for layer in doc["layers"]],
            [layer["b"] for layer in doc["layers"]],
            activation=doc["activation"],
            attention=AttentionParams(np.array(doc["attention_w"], dtype=float)),
            dropout_rate=doc["dropout_rate"],
            composition_mode=doc["composition_mode"],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed checkpoint ({exc})") from exc
    meta = {k: v for k, v in doc.items() if k not in ("layers", "attention_w")}
    return net, meta
