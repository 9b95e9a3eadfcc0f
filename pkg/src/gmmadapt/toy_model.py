"""Small differentiable pipeline: tanh feature extractor, linear reduction,
linear softmax classifier, manual backprop, SGD with momentum.

The classifier consumes the full hidden features (dimension fd); the
mixture consumes the output of the reduction layer (dimension fd_r), which
branches off the same hidden features. Gradients are exact and analytic;
the reduction layer only receives gradient from losses that consume the
reduced features.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteGradient, NonFiniteInput

PARAM_NAMES = ("W_g", "b_g", "W_r", "b_r", "W_h", "b_h")
CHECKPOINT_VERSION = 1


@dataclass
class OptimizerConfig:
    learning_rate: float
    momentum: float = 0.9

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class ForwardCache:
    """Per-batch intermediates needed for exact backprop."""

    x: np.ndarray        # (n, d_in)
    hidden: np.ndarray   # (n, fd), tanh activations g(x)
    reduced: np.ndarray  # (n, fd_r), r(g(x))
    logits: np.ndarray   # (n, n_classes)
    probs: np.ndarray    # (n, n_classes), softmax rows


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class ToyModel:
    """f = h(g(x)) plus the reduction branch r(g(x))."""

    def __init__(self, d_in: int, fd: int, fd_r: int, n_classes: int, seed: int = 0):
        self.d_in = d_in
        self.fd = fd
        self.fd_r = fd_r
        self.n_classes = n_classes
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.params = {
            "W_g": _uniform_init(rng, (fd, d_in), d_in),
            "b_g": _uniform_init(rng, (fd,), d_in),
            "W_r": _uniform_init(rng, (fd_r, fd), fd),
            "b_r": _uniform_init(rng, (fd_r,), fd),
            "W_h": _uniform_init(rng, (n_classes, fd), fd),
            "b_h": _uniform_init(rng, (n_classes,), fd),
        }
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self) -> "ToyModel":
        dup = ToyModel.__new__(ToyModel)
        dup.d_in, dup.fd, dup.fd_r = self.d_in, self.fd, self.fd_r
        dup.n_classes, dup.seed = self.n_classes, self.seed
        dup.params = {k: v.copy() for k, v in self.params.items()}
        dup.velocity = {k: v.copy() for k, v in self.velocity.items()}
        return dup

    def forward(self, x: np.ndarray) -> ForwardCache:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.d_in:
            raise DimensionMismatch(f"input shape {x.shape}, expected (n, {self.d_in})")
        if not np.all(np.isfinite(x)):
            raise NonFiniteInput("input contains non-finite values")
        p = self.params
        hidden = np.tanh(x @ p["W_g"].T + p["b_g"])
        reduced = hidden @ p["W_r"].T + p["b_r"]
        logits = hidden @ p["W_h"].T + p["b_h"]
        return ForwardCache(x=x, hidden=hidden, reduced=reduced, logits=logits,
                            probs=softmax(logits))

    def backward(
        self,
        cache: ForwardCache,
        d_reduced: np.ndarray | None = None,
        d_logits: np.ndarray | None = None,
    ) -> dict[str, np.ndarray]:
        """Parameter gradients for upstream gradients on the two heads.

        d_reduced flows through the reduction layer, d_logits through the
        classifier; both meet at the shared hidden activations and continue
        into the extractor. Either may be None (treated as zero).
        """
        p = self.params
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        d_hidden = np.zeros_like(cache.hidden)
        if d_reduced is not None:
            d_reduced = np.asarray(d_reduced, dtype=np.float64)
            if d_reduced.shape != cache.reduced.shape:
                raise DimensionMismatch("d_reduced shape does not match cache")
            grads["W_r"] = d_reduced.T @ cache.hidden
            grads["b_r"] = d_reduced.sum(axis=0)
            d_hidden += d_reduced @ p["W_r"]
        if d_logits is not None:
            d_logits = np.asarray(d_logits, dtype=np.float64)
            if d_logits.shape != cache.logits.shape:
                raise DimensionMismatch("d_logits shape does not match cache")
            grads["W_h"] = d_logits.T @ cache.hidden
            grads["b_h"] = d_logits.sum(axis=0)
            d_hidden += d_logits @ p["W_h"]
        d_pre = d_hidden * (1.0 - cache.hidden ** 2)  # tanh'
        grads["W_g"] = d_pre.T @ cache.x
        grads["b_g"] = d_pre.sum(axis=0)
        return grads

    def sgd_step(self, grads: dict[str, np.ndarray], cfg: OptimizerConfig) -> "ToyModel":
        """v <- momentum*v + grad; param <- param - lr*v (standard momentum)."""
        for name in PARAM_NAMES:
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"gradient for {name} is not finite")
            v = self.velocity[name]
            v *= cfg.momentum
            v += g
            self.params[name] -= cfg.learning_rate * v
        return self

    # -- checkpointing ----------------------------------------------------

    def save(self, path) -> None:
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "d_in": self.d_in,
            "fd": self.fd,
            "fd_r": self.fd_r,
            "n_classes": self.n_classes,
            "seed": self.seed,
        }
        arrays = {f"param_{k}": v for k, v in self.params.items()}
        arrays.update({f"vel_{k}": v for k, v in self.velocity.items()})
        with open(path, "wb") as fh:  # file handle: savez must not append .npz
            np.savez(fh, meta=json.dumps(meta), **arrays)

    @classmethod
    def load(cls, path) -> "ToyModel":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("format_version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
            model = cls(meta["d_in"], meta["fd"], meta["fd_r"], meta["n_classes"], meta["seed"])
            for k in PARAM_NAMES:
                model.params[k] = data[f"param_{k}"].copy()
                model.velocity[k] = data[f"vel_{k}"].copy()
        return model


def _uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def cross_entropy_loss(probs: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    n = probs.shape[0]
    picked = np.clip(probs[np.arange(n), labels], 1e-12, None)
    loss = float(-np.mean(np.log(picked)))
    d_logits = probs.copy()
    d_logits[np.arange(n), labels] -= 1.0
    return loss, d_logits / n


def train_source(
    model: ToyModel,
    x: np.ndarray,
    y: np.ndarray,
    epochs: int,
    cfg: OptimizerConfig,
    batch_size: int = 64,
    seed: int = 0,
) -> list[float]:
    """Plain cross-entropy training on labeled source data.

    Shuffles per epoch with its own seeded generator; returns the mean
    training loss per epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    if np.any(y < 0) or np.any(y >= model.n_classes):
        raise ValueError("source labels must lie in [0, n_classes)")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    history = []
    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        losses = []
        for start in range(0, x.shape[0], batch_size):
            idx = order[start:start + batch_size]
            cache = model.forward(x[idx])
            loss, d_logits = cross_entropy_loss(cache.probs, y[idx])
            grads = model.backward(cache, d_logits=d_logits)
            model.sgd_step(grads, cfg)
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return history


def accuracy(model: ToyModel, x: np.ndarray, y: np.ndarray) -> float:
    preds = np.argmax(model.forward(x).probs, axis=1)
    return float(np.mean(preds == np.asarray(y)))


def augment(x: np.ndarray, rng: np.random.Generator, sigma: float | None = None) -> np.ndarray:
    """Additive-noise view of a batch: x + sigma * standard normal noise.

    sigma=None resolves to 0.1 times the standard deviation of the batch
    entries, the stand-in for input-space augmentation.
    """
    x = np.asarray(x, dtype=np.float64)
    if sigma is None:
        sigma = 0.1 * float(x.std())
    return x + sigma * rng.standard_normal(x.shape)
