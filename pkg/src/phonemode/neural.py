"""Three-layer perceptron with per-sample stochastic gradient descent.

tanh hidden layer, softmax output.  The default objective is squared error
between the softmax outputs and one-hot targets (cross-entropy is available
as a config option).  Training is single-threaded and fully deterministic
given the init and shuffle seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatchError, TrainingDivergedError
from .spectral import FeatureMatrix

LOSSES = ("mse", "cross_entropy")


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    epochs: int = 1
    loss: str = "mse"
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")


@dataclass
class MlpModel:
    layer_sizes: tuple[int, int, int]
    W1: np.ndarray  # q x p
    b1: np.ndarray  # q
    W2: np.ndarray  # r x q
    b2: np.ndarray  # r
    hidden_activation: str = "tanh"
    output_activation: str = "softmax"
    rng_seed: int = 0
    train_config: TrainConfig | None = None
    loss_trace: list[float] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[2]


def init_model(p: int, q: int, r: int, seed: int = 0) -> MlpModel:
    """Seeded uniform init in +-1/sqrt(fan_in)."""
    if r < 2:
        raise ValueError("need at least 2 output classes")
    rng = np.random.default_rng(seed)
    lim1 = 1.0 / np.sqrt(p)
    lim2 = 1.0 / np.sqrt(q)
    return MlpModel(
        layer_sizes=(p, q, r),
        W1=rng.uniform(-lim1, lim1, size=(q, p)),
        b1=rng.uniform(-lim1, lim1, size=q),
        W2=rng.uniform(-lim2, lim2, size=(r, q)),
        b2=rng.uniform(-lim2, lim2, size=r),
        rng_seed=seed,
    )


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def forward(m: MlpModel, x: np.ndarray) -> np.ndarray:
    """Class posteriors for one input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.n_inputs,):
        raise DimensionMismatchError(
            f"expected input of shape ({m.n_inputs},), got {x.shape}")
    h = np.tanh(m.W1 @ x + m.b1)
    return softmax(m.W2 @ h + m.b2)


def forward_batch(m: MlpModel, X: np.ndarray) -> np.ndarray:
    """Posteriors for a (n, p) batch, shape (n, r)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_inputs:
        raise DimensionMismatchError(
            f"expected batch of shape (n, {m.n_inputs}), got {X.shape}")
    H = np.tanh(X @ m.W1.T + m.b1)
    return softmax(H @ m.W2.T + m.b2)


def _loss_and_output_grad(y: np.ndarray, t: np.ndarray, loss: str):
    """Per-sample loss and its gradient wrt the output logits z.

    mse:           L = 0.5 * sum_j (y_j - t_j)^2
    cross_entropy: L = -sum_j t_j * log(y_j)
    """
    if loss == "mse":
        diff = y - t
        value = 0.5 * float(np.dot(diff, diff))
        # chain through the softmax Jacobian: dz_k = y_k*(diff_k - y.diff)
        dz = y * (diff - float(np.dot(y, diff)))
    else:
        value = -float(np.dot(t, np.log(np.maximum(y, 1e-300))))
        dz = y - t
    return value, dz


def _sample_gradients(m: MlpModel, x: np.ndarray, t: np.ndarray, loss: str):
    a1 = m.W1 @ x + m.b1
    h = np.tanh(a1)
    y = softmax(m.W2 @ h + m.b2)
    value, dz = _loss_and_output_grad(y, t, loss)
    dW2 = np.outer(dz, h)
    db2 = dz
    dh = m.W2.T @ dz
    da1 = (1.0 - h * h) * dh
    dW1 = np.outer(da1, x)
    db1 = da1
    return value, (dW1, db1, dW2, db2)


def sample_loss(m: MlpModel, x: np.ndarray, t: np.ndarray, loss: str = "mse") -> float:
    y = forward(m, x)
    value, _ = _loss_and_output_grad(y, t, loss)
    return value


def train_sgd(data: list[tuple[np.ndarray, np.ndarray]], cfg: TrainConfig,
              init_seed: int = 0, model: MlpModel | None = None,
              hidden: int | None = None) -> MlpModel:
    """Per-sample SGD over shuffled epochs; deterministic given both seeds.

    `data` is a list of (input vector, one-hot target).  Either pass a model
    to continue from, or let the function initialize one (`hidden` sets q).
    """
    if not data:
        raise ValueError("training data is empty")
    p = len(data[0][0])
    r = len(data[0][1])
    if model is None:
        model = init_model(p, hidden if hidden is not None else max(2, p // 2), r, init_seed)
    X = np.asarray([np.asarray(x, dtype=np.float64) for x, _ in data])
    T = np.asarray([np.asarray(t, dtype=np.float64) for _, t in data])
    if X.shape[1] != model.n_inputs or T.shape[1] != model.n_outputs:
        raise DimensionMismatchError("data dimensions do not match the model")

    W1, b1 = model.W1.copy(), model.b1.copy()
    W2, b2 = model.W2.copy(), model.b2.copy()
    work = replace(model, W1=W1, b1=b1, W2=W2, b2=b2, loss_trace=[])
    shuffle_rng = np.random.default_rng(cfg.shuffle_seed)
    lr = cfg.learning_rate
    trace: list[float] = []
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(data))
        total = 0.0
        for idx in order:
            value, (dW1, db1, dW2, db2) = _sample_gradients(work, X[idx], T[idx], cfg.loss)
            total += value
            W1 -= lr * dW1
            b1 -= lr * db1
            W2 -= lr * dW2
            b2 -= lr * db2
        mean_loss = total / len(data)
        if not np.isfinite(mean_loss):
            raise TrainingDivergedError(f"training loss diverged at epoch {epoch + 1}")
        trace.append(mean_loss)
    work.train_config = cfg
    work.loss_trace = trace
    return work


def analytic_gradient(m: MlpModel, x: np.ndarray, t: np.ndarray,
                      loss: str = "mse") -> np.ndarray:
    _, grads = _sample_gradients(m, np.asarray(x, float), np.asarray(t, float), loss)
    return np.concatenate([g.ravel() for g in grads])


def numeric_gradient(m: MlpModel, x: np.ndarray, t: np.ndarray,
                     loss: str = "mse", eps: float = 1e-5) -> np.ndarray:
    """Central finite differences on every parameter."""
    params = [m.W1, m.b1, m.W2, m.b2]
    out = []
    for arr in params:
        flat = arr.ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = sample_loss(m, x, t, loss)
            flat[i] = orig - eps
            minus = sample_loss(m, x, t, loss)
            flat[i] = orig
            g[i] = (plus - minus) / (2.0 * eps)
        out.append(g)
    return np.concatenate(out)


def gradient_check(m: MlpModel, x: np.ndarray, y: np.ndarray,
                   eps: float = 1e-5, loss: str = "mse") -> float:
    """Max relative error between analytic and finite-difference gradients."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    ga = analytic_gradient(m, x, y, loss)
    gn = numeric_gradient(m, x, y, loss, eps)
    denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-12)
    return float(np.max(np.abs(ga - gn) / denom))


def classify_sentence_majority(m: MlpModel, frames: FeatureMatrix | np.ndarray):
    """Majority vote over per-frame argmax decisions.

    Returns (winning class index, vote-fraction vector).  Ties break toward
    the lower class index.
    """
    data = frames.data if isinstance(frames, FeatureMatrix) else np.asarray(frames, float)
    if data.shape[0] == 0:
        raise ValueError("cannot vote over zero frames")
    posts = forward_batch(m, data)
    votes = np.argmax(posts, axis=1)
    counts = np.bincount(votes, minlength=m.n_outputs)
    winner = int(np.argmax(counts))  # argmax returns the first (lowest) index on ties
    fractions = counts.astype(np.float64) / len(votes)
    return winner, fractions
