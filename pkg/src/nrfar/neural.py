"""One-hidden-layer tanh/softmax MLP trained with scaled conjugate gradient.

Training is full batch on the mean categorical cross-entropy. The scaled
conjugate gradient loop follows Moller's formulation: a Levenberg-Marquardt
style scale ``lambda`` regularises a finite-difference Hessian-vector
product, so no line search is needed.

Since SCG has no learning rate, a grid value ``lr`` sets the initial scale
to ``1/lr``: the first accepted step then has the length of a plain gradient
step with that learning rate, and ``lambda`` adapts from there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, TrainingError
from .metrics import balanced_accuracy

FORMAT_VERSION = 1


@dataclass
class MlpModel:
    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)
    mean: np.ndarray  # per-feature input mean
    std: np.ndarray  # per-feature input standard deviation
    classes: list[str]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2", "mean", "std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.classes = [str(c) for c in self.classes]
        self.validate()

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]

    def validate(self) -> None:
        n_in, n_hidden, n_out = self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ConfigError("weight matrices must be 2-D")
        if self.b1.shape != (n_hidden,) or self.w2.shape != (n_out, n_hidden) or self.b2.shape != (n_out,):
            raise ConfigError(f"inconsistent layer shapes for {n_in}-{n_hidden}-{n_out}")
        if self.mean.shape != (n_in,) or self.std.shape != (n_in,):
            raise ConfigError("normalization statistics do not match the input size")
        if np.any(self.std <= 0):
            raise ConfigError("normalization std must be positive")
        if len(self.classes) != n_out:
            raise ConfigError(f"{len(self.classes)} class names for {n_out} outputs")

    def require_shape(self, n_in: int, n_out: int, hidden: tuple[int, int] | int | None = None) -> None:
        a, h, c = self.sizes
        if a != n_in or c != n_out:
            raise ConfigError(f"expected a {n_in}-H-{n_out} model, got {a}-{h}-{c}")
        if isinstance(hidden, int) and h != hidden:
            raise ConfigError(f"expected {hidden} hidden neurons, got {h}")
        if isinstance(hidden, tuple) and not hidden[0] <= h <= hidden[1]:
            raise ConfigError(f"hidden size {h} outside {hidden}")

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.shape[1] != self.sizes[0]:
            raise ConfigError(f"expected {self.sizes[0]} features, got {xb.shape[1]}")
        probs = _forward(self.w1, self.b1, self.w2, self.b2, (xb - self.mean) / self.std)[0]
        return probs[0] if single else probs

    def predict(self, x) -> np.ndarray | int:
        """Argmax class index; ties go to the earliest class in ``classes``."""
        p = self.forward(x)
        return int(np.argmax(p)) if p.ndim == 1 else np.argmax(p, axis=1)

    def to_dict(self) -> dict:
        return {
            "format": "nrfar-mlp",
            "version": FORMAT_VERSION,
            "sizes": list(self.sizes),
            "classes": list(self.classes),
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("format") != "nrfar-mlp":
            raise ConfigError("not an MLP model artifact")
        if d.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model version {d.get('version')}")
        model = cls(d["w1"], d["b1"], d["w2"], d["b2"], d["mean"], d["std"], d["classes"], d.get("metadata", {}))
        if list(model.sizes) != list(d["sizes"]):
            raise ConfigError("declared sizes do not match the stored parameters")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot load model {path}: {exc}") from exc


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(w1, b1, w2, b2, xn):
    h = np.tanh(xn @ w1.T + b1)
    return _softmax(h @ w2.T + b2), h


def zero_model(n_in: int, n_hidden: int, classes) -> MlpModel:
    n_out = len(classes)
    return MlpModel(
        np.zeros((n_hidden, n_in)), np.zeros(n_hidden), np.zeros((n_out, n_hidden)), np.zeros(n_out),
        np.zeros(n_in), np.ones(n_in), list(classes),
    )


def init_model(n_in: int, n_hidden: int, classes, rng: np.random.Generator,
               mean=None, std=None) -> MlpModel:
    """Uniform weights in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    n_out = len(classes)
    r1 = 1.0 / math.sqrt(n_in)
    r2 = 1.0 / math.sqrt(n_hidden)
    return MlpModel(
        rng.uniform(-r1, r1, (n_hidden, n_in)), rng.uniform(-r1, r1, n_hidden),
        rng.uniform(-r2, r2, (n_out, n_hidden)), rng.uniform(-r2, r2, n_out),
        np.zeros(n_in) if mean is None else mean, np.ones(n_in) if std is None else std,
        list(classes),
    )


def normalization_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    return mean, np.where(std > 0, std, 1.0)


# -- flat parameter vector helpers -------------------------------------------

def pack(model: MlpModel) -> np.ndarray:
    return np.concatenate([model.w1.ravel(), model.b1, model.w2.ravel(), model.b2])


def _unpack(theta: np.ndarray, n_in: int, n_hidden: int, n_out: int):
    i = 0
    w1 = theta[i:i + n_hidden * n_in].reshape(n_hidden, n_in); i += n_hidden * n_in
    b1 = theta[i:i + n_hidden]; i += n_hidden
    w2 = theta[i:i + n_out * n_hidden].reshape(n_out, n_hidden); i += n_out * n_hidden
    b2 = theta[i:i + n_out]
    return w1, b1, w2, b2


def loss_and_grad(theta: np.ndarray, sizes, xn: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient for normalised inputs ``xn`` and integer labels ``y``."""
    n_in, n_hidden, n_out = sizes
    w1, b1, w2, b2 = _unpack(theta, n_in, n_hidden, n_out)
    n = xn.shape[0]
    p, h = _forward(w1, b1, w2, b2, xn)
    rows = np.arange(n)
    loss = -np.mean(np.log(np.maximum(p[rows, y], 1e-300)))
    dz2 = p.copy()
    dz2[rows, y] -= 1.0
    dz2 /= n
    gw2 = dz2.T @ h
    gb2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2) * (1.0 - h * h)
    gw1 = dz1.T @ xn
    gb1 = dz1.sum(axis=0)
    return float(loss), np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def loss(model: MlpModel, x, y) -> float:
    xn = (np.asarray(x, dtype=np.float64) - model.mean) / model.std
    return loss_and_grad(pack(model), model.sizes, xn, np.asarray(y, dtype=np.int64))[0]


# -- training ------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rates: tuple[float, ...] = (0.1, 0.01, 0.001, 0.0001)
    hidden_sizes: tuple[int, ...] = (4, 5, 6, 7, 8, 9, 10)
    max_iter: int = 1000
    tol: float = 1e-7
    patience: int = 10
    sigma: float = 5e-5
    seed: int = 0

    def validate(self) -> None:
        if not self.learning_rates or not self.hidden_sizes:
            raise ConfigError("grid search grids must be nonempty")
        if any(lr <= 0 for lr in self.learning_rates) or any(h <= 0 for h in self.hidden_sizes):
            raise ConfigError("learning rates and hidden sizes must be positive")
        if self.max_iter <= 0 or self.patience <= 0:
            raise ConfigError("max_iter and patience must be positive")


@dataclass
class ScgResult:
    theta: np.ndarray
    losses: list[float]
    iterations: int
    stopped: str


def scg_minimize(fun, theta0: np.ndarray, *, lambda1: float = 5e-7, sigma: float = 5e-5,
                 max_iter: int = 1000, tol: float = 1e-7, patience: int = 10) -> ScgResult:
    """Minimise ``fun(theta) -> (loss, grad)`` by scaled conjugate gradient.

    Only steps that lower the loss are accepted, so the loss history is
    nonincreasing.
    """
    w = np.array(theta0, dtype=np.float64)
    n_params = w.size
    f, g = fun(w)
    r = -g
    p = r.copy()
    lam, lam_bar = lambda1, 0.0
    success = True
    losses = [f]
    delta = 0.0
    stopped = "max_iter"
    k = 0
    for k in range(1, max_iter + 1):
        p2 = float(p @ p)
        if p2 == 0.0:
            stopped = "zero_gradient"
            break
        if success:
            sig = sigma / math.sqrt(p2)
            _, g_sig = fun(w + sig * p)
            s = (g_sig + r) / sig  # (E'(w + sig p) - E'(w)) / sig
            delta = float(p @ s)
        # delta carries over from a rejected step, so only the change in scale is added
        delta = delta + (lam - lam_bar) * p2
        if delta <= 0:
            # force a positive definite curvature estimate
            lam_bar = 2.0 * (lam - delta / p2)
            delta = -delta + lam * p2
            lam = lam_bar
        mu = float(p @ r)
        if mu <= 0:
            # not a descent direction any more: restart along the gradient
            p = r.copy()
            lam_bar = 0.0
            success = True
            losses.append(f)
            continue
        alpha = mu / delta
        w_new = w + alpha * p
        f_new, g_new = fun(w_new)
        comparison = 2.0 * delta * (f - f_new) / (mu * mu)
        if comparison >= 0 and f_new <= f:
            r_new = -g_new
            lam_bar = 0.0
            success = True
            if k % n_params == 0:
                p_new = r_new.copy()
            else:
                beta = (float(r_new @ r_new) - float(r_new @ r)) / mu
                p_new = r_new + beta * p
            w, f, r, p = w_new, f_new, r_new, p_new
            if comparison >= 0.75:
                lam = 0.25 * lam
        else:
            lam_bar = lam
            success = False
        if comparison < 0.25:
            lam = lam + delta * (1.0 - comparison) / p2
        losses.append(f)
        if not np.all(np.isfinite(w)):
            raise TrainingError("SCG diverged to non-finite weights")
        if float(r @ r) == 0.0:
            stopped = "zero_gradient"
            break
        if k >= patience and losses[-1 - patience] - losses[-1] < tol:
            stopped = "converged"
            break
    return ScgResult(w, losses, k, stopped)


def train_scg(x, y, classes, n_hidden: int, cfg: TrainConfig | None = None,
              learning_rate: float = 0.01, seed: int | None = None) -> MlpModel:
    """Fit a tanh/softmax MLP to features ``x`` and integer labels ``y``."""
    cfg = cfg or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise TrainingError("training set is empty")
    if y.shape != (x.shape[0],):
        raise TrainingError("one label per training sample required")
    if y.min() < 0 or y.max() >= len(classes):
        raise TrainingError("labels outside the class order")
    if learning_rate <= 0:
        raise ConfigError("learning rate must be positive")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    mean, std = normalization_stats(x)
    model = init_model(x.shape[1], n_hidden, classes, rng, mean, std)
    xn = (x - mean) / std
    sizes = model.sizes
    result = scg_minimize(
        lambda th: loss_and_grad(th, sizes, xn, y), pack(model),
        lambda1=1.0 / learning_rate, sigma=cfg.sigma,
        max_iter=cfg.max_iter, tol=cfg.tol, patience=cfg.patience,
    )
    w1, b1, w2, b2 = _unpack(result.theta, *sizes)
    return MlpModel(
        w1.copy(), b1.copy(), w2.copy(), b2.copy(), mean, std, list(classes),
        metadata={
            "trainer": "scg", "learning_rate": learning_rate, "hidden": n_hidden,
            "iterations": result.iterations, "stopped": result.stopped,
            "initial_loss": result.losses[0], "final_loss": result.losses[-1],
            "n_samples": int(x.shape[0]), "seed": int(cfg.seed if seed is None else seed),
        },
    )


@dataclass
class GridResult:
    learning_rate: float
    hidden: int
    model: MlpModel
    score: float
    table: list[dict]


def grid_search(x_train, y_train, x_val, y_val, classes, cfg: TrainConfig | None = None) -> GridResult:
    """Exhaustive search over learning rate x hidden size by validation balanced accuracy.

    Ties prefer the smaller hidden layer, then the larger learning rate.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    best = None
    table = []
    for h in sorted(cfg.hidden_sizes):
        for lr in sorted(cfg.learning_rates, reverse=True):
            model = train_scg(x_train, y_train, classes, h, cfg, learning_rate=lr)
            score = balanced_accuracy(y_val, model.predict(np.asarray(x_val)), len(classes))
            table.append({"hidden": h, "learning_rate": lr, "balanced_accuracy": score,
                          "train_loss": model.metadata["final_loss"]})
            # strict improvement only, so the iteration order encodes the tie-break
            if best is None or score > best.score:
                best = GridResult(lr, h, model, score, table)
    best.table = table
    return best
