"""Function approximators for the backward recursions.

Two regressor kinds share the same (features) -> (y, z) contract:
an exact linear least-squares model and a one-hidden-layer rectifier
network trained with Adam, with gradients written out by hand so the
generator term inside the joint residual is differentiated exactly.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .models import eval_generator, generator_gradient

MODEL_FORMAT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass
class LinearModel:
    """Affine map from features to (y, z); first weight row is the intercept."""

    weights: np.ndarray  # (n_features + 1, 1 + d)

    @property
    def d(self):
        return self.weights.shape[1] - 1

    def predict(self, features):
        features = np.atleast_2d(features)
        out = self.weights[0][None, :] + features @ self.weights[1:]
        return out[:, 0], out[:, 1:]


def linear_fit(features, targets):
    """Least-squares fit of targets on [1, features].

    Solved by SVD (rank-revealing); rank-deficient designs get the
    minimum-norm solution.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if features.shape[0] != targets.shape[0]:
        raise ValueError("row mismatch between features and targets")
    if not (np.all(np.isfinite(features)) and np.all(np.isfinite(targets))):
        raise ValueError("non-finite entries in the regression data")
    design = np.concatenate([np.ones((features.shape[0], 1)), features], axis=1)
    weights, *_ = np.linalg.lstsq(design, targets, rcond=None)
    return LinearModel(weights=weights)


def linear_prediction_stderr(features, targets, model):
    """OLS standard error of the fitted mean at each feature row."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    design = np.concatenate([np.ones((features.shape[0], 1)), features], axis=1)
    resid = targets - design @ model.weights
    dof = max(design.shape[0] - design.shape[1], 1)
    s2 = (resid**2).sum(axis=0) / dof
    gram_inv = np.linalg.pinv(design.T @ design)
    lever = np.einsum("ni,ij,nj->n", design, gram_inv, design)
    return np.sqrt(np.clip(lever, 0.0, None)[:, None] * s2[None, :])


@dataclass
class MlpModel:
    """Input -> hidden (rectifier) -> (y, z), with stored feature standardization."""

    w1: np.ndarray  # (n_in, n_hidden)
    b1: np.ndarray
    w2: np.ndarray  # (n_hidden, 1 + d)
    b2: np.ndarray
    feat_shift: np.ndarray = None
    feat_scale: np.ndarray = None

    @property
    def d(self):
        return self.w2.shape[1] - 1

    def parameters(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def copy(self):
        return MlpModel(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            feat_shift=None if self.feat_shift is None else self.feat_shift.copy(),
            feat_scale=None if self.feat_scale is None else self.feat_scale.copy(),
        )

    def normalize(self, features):
        if self.feat_shift is None:
            return features
        return (features - self.feat_shift) / self.feat_scale

    def predict(self, features):
        return mlp_forward(self, features)


def init_mlp(n_in, n_hidden, d, rng):
    """Uniform fan-in scaled init for the rectifier layer."""
    bound1 = np.sqrt(6.0 / n_in)
    bound2 = np.sqrt(6.0 / n_hidden)
    return MlpModel(
        w1=rng.uniform(-bound1, bound1, size=(n_in, n_hidden)),
        b1=np.zeros(n_hidden),
        w2=rng.uniform(-bound2, bound2, size=(n_hidden, 1 + d)),
        b2=np.zeros(1 + d),
    )


def set_normalization(model, features, eps=1e-8):
    """Per-feature affine standardization computed from a pilot batch."""
    model.feat_shift = features.mean(axis=0)
    model.feat_scale = features.std(axis=0) + eps


def mlp_forward(model, features):
    """Deterministic forward pass; returns (y, z) with shapes (n,), (n, d)."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    if x.shape[1] != model.w1.shape[0]:
        raise ValueError("feature width does not match the model input width")
    x = model.normalize(x)
    hidden = np.maximum(x @ model.w1 + model.b1, 0.0)
    out = hidden @ model.w2 + model.b2
    return out[:, 0], out[:, 1:]


@dataclass
class TrainingBatch:
    """One minibatch of the joint one-step residual."""

    features: np.ndarray  # (n, n_in)
    y_next: np.ndarray  # (n,)
    db: np.ndarray  # (n, d)
    dt: float
    t: float


def loss_and_gradient(model, batch, gen, explicit=False):
    """Mean squared joint residual and its full parameter gradient.

    Residual per sample: U - Y_next - dt * g(t, U, V) + V . dB, with (U, V)
    read from the network.  Reverse-mode accumulation runs through the
    generator term using its analytic (sub)gradient.  With ``explicit``
    the generator's y-argument is Y_next (a constant) instead of U.
    """
    x = model.normalize(np.atleast_2d(batch.features))
    n = x.shape[0]
    pre = x @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    out = hidden @ model.w2 + model.b2
    u = out[:, 0]
    v = out[:, 1:]
    y_arg = batch.y_next if explicit else u
    g_val = eval_generator(gen, batch.t, y_arg, v)
    resid = u - batch.y_next - batch.dt * g_val + np.einsum("nd,nd->n", v, batch.db)
    loss = float(np.mean(resid**2))
    if not np.isfinite(loss):
        raise NonFiniteLossError(
            f"non-finite loss at t={batch.t}: residual range "
            f"[{np.nanmin(resid)}, {np.nanmax(resid)}]"
        )

    g_y, g_z = generator_gradient(gen, batch.t, y_arg, v)
    d_resid = 2.0 * resid / n
    d_out = np.empty_like(out)
    d_out[:, 0] = d_resid if explicit else d_resid * (1.0 - batch.dt * g_y)
    d_out[:, 1:] = d_resid[:, None] * (batch.db - batch.dt * g_z)

    grad_w2 = hidden.T @ d_out
    grad_b2 = d_out.sum(axis=0)
    d_hidden = (d_out @ model.w2.T) * (pre > 0.0)
    grad_w1 = x.T @ d_hidden
    grad_b1 = d_hidden.sum(axis=0)
    return loss, [grad_w1, grad_b1, grad_w2, grad_b2]


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            m=[np.zeros_like(p) for p in model.parameters()],
            v=[np.zeros_like(p) for p in model.parameters()],
            lr=lr,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(model, state, gradients):
    """Standard bias-corrected Adam update, applied in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, m, v, g in zip(model.parameters(), state.m, state.v, gradients):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return model, state


def save_model(model, path_or_file, index_set_hash=""):
    """Versioned text serialization; bit-exact round-trip via 17 significant digits."""
    if isinstance(model, LinearModel):
        arrays = {"weights": model.weights}
        kind = "linear"
    else:
        arrays = {"w1": model.w1, "b1": model.b1, "w2": model.w2, "b2": model.b2}
        if model.feat_shift is not None:
            arrays["feat_shift"] = model.feat_shift
            arrays["feat_scale"] = model.feat_scale
        kind = "mlp"
    header = {
        "format": MODEL_FORMAT_VERSION,
        "kind": kind,
        "index_set_hash": index_set_hash,
        "shapes": {k: list(a.shape) for k, a in arrays.items()},
    }
    buf = io.StringIO()
    buf.write(json.dumps(header, sort_keys=True) + "\n")
    for name in sorted(arrays):
        flat = np.ravel(arrays[name])
        buf.write(name + " " + " ".join(f"{x:.17g}" for x in flat) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as f:
            f.write(text)


def load_model(path_or_file):
    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file) as f:
            lines = f.read().splitlines()
    header = json.loads(lines[0])
    if header["format"] != MODEL_FORMAT_VERSION:
        raise ValueError("unsupported model format version")
    arrays = {}
    for line in lines[1:]:
        name, *vals = line.split()
        arrays[name] = np.array([float(x) for x in vals]).reshape(header["shapes"][name])
    if header["kind"] == "linear":
        return LinearModel(weights=arrays["weights"])
    return MlpModel(
        w1=arrays["w1"],
        b1=arrays["b1"],
        w2=arrays["w2"],
        b2=arrays["b2"],
        feat_shift=arrays.get("feat_shift"),
        feat_scale=arrays.get("feat_scale"),
    )
