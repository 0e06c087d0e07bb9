"""Small numpy layer with hand-written forward and backward passes.

Everything runs in float64. Each differentiable op comes as a forward function
plus a ``*_backward`` (or ``*_grad``) companion that maps the upstream gradient
to gradients for every input.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, LoadError, NonFiniteError

CHECKPOINT_FORMAT = "kpimportance-params"
CHECKPOINT_VERSION = 1
PROB_FLOOR = 1e-12


def check_finite(arr, what="array"):
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


class Parameter:
    """A named array with a gradient accumulator of the same shape."""

    def __init__(self, name, value):
        self.name = name
        self.value = check_finite(np.array(value, dtype=np.float64), name)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


# ---------------------------------------------------------------- affine maps

def dense(x, W, b):
    """``W @ x + b`` for a vector ``x`` or row-wise for a matrix of inputs."""
    x = np.asarray(x, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise DimensionError(
            f"dense: x{x.shape}, W{W.shape}, b{b.shape} do not conform"
        )
    return x @ W.T + b


def dense_backward(x, W, gout):
    """Return (dx, dW, db) given the upstream gradient ``gout``."""
    gx = gout @ W
    if gout.ndim == 1:
        return gx, np.outer(gout, x), gout.copy()
    return gx, gout.T @ x, gout.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(pre, gout):
    return gout * (pre > 0)


def window_matrix(H, n):
    """Rows are the concatenated windows ``H[i:i+n]`` for i = 0..M-n."""
    M, d = H.shape
    if n > M:
        raise DimensionError(f"window of {n} exceeds sequence of {M}")
    win = np.lib.stride_tricks.sliding_window_view(H, (n, d))[:, 0]
    return win.reshape(M - n + 1, n * d)


def conv_window(H, W, b, n, i):
    """ReLU of an affine map over the concatenated rows ``H[i:i+n]``."""
    M, d = H.shape
    if i < 0 or i + n > M:
        raise IndexError(f"window ({i}, {n}) exceeds sequence of length {M}")
    if W.shape != (d, n * d):
        raise DimensionError(f"filter of shape {W.shape} does not fit n={n}, d={d}")
    return relu(W @ H[i:i + n].reshape(-1) + b)


def conv_all(H, W, b, n):
    """Stride-1 ``conv_window`` at every valid start. Returns (out, cache)."""
    X = window_matrix(H, n)
    pre = dense(X, W, b)
    return relu(pre), (X, pre, n, H.shape)


def conv_all_backward(W, cache, gout):
    """Return (dH, dW, db) for ``conv_all``."""
    X, pre, n, (M, d) = cache
    gpre = relu_backward(pre, gout)
    gX, gW, gb = dense_backward(X, W, gpre)
    gH = np.zeros((M, d))
    rows = M - n + 1
    for j in range(n):
        gH[j:j + rows] += gX[:, j * d:(j + 1) * d]
    return gH, gW, gb


# ------------------------------------------------------------ probabilities

def softmax(logits):
    """Softmax over the last axis with max subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, label):
    """``-ln probs[label]`` with the probability floored at 1e-12.

    Works row-wise when ``probs`` is a matrix and ``label`` an int array.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        return float(-math.log(max(probs[label], PROB_FLOOR)))
    picked = probs[np.arange(len(probs)), label]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def cross_entropy_grad_logits(probs, label):
    """Gradient of ``cross_entropy(softmax(logits), label)`` w.r.t. the logits."""
    g = np.array(probs, dtype=np.float64)
    if g.ndim == 1:
        g[label] -= 1.0
    else:
        g[np.arange(len(g)), label] -= 1.0
    return g


# ----------------------------------------------------------- margin losses

def hinge_pair_loss(s_pos, s_neg, margin):
    """``max(0, margin - s_pos + s_neg)``; elementwise on arrays."""
    if np.any(np.asarray(margin) < 0):
        raise DomainError("margin must be >= 0")
    return np.maximum(0.0, margin - np.asarray(s_pos) + np.asarray(s_neg))


def hinge_pair_grad(s_pos, s_neg, margin):
    """(d/ds_pos, d/ds_neg); zero wherever the margin holds strictly."""
    active = (margin - np.asarray(s_pos) + np.asarray(s_neg)) > 0
    g = active.astype(np.float64)
    return -g, g


def triplet_loss(s_pos, s_neg, margin):
    """``max(0, s_neg - s_pos + margin)``; elementwise on arrays."""
    if np.any(np.asarray(margin) < 0):
        raise DomainError("margin must be >= 0")
    return np.maximum(0.0, np.asarray(s_neg) - np.asarray(s_pos) + margin)


def triplet_grad(s_pos, s_neg, margin):
    active = (np.asarray(s_neg) - np.asarray(s_pos) + margin) > 0
    g = active.astype(np.float64)
    return -g, g


# ---------------------------------------------------------- gaussian latents

def gaussian_kl(mu, sigma):
    """KL(N(mu, diag sigma^2) || N(0, I)) in closed form."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be strictly positive")
    var = sigma * sigma
    return float(0.5 * np.sum(var + mu * mu - 1.0 - np.log(var)))


def gaussian_kl_grad(mu, sigma):
    """(dKL/dmu, dKL/dsigma)."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    return mu.copy(), sigma - 1.0 / sigma


def gaussian_kl_prior_first(mu, sigma):
    """KL(N(0, I) || N(mu, diag sigma^2)), the reversed argument order."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be strictly positive")
    var = sigma * sigma
    return float(0.5 * np.sum((1.0 + mu * mu) / var - 1.0 + np.log(var)))


def reparameterize(mu, sigma, eps):
    """``mu + sigma * eps``; the caller supplies standard-normal ``eps``."""
    return np.asarray(mu) + np.asarray(sigma) * np.asarray(eps)


def reparameterize_backward(sigma, eps, gz):
    """(d/dmu, d/dsigma) given the gradient w.r.t. z."""
    return gz.copy(), gz * eps


def mse(x, y):
    diff = np.asarray(x) - np.asarray(y)
    return float(np.mean(diff * diff))


def mse_grad(x, y):
    """Gradient of ``mse(x, y)`` w.r.t. x (negate for y)."""
    diff = np.asarray(x) - np.asarray(y)
    return 2.0 * diff / diff.size


# ----------------------------------------------------------------- optimizer

@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params, state, lr, t, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.01):
    """One bias-corrected AdamW update, in place.

    Weight decay is decoupled: the value shrinks by ``lr * weight_decay``
    before the adaptive step and the gradient is left untouched.
    """
    if t < 1:
        raise ValueError("step counter t starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        g = p.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        if weight_decay:
            p.value *= 1.0 - lr * weight_decay
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


# ------------------------------------------------------------ gradient check

@dataclass
class GradCheckReport:
    """Per-parameter errors of analytic vs central-difference gradients.

    ``max_rel_error[name]`` compares the whole gradient array of one
    parameter: max|a - f| / max(max|a|, max|f|, 1e-8).
    ``max_coord_rel_error[name]`` is the harsher coordinate-wise maximum of
    |a - f| / max(|a|, |f|, 1e-8), kept for diagnostics.
    """

    max_rel_error: dict
    n_evals: int
    max_coord_rel_error: dict = field(default_factory=dict)
    kinks: list = field(default_factory=list)

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)

    def passed(self, tolerance):
        return self.worst <= tolerance


def relative_error(a, f):
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)


def array_relative_error(a, f):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(f).max(), 1e-8)
    return float(np.abs(a - f).max() / scale)


def _central(call, flat, j, h):
    orig = flat[j]
    flat[j] = orig + h
    fp = call()
    flat[j] = orig - h
    fm = call()
    flat[j] = orig
    # differences within a few ulps of f are rounding, not slope
    if abs(fp - fm) <= 4.0 * np.spacing(max(abs(fp), abs(fm))):
        return 0.0
    return (fp - fm) / (2.0 * h)


def grad_check(f, point, analytic, h=1e-4, kink_tol=None, stop_at_kink=False):
    """Compare analytic gradients against central differences.

    ``point`` maps names to float arrays (or is a single array) and is
    perturbed in place, one coordinate at a time, then restored.
    ``analytic`` has the same structure. ``f`` takes no arguments if
    ``point`` is a dict of live arrays, else it receives the array.

    With ``kink_tol`` set, each coordinate whose numeric slope disagrees with
    the analytic one is also differenced with step h/2. A smooth f gives two
    slopes that agree to O(h^2). Coordinates where they differ by more than
    ``kink_tol * max(1, |slope|)`` have a ReLU or hinge corner inside the
    stencil and are listed in ``report.kinks``;
    ``stop_at_kink`` returns at the first such coordinate.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    single = not isinstance(point, dict)
    arrays = {"x": point} if single else point
    grads = {"x": analytic} if single else analytic
    call = (lambda: f(point)) if single else f
    errors = {}
    coord_errors = {}
    kinks = []
    evals = 0
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        a = np.asarray(grads[name], dtype=np.float64).reshape(-1)
        numeric = np.empty(flat.size)
        for j in range(flat.size):
            numeric[j] = _central(call, flat, j, h)
            evals += 2
            # only a disagreement needs explaining; agreeing slopes are not re-probed
            if kink_tol is not None and abs(a[j] - numeric[j]) > kink_tol * max(1.0, abs(numeric[j])):
                half = _central(call, flat, j, h / 2.0)
                evals += 2
                if abs(half - numeric[j]) > kink_tol * max(1.0, abs(numeric[j])):
                    kinks.append((name, j))
                    if stop_at_kink:
                        return GradCheckReport(max_rel_error=errors, n_evals=evals,
                                               max_coord_rel_error=coord_errors, kinks=kinks)
        errors[name] = array_relative_error(a, numeric)
        coord_errors[name] = float(relative_error(a, numeric).max()) if flat.size else 0.0
    return GradCheckReport(max_rel_error=errors, n_evals=evals, max_coord_rel_error=coord_errors,
                           kinks=kinks)


# --------------------------------------------------------------- checkpoints

def params_to_dict(params):
    return {
        p.name: {"shape": list(p.value.shape), "values": p.value.reshape(-1).tolist()}
        for p in params
    }


def params_from_dict(payload):
    out = {}
    for name, entry in payload.items():
        try:
            shape = tuple(entry["shape"])
            values = np.array(entry["values"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"parameter {name!r}: {exc}") from None
        if values.size != math.prod(shape):
            raise LoadError(f"parameter {name!r}: {values.size} values for shape {shape}")
        out[name] = values.reshape(shape)
    return out


def save_checkpoint(path, params, **extra):
    payload = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION}
    payload.update(extra)
    payload["params"] = params_to_dict(params)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)


def load_checkpoint(path):
    """Return (name -> array, remaining payload fields)."""
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot read checkpoint {path}: {exc}") from None
    if payload.get("format") != CHECKPOINT_FORMAT or "version" not in payload:
        raise LoadError(f"{path} is not a parameter checkpoint (missing format/version tag)")
    if payload["version"] != CHECKPOINT_VERSION:
        raise LoadError(f"unsupported checkpoint version {payload['version']}")
    arrays = params_from_dict(payload.pop("params", {}))
    return arrays, payload
