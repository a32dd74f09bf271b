"""Minimal differentiable-layer engine.

Pure forward/backward helpers over float64 numpy arrays. Every forward has a
matching backward returning exact analytic gradients; parameter gradients are
accumulated additively into ParamTensor.grad and zeroed explicitly between
batches. Vector ops accept a single sample (d,) or a row batch (n, d).
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyPoolError, FrozenParameterError, ShapeError

NORM_FLOOR = 1e-8


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class ParamTensor:
    """A weight array with an additive gradient buffer and a freeze flag."""

    def __init__(self, value, trainable: bool = True, name: str = ""):
        self.value = as_f64(value)
        self.grad = np.zeros_like(self.value)
        self.trainable = trainable
        self.name = name

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    @property
    def shape(self):
        return self.value.shape


class AdamState:
    """Per-parameter Adam moments with bias-correction step count."""

    def __init__(self, shape, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.first_moment = np.zeros(shape, dtype=np.float64)
        self.second_moment = np.zeros(shape, dtype=np.float64)
        self.step_count = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon


def adam_step(param: ParamTensor, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update in place; zeroes the grad buffer."""
    if not param.trainable:
        raise FrozenParameterError(
            f"adam_step applied to frozen parameter '{param.name}'")
    if state.first_moment.shape != param.value.shape:
        raise ShapeError(
            f"adam state {state.first_moment.shape} vs param {param.value.shape}")
    g = param.grad
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * g
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * (g * g)
    m_hat = state.first_moment / (1.0 - state.beta1 ** t)
    v_hat = state.second_moment / (1.0 - state.beta2 ** t)
    param.value -= lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    param.zero_grad()


class Adam:
    """Convenience wrapper stepping a list of trainable ParamTensors."""

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.states = [AdamState(p.value.shape, beta1, beta2, epsilon)
                       for p in self.params]

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            adam_step(p, s, self.lr)


# ---------------------------------------------------------------------------
# layer forwards / backwards
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """y = W x + b. weight (out, in); x (..., in) -> y (..., out)."""
    x = as_f64(x)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"dense_forward: input {x.shape} vs weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense_forward: bias {bias.shape} vs weight {weight.shape}")
    return x @ weight.T + bias


def dense_backward(grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Returns (grad_x, grad_weight, grad_bias) for y = W x + b."""
    grad_out = as_f64(grad_out)
    if grad_out.shape[-1] != weight.shape[0]:
        raise ShapeError(f"dense_backward: grad {grad_out.shape} vs weight {weight.shape}")
    if grad_out.ndim == 1:
        grad_w = np.outer(grad_out, x)
        grad_b = grad_out.copy()
    else:
        grad_w = grad_out.T @ x
        grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ weight
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, as_f64(x))


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    return as_f64(grad_out) * (x > 0)


def l2_normalize(x: np.ndarray, floor: float = NORM_FLOOR) -> np.ndarray:
    """x / max(||x||, floor), rowwise for batches. floor guards zero input."""
    x = as_f64(x)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norm, floor)


def l2_normalize_backward(grad_out: np.ndarray, x: np.ndarray,
                          floor: float = NORM_FLOOR) -> np.ndarray:
    """Gradient of x/max(||x||, floor): (g - y (y.g)) / ||x|| above the floor."""
    x = as_f64(x)
    grad_out = as_f64(grad_out)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    safe = np.maximum(norm, floor)
    y = x / safe
    dot = np.sum(y * grad_out, axis=-1, keepdims=True)
    above = norm >= floor
    return np.where(above, (grad_out - y * dot) / safe, grad_out / floor)


def mean_pool(rows) -> np.ndarray:
    """Elementwise mean over a sequence of equal-length vectors."""
    rows = as_f64(rows)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise EmptyPoolError(f"mean_pool needs >=1 rows, got shape {rows.shape}")
    return rows.mean(axis=0)


def mean_pool_backward(grad_out: np.ndarray, num_rows: int) -> np.ndarray:
    """Each pooled row receives grad_out / num_rows."""
    grad_out = as_f64(grad_out)
    return np.tile(grad_out / num_rows, (num_rows, 1))


def concat(parts) -> np.ndarray:
    """Join vectors (or row batches) along the last axis, in order."""
    if len(parts) == 0:
        raise ShapeError("concat needs >=1 parts")
    return np.concatenate([as_f64(p) for p in parts], axis=-1)


def concat_backward(grad_out: np.ndarray, sizes) -> list[np.ndarray]:
    """Split an upstream gradient back into per-part gradients."""
    grad_out = as_f64(grad_out)
    if sum(sizes) != grad_out.shape[-1]:
        raise ShapeError(f"concat_backward: sizes {sizes} vs grad {grad_out.shape}")
    bounds = np.cumsum(sizes)[:-1]
    return np.split(grad_out, bounds, axis=-1)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis."""
    z = as_f64(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, true_class: int):
    """Returns (loss, grad_logits) for -log softmax(logits)[true_class]."""
    logits = as_f64(logits)
    if not 0 <= true_class < logits.shape[-1]:
        raise IndexError(f"class {true_class} out of range for {logits.shape[-1]} logits")
    p = softmax(logits)
    loss = -np.log(max(p[true_class], 1e-300))
    grad = p.copy()
    grad[true_class] -= 1.0
    return float(loss), grad


def softmax_cross_entropy_batch(logits: np.ndarray, classes: np.ndarray):
    """Rowwise CE. Returns (losses (n,), grad_logits (n, C))."""
    logits = as_f64(logits)
    classes = np.asarray(classes)
    if classes.min() < 0 or classes.max() >= logits.shape[-1]:
        raise IndexError("class id out of range")
    p = softmax(logits)
    rows = np.arange(logits.shape[0])
    losses = -np.log(np.maximum(p[rows, classes], 1e-300))
    grad = p.copy()
    grad[rows, classes] -= 1.0
    return losses, grad


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_difference_check(f, x: np.ndarray, analytic: np.ndarray,
                            h: float = 1e-5, coords=None) -> float:
    """Max relative error between analytic grad and central differences.

    f maps a flat point to a scalar; analytic is df/dx at x. coords may name a
    subset of flat indices to probe (all by default). Relative error per
    coordinate is |a - n| / max(1e-8, |a| + |n|).
    """
    x = as_f64(x).ravel()
    analytic = as_f64(analytic).ravel()
    if analytic.shape != x.shape:
        raise ShapeError(f"analytic {analytic.shape} vs point {x.shape}")
    if coords is None:
        coords = range(x.size)
    worst = 0.0
    for i in coords:
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        numeric = (f(xp) - f(xm)) / (2.0 * h)
        denom = max(1e-8, abs(analytic[i]) + abs(numeric))
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
