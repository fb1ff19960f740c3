"""A small reverse-mode autodiff kernel over numpy arrays.

Only what the distillation and fusion networks need: affine layers, relu,
sigmoid, embedding lookups, reductions, cross-entropy and MSE, Adam/AdamW
and a central finite-difference gradient checker. Everything runs in
float64.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, StateError

PROB_CLIP = 1e-7
FORMAT_VERSION = 1


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Array value plus the closure that pushes its gradient to its inputs."""

    __slots__ = ("value", "grad", "requires_grad", "name", "_parents", "_backward", "_done")

    def __init__(self, value, requires_grad: bool = False, name: str = "", _parents=(), _backward=None):
        value = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite values produced{' in ' + name if name else ''}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._done = False

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}{', name=' + self.name if self.name else ''})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    # graph construction -------------------------------------------------

    @staticmethod
    def _wrap(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def _child(self, value, parents, backward):
        track = any(p.requires_grad or p._parents for p in parents)
        if not track:
            return Tensor(value)
        return Tensor(value, _parents=parents, _backward=backward)

    def __add__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def back(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return self._child(a.value + b.value, (a, b), back)

    __radd__ = __add__

    def __neg__(self):
        a = self
        return self._child(-a.value, (a,), lambda g: a._accumulate(-g))

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        a, b = self, other

        def back(g):
            a._accumulate(_unbroadcast(g * b.value, a.shape))
            b._accumulate(_unbroadcast(g * a.value, b.shape))

        return self._child(a.value * b.value, (a, b), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return self * (1.0 / np.asarray(other, dtype=float))

    def __matmul__(self, other):
        other = self._wrap(other)
        a, b = self, other
        if a.value.ndim != 2 or b.value.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")

        def back(g):
            if b.value.ndim == 1:
                a._accumulate(np.outer(g, b.value))
                b._accumulate(a.value.T @ g)
            else:
                a._accumulate(g @ b.value.T)
                b._accumulate(a.value.T @ g)

        return self._child(a.value @ b.value, (a, b), back)

    def __pow__(self, k):
        a = self
        k = float(k)
        return self._child(a.value ** k, (a,), lambda g: a._accumulate(g * k * a.value ** (k - 1)))

    def sum(self, axis=None):
        a = self

        def back(g):
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.shape))
            else:
                a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

        return self._child(a.value.sum(axis=axis), (a,), back)

    def mean(self, axis=None):
        size = self.value.size if axis is None else self.shape[axis]
        return self.sum(axis) * (1.0 / size)

    def reshape(self, *shape):
        a = self
        return self._child(a.value.reshape(*shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))

    def __getitem__(self, idx):
        a = self

        def back(g):
            full = np.zeros_like(a.value)
            np.add.at(full, idx, g)
            a._accumulate(full)

        return self._child(a.value[idx], (a,), back)

    # backward -----------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf.

        The graph is released afterwards; a second call raises StateError.
        """
        if self.value.size != 1:
            raise ShapeError("backward needs a scalar output")
        if self._done:
            raise StateError("backward already ran on this graph")
        if not self._parents:
            raise StateError("no forward graph recorded for this tensor")
        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        for node in topo:
            if node._parents:
                node.grad = None
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        for node in topo:
            if node._parents:
                node.grad = None
                node._parents = ()
                node._backward = None
                node._done = True


def Parameter(value, name: str = "") -> Tensor:
    return Tensor(np.array(value, dtype=float), requires_grad=True, name=name)


def _elementwise(x: Tensor, value, local_grad) -> Tensor:
    return x._child(value, (x,), lambda g: x._accumulate(g * local_grad))


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return _elementwise(x, np.where(mask, x.value, 0.0), mask.astype(float))


def sigmoid(x):
    """Logistic function; accepts tensors, arrays and scalars."""
    if not isinstance(x, Tensor):
        z = np.asarray(x, dtype=float)
        out = 0.5 * (1.0 + np.tanh(0.5 * z))
        return float(out) if out.ndim == 0 else out
    s = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _elementwise(x, s, s * (1.0 - s))


def identity(x):
    return x


def log(x: Tensor) -> Tensor:
    return _elementwise(x, np.log(x.value), 1.0 / x.value)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.value >= lo) & (x.value <= hi)
    return _elementwise(x, np.clip(x.value, lo, hi), inside.astype(float))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [Tensor._wrap(t) for t in tensors]
    value = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        for t, part in zip(tensors, np.split(g, sizes, axis=axis)):
            t._accumulate(part)

    return tensors[0]._child(value, tuple(tensors), back)


def embedding_lookup(table: Tensor, idx) -> Tensor:
    """Rows of ``table`` at ``idx``; repeated indices sum their gradients."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.shape[0]})")
    return table[idx]


ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "identity": identity}


def cross_entropy(p, y):
    """Mean binary cross-entropy with probabilities clipped to [1e-7, 1 - 1e-7]."""
    y = np.asarray(y, dtype=float)
    if not isinstance(p, Tensor):
        q = np.clip(np.asarray(p, dtype=float), PROB_CLIP, 1.0 - PROB_CLIP)
        return float(np.mean(-(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))))
    q = clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    return -(log(q) * y + log(1.0 - q) * (1.0 - y)).mean()


def mse(a, b):
    """Mean of squared componentwise differences."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return float(np.mean(d * d))
    d = Tensor._wrap(a) - b
    return (d * d).mean()


# layers -------------------------------------------------------------------


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths including the input width, one activation per layer."""

    widths: tuple
    activations: tuple
    seed: int = 0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(widths) < 2:
            raise ShapeError("an MLP needs an input width and at least one layer")
        if any(w <= 0 for w in widths):
            raise ShapeError(f"widths must be positive, got {widths}")
        if len(self.activations) != len(widths) - 1:
            raise ShapeError("need one activation per layer")
        bad = [a for a in self.activations if a not in ACTIVATIONS]
        if bad:
            raise ShapeError(f"unknown activations {bad}")

    @classmethod
    def hidden(cls, widths, seed: int = 0, hidden: str = "relu", out: str = "identity") -> "MlpSpec":
        n = len(widths) - 1
        return cls(tuple(widths), tuple([hidden] * (n - 1) + [out]), seed)


class MLP:
    def __init__(self, spec: MlpSpec, rng: np.random.Generator | None = None, prefix: str = "mlp"):
        self.spec = spec
        rng = rng if rng is not None else np.random.default_rng(spec.seed)
        self.weights, self.biases = [], []
        for i, (fan_in, fan_out) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
            self.weights.append(Parameter(glorot(rng, fan_in, fan_out), f"{prefix}.w{i}"))
            self.biases.append(Parameter(np.zeros(fan_out), f"{prefix}.b{i}"))
        self.cache = None

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def __call__(self, x) -> Tensor:
        x = Tensor._wrap(x)
        if x.value.ndim != 2 or x.shape[1] != self.spec.widths[0]:
            raise ShapeError(f"MLP expects (batch, {self.spec.widths[0]}) input, got {x.shape}")
        acts = [x]
        for w, b, act in zip(self.weights, self.biases, self.spec.activations):
            x = ACTIVATIONS[act](x @ w + b)
            acts.append(x)
        self.cache = acts
        return x

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Forward pass on plain arrays, no graph."""
        h = np.asarray(x, dtype=float)
        for w, b, act in zip(self.weights, self.biases, self.spec.activations):
            h = h @ w.value + b.value
            if act == "relu":
                h = np.maximum(h, 0.0)
            elif act == "sigmoid":
                h = sigmoid(h)
        return h


def mlp_forward(mlp: MLP, x) -> Tensor:
    return mlp(x)


# optimizers ---------------------------------------------------------------


@dataclass
class OptState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class Adam:
    """Adam with bias correction. Parameters without a gradient are skipped."""

    decoupled = False

    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = list(params)
        self.state = OptState(lr, betas[0], betas[1], eps, weight_decay)
        self.state.m = [np.zeros_like(p.value) for p in self.params]
        self.state.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, grads=None):
        st = self.state
        if grads is None:
            grads = [p.grad if p.grad is not None else np.zeros_like(p.value) for p in self.params]
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient passed to optimizer")
        st.step += 1
        bc1 = 1.0 - st.beta1 ** st.step
        bc2 = 1.0 - st.beta2 ** st.step
        for p, g, m, v in zip(self.params, grads, st.m, st.v):
            if not p.requires_grad:
                continue
            if self.decoupled and st.weight_decay:
                p.value *= 1.0 - st.lr * st.weight_decay
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * (g * g)
            p.value -= st.lr * (m / bc1) / (np.sqrt(v / bc2) + st.eps)


class AdamW(Adam):
    """Adam with decoupled weight decay applied before the moment update."""

    decoupled = True

    def __init__(self, params, lr=0.001, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        super().__init__(params, lr, betas, eps, weight_decay)


def adam_step(opt: Adam, grads=None) -> OptState:
    opt.step(grads)
    return opt.state


def gradients(loss: Tensor, params) -> list[np.ndarray]:
    """Backpropagate ``loss``; frozen or unreached parameters get exact zeros."""
    params = list(params)
    for p in params:
        p.grad = None
    loss.backward()
    out = []
    for p in params:
        if p.grad is None or not p.requires_grad:
            out.append(np.zeros_like(p.value))
        else:
            out.append(p.grad.copy())
    return out


def grad_check(fn, params, eps: float = 1e-5) -> tuple[float, str]:
    """Compare analytic gradients of scalar ``fn()`` to central differences.

    Returns the worst relative error ``|a - n| / max(|a| + |n|, 1e-8)`` and
    the name of the parameter where it occurs.
    """
    params = list(params)
    analytic = gradients(fn(), params)
    worst, worst_name = 0.0, ""
    for p, a in zip(params, analytic):
        flat = p.value.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(fn().value)
            flat[i] = orig - eps
            f_minus = float(fn().value)
            flat[i] = orig
            num = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a_flat[i] - num) / max(abs(a_flat[i]) + abs(num), 1e-8)
            if err > worst:
                worst, worst_name = err, f"{p.name}[{i}]"
    return worst, worst_name


# serialization ------------------------------------------------------------


def params_to_dict(params) -> dict:
    return {
        "version": FORMAT_VERSION,
        "params": [{"name": p.name, "shape": list(p.shape), "values": p.value.reshape(-1).tolist()} for p in params],
    }


def params_from_dict(d: dict, params) -> None:
    """Load values saved by ``params_to_dict`` into existing parameters, in order."""
    saved = d["params"]
    if len(saved) != len(params):
        raise ShapeError(f"expected {len(params)} parameters, document has {len(saved)}")
    for p, s in zip(params, saved):
        if tuple(s["shape"]) != p.shape:
            raise ShapeError(f"{p.name}: shape {tuple(s['shape'])} does not match {p.shape}")
        p.value[...] = np.array(s["values"], dtype=float).reshape(p.shape)


def mlp_to_dict(mlp: MLP) -> dict:
    return {
        "widths": list(mlp.spec.widths),
        "activations": list(mlp.spec.activations),
        "seed": mlp.spec.seed,
        **params_to_dict(mlp.parameters()),
    }


def mlp_from_dict(d: dict, prefix: str = "mlp") -> MLP:
    mlp = MLP(MlpSpec(tuple(d["widths"]), tuple(d["activations"]), d["seed"]), prefix=prefix)
    params_from_dict(d, mlp.parameters())
    return mlp


def dumps(obj: dict) -> str:
    return json.dumps(obj)
