"""Small fully connected networks with hand-written backprop.

Policies and critics here are plain numpy MLPs: ReLU hidden layers and an
optional tanh on the output (actions live in [-1, 1]). Gradients are
computed in-module and are exact — the finite-difference tests hold them to
a relative error well under 1e-4 — so no autograd framework is involved.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MLP_FORMAT_VERSION = 1


class MLP:
    """Feed-forward net; ``backward`` returns parameter and input gradients."""

    def __init__(
        self,
        in_dim: int,
        hidden_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        hidden_layers: int = 2,
        output_activation: str | None = None,
        output_scale: float = 1.0,
    ):
        if output_activation not in (None, "tanh"):
            raise ValueError(f"unsupported output activation {output_activation!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.output_activation = output_activation
        sizes = [in_dim] + [hidden_dim] * hidden_layers + [out_dim]
        self.weights = []
        self.biases = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / fan_in)
            if i == len(sizes) - 2:
                # a damped head keeps fresh value estimates near zero, so a
                # policy gradient through an untrained critic stays tame
                scale *= output_scale
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params):
        flat = list(params)
        for i in range(len(self.weights)):
            self.weights[i] = np.array(flat[2 * i], dtype=np.float64)
            self.biases[i] = np.array(flat[2 * i + 1], dtype=np.float64)

    def copy(self) -> "MLP":
        clone = object.__new__(MLP)
        clone.in_dim = self.in_dim
        clone.out_dim = self.out_dim
        clone.output_activation = self.output_activation
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        clone._cache = None
        return clone

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        activations = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
            activations.append(h)
        if cache:
            self._cache = (activations, pre)
        return h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def backward(self, grad_out: np.ndarray):
        """Backprop ``grad_out`` (dLoss/dOutput) through the cached forward.

        Returns (param_grads, input_grad); param_grads is ordered like
        ``params``.
        """
        if self._cache is None:
            raise RuntimeError("forward(..., cache=True) before backward()")
        activations, pre = self._cache
        self._cache = None
        grad = np.asarray(grad_out, dtype=np.float64)
        last = len(self.weights) - 1
        if self.output_activation == "tanh":
            grad = grad * (1.0 - activations[-1] ** 2)
        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.biases)
        for i in range(last, -1, -1):
            if i < last:
                grad = grad * (pre[i] > 0.0)
            w_grads[i] = activations[i].T @ grad
            b_grads[i] = grad.sum(axis=0)
            grad = grad @ self.weights[i].T
        param_grads = []
        for wg, bg in zip(w_grads, b_grads):
            param_grads += [wg, bg]
        return param_grads, grad


class Adam:
    """Adam over a list of parameter arrays; state is checkpointable."""

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_arrays(self):
        return list(self.m) + list(self.v)

    def load_state_arrays(self, arrays, t: int):
        k = len(self.m)
        self.m = [np.array(a) for a in arrays[:k]]
        self.v = [np.array(a) for a in arrays[k:]]
        self.t = t


class SGD:
    """Plain gradient descent; handy where monotone full-batch loss matters."""

    def __init__(self, params, lr: float = 1e-4):
        self.lr = lr
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for p, g in zip(params, grads):
            p -= self.lr * g

    def state_arrays(self):
        return []

    def load_state_arrays(self, arrays, t: int):
        self.t = t


def apply_mlp_step(net: MLP, opt, grads):
    """One optimizer step; parameter arrays are updated in place."""
    opt.step(net.params, grads)


def save_mlp(path, net: MLP):
    meta = {
        "format_version": MLP_FORMAT_VERSION,
        "in_dim": net.in_dim,
        "out_dim": net.out_dim,
        "hidden_dim": net.weights[0].shape[1] if len(net.weights) > 1 else net.out_dim,
        "hidden_layers": len(net.weights) - 1,
        "output_activation": net.output_activation,
    }
    arrays = {f"p{i}": p for i, p in enumerate(net.params)}
    arrays["meta_json"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)


def load_mlp(path) -> MLP:
    data = np.load(path)
    meta = json.loads(bytes(data["meta_json"]).decode("utf-8"))
    if meta["format_version"] != MLP_FORMAT_VERSION:
        raise ValueError(f"unsupported policy format version {meta['format_version']}")
    net = MLP(
        meta["in_dim"],
        meta["hidden_dim"],
        meta["out_dim"],
        np.random.default_rng(0),
        hidden_layers=meta["hidden_layers"],
        output_activation=meta["output_activation"],
    )
    net.set_params([data[f"p{i}"] for i in range(2 * len(net.weights))])
    return net
