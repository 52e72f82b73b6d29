"""Two-hidden-layer MLPs with hand-written backward passes.

Each network keeps all of its parameters in one contiguous float64 vector
``params``; per-layer arrays are views into it, so optimizers and soft
updates work on the vector directly. Layers use the ``x @ W + b``
convention with ``W`` shaped ``(fan_in, fan_out)``.

Layer normalization (learned gain and offset) is applied to the
pre-activations of both hidden layers. For the actor, the weights and biases
come first in ``params`` and form the perturbable slice ``flat``; the
normalization gains and offsets follow and are never perturbed.
"""

from __future__ import annotations

import math

import numpy as np

LN_EPS = 1e-5


class DimMismatchError(ValueError):
    pass


def _layout_size(layout) -> int:
    return sum(math.prod(shape) for _, shape in layout)


# np.add.reduce skips the Python-level wrappers of ndarray.mean/sum, which
# dominate the cost at these tiny batch shapes.
_sum = np.add.reduce


def ln_forward(x, gain, offset):
    k = 1.0 / x.shape[1]
    xc = x - _sum(x, axis=1, keepdims=True) * k
    inv = 1.0 / np.sqrt(_sum(xc * xc, axis=1, keepdims=True) * k + LN_EPS)
    xh = xc * inv
    return xh * gain + offset, (xh, inv)


def ln_backward(dy, gain, cache):
    xh, inv = cache
    k = 1.0 / xh.shape[1]
    dxh = dy * gain
    dx = inv * (dxh - _sum(dxh, axis=1, keepdims=True) * k - xh * (_sum(dxh * xh, axis=1, keepdims=True) * k))
    return dx, _sum(dy * xh, axis=0), _sum(dy, axis=0)


class _Net:
    layout: list

    def __init__(self, params: np.ndarray | None = None):
        size = _layout_size(self.layout)
        if params is None:
            params = np.zeros(size)
        elif params.shape != (size,):
            raise DimMismatchError(f"expected {size} parameters, got {params.shape}")
        self.params = params
        self.views = self._views(self.params)

    def _views(self, vec: np.ndarray) -> dict:
        out, off = {}, 0
        for name, shape in self.layout:
            n = math.prod(shape)
            out[name] = vec[off : off + n].reshape(shape)
            off += n
        return out

    def __getattr__(self, name):
        views = self.__dict__.get("views")
        if views is not None and name in views:
            return views[name]
        raise AttributeError(name)

    def copy(self):
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new.params = self.params.copy()
        new.views = new._views(new.params)
        return new

    def _init_uniform(self, rng: np.random.Generator, final_scale: float) -> None:
        """Fan-in uniform init for hidden layers, small uniform for the output layer."""
        last = self.layout_weights[-1]
        for w, b in self.layout_weights:
            fan_in = self.views[w].shape[0]
            bound = final_scale if w == last[0] else 1.0 / math.sqrt(fan_in)
            self.views[w][...] = rng.uniform(-bound, bound, self.views[w].shape)
            self.views[b][...] = rng.uniform(-bound, bound, self.views[b].shape)
        if self.layer_norm:
            for g in ("g1", "g2"):
                self.views[g][...] = 1.0


class PolicyNet(_Net):
    """Deterministic actor ``s -> limit * tanh(MLP(s))``.

    ``unit(states)`` gives the tanh outputs in [-1, 1]; calling the network
    returns them scaled by ``limit``. Inputs are batches ``(B, state_dim)``.
    """

    layout_weights = [("W1", "b1"), ("W2", "b2"), ("W3", "b3")]

    def __init__(self, sizes, limit, layer_norm: bool = True, params: np.ndarray | None = None):
        s, h1, h2, a = (int(x) for x in sizes)
        self.layer_sizes = (s, h1, h2, a)
        self.layer_norm = layer_norm
        self.limit = np.broadcast_to(np.asarray(limit, dtype=float), (a,)).copy()
        self.layout = [
            ("W1", (s, h1)), ("b1", (h1,)),
            ("W2", (h1, h2)), ("b2", (h2,)),
            ("W3", (h2, a)), ("b3", (a,)),
        ]
        self.n_perturb = _layout_size(self.layout)
        if layer_norm:
            self.layout += [("g1", (h1,)), ("o1", (h1,)), ("g2", (h2,)), ("o2", (h2,))]
        super().__init__(params)

    @classmethod
    def init(cls, sizes, limit, rng, layer_norm: bool = True, final_scale: float = 3e-3) -> "PolicyNet":
        net = cls(sizes, limit, layer_norm)
        net._init_uniform(rng, final_scale)
        return net

    @property
    def flat(self) -> np.ndarray:
        """Perturbable weights and biases, a view into ``params``."""
        return self.params[: self.n_perturb]

    def perturbed(self, eps) -> "PolicyNet":
        """Copy with ``eps`` added to the weights and biases; ``self`` is untouched."""
        eps = np.asarray(eps, dtype=float)
        if eps.shape != (self.n_perturb,):
            raise DimMismatchError(f"noise must have length {self.n_perturb}, got {eps.shape}")
        new = self.copy()
        new.flat[...] += eps
        return new

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.layer_sizes[0]:
            raise DimMismatchError(f"state dim {x.shape[1]} != {self.layer_sizes[0]}")
        return x

    def forward(self, x):
        """Return tanh outputs and the cache needed by :meth:`backward`."""
        x = self._check(x)
        v = self.views
        z1 = x @ v["W1"] + v["b1"]
        c1 = None
        if self.layer_norm:
            z1, c1 = ln_forward(z1, v["g1"], v["o1"])
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ v["W2"] + v["b2"]
        c2 = None
        if self.layer_norm:
            z2, c2 = ln_forward(z2, v["g2"], v["o2"])
        h2 = np.maximum(z2, 0.0)
        u = np.tanh(h2 @ v["W3"] + v["b3"])
        return u, (x, c1, h1, c2, h2, u)

    def unit(self, x):
        return self.forward(x)[0]

    def __call__(self, x):
        return self.unit(x) * self.limit

    def backward(self, cache, du):
        """Gradient of ``sum(du * unit(x))`` with respect to ``params``."""
        x, c1, h1, c2, h2, u = cache
        v = self.views
        dz3 = du * (1.0 - u * u)
        dz2 = (dz3 @ v["W3"].T) * (h2 > 0)
        if self.layer_norm:
            dz2, dg2, do2 = ln_backward(dz2, v["g2"], c2)
        dz1 = (dz2 @ v["W2"].T) * (h1 > 0)
        if self.layer_norm:
            dz1, dg1, do1 = ln_backward(dz1, v["g1"], c1)
        parts = [x.T @ dz1, _sum(dz1, axis=0), h1.T @ dz2, _sum(dz2, axis=0), h2.T @ dz3, _sum(dz3, axis=0)]
        if self.layer_norm:
            parts += [dg1, do1, dg2, do2]
        return np.concatenate([p.ravel() for p in parts])


class CriticNet(_Net):
    """Q network; the unit-scaled action joins the first hidden layer's output."""

    layout_weights = [("W1", "b1"), ("W2", "b2"), ("W3", "b3")]

    def __init__(self, sizes, action_dim: int, layer_norm: bool = True, params: np.ndarray | None = None):
        s, h1, h2 = (int(x) for x in sizes)
        self.layer_sizes = (s, h1, h2, 1)
        self.action_dim = int(action_dim)
        self.layer_norm = layer_norm
        self.layout = [
            ("W1", (s, h1)), ("b1", (h1,)),
            ("W2", (h1 + self.action_dim, h2)), ("b2", (h2,)),
            ("W3", (h2, 1)), ("b3", (1,)),
        ]
        if layer_norm:
            self.layout += [("g1", (h1,)), ("o1", (h1,)), ("g2", (h2,)), ("o2", (h2,))]
        super().__init__(params)

    @classmethod
    def init(cls, sizes, action_dim, rng, layer_norm: bool = True, final_scale: float = 3e-3) -> "CriticNet":
        net = cls(sizes, action_dim, layer_norm)
        net._init_uniform(rng, final_scale)
        return net

    def forward(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[1] != self.layer_sizes[0] or u.shape[1] != self.action_dim:
            raise DimMismatchError("state or action dimension does not match the critic")
        v = self.views
        z1 = x @ v["W1"] + v["b1"]
        c1 = None
        if self.layer_norm:
            z1, c1 = ln_forward(z1, v["g1"], v["o1"])
        h1 = np.maximum(z1, 0.0)
        cat = np.concatenate([h1, u], axis=1)
        z2 = cat @ v["W2"] + v["b2"]
        c2 = None
        if self.layer_norm:
            z2, c2 = ln_forward(z2, v["g2"], v["o2"])
        h2 = np.maximum(z2, 0.0)
        q = h2 @ v["W3"] + v["b3"]
        return q[:, 0], (x, c1, h1, cat, c2, h2)

    def __call__(self, x, u):
        return self.forward(x, u)[0]

    def backward(self, cache, dq):
        """Gradients of ``sum(dq * Q)`` with respect to ``params`` and to the action input."""
        x, c1, h1, cat, c2, h2 = cache
        v = self.views
        dq = np.asarray(dq, dtype=float).reshape(-1, 1)
        dz2 = (dq @ v["W3"].T) * (h2 > 0)
        if self.layer_norm:
            dz2, dg2, do2 = ln_backward(dz2, v["g2"], c2)
        dcat = dz2 @ v["W2"].T
        h = h1.shape[1]
        du = dcat[:, h:]
        dz1 = dcat[:, :h] * (h1 > 0)
        if self.layer_norm:
            dz1, dg1, do1 = ln_backward(dz1, v["g1"], c1)
        parts = [x.T @ dz1, _sum(dz1, axis=0), cat.T @ dz2, _sum(dz2, axis=0), h2.T @ dq, _sum(dq, axis=0)]
        if self.layer_norm:
            parts += [dg1, do1, dg2, do2]
        return np.concatenate([p.ravel() for p in parts]), du

    def hidden_weight_mask(self) -> np.ndarray:
        """1 on the hidden-layer weight matrices, 0 elsewhere (L2 penalty support)."""
        mask = np.zeros_like(self.params)
        m = self._views(mask)
        m["W1"][...] = 1.0
        m["W2"][...] = 1.0
        return mask


class Adam:
    """Adam on a flat parameter vector, updated in place."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def soft_update(target: _Net, main: _Net, tau: float) -> None:
    """``target <- tau * main + (1 - tau) * target``, in place."""
    target.params[...] = tau * main.params + (1.0 - tau) * target.params
