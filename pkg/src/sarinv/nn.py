"""Small dense networks with hand-derived gradients and an Adam optimizer.

Everything runs in float64. Parameters are kept as a flat list of arrays
``[W0, b0, W1, b1, ...]`` so the optimizer and checkpoint code can treat
all networks alike.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def _init_layer(rng, n_in, n_out):
    bound = 1.0 / np.sqrt(n_in)
    return rng.uniform(-bound, bound, (n_in, n_out)), rng.uniform(-bound, bound, n_out)


class MLP:
    """ReLU hidden layers, linear output unless ``relu_out`` is set."""

    kind = 1

    def __init__(self, sizes, seed=0, relu_out: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ShapeError(f"bad layer sizes {sizes}")
        self.relu_out = relu_out
        rng = np.random.default_rng(seed)
        self.params = []
        for a, b in zip(self.sizes, self.sizes[1:]):
            self.params.extend(_init_layer(rng, a, b))

    @property
    def dims(self):
        return self.sizes

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"input width {x.shape[-1]} != {self.sizes[0]}")
        return x

    def forward_cache(self, x):
        x = self._check(x)
        acts = [x]
        n = len(self.params) // 2
        for i in range(n):
            x = x @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n - 1 or self.relu_out:
                x = np.maximum(x, 0.0)
            acts.append(x)
        return x, acts

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, acts, dout, input_grad: bool = False):
        """Gradients for every parameter given dL/d(output).

        Also returns dL/d(input) when ``input_grad`` is set, else None.
        """
        grads = [None] * len(self.params)
        n = len(self.params) // 2
        g = dout
        for i in reversed(range(n)):
            if i < n - 1 or self.relu_out:
                g = g * (acts[i + 1] > 0)
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or input_grad:
                g = g @ self.params[2 * i].T
        return grads, (g if input_grad else None)

    def copy_from(self, other: "MLP") -> None:
        for p, q in zip(self.params, other.params):
            p[...] = q


class DuelingNet:
    """ReLU trunk feeding a scalar value head and a per-action advantage head."""

    kind = 0

    def __init__(self, sizes=(551, 256, 128), n_actions: int = 25, seed=0):
        self.trunk = MLP(sizes, seed=seed, relu_out=True)
        rng = np.random.default_rng([seed, 1])
        h = self.trunk.sizes[-1]
        wv, bv = _init_layer(rng, h, 1)
        wa, ba = _init_layer(rng, h, n_actions)
        self.n_actions = int(n_actions)
        self.params = self.trunk.params + [wv, bv, wa, ba]

    @property
    def dims(self):
        return self.trunk.sizes + (self.n_actions,)

    def forward_cache(self, x):
        h, acts = self.trunk.forward_cache(x)
        wv, bv, wa, ba = self.params[-4:]
        v = h @ wv + bv
        a = h @ wa + ba
        q = v + a - a.mean(axis=-1, keepdims=True)
        return q, (acts, h)

    def forward(self, x):
        return self.forward_cache(x)[0]

    def backward(self, cache, dq):
        acts, h = cache
        wv, _, wa, _ = self.params[-4:]
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dq.mean(axis=1, keepdims=True)
        dh = dv @ wv.T + da @ wa.T
        grads, _ = self.trunk.backward(acts, dh)
        return grads + [h.T @ dv, dv.sum(axis=0), h.T @ da, da.sum(axis=0)]

    def copy_from(self, other: "DuelingNet") -> None:
        for p, q in zip(self.params, other.params):
            p[...] = q


def weighted_mse_grad(pred, target, weights):
    """Loss mean(w * (pred - target)^2) and its gradient w.r.t. ``pred`` (1-D)."""
    pred, target, weights = (np.asarray(a, dtype=float) for a in (pred, target, weights))
    if not pred.shape == target.shape == weights.shape:
        raise ShapeError("prediction, target and weight shapes differ")
    diff = pred - target
    n = len(diff)
    return float(np.mean(weights * diff ** 2)), 2.0 * weights * diff / n


def q_loss_grad(net: DuelingNet, states, actions, targets, weights):
    """Importance-weighted squared TD loss on the taken actions.

    Returns (loss, td_errors, gradients).
    """
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=np.int64)
    if states.ndim != 2 or len(states) != len(actions):
        raise ShapeError("states must be (B, D) with one action per row")
    q, cache = net.forward_cache(states)
    rows = np.arange(len(actions))
    loss, g = weighted_mse_grad(q[rows, actions], targets, weights)
    dq = np.zeros_like(q)
    dq[rows, actions] = g
    return loss, q[rows, actions] - targets, net.backward(cache, dq)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = float(lr), float(beta1), float(beta2), float(eps)
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            # p -= lr * m_hat / (sqrt(v_hat) + eps), with few temporaries
            den = np.sqrt(v / c2)
            den += self.eps
            step = m / den
            step *= self.lr / c1
            p -= step


# -- checkpoints ---------------------------------------------------------------

MAGIC = b"SARQNET\x00"
VERSION = 1


def _flat(arrays):
    return np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)


def _unflat(vec, like):
    out, pos = [], 0
    for a in like:
        out.append(vec[pos:pos + a.size].reshape(a.shape))
        pos += a.size
    return out


def save_checkpoint(path, net, optimizer: Adam | None = None) -> None:
    """Binary layout (little endian): magic, version, kind, dims, params, optimizer."""
    dims = net.dims
    buf = bytearray(MAGIC)
    buf += struct.pack("<III", VERSION, net.kind, len(dims))
    buf += struct.pack(f"<{len(dims)}I", *dims)
    params = _flat(net.params)
    buf += struct.pack("<IQ", optimizer is not None, params.size)
    buf += params.astype("<f8").tobytes()
    if optimizer is not None:
        buf += struct.pack("<Q4d", optimizer.t, optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps)
        buf += _flat(optimizer.m).astype("<f8").tobytes()
        buf += _flat(optimizer.v).astype("<f8").tobytes()
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(bytes(buf))
    tmp.replace(path)


def load_checkpoint(path):
    """Returns (net, optimizer or None)."""
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a network checkpoint")
    pos = len(MAGIC)
    try:
        version, kind, nd = struct.unpack_from("<III", data, pos)
        pos += 12
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        dims = struct.unpack_from(f"<{nd}I", data, pos)
        pos += 4 * nd
        has_opt, n = struct.unpack_from("<IQ", data, pos)
        pos += 12
        if kind == DuelingNet.kind:
            net = DuelingNet(dims[:-1], n_actions=dims[-1])
        elif kind == MLP.kind:
            net = MLP(dims)
        else:
            raise CheckpointError(f"{path}: unknown network kind {kind}")
        if n != sum(p.size for p in net.params):
            raise CheckpointError(f"{path}: parameter count {n} does not match dims {dims}")
        vec = np.frombuffer(data, "<f8", n, pos).astype(float)
        pos += 8 * n
        for p, q in zip(net.params, _unflat(vec, net.params)):
            p[...] = q
        opt = None
        if has_opt:
            t, lr, b1, b2, eps = struct.unpack_from("<Q4d", data, pos)
            pos += 40
            opt = Adam(net.params, lr, b1, b2, eps)
            opt.t = t
            for dst, src in ((opt.m, np.frombuffer(data, "<f8", n, pos)),
                             (opt.v, np.frombuffer(data, "<f8", n, pos + 8 * n))):
                for a, b in zip(dst, _unflat(src, net.params)):
                    a[...] = b
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    except ValueError as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    return net, opt
