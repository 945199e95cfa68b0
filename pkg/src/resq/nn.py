"""Two-layer ReLU Q-network with an optional dueling head, in plain numpy.

Forward and reverse passes are written out by hand for this one fixed
architecture; ``grad_check`` compares them against central differences.
Inputs may be a single vector ``(d,)`` or a batch ``(B, d)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch, VersionMismatch

CHECKPOINT_VERSION = 1


class HeadMode(enum.Enum):
    DUELING = "dueling"
    PLAIN = "plain"


TRUNK = ("W1", "b1", "W2", "b2")
HEADS = {HeadMode.DUELING: ("Wv", "bv", "Wa", "ba"), HeadMode.PLAIN: ("Wq", "bq")}


@dataclass(frozen=True, eq=False)
class DuelingNet:
    input_dim: int
    n_actions: int
    hidden: int
    head_mode: HeadMode
    params: dict[str, np.ndarray] = field(repr=False)

    @property
    def names(self) -> tuple[str, ...]:
        return TRUNK + HEADS[self.head_mode]

    def shapes(self) -> dict[str, tuple[int, ...]]:
        d, h, a = self.input_dim, self.hidden, self.n_actions
        s = {"W1": (d, h), "b1": (h,), "W2": (h, h), "b2": (h,)}
        if self.head_mode is HeadMode.DUELING:
            s.update(Wv=(h, 1), bv=(1,), Wa=(h, a), ba=(a,))
        else:
            s.update(Wq=(h, a), bq=(a,))
        return s

    def copy(self) -> "DuelingNet":
        return DuelingNet(self.input_dim, self.n_actions, self.hidden, self.head_mode,
                          {k: v.copy() for k, v in self.params.items()})

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


Gradients = dict  # name -> ndarray, shaped like DuelingNet.params


def init_net(input_dim: int, n_actions: int, hidden: int = 128,
             head_mode: HeadMode = HeadMode.DUELING, seed: int = 0) -> DuelingNet:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
    rng = np.random.default_rng(seed)
    shell = DuelingNet(input_dim, n_actions, hidden, head_mode, {})
    params = {}
    for name, shape in shell.shapes().items():
        fan_in = shape[0] if name.startswith("W") else shell.shapes()["W" + name[1:]][0]
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return DuelingNet(input_dim, n_actions, hidden, head_mode, params)


def _as_batch(net: DuelingNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeMismatch(f"input shape {x.shape} does not match input_dim {net.input_dim}")
    return x, single


def _forward(net: DuelingNet, x: np.ndarray) -> dict:
    p = net.params
    z1 = x @ p["W1"] + p["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ p["W2"] + p["b2"]
    a2 = np.maximum(z2, 0.0)
    cache = {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2}
    if net.head_mode is HeadMode.DUELING:
        v = a2 @ p["Wv"] + p["bv"]              # (B, 1)
        adv = a2 @ p["Wa"] + p["ba"]            # (B, A)
        cache["v"], cache["adv"] = v, adv
        cache["q"] = v + adv - adv.mean(axis=1, keepdims=True)
    else:
        cache["q"] = a2 @ p["Wq"] + p["bq"]
    return cache


def forward(net: DuelingNet, x) -> np.ndarray:
    xb, single = _as_batch(net, x)
    q = _forward(net, xb)["q"]
    return q[0] if single else q


def forward_parts(net: DuelingNet, x) -> tuple[np.ndarray, np.ndarray]:
    """Value and raw (un-centred) advantages of a dueling net."""
    if net.head_mode is not HeadMode.DUELING:
        raise ValueError("plain nets have no value/advantage split")
    xb, single = _as_batch(net, x)
    c = _forward(net, xb)
    v, adv = c["v"][:, 0], c["adv"]
    return (v[0], adv[0]) if single else (v, adv)


def _backward(net: DuelingNet, cache: dict, upstream: np.ndarray) -> Gradients:
    p = net.params
    g = {}
    a2 = cache["a2"]
    if net.head_mode is HeadMode.DUELING:
        dv = upstream.sum(axis=1, keepdims=True)
        dadv = upstream - upstream.mean(axis=1, keepdims=True)
        g["Wv"] = a2.T @ dv
        g["bv"] = dv.sum(axis=0)
        g["Wa"] = a2.T @ dadv
        g["ba"] = dadv.sum(axis=0)
        da2 = dv @ p["Wv"].T + dadv @ p["Wa"].T
    else:
        g["Wq"] = a2.T @ upstream
        g["bq"] = upstream.sum(axis=0)
        da2 = upstream @ p["Wq"].T
    dz2 = da2 * (cache["z2"] > 0)
    g["W2"] = cache["a1"].T @ dz2
    g["b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ p["W2"].T) * (cache["z1"] > 0)
    g["W1"] = cache["x"].T @ dz1
    g["b1"] = dz1.sum(axis=0)
    return g


def backward(net: DuelingNet, x, upstream) -> Gradients:
    """Gradient of ``sum(q * upstream)`` with respect to every parameter."""
    xb, single = _as_batch(net, x)
    up = np.asarray(upstream, dtype=float)
    if single:
        up = up[None, :]
    if up.shape != (xb.shape[0], net.n_actions):
        raise ShapeMismatch(f"upstream shape {up.shape} does not match q shape {(xb.shape[0], net.n_actions)}")
    return _backward(net, _forward(net, xb), up)


def forward_backward(net: DuelingNet, x, upstream_fn: Callable[[np.ndarray], np.ndarray]):
    """One forward pass, then backward with ``upstream_fn(q)``; returns (q, grads)."""
    xb, _ = _as_batch(net, x)
    cache = _forward(net, xb)
    return cache["q"], _backward(net, cache, upstream_fn(cache["q"]))


@dataclass(eq=False)
class OptimState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: DuelingNet, lr: float = 1e-3) -> "OptimState":
        zeros = {k: np.zeros_like(v) for k, v in net.params.items()}
        return cls({k: z.copy() for k, z in zeros.items()}, zeros, 0, lr)

    def copy(self) -> "OptimState":
        return OptimState({k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()},
                          self.t, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(net: DuelingNet, grads: Gradients, opt: OptimState) -> tuple[DuelingNet, OptimState]:
    """Bias-corrected Adam; returns new parameter and optimizer versions."""
    if set(grads) != set(net.params):
        raise ShapeMismatch(f"gradient keys {sorted(grads)} do not match {sorted(net.params)}")
    for k, g in grads.items():
        if g.shape != net.params[k].shape:
            raise ShapeMismatch(f"{k}: gradient {g.shape} vs parameter {net.params[k].shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient(k)
    t = opt.t + 1
    c1 = 1.0 - opt.beta1 ** t
    c2 = 1.0 - opt.beta2 ** t
    params, m_new, v_new = {}, {}, {}
    for k, g in grads.items():
        m = opt.beta1 * opt.m[k] + (1.0 - opt.beta1) * g
        v = opt.beta2 * opt.v[k] + (1.0 - opt.beta2) * g * g
        params[k] = net.params[k] - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
        m_new[k], v_new[k] = m, v
    new_net = DuelingNet(net.input_dim, net.n_actions, net.hidden, net.head_mode, params)
    return new_net, OptimState(m_new, v_new, t, opt.lr, opt.beta1, opt.beta2, opt.eps)


def grad_check(
    net: DuelingNet,
    x,
    loss_fn: Callable[[np.ndarray], tuple[float, np.ndarray]],
    eps: float = 1e-5,
    grads: Gradients | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(q)`` returns ``(loss, dloss/dq)``. Pass ``grads`` to check a
    given gradient instead of the one from :func:`backward`.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    xb, _ = _as_batch(net, x)
    if grads is None:
        _, dq = loss_fn(forward(net, xb))
        grads = backward(net, xb, dq)
    worst = 0.0
    for name, param in net.params.items():
        flat = param.reshape(-1)
        ana = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = loss_fn(forward(net, xb))[0]
            flat[i] = orig - eps
            minus = loss_fn(forward(net, xb))[0]
            flat[i] = orig
            num = (plus - minus) / (2 * eps)
            err = abs(ana[i] - num) / max(abs(ana[i]), abs(num), 1e-12)
            worst = max(worst, err)
    return worst


# -- checkpoint format -------------------------------------------------------

def net_to_dict(net: DuelingNet, opt: OptimState | None = None) -> dict:
    d = {
        "version": CHECKPOINT_VERSION,
        "dims": {"input_dim": net.input_dim, "hidden": net.hidden, "n_actions": net.n_actions},
        "head_mode": net.head_mode.value,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in net.params.items()},
    }
    if opt is not None:
        d["optimizer"] = {
            "t": opt.t, "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
            "m": {k: v.ravel().tolist() for k, v in opt.m.items()},
            "v": {k: v.ravel().tolist() for k, v in opt.v.items()},
        }
    return d


def net_from_dict(d: dict, expect: tuple[int, int, int] | None = None) -> tuple[DuelingNet, OptimState | None]:
    """Rebuild a net (and optimizer, if stored); ``expect`` is (input_dim, hidden, n_actions)."""
    if not isinstance(d, dict) or d.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {d.get('version') if isinstance(d, dict) else None}")
    dims = d["dims"]
    shell = DuelingNet(dims["input_dim"], dims["n_actions"], dims["hidden"], HeadMode(d["head_mode"]), {})
    if expect is not None and tuple(expect) != (shell.input_dim, shell.hidden, shell.n_actions):
        raise ShapeMismatch(f"checkpoint dims {(shell.input_dim, shell.hidden, shell.n_actions)} != {tuple(expect)}")
    shapes = shell.shapes()
    if set(d["params"]) != set(shapes):
        raise ShapeMismatch(f"parameter names {sorted(d['params'])} != {sorted(shapes)}")
    params = {}
    for k, shape in shapes.items():
        entry = d["params"][k]
        arr = np.array(entry["data"], dtype=float)
        if tuple(entry["shape"]) != shape or arr.size != int(np.prod(shape)):
            raise ShapeMismatch(f"{k}: stored shape {entry['shape']} != {shape}")
        params[k] = arr.reshape(shape)
    net = DuelingNet(shell.input_dim, shell.n_actions, shell.hidden, shell.head_mode, params)
    opt = None
    if "optimizer" in d:
        o = d["optimizer"]
        opt = OptimState(
            {k: np.array(o["m"][k], dtype=float).reshape(shapes[k]) for k in shapes},
            {k: np.array(o["v"][k], dtype=float).reshape(shapes[k]) for k in shapes},
            o["t"], o["lr"], o["beta1"], o["beta2"], o["eps"],
        )
    return net, opt
