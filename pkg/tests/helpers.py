"""Shared oracles and gradient-check utilities for the test suite."""

from __future__ import annotations

import numpy as np

from parkgraph.autodiff import Tensor, backward
from parkgraph.nn import named_tensors
from parkgraph.preprocess import ProximityGraph

FD_STEP = 1e-4
FD_TOL = 1e-4


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def numeric_grad(f, x: np.ndarray, eps: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place, then restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + eps
        fp = f()
        x[i] = orig - eps
        fm = f()
        x[i] = orig
        grad[i] = (fp - fm) / (2 * eps)
    return grad


def check_all_grads(build_loss, tensors: dict[str, Tensor], eps: float = FD_STEP) -> dict[str, float]:
    """Relative error of analytic vs central-difference gradients for every tensor."""
    for t in tensors.values():
        t.grad = None
    loss = build_loss()
    backward(loss, tensors.values())
    errors = {}
    for name, t in tensors.items():
        num = numeric_grad(lambda: float(build_loss().data), t.data, eps)
        errors[name] = rel_err(t.grad, num)
    return errors


def check_directional(build_loss, tensors: dict[str, Tensor], rng, eps: float = FD_STEP,
                      directions: int = 2) -> dict[str, float]:
    """Per-tensor directional-derivative check: ``g . v`` against a central difference along ``v``."""
    for t in tensors.values():
        t.grad = None
    backward(build_loss(), tensors.values())
    errors = {}
    for name, t in tensors.items():
        worst = 0.0
        for _ in range(directions):
            v = rng.standard_normal(t.data.shape)
            orig = t.data.copy()
            t.data = orig + eps * v
            fp = float(build_loss().data)
            t.data = orig - eps * v
            fm = float(build_loss().data)
            t.data = orig
            num = (fp - fm) / (2 * eps)
            ana = float((t.grad * v).sum())
            scale = max(abs(num), abs(ana))
            worst = max(worst, 0.0 if scale == 0 else abs(num - ana) / scale)
        errors[name] = worst
    return errors


def projected(out: Tensor, rng) -> Tensor:
    """Random fixed linear projection of an output to a scalar loss."""
    weights = rng.standard_normal(out.shape)
    return (out * weights).sum()


def random_graph(rng, k: int, p: float = 0.3) -> ProximityGraph:
    edges = tuple((u, v) for u in range(k) for v in range(u + 1, k) if rng.random() < p)
    return ProximityGraph(k, edges)


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def randomize(params, rng, scale=0.5):
    """Give every tensor (biases included) non-trivial values; accepts parameter dataclasses or name->tensor dicts."""
    tensors = params.values() if isinstance(params, dict) else (t for _, t in named_tensors(params))
    for t in tensors:
        t.data = rng.standard_normal(t.data.shape) * scale
    return params


def conv_oracle(x, w_f, b_f, w_g, b_g, stride):
    c, length = x.shape
    n, _, k = w_f.shape
    l_out = (length - k) // stride + 1
    out = np.zeros((n, l_out))
    for f in range(n):
        for t in range(l_out):
            lin, gate = b_f[f], b_g[f]
            for ch in range(c):
                for j in range(k):
                    lin += w_f[f, ch, j] * x[ch, t * stride + j]
                    gate += w_g[f, ch, j] * x[ch, t * stride + j]
            out[f, t] = lin * (1.0 / (1.0 + np.exp(-gate)))
    return out


def ggnn_oracle(h0, edges, p, steps):
    """Node-by-node, vector-by-vector unroll of the propagation equations."""
    k = h0.shape[0]
    nbrs = {v: [] for v in range(k)}
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    w = {name: getattr(p, name).data for name in ("w_msg", "b_msg", "w_r", "u_r", "w_z", "u_z", "w_h", "u_h")}
    h = [row.copy() for row in h0]
    for _ in range(steps):
        new = []
        for v in range(k):
            a = np.zeros_like(h[v])
            for u in nbrs[v]:
                a = a + (h[u] @ w["w_msg"] + w["b_msg"])
            r = sig(a @ w["w_r"] + h[v] @ w["u_r"])
            z = sig(a @ w["w_z"] + h[v] @ w["u_z"])
            cand = np.tanh(a @ w["w_h"] + (r * h[v]) @ w["u_h"])
            new.append((1 - z) * h[v] + z * cand)
        h = new
    return np.array(h)


def lstm_oracle(h, c, s, d, p):
    """Scalar-level gate equations, splitting each gate matrix into its h and input blocks."""
    hidden = len(h)
    s_emb = np.maximum(0, s @ p.w_s.data + p.b_s.data)
    d_emb = np.maximum(0, d @ p.w_d.data + p.b_d.data)
    x = np.concatenate([s_emb, d_emb])
    g = p.gates

    def gate(w, b):
        wd = w.data
        return np.array([
            sum(h[a] * wd[a, j] for a in range(hidden)) + sum(x[a] * wd[hidden + a, j] for a in range(len(x))) + b.data[j]
            for j in range(hidden)
        ])

    f = sig(gate(g.w_f, g.b_f))
    i = sig(gate(g.w_i, g.b_i))
    cc = np.tanh(gate(g.w_c, g.b_c))
    o = sig(gate(g.w_o, g.b_o))
    c_new = f * c + i * cc
    h_new = o * np.tanh(c_new)
    s_next = sig(c_new @ p.w_out.data + p.b_out.data)
    return h_new, c_new, s_next
