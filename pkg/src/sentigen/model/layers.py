"""Transformer building blocks with hand-written reverse-mode gradients.

Every layer exposes ``forward(...) -> (output, cache)`` and a matching
``backward(d_output, cache) -> d_inputs`` that accumulates parameter
gradients in place. All tensors are float64 and carry a leading batch
dimension: (batch, positions, features).
"""

from __future__ import annotations

import math

import numpy as np

from sentigen.model.params import Initializer, Parameters

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    u = _GELU_C * (x + _GELU_A * x**3)
    t = np.tanh(u)
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def sinusoidal_positions(max_len: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal position table of shape (max_len, d_model)."""
    pos = np.arange(max_len)[:, None].astype(np.float64)
    dim = np.arange(0, d_model, 2).astype(np.float64)
    angle = pos / np.power(10000.0, dim / d_model)
    table = np.zeros((max_len, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : table[:, 1::2].shape[1]])
    return table


def dropout_mask(shape: tuple[int, ...], p: float, rng: np.random.Generator | None):
    """Inverted dropout mask, or None when dropout is inactive."""
    if p <= 0.0 or rng is None:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def apply_mask(x: np.ndarray, mask) -> np.ndarray:
    return x if mask is None else x * mask


class Dense:
    def __init__(self, params: Parameters, name: str, d_in: int, d_out: int, init: Initializer):
        self.w = params.add(f"{name}.w", init.weight(d_in, d_out))
        self.b = params.add(f"{name}.b", init.bias(d_out))

    def forward(self, x: np.ndarray):
        return x @ self.w.value + self.b.value, x

    def backward(self, dy: np.ndarray, cache: np.ndarray) -> np.ndarray:
        x = cache
        flat_x = x.reshape(-1, x.shape[-1])
        flat_dy = dy.reshape(-1, dy.shape[-1])
        self.w.grad += flat_x.T @ flat_dy
        self.b.grad += flat_dy.sum(axis=0)
        return dy @ self.w.value.T


class LayerNorm:
    EPS = 1e-5

    def __init__(self, params: Parameters, name: str, d_model: int, init: Initializer):
        self.g = params.add(f"{name}.g", init.gain(d_model))
        self.b = params.add(f"{name}.b", init.bias(d_model))

    def forward(self, x: np.ndarray):
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered**2).mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.EPS)
        x_hat = centered * inv
        return x_hat * self.g.value + self.b.value, (x_hat, inv)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        x_hat, inv = cache
        self.g.grad += (dy * x_hat).reshape(-1, dy.shape[-1]).sum(axis=0)
        self.b.grad += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        dx_hat = dy * self.g.value
        mean_dx = dx_hat.mean(axis=-1, keepdims=True)
        mean_dx_xhat = (dx_hat * x_hat).mean(axis=-1, keepdims=True)
        return inv * (dx_hat - mean_dx - x_hat * mean_dx_xhat)


class MultiHeadAttention:
    """Scaled dot-product attention over batched queries and shared or batched keys.

    Queries have shape (B, Tq, d). Keys/values may have batch 1 (a shared
    encoder state) or batch B; gradients un-broadcast accordingly.
    """

    def __init__(self, params: Parameters, name: str, d_model: int, n_heads: int, init: Initializer):
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Dense(params, f"{name}.wq", d_model, d_model, init)
        self.wk = Dense(params, f"{name}.wk", d_model, d_model, init)
        self.wv = Dense(params, f"{name}.wv", d_model, d_model, init)
        self.wo = Dense(params, f"{name}.wo", d_model, d_model, init)

    def _split(self, x: np.ndarray) -> np.ndarray:
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.d_head).transpose(0, 2, 1, 3)

    def _merge(self, x: np.ndarray) -> np.ndarray:
        b, _, t, _ = x.shape
        return x.transpose(0, 2, 1, 3).reshape(b, t, self.n_heads * self.d_head)

    def forward(self, q_in: np.ndarray, kv_in: np.ndarray, mask: np.ndarray | None = None):
        """mask is additive (0 or -inf), broadcastable to (B, heads, Tq, Tk)."""
        q_flat, q_cache = self.wq.forward(q_in)
        k_flat, k_cache = self.wk.forward(kv_in)
        v_flat, v_cache = self.wv.forward(kv_in)
        q = self._split(q_flat)
        k = self._split(k_flat)
        v = self._split(v_flat)
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores + mask
        attn = softmax(scores)
        ctx = attn @ v
        merged = self._merge(ctx)
        out, o_cache = self.wo.forward(merged)
        cache = (q_cache, k_cache, v_cache, o_cache, q, k, v, attn, kv_in.shape[0])
        return out, cache

    def backward(self, dout: np.ndarray, cache):
        q_cache, k_cache, v_cache, o_cache, q, k, v, attn, kv_batch = cache
        d_merged = self.wo.backward(dout, o_cache)
        d_ctx = self._split(d_merged)
        d_attn = d_ctx @ np.swapaxes(v, -1, -2)
        d_v = np.swapaxes(attn, -1, -2) @ d_ctx
        d_scores = attn * (d_attn - np.sum(d_attn * attn, axis=-1, keepdims=True))
        d_scores /= math.sqrt(self.d_head)
        d_q = d_scores @ k
        d_k = np.swapaxes(d_scores, -1, -2) @ q
        if kv_batch == 1 and d_k.shape[0] > 1:  # shared keys: reduce over the batch
            d_k = d_k.sum(axis=0, keepdims=True)
            d_v = d_v.sum(axis=0, keepdims=True)
        dq_in = self.wq.backward(self._merge(d_q), q_cache)
        dk_in = self.wk.backward(self._merge(d_k), k_cache)
        dv_in = self.wv.backward(self._merge(d_v), v_cache)
        return dq_in, dk_in + dv_in


class FeedForward:
    def __init__(self, params: Parameters, name: str, d_model: int, d_ff: int, init: Initializer):
        self.lin1 = Dense(params, f"{name}.lin1", d_model, d_ff, init)
        self.lin2 = Dense(params, f"{name}.lin2", d_ff, d_model, init)

    def forward(self, x: np.ndarray):
        pre, c1 = self.lin1.forward(x)
        act = gelu(pre)
        out, c2 = self.lin2.forward(act)
        return out, (c1, pre, c2)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        c1, pre, c2 = cache
        d_act = self.lin2.backward(dy, c2)
        d_pre = d_act * gelu_grad(pre)
        return self.lin1.backward(d_pre, c1)


class EncoderLayer:
    def __init__(self, params: Parameters, name: str, d_model: int, n_heads: int,
                 d_ff: int, dropout: float, init: Initializer):
        self.attn = MultiHeadAttention(params, f"{name}.attn", d_model, n_heads, init)
        self.ln1 = LayerNorm(params, f"{name}.ln1", d_model, init)
        self.ffn = FeedForward(params, f"{name}.ffn", d_model, d_ff, init)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d_model, init)
        self.dropout = dropout

    def forward(self, x: np.ndarray, rng: np.random.Generator | None = None):
        a, a_cache = self.attn.forward(x, x, mask=None)
        m1 = dropout_mask(a.shape, self.dropout, rng)
        h1, ln1_cache = self.ln1.forward(x + apply_mask(a, m1))
        f, f_cache = self.ffn.forward(h1)
        m2 = dropout_mask(f.shape, self.dropout, rng)
        h2, ln2_cache = self.ln2.forward(h1 + apply_mask(f, m2))
        return h2, (a_cache, m1, ln1_cache, f_cache, m2, ln2_cache)

    def backward(self, dy: np.ndarray, cache) -> np.ndarray:
        a_cache, m1, ln1_cache, f_cache, m2, ln2_cache = cache
        d_sum2 = self.ln2.backward(dy, ln2_cache)
        d_h1 = d_sum2 + self.ffn.backward(apply_mask(d_sum2, m2), f_cache)
        d_sum1 = self.ln1.backward(d_h1, ln1_cache)
        dq, dkv = self.attn.backward(apply_mask(d_sum1, m1), a_cache)
        return d_sum1 + dq + dkv


class DecoderLayer:
    def __init__(self, params: Parameters, name: str, d_model: int, n_heads: int,
                 d_ff: int, dropout: float, init: Initializer):
        self.self_attn = MultiHeadAttention(params, f"{name}.self", d_model, n_heads, init)
        self.ln1 = LayerNorm(params, f"{name}.ln1", d_model, init)
        self.cross_attn = MultiHeadAttention(params, f"{name}.cross", d_model, n_heads, init)
        self.ln2 = LayerNorm(params, f"{name}.ln2", d_model, init)
        self.ffn = FeedForward(params, f"{name}.ffn", d_model, d_ff, init)
        self.ln3 = LayerNorm(params, f"{name}.ln3", d_model, init)
        self.dropout = dropout

    def forward(self, x: np.ndarray, enc: np.ndarray, causal_mask: np.ndarray,
                rng: np.random.Generator | None = None):
        sa, sa_cache = self.self_attn.forward(x, x, mask=causal_mask)
        m1 = dropout_mask(sa.shape, self.dropout, rng)
        h1, ln1_cache = self.ln1.forward(x + apply_mask(sa, m1))
        ca, ca_cache = self.cross_attn.forward(h1, enc, mask=None)
        m2 = dropout_mask(ca.shape, self.dropout, rng)
        h2, ln2_cache = self.ln2.forward(h1 + apply_mask(ca, m2))
        f, f_cache = self.ffn.forward(h2)
        m3 = dropout_mask(f.shape, self.dropout, rng)
        h3, ln3_cache = self.ln3.forward(h2 + apply_mask(f, m3))
        return h3, (sa_cache, m1, ln1_cache, ca_cache, m2, ln2_cache, f_cache, m3, ln3_cache)

    def backward(self, dy: np.ndarray, cache):
        """Returns (dx, d_enc)."""
        (sa_cache, m1, ln1_cache, ca_cache, m2, ln2_cache,
         f_cache, m3, ln3_cache) = cache
        d_sum3 = self.ln3.backward(dy, ln3_cache)
        d_h2 = d_sum3 + self.ffn.backward(apply_mask(d_sum3, m3), f_cache)
        d_sum2 = self.ln2.backward(d_h2, ln2_cache)
        dq_cross, d_enc = self.cross_attn.backward(apply_mask(d_sum2, m2), ca_cache)
        d_h1 = d_sum2 + dq_cross
        d_sum1 = self.ln1.backward(d_h1, ln1_cache)
        dq_self, dkv_self = self.self_attn.backward(apply_mask(d_sum1, m1), sa_cache)
        return d_sum1 + dq_self + dkv_self, d_enc


def causal_mask(t: int) -> np.ndarray:
    """Additive (1, 1, t, t) mask hiding future positions."""
    mask = np.zeros((1, 1, t, t))
    future = np.triu(np.ones((t, t), dtype=bool), k=1)
    mask[0, 0][future] = -np.inf
    return mask
