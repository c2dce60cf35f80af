"""Gated recurrent units and the bidirectional encoder built from them.

Gate layout follows the common convention, stacked as ``[reset, update,
candidate]`` along the first axis of the weight matrices::

    r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
    z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
    n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import tensor as T
from .module import Module, uniform_init
from .tensor import DimensionError, Tensor


class GruParams(Module):
    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None):
        if input_dim < 1 or hidden_dim < 1:
            raise DimensionError("GRU dimensions must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(hidden_dim)
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W_i = uniform_init(rng, (3 * hidden_dim, input_dim), bound)
        self.W_h = uniform_init(rng, (3 * hidden_dim, hidden_dim), bound)
        self.b_i = uniform_init(rng, (3 * hidden_dim,), bound)
        self.b_h = uniform_init(rng, (3 * hidden_dim,), bound)


def gru_cell(x, h_prev, params: GruParams) -> Tensor:
    """One GRU step as a single tape node with a closed-form adjoint.

    ``x`` is ``(D,)`` or ``(B, D)``; ``h_prev`` is ``(H,)`` or ``(B, H)``.
    """
    x, h_prev = T.as_tensor(x), T.as_tensor(h_prev)
    H = params.hidden_dim
    if x.shape[-1] != params.input_dim or h_prev.shape[-1] != H:
        raise DimensionError(
            f"gru_cell: got x{x.shape}, h{h_prev.shape} for GRU({params.input_dim}->{H})")
    single = x.ndim == 1 and h_prev.ndim == 1
    xd = np.atleast_2d(x.data)
    hd = np.atleast_2d(h_prev.data)
    if xd.shape[0] != hd.shape[0]:
        if hd.shape[0] == 1:
            hd = np.broadcast_to(hd, (xd.shape[0], H))
        else:
            raise DimensionError(f"gru_cell: batch sizes {xd.shape[0]} and {hd.shape[0]} differ")
    Wi, Wh, bi, bh = params.W_i, params.W_h, params.b_i, params.b_h
    gi = xd @ Wi.data.T + bi.data
    gh = hd @ Wh.data.T + bh.data
    r = _sigmoid(gi[:, :H] + gh[:, :H])
    z = _sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
    ghn = gh[:, 2 * H:]
    n = np.tanh(gi[:, 2 * H:] + r * ghn)
    out = (1.0 - z) * n + z * hd

    def bw(g):
        g = np.atleast_2d(g)
        dn = g * (1.0 - z) * (1.0 - n * n)
        dz = g * (hd - n) * z * (1.0 - z)
        dr = dn * ghn * r * (1.0 - r)
        dgi = np.concatenate([dr, dz, dn], axis=1)
        dgh = np.concatenate([dr, dz, dn * r], axis=1)
        dx = dgi @ Wi.data
        dh = g * z + dgh @ Wh.data
        if single:
            dx, dh = dx[0], dh[0]
        elif h_prev.ndim == 1 or h_prev.shape[0] != xd.shape[0]:
            dh = dh.sum(axis=0).reshape(h_prev.shape)
        return (dx.reshape(x.shape), dh, dgi.T @ xd, dgh.T @ hd, dgi.sum(axis=0), dgh.sum(axis=0))

    return T._make(out[0] if single else out, (x, h_prev, Wi, Wh, bi, bh), bw, "gru_cell")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def gru_run(inputs: Sequence, params: GruParams, h0=None, masks: Sequence[np.ndarray] | None = None) -> Tensor:
    """Run a GRU over time steps; returns the final hidden state.

    ``masks[t]`` (shape ``(B, 1)``) freezes the state of padded batch rows so
    variable-length sequences can share one batched pass.
    """
    if len(inputs) == 0:
        raise DimensionError("GRU over an empty sequence")
    first = T.as_tensor(inputs[0])
    if h0 is None:
        h = Tensor(np.zeros(first.shape[:-1] + (params.hidden_dim,)))
    else:
        h = T.as_tensor(h0)
    for t, x in enumerate(inputs):
        h_new = gru_cell(x, h, params)
        if masks is not None:
            m = masks[t]
            h = h_new * m + h * (1.0 - m)
        else:
            h = h_new
    return h


def bigru_encode(sequence: Sequence, forward: GruParams, backward: GruParams,
                 h0_fwd=None, h0_bwd=None) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    """Encode one sequence in both directions.

    Returns the elementwise mean of the two final states together with the
    ``(forward_final, backward_final)`` pair, which callers carry over as the
    initial states of a subsequent pass.
    """
    if len(sequence) == 0:
        raise DimensionError("bigru_encode requires a nonempty sequence")
    hf = gru_run(list(sequence), forward, h0_fwd)
    hb = gru_run(list(reversed(sequence)), backward, h0_bwd)
    return (hf + hb) * 0.5, (hf, hb)


def gru_sequence(xs, params: GruParams, h0=None, mask: np.ndarray | None = None) -> Tensor:
    """Run a GRU over ``xs`` of shape ``(B, T, D)`` as one tape node.

    ``mask`` (``(B, T)`` of 0/1) freezes the state of padded positions.  The
    adjoint is backpropagation through time with the same closed form as
    :func:`gru_cell`.  Returns the final state ``(B, H)``.
    """
    xs = T.as_tensor(xs)
    if xs.ndim != 3 or xs.shape[1] == 0:
        raise DimensionError("gru_sequence expects a nonempty (B, T, D) input")
    B, steps, D = xs.shape
    H = params.hidden_dim
    if D != params.input_dim:
        raise DimensionError(f"gru_sequence: input dim {D} != {params.input_dim}")
    if h0 is None:
        h0 = Tensor(np.zeros((1, H)))
    h0 = T.as_tensor(h0)
    if h0.shape[-1] != H or h0.ndim != 2 or h0.shape[0] not in (1, B):
        raise DimensionError(f"gru_sequence: initial state shape {h0.shape} incompatible")
    Wi, Wh, bi, bh = params.W_i, params.W_h, params.b_i, params.b_h
    m = np.ones((B, steps)) if mask is None else np.asarray(mask, dtype=np.float64)
    gi_all = xs.data @ Wi.data.T + bi.data  # (B, T, 3H)
    h = np.broadcast_to(h0.data, (B, H)).copy()
    cache = []
    for t in range(steps):
        gi = gi_all[:, t]
        gh = h @ Wh.data.T + bh.data
        r = _sigmoid(gi[:, :H] + gh[:, :H])
        z = _sigmoid(gi[:, H:2 * H] + gh[:, H:2 * H])
        ghn = gh[:, 2 * H:]
        n = np.tanh(gi[:, 2 * H:] + r * ghn)
        mt = m[:, t:t + 1]
        cache.append((h, r, z, n, ghn, mt))
        h = mt * ((1.0 - z) * n + z * h) + (1.0 - mt) * h

    def bw(g):
        dh = g.copy()
        dgi_all = np.zeros((B, steps, 3 * H))
        dWh = np.zeros_like(Wh.data)
        dbh = np.zeros(3 * H)
        for t in reversed(range(steps)):
            hp, r, z, n, ghn, mt = cache[t]
            dcell = dh * mt
            dn = dcell * (1.0 - z) * (1.0 - n * n)
            dz = dcell * (hp - n) * z * (1.0 - z)
            dr = dn * ghn * r * (1.0 - r)
            dgi_all[:, t, :H] = dr
            dgi_all[:, t, H:2 * H] = dz
            dgi_all[:, t, 2 * H:] = dn
            dgh = np.concatenate([dr, dz, dn * r], axis=1)
            dWh += dgh.T @ hp
            dbh += dgh.sum(axis=0)
            dh = dcell * z + dgh @ Wh.data + dh * (1.0 - mt)
        dx = dgi_all @ Wi.data
        flat_gi = dgi_all.reshape(-1, 3 * H)
        dWi = flat_gi.T @ xs.data.reshape(-1, D)
        dbi = flat_gi.sum(axis=0)
        dh0 = dh if h0.shape[0] == B else dh.sum(axis=0, keepdims=True)
        return dx, dh0, dWi, dWh, dbi, dbh

    return T._make(h, (xs, h0, Wi, Wh, bi, bh), bw, "gru_sequence")


def _padded_ids(id_lists: Sequence[Sequence[int]], reverse: bool) -> tuple[np.ndarray, np.ndarray | None]:
    lengths = [len(ids) for ids in id_lists]
    if not lengths or min(lengths) == 0:
        raise DimensionError("cannot encode an empty token sequence")
    width = max(lengths)
    idx = np.zeros((len(id_lists), width), dtype=np.intp)
    mask = np.zeros((len(id_lists), width))
    for b, ids in enumerate(id_lists):
        seq = list(reversed(ids)) if reverse else list(ids)
        idx[b, :len(seq)] = seq
        mask[b, :len(seq)] = 1.0
    return idx, (None if mask.all() else mask)


def bigru_encode_batch(table: Tensor, id_lists: Sequence[Sequence[int]], forward: GruParams,
                       backward: GruParams, h0_fwd=None, h0_bwd=None) -> tuple[Tensor, tuple[Tensor, Tensor]]:
    """Batched :func:`bigru_encode` over token-id sequences looked up in ``table``.

    Each sequence is reversed individually for the backward direction, so the
    result for every row equals the unbatched encoding of that sequence.
    """
    fi, fm = _padded_ids(id_lists, reverse=False)
    bi, bm = _padded_ids(id_lists, reverse=True)
    hf = gru_sequence(T.take(table, fi), forward, h0_fwd, fm)
    hb = gru_sequence(T.take(table, bi), backward, h0_bwd, bm)
    return (hf + hb) * 0.5, (hf, hb)


def gru_encode_batch(table: Tensor, id_lists: Sequence[Sequence[int]], params: GruParams) -> Tensor:
    """Unidirectional batched encoding; final hidden state per sequence."""
    idx, mask = _padded_ids(id_lists, reverse=False)
    return gru_sequence(T.take(table, idx), params, None, mask)
