# Numba kernels for skip-gram / paragraph-vector training with negative sampling.
#
# Every document draws from its own LCG stream seeded by (seed, epoch, doc),
# and the learning rate depends only on the global token position, so the
# serial driver is bit-reproducible and the parallel driver differs from it
# only through racing updates.

import math

import numpy as np
from numba import njit, prange

_LCG_MUL = np.uint64(25214903917)
_LCG_ADD = np.uint64(11)


@njit(cache=True, inline="always")
def _next(state):
    return state * _LCG_MUL + _LCG_ADD


@njit(cache=True, inline="always")
def _log_sigmoid(x):
    # log(sigma(x)) without overflow
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, fastmath=True)
def sgd_pair(u, out, target, negs, lr, grad_u):
    """One SGD step on -log s(u.o_t) - sum log s(-u.o_n).

    ``out`` rows are updated in place; the step for ``u`` is accumulated
    into ``grad_u`` (as -lr * gradient) so the caller applies it once.
    Returns the loss before the update.
    """
    dim = u.shape[0]
    loss = 0.0
    for j in range(negs.shape[0] + 1):
        if j == 0:
            row = target
            label = 1.0
        else:
            row = negs[j - 1]
            if row == target:
                continue
            label = 0.0
        o = out[row]
        dot = 0.0
        for d in range(dim):
            dot += u[d] * o[d]
        if label == 1.0:
            loss -= _log_sigmoid(dot)
        else:
            loss -= _log_sigmoid(-dot)
        g = (label - _sigmoid(dot)) * lr
        for d in range(dim):
            grad_u[d] += g * o[d]
        for d in range(dim):
            o[d] += g * u[d]
    return loss


@njit(cache=True, fastmath=True)
def _train_doc(doc, tokens, starts, w_in, w_out, d_vecs, table, window, negatives,
               lr0, total_steps, epoch_offset, state, train_docs):
    dim = w_in.shape[1]
    grad = np.zeros(dim)
    negs = np.empty(negatives, dtype=np.int64)
    lo = starts[doc]
    hi = starts[doc + 1]
    tsize = table.shape[0]
    loss = 0.0
    pairs = 0
    for i in range(lo, hi):
        progress = (epoch_offset + i) / total_steps
        lr = lr0 * max(1.0 - progress, 0.0001)
        center = tokens[i]
        a = max(lo, i - window)
        b = min(hi, i + window + 1)
        for j in range(a, b):
            if j == i:
                continue
            for k in range(negatives):
                state = _next(state)
                negs[k] = table[(state >> np.uint64(16)) % np.uint64(tsize)]
            grad[:] = 0.0
            loss += sgd_pair(w_in[center], w_out, tokens[j], negs, lr, grad)
            for d in range(dim):
                w_in[center, d] += grad[d]
            pairs += 1
        if train_docs:
            for k in range(negatives):
                state = _next(state)
                negs[k] = table[(state >> np.uint64(16)) % np.uint64(tsize)]
            grad[:] = 0.0
            loss += sgd_pair(d_vecs[doc], w_out, center, negs, lr, grad)
            for d in range(dim):
                d_vecs[doc, d] += grad[d]
            pairs += 1
    return loss, pairs


@njit(cache=True, fastmath=True)
def _doc_seed(seed, epoch, doc):
    s = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(epoch) * np.uint64(1000003) + np.uint64(doc)
    for _ in range(4):
        s = _next(s)
    return s


@njit(cache=True, fastmath=True)
def train_epoch_serial(tokens, starts, w_in, w_out, d_vecs, table, window, negatives,
                       lr0, total_steps, epoch_offset, seed, epoch, train_docs):
    loss = 0.0
    pairs = 0
    for doc in range(starts.shape[0] - 1):
        l, p = _train_doc(doc, tokens, starts, w_in, w_out, d_vecs, table, window, negatives,
                          lr0, total_steps, epoch_offset, _doc_seed(seed, epoch, doc), train_docs)
        loss += l
        pairs += p
    return loss, pairs


@njit(cache=True, fastmath=True, parallel=True)
def train_epoch_parallel(tokens, starts, w_in, w_out, d_vecs, table, window, negatives,
                         lr0, total_steps, epoch_offset, seed, epoch, train_docs):
    n = starts.shape[0] - 1
    losses = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    for doc in prange(n):
        l, p = _train_doc(doc, tokens, starts, w_in, w_out, d_vecs, table, window, negatives,
                          lr0, total_steps, epoch_offset, _doc_seed(seed, epoch, doc), train_docs)
        losses[doc] = l
        counts[doc] = p
    return losses.sum(), counts.sum()
