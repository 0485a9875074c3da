"""Gauss-Legendre rules on intervals and axis-aligned boxes."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_interval(a, b, order):
    x, w = _leggauss(int(order))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def tensor_box_rule(lo, hi, order):
    """Tensor Gauss-Legendre rule on the box prod [lo_k, hi_k].

    Returns nodes (3, order**3) and weights (order**3,), ordered with the last
    axis varying fastest.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [gauss_interval(lo[k], hi[k], order) for k in range(3)]
    X = np.meshgrid(*(a[0] for a in axes), indexing="ij")
    W = np.meshgrid(*(a[1] for a in axes), indexing="ij")
    nodes = np.stack([x.ravel() for x in X])
    weights = (W[0] * W[1] * W[2]).ravel()
    return nodes, weights


def batched_box_rule(lo, hi, order):
    """Same rule for many boxes at once: lo, hi of shape (3, B).

    Returns nodes (3, B, order**3) and weights (B, order**3).
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = _leggauss(int(order))
    half = 0.5 * (hi - lo)  # (3, B)
    pts = lo[..., None] + half[..., None] * (x + 1.0)  # (3, B, q)
    wts = half[..., None] * w  # (3, B, q)
    q = len(x)
    nodes = np.empty((3, lo.shape[1], q, q, q))
    nodes[0] = pts[0][:, :, None, None]
    nodes[1] = pts[1][:, None, :, None]
    nodes[2] = pts[2][:, None, None, :]
    weights = wts[0][:, :, None, None] * wts[1][:, None, :, None] * wts[2][:, None, None, :]
    B = lo.shape[1]
    return nodes.reshape(3, B, q ** 3), weights.reshape(B, q ** 3)


def graded_time_rule(t, scale, order=6, max_doublings=7):
    """Composite Gauss rule on [0, t] refined for integrands decaying like e^{-tau/scale}.

    Breakpoints 0, scale/2, scale, 2 scale, ... (capped at t); past
    2**max_doublings * scale the remainder is one last panel.
    """
    if t <= 0:
        return np.zeros(0), np.zeros(0)
    edges = [0.0]
    b = 0.5 * scale
    for _ in range(max_doublings + 2):
        if b >= t:
            break
        edges.append(b)
        b *= 2.0
    edges.append(t)
    nodes, weights = [], []
    for a, c in zip(edges[:-1], edges[1:]):
        x, w = gauss_interval(a, c, order)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def trapezoid_weights(times):
    times = np.asarray(times, dtype=float)
    w = np.zeros_like(times)
    if len(times) < 2:
        return w
    dt = np.diff(times)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w
