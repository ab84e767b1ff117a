"""Small numerical helpers shared across modules."""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

log = logging.getLogger(__name__)


def softplus(x):
    """log(1 + e^x), overflow-safe."""
    return np.logaddexp(0.0, x)


def log_expm1(y):
    """log(e^y - 1) for y > 0, stable at both ends."""
    y = np.asarray(y, dtype=float)
    big = y > 30.0
    safe = np.where(big, 1.0, y)
    out = np.where(big, y + np.log1p(-np.exp(-np.where(big, y, 30.0))), np.log(np.expm1(safe)))
    return out if out.ndim else float(out)


def xlogx(p):
    """p*log(p) with the 0*log(0) = 0 convention."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out if out.ndim else float(out)


def binary_entropy(p) -> float:
    return -(xlogx(p) + xlogx(1.0 - p))


def sign_changes(values: np.ndarray) -> list[int]:
    """Indices i where values[i] and the next nonzero value differ in sign.

    Exact zeros are skipped over so a root landing on a node is not
    counted twice.
    """
    s = np.sign(values)
    idx = np.flatnonzero(s != 0)
    out = []
    for a, b in zip(idx[:-1], idx[1:]):
        if s[a] != s[b]:
            out.append(int(a))
    return out


class BracketError(RuntimeError):
    """Raised when a sign scan finds no usable bracket."""


def scan_roots(
    fn: Callable[[float], float],
    nodes: Sequence[float],
    xtol: float = 1e-15,
) -> list[float]:
    """Sign-scan ``fn`` on ``nodes`` and bisect every bracketed root."""
    nodes = np.asarray(nodes, dtype=float)
    vals = np.array([fn(x) for x in nodes])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite value during sign scan")
    roots = []
    s = np.sign(vals)
    for i in sign_changes(vals):
        # the next nonzero node after i
        j = i + 1
        while s[j] == 0:
            j += 1
        if j > i + 1:
            roots.append(float(nodes[i + 1]))
            continue
        roots.append(bisect(fn, nodes[i], nodes[j], xtol=xtol))
    return roots


def bisect(fn: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-15) -> float:
    return float(optimize.bisect(fn, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=400))
