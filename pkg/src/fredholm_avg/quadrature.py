"""Reference quadrature used as an independent oracle.

Composite Gauss-Legendre rules with panels split at known kinks.  These are
slow compared with the closed forms but make no structural assumptions.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    if order not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(order)
        _GL_CACHE[order] = ((x + 1) / 2, w / 2)
    return _GL_CACHE[order]


def composite_rule(
    a: float = 0.0,
    b: float = 1.0,
    panels: int = 256,
    order: int = 8,
    breakpoints: Sequence[float] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite rule on [a, b].

    Roughly ``panels`` panels are distributed over the sub-intervals cut by
    ``breakpoints`` in proportion to their length.
    """
    cuts = [a] + sorted(p for p in breakpoints if a < p < b) + [b]
    xs, ws = [], []
    t, w = gauss_legendre(order)
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        n = max(1, int(np.ceil(panels * (hi - lo) / (b - a))))
        edges = np.linspace(lo, hi, n + 1)
        h = np.diff(edges)
        xs.append((edges[:-1, None] + h[:, None] * t[None, :]).ravel())
        ws.append((h[:, None] * w[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def integrate(func: Callable[[np.ndarray], np.ndarray], a=0.0, b=1.0, panels=256, order=8, breakpoints=()) -> float:
    x, w = composite_rule(a, b, panels, order, breakpoints)
    return float(np.dot(func(x), w))


def l2_norm(func, panels=1024, order=8, breakpoints=()) -> float:
    return float(np.sqrt(integrate(lambda x: func(x) ** 2, panels=panels, order=order, breakpoints=breakpoints)))


def l2_inner(f, g, panels=1024, order=8, breakpoints=()) -> float:
    return integrate(lambda x: f(x) * g(x), panels=panels, order=order, breakpoints=breakpoints)


def apply_kernel(kernel, f, x, panels=128, order=8, breakpoints=()) -> np.ndarray:
    """(K f)(x) = int_0^1 kappa(x, y) f(y) dy for each x.

    Every integral is split at y = x, where the kernel may have a kink or a
    Volterra cut-off, and at the breakpoints of f.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        hi = xi if kernel.volterra else 1.0
        y, w = composite_rule(0.0, hi, panels, order, tuple(breakpoints) + (xi,))
        if len(y) == 0:
            out[i] = 0.0
            continue
        out[i] = np.dot(kernel(xi, y) * f(y), w)
    return out


def kernel_section_gram(kernel, points: np.ndarray, panels=256, order=10) -> np.ndarray:
    """G_il = int_0^1 kappa(p_i, y) kappa(p_l, y) dy for all pairs of points."""
    points = np.asarray(points, dtype=float)
    bps = tuple(points) if (kernel.kinks or kernel.volterra) else ()
    y, w = composite_rule(0.0, 1.0, panels, order, bps)
    sections = kernel(points[:, None], y[None, :])
    return (sections * w) @ sections.T
