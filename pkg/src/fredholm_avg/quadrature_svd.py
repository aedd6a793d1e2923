"""Quadrature-collocation path for general kernels.

A_ij = kappa(r_i, xi_j) / m with midpoint nodes xi_j and rows r_i on the
kernel's collocation grid.  Writing A = W S Z^T, the columns w_j of W live
in data space and the columns z_j of Z in solution space, so that
A z_j = s_j w_j.  The grid estimate is sum_{j<=k} (b, w_j)/s_j z_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import Kernel, midpoints
from .quadrature import kernel_section_gram
from .sampling import GridSpec, NoisySample, make_grid


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a usable result."""


def collocation_matrix(kernel: Kernel, m: int) -> np.ndarray:
    rows = make_grid(m, kernel.collocation).points
    return kernel(rows[:, None], midpoints(m)[None, :]) / m


@dataclass(frozen=True, eq=False)
class CollocationSystem:
    kernel: Kernel
    grid: GridSpec
    A: np.ndarray
    sigma: np.ndarray
    w: np.ndarray  # data-space singular vectors (columns)
    z: np.ndarray  # solution-space singular vectors (columns)
    rank_tol: float

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.sigma > self.rank_tol))

    @property
    def nodes(self) -> np.ndarray:
        return midpoints(self.m)

    def projections(self, data: np.ndarray) -> np.ndarray:
        """(data, w_j) for j = 1..m."""
        if len(data) != self.m:
            raise ValueError("data size does not match the collocation system")
        return self.w.T @ data

    def spectrum(self) -> list[tuple[int, float]]:
        return [(j, float(s)) for j, s in enumerate(self.sigma, start=1)]


def build_collocation(kernel: Kernel, m: int) -> CollocationSystem:
    """Assemble A_m and compute its full SVD."""
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    A = collocation_matrix(kernel, m)
    if not np.all(np.isfinite(A)):
        raise NumericalError(f"non-finite entries in the {kernel.name} matrix at m={m}")
    try:
        W, s, Zt = np.linalg.svd(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed for {kernel.name} at m={m}: {exc}") from exc
    rank_tol = m * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    return CollocationSystem(
        kernel=kernel,
        grid=make_grid(m, kernel.collocation),
        A=A,
        sigma=s,
        w=W,
        z=Zt.T,
        rank_tol=float(rank_tol),
    )


def design_matrix_S(kernel: Kernel, m: int, grid: GridSpec | None = None, panels: int = 256) -> np.ndarray:
    """S_ij = (1/m) int kappa(x, p_i) kappa(x, p_j) dx on midpoints (or ``grid``).

    Uses scipy's adaptive vector quadrature; for kernels with kinks or a
    Volterra cut-off the grid points are passed as breakpoints.
    """
    from scipy.integrate import quad_vec

    pts = midpoints(m) if grid is None else np.asarray(grid.points)
    n = len(pts)
    iu = np.triu_indices(n)

    def integrand(x):
        col = kernel(x, pts)
        return np.outer(col, col)[iu]

    bps = tuple(pts) if (kernel.kinks or kernel.volterra) else ()
    cuts = [0.0, *bps, 1.0]
    total = np.zeros(len(iu[0]))
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = quad_vec(integrand, a, b, epsabs=1e-13, epsrel=1e-13, limit=4000)
        total += val
    S = np.zeros((n, n))
    S[iu] = total
    S = S + np.triu(S, 1).T
    return S / m


def _check_index(sys: CollocationSystem, j: int) -> None:
    if not 1 <= j <= sys.rank:
        raise ValueError(f"index j={j} outside the numerical rank 1..{sys.rank}")


def singular_function(sys: CollocationSystem, j: int) -> Callable[[np.ndarray], np.ndarray]:
    """v_j(x) = (s_j sqrt(m))^-1 sum_l (w_j)_l kappa(r_l, x)."""
    _check_index(sys, j)
    coeffs = sys.w[:, j - 1] / (sys.sigma[j - 1] * math.sqrt(sys.m))
    rows = sys.grid.points

    def v(x):
        x = np.asarray(x, dtype=float)
        return (coeffs @ sys.kernel(rows[:, None], x.ravel()[None, :])).reshape(x.shape)

    return v


def singular_function_gram(sys: CollocationSystem, J: int, panels: int = 256, order: int = 10) -> np.ndarray:
    """Matrix of L2 inner products (v_i, v_j), i, j = 1..J, by reference quadrature."""
    if J < 1:
        return np.zeros((0, 0))
    _check_index(sys, J)
    G = kernel_section_gram(sys.kernel, sys.grid.points, panels=panels, order=order)
    C = sys.w[:, :J] / (sys.sigma[:J] * math.sqrt(sys.m))
    return C.T @ G @ C


@dataclass(frozen=True, eq=False)
class GridEstimate:
    """Grid values of the cut-off estimate and its anchored-kernel coefficients."""

    k: int
    values: np.ndarray
    coeffs: np.ndarray
    m_o: int
    o: int
    kernel: Kernel = field(repr=False, default=None)
    rows: np.ndarray = field(repr=False, default=None)

    def __call__(self, x) -> np.ndarray:
        """f(x) = sum_l coeffs_l kappa(r_l, x)."""
        x = np.asarray(x, dtype=float)
        return (self.coeffs @ self.kernel(self.rows[:, None], x.ravel()[None, :])).reshape(x.shape)


def _check_sample(sys: CollocationSystem, sample: NoisySample) -> None:
    if sample.grid != sys.grid:
        raise ValueError("sample grid differs from the collocation grid")


def grid_estimate(sys: CollocationSystem, sample: NoisySample, k: int) -> GridEstimate:
    _check_sample(sys, sample)
    if int(k) != k or not 0 <= k <= sys.rank:
        raise ValueError(f"cut-off k={k} outside 0..{sys.rank}")
    k = int(k)
    p = sys.projections(sample.noisy)[:k] / sys.sigma[:k]
    values = sys.z[:, :k] @ p
    coeffs = sys.w[:, :k] @ (p / sys.sigma[:k]) / sys.m
    return GridEstimate(k=k, values=values, coeffs=coeffs, m_o=sys.m, o=sample.o, kernel=sys.kernel, rows=sys.grid.points)


def residual_tails(coeffs: np.ndarray) -> np.ndarray:
    """sqrt(sum_{j>k} coeffs_j^2) for k = 0..len(coeffs)."""
    sq = np.asarray(coeffs, dtype=float) ** 2
    tail = np.concatenate((np.cumsum(sq[::-1])[::-1], [0.0]))
    return np.sqrt(tail)


def residual_tail(sys, sample: NoisySample, k: int) -> float:
    """Residual estimate sqrt(sum_{j>k} (data, w_j)^2)."""
    if not 0 <= k <= sample.grid.m:
        raise ValueError(f"k={k} outside 0..{sample.grid.m}")
    return float(residual_tails(sys.projections(sample.noisy))[k])


@dataclass(frozen=True)
class BoundContext:
    sigma_cont: np.ndarray
    c_gap: np.ndarray
    multiplicity: np.ndarray
    psi_minus: np.ndarray
    psi_plus: np.ndarray
    J: int
    C_K: float
    m: int
    surrogate: bool


def _groups(sigma: np.ndarray, rtol: float) -> list[tuple[int, int]]:
    """Runs of (numerically) equal values as 0-based inclusive index pairs."""
    out = []
    start = 0
    for i in range(1, len(sigma) + 1):
        if i == len(sigma) or abs(sigma[i] - sigma[start]) > rtol * abs(sigma[start]):
            out.append((start, i - 1))
            start = i
    return out


def bound_context(
    sys: CollocationSystem,
    reference_sigma: np.ndarray | None = None,
    C_K: float | None = None,
    rtol: float = 1e-8,
) -> BoundContext:
    """Gaps c_j, multiplicities M_i and the validity index J_m.

    Without ``reference_sigma`` the continuous spectrum is taken from the
    closed form for deriv2 and from a collocation at 4m otherwise; the
    latter is flagged as a surrogate.
    """
    surrogate = False
    if reference_sigma is None:
        if sys.kernel.name == "deriv2":
            reference_sigma = (np.pi * np.arange(1, 4 * sys.m + 3)) ** -2.0
        else:
            reference_sigma = build_collocation(sys.kernel, 4 * sys.m).sigma
            surrogate = True
    sig = np.asarray(reference_sigma, dtype=float)
    n = len(sig)
    if C_K is None:
        C_K = sys.kernel.smoothness_bound

    psi_minus = np.empty(n, dtype=int)
    psi_plus = np.empty(n, dtype=int)
    mult = np.empty(n, dtype=int)
    for lo, hi in _groups(sig, rtol):
        psi_minus[lo : hi + 1] = lo + 1
        psi_plus[lo : hi + 1] = hi + 1
        mult[lo : hi + 1] = hi - lo + 1

    # c_j = min(sigma_{psi-(j)-1}^2 - sigma_j^2, sigma_j^2 - sigma_{psi+(j)+1}^2), sigma_0 = inf
    sq = sig**2
    gap = np.full(n, np.nan)
    for j in range(n):
        if psi_plus[j] >= n:
            break  # next distinct value unknown
        below = sq[j] - sq[psi_plus[j]]
        above = np.inf if psi_minus[j] == 1 else sq[psi_minus[j] - 2] - sq[j]
        gap[j] = min(above, below)

    # M_i: largest multiplicity among the first i values
    M = np.maximum.accumulate(mult)
    m = sys.m
    J = 0
    for i in range(min(n, m)):
        if not np.isfinite(gap[i]) or gap[i] <= 0:
            break
        cond = max(2 * C_K**2 / (3 * gap[i] * m**2), 10 * M[i] * C_K**3 / (gap[i] * sig[i] * m**2))
        if not 1 > cond:
            break
        J = i + 1
    return BoundContext(
        sigma_cont=sig,
        c_gap=gap,
        multiplicity=M,
        psi_minus=psi_minus,
        psi_plus=psi_plus,
        J=J,
        C_K=float(C_K),
        m=m,
        surrogate=surrogate,
    )


@dataclass(frozen=True)
class BoundBreakdown:
    total: float
    terms: dict
    k: int
    surrogate: bool


def theorem_bounds(
    ctx: BoundContext,
    k: int,
    delta: float,
    m: int,
    o: int,
    f_norm: float,
    g_pp_inf: float,
    f_coeffs: np.ndarray | None = None,
    enforce_validity: bool = True,
) -> BoundBreakdown:
    """Right-hand side of the error bound for the cut-off estimate at level k.

    ``m`` is the fine grid size and m_o = m/o the working grid (which must
    match ``ctx``).  For o = 1 the averaging bias terms are absent.
    ``f_coeffs`` are (f, v_j) for the reference singular functions; the
    approximation tail is |f|^2 minus their partial sum.
    """
    if enforce_validity and k > ctx.J:
        raise ValueError(f"k={k} exceeds the validity index J={ctx.J}")
    if m % o:
        raise ValueError("o must divide m")
    m_o = m // o
    if m_o != ctx.m:
        raise ValueError("bound context was built for a different grid size")
    sig, gap, M = ctx.sigma_cont, ctx.c_gap, ctx.multiplicity
    C = ctx.C_K
    if f_coeffs is None:
        f_coeffs = np.zeros(0)
    fc2 = np.asarray(f_coeffs, dtype=float) ** 2

    def partial(n):
        return float(np.sum(fc2[:n]))

    terms = {}
    s = sig[:k]
    terms["variance"] = 2 * delta / math.sqrt(m) * math.sqrt(float(np.sum(s**-2.0)))
    if o > 1 and k > 0:
        terms["averaging_bias"] = g_pp_inf / (12 * m_o**2 * sig[k - 1]) + C * g_pp_inf / (
            12 * math.sqrt(6) * m_o**3
        ) * math.sqrt(float(np.sum(s**-4.0)))
    else:
        terms["averaging_bias"] = 0.0

    if k == 0:
        pp, pm, Mk = 0, 1, 0
    else:
        pp, pm, Mk = int(ctx.psi_plus[k - 1]), int(ctx.psi_minus[k - 1]), int(M[k - 1])
    terms["approximation_tail"] = math.sqrt(max(f_norm**2 - partial(pp), 0.0))
    if k > 0 and pp != k:
        terms["multiplicity"] = 2 * Mk * math.sqrt(partial(pp) - partial(pm - 1))
    else:
        terms["multiplicity"] = 0.0

    if k > 0:
        g, sk = gap[:k], sig[:k]
        d1 = (1 + math.sqrt(2 * Mk)) * C**3 * f_norm / m_o**2 * math.sqrt(float(np.sum(1 / (g**2 * sk**2))))
        d2 = math.sqrt(2) * C**4 * f_norm / (math.sqrt(3) * m_o**3) * float(np.sum(1 / (g * sk**2)))
        d3 = Mk * float(np.max(20 * M[:pp] * C**3 * f_norm / (gap[:pp] * sig[:pp] * m_o**2)))
    else:
        d1 = d2 = d3 = 0.0
    terms["discretization"] = d1 + d2 + d3
    total = float(sum(terms.values()))
    return BoundBreakdown(total=total, terms=terms, k=int(k), surrogate=ctx.surrogate)


def surrogate_coefficients(kernel: Kernel, f, m_ref: int, sys_ref: CollocationSystem | None = None) -> np.ndarray:
    """(f, v_j) approximated by (x, z_j)/sqrt(m_ref) from a fine collocation."""
    if sys_ref is None:
        sys_ref = build_collocation(kernel, m_ref)
    x = f(midpoints(sys_ref.m))
    return sys_ref.z.T @ x / math.sqrt(sys_ref.m)


def two_step_truncated_svd(A: np.ndarray, n: int, k: int, seed: int = 0, power_iters: int = 2):
    """Randomized range finder with n probes followed by a small dense SVD.

    Returns (sigma, W, Zt, err) with the leading k triples and the spectral
    norm of A - Q Q^T A.
    """
    A = np.asarray(A, dtype=float)
    if not 1 <= k <= n <= min(A.shape):
        raise ValueError("need 1 <= k <= n <= min(A.shape)")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)])))
    Y = A @ rng.standard_normal((A.shape[1], n))
    Q, _ = np.linalg.qr(Y)
    for _ in range(power_iters):
        Q, _ = np.linalg.qr(A.T @ Q)
        Q, _ = np.linalg.qr(A @ Q)
    B = Q.T @ A
    Wb, s, Zt = np.linalg.svd(B, full_matrices=False)
    err = float(np.linalg.norm(A - Q @ B, 2))
    return s[:k], (Q @ Wb)[:, :k], Zt[:k], err
