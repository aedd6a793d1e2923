"""Closed-form spectral machinery for the deriv2 kernel.

On the grid l/(m+1) the semi-discrete operator f -> (Kf)(xi_l) has left
singular vectors given by the discrete sine basis, so projections reduce to
a type-I DST and every quantity below is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.fft import dst

from .kernels import TrueSolution, deriv2_kernel, sine_series
from .sampling import GridSpec, NoisySample, make_grid


def sigma_cont(j) -> np.ndarray:
    """Continuous singular values (pi j)^-2."""
    return (np.pi * np.asarray(j, dtype=float)) ** -2.0


def sigma_semi(m: int) -> np.ndarray:
    """Semi-discrete singular values sigma_jm, j = 1..m (decreasing)."""
    j = np.arange(1, m + 1)
    s2 = np.sin(j * np.pi / (2 * (m + 1))) ** 2
    return np.sqrt(1 - 2 * s2 / 3) / (4 * (m + 1) ** 1.5 * s2)


def sine_vectors(m: int) -> np.ndarray:
    """Matrix W with W[l-1, j-1] = sqrt(2/(m+1)) sin(j pi l/(m+1))."""
    idx = np.arange(1, m + 1)
    return np.sqrt(2.0 / (m + 1)) * np.sin(np.pi * np.outer(idx, idx) / (m + 1))


def sine_project(v: np.ndarray) -> np.ndarray:
    """Coefficients (v, w_j), j = 1..m, via a type-I DST."""
    v = np.asarray(v, dtype=float)
    m = v.shape[-1]
    return dst(v, type=1, axis=-1) / 2 * np.sqrt(2.0 / (m + 1))


def sine_synthesize(c: np.ndarray) -> np.ndarray:
    """Inverse of :func:`sine_project` (the basis is orthonormal and symmetric)."""
    return sine_project(c)


@dataclass(frozen=True, eq=False)
class Deriv2Spectral:
    m: int

    @cached_property
    def grid(self) -> GridSpec:
        return make_grid(self.m, "uniform_interior")

    @cached_property
    def sigma_semi(self) -> np.ndarray:
        return sigma_semi(self.m)

    @property
    def lambdas(self) -> np.ndarray:
        return self.sigma_semi**2

    @staticmethod
    def sigma_cont(j) -> np.ndarray:
        return sigma_cont(j)

    def eigvecs(self, j: int, l: int) -> float:
        return float(np.sqrt(2.0 / (self.m + 1)) * np.sin(j * np.pi * l / (self.m + 1)))

    def eigvec_matrix(self) -> np.ndarray:
        return sine_vectors(self.m)

    @property
    def rank(self) -> int:
        return self.m

    def projections(self, data: np.ndarray) -> np.ndarray:
        """(data, u_j) for j = 1..m."""
        if len(data) != self.m:
            raise ValueError("data size does not match the spectral system")
        return sine_project(data)

    def singular_function(self, j: int):
        """v_jm(x) = sigma_jm^-1 sum_l (u_j)_l kappa(xi_l, x)."""
        if not 1 <= j <= self.m:
            raise ValueError(f"index j={j} outside 1..{self.m}")
        u = sine_vectors(self.m)[:, j - 1]
        coeffs = u / self.sigma_semi[j - 1]
        return lambda x: anchored_eval(coeffs, self.grid.points, x)


def deriv2_spectral(m: int) -> Deriv2Spectral:
    if m < 1:
        raise ValueError("m must be positive")
    return Deriv2Spectral(int(m))


def design_matrix_T(m: int) -> np.ndarray:
    """T_ij = int_0^1 kappa(xi_i, y) kappa(xi_j, y) dy on the grid l/(m+1), closed form."""
    xi = np.arange(1, m + 1) / (m + 1)
    a = np.minimum.outer(xi, xi)
    b = np.maximum.outer(xi, xi)
    # Integrate over [0, a], [a, b] and [b, 1] where both sections are linear.
    t = (1 - a) * (1 - b) * a**3 / 3
    t += a * (1 - b) * ((b**2 - a**2) / 2 - (b**3 - a**3) / 3)
    t += a * b * (1 - b) ** 3 / 3
    return t


def anchored_eval(alpha: np.ndarray, xi: np.ndarray, x) -> np.ndarray:
    """sum_l alpha_l kappa(xi_l, x) for the deriv2 kernel.

    The sum is piecewise linear in x with nodes at xi and zero boundary
    values, so it is evaluated exactly by linear interpolation.
    """
    x = np.asarray(x, dtype=float)
    kernel = deriv2_kernel()
    nodal = kernel(xi[:, None], xi[None, :]).T @ alpha
    return np.interp(x, np.concatenate(([0.0], xi, [1.0])), np.concatenate(([0.0], nodal, [0.0])))


@dataclass(frozen=True, eq=False)
class Deriv2Estimate:
    """Spectral cut-off estimate f(x) = sum_l alpha_l kappa(xi_l, x)."""

    k: int
    alpha: np.ndarray
    m_o: int
    o: int
    grid: GridSpec

    def __call__(self, x) -> np.ndarray:
        return anchored_eval(self.alpha, self.grid.points, x)


def _spectral_for(sample: NoisySample, spectral: Deriv2Spectral | None) -> Deriv2Spectral:
    if sample.grid.scheme != "uniform_interior":
        raise ValueError("deriv2 estimates need a uniform_interior grid")
    if spectral is None:
        spectral = deriv2_spectral(sample.grid.m)
    elif spectral.m != sample.grid.m:
        raise ValueError("spectral system and sample sizes differ")
    return spectral


def estimate(sample: NoisySample, k: int, spectral: Deriv2Spectral | None = None) -> Deriv2Estimate:
    """alpha = sum_{j<=k} (data, w_j)/lambda_j w_j for the (averaged) sample."""
    spectral = _spectral_for(sample, spectral)
    m = spectral.m
    if int(k) != k or not 0 <= k <= m:
        raise ValueError(f"cut-off k={k} outside 0..{m}")
    k = int(k)
    c = np.zeros(m)
    c[:k] = spectral.projections(sample.noisy)[:k] / spectral.lambdas[:k]
    alpha = sine_synthesize(c) if k else np.zeros(m)
    return Deriv2Estimate(k=k, alpha=alpha, m_o=m, o=sample.o, grid=spectral.grid)


def image_coefficients(f: TrueSolution) -> np.ndarray:
    """Sine coefficients of g = K f for a spectral solution."""
    c = f.coefficients()
    return sigma_cont(np.arange(1, len(c) + 1)) * c


def image_values(f: TrueSolution, x) -> np.ndarray:
    return sine_series(image_coefficients(f), x)


def image_derivative_norm(f: TrueSolution) -> float:
    """||g'|| in L2(0, 1) for g = K f."""
    gc = image_coefficients(f)
    j = np.arange(1, len(gc) + 1)
    return float(np.sqrt(np.sum((np.pi * j * gc) ** 2)))


def image_second_derivative_sup(f: TrueSolution) -> float:
    """||g''||_inf = ||f||_inf bound via the absolute coefficient sum."""
    c = f.coefficients()
    return float(np.sqrt(2) * np.sum(np.abs(c)))


def l2_error(
    est: Deriv2Estimate,
    f: TrueSolution,
    method: str = "exact",
    panels: int = 1 << 15,
) -> tuple[float, float]:
    """Absolute and relative L2(0, 1) error of a deriv2 estimate.

    ``exact`` uses |f|^2 - 2 alpha.g + alpha.T alpha, which needs only g on
    the estimate's grid and the closed-form T.  ``quadrature`` integrates
    (f_hat - f)^2 with a composite Gauss rule.
    """
    if method == "exact":
        if f.kind != "synthetic_spectral":
            raise ValueError("the exact route needs a spectral solution")
        fnorm2 = float(np.sum(f.coefficients() ** 2))
        g = image_values(f, est.grid.points)
        a = est.alpha
        err2 = fnorm2 - 2 * a @ g + a @ design_matrix_T(est.m_o) @ a
    elif method == "quadrature":
        from .quadrature import composite_rule

        x, w = composite_rule(0.0, 1.0, panels=panels, order=4)
        diff = est(x) - f(x)
        err2 = float(np.dot(diff**2, w))
        fnorm2 = float(np.dot(f(x) ** 2, w))
    else:
        raise ValueError(f"unknown error method {method!r}")
    err = float(np.sqrt(max(err2, 0.0)))
    rel = err / np.sqrt(fnorm2) if fnorm2 > 0 else (0.0 if err == 0 else np.inf)
    return err, float(rel)


def error_profile(
    sample: NoisySample,
    f: TrueSolution,
    spectral: Deriv2Spectral | None = None,
) -> np.ndarray:
    """Absolute L2 errors of the estimates for every k = 0..m_o.

    With c_j = (data, u_j)/sigma_jm and b_j = (g, u_j)/sigma_jm the squared
    error is |f|^2 + sum_{j<=k} (c_j^2 - 2 c_j b_j).
    """
    spectral = _spectral_for(sample, spectral)
    s = spectral.sigma_semi
    c = spectral.projections(sample.noisy) / s
    b = spectral.projections(sample.exact) / s
    fnorm2 = float(np.sum(f.coefficients() ** 2))
    err2 = fnorm2 + np.concatenate(([0.0], np.cumsum(c * c - 2 * c * b)))
    return np.sqrt(np.maximum(err2, 0.0))


class Theorem2Rate(NamedTuple):
    variance_term: float
    approx_term: float
    disc_term: float
    k_star: float


def theorem2_constants(s: float) -> tuple[float, float]:
    """Lower and upper equivalence constants (c, C) for smoothness s."""
    c = 16 / (np.pi ** (4 * s + 4) * (3 * np.pi**4 + 0.5))
    C = 15 * np.pi ** (4 * s + 8) / 16
    return float(c), float(C)


def theorem2_rate(delta, m, s, rho, k, f_prime_norm: float | None = None) -> Theorem2Rate:
    """Terms k^5 delta^2/m, k^(-4s) rho^2 and |f'|^2/m^2 plus the balancing k*.

    The last term is NaN unless ``f_prime_norm`` is given.
    """
    for name, v in (("delta", delta), ("m", m), ("s", s), ("rho", rho), ("k", k)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    var = k**5 * delta**2 / m
    approx = k ** (-4 * s) * rho**2
    disc = f_prime_norm**2 / m**2 if f_prime_norm is not None else float("nan")
    k_star = (m * rho**2 / delta**2) ** (1 / (5 + 4 * s))
    return Theorem2Rate(float(var), float(approx), float(disc), float(k_star))
