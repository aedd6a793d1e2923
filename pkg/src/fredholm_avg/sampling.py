"""Measurement grids, noisy samples, block averaging and averaging levels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .kernels import Kernel, TrueSolution, sine_series

SCHEMES = ("uniform_interior", "midpoint", "right_endpoint")
DISTRIBUTIONS = ("gaussian", "heavy_tailed")


@dataclass(frozen=True, eq=False)
class GridSpec:
    m: int
    scheme: str
    points: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, GridSpec)
            and self.m == other.m
            and self.scheme == other.scheme
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


def make_grid(m: int, scheme: str = "midpoint") -> GridSpec:
    """Grid of m abscissae in (0, 1].

    ``uniform_interior`` gives l/(m+1), ``midpoint`` gives (2j-1)/(2m) and
    ``right_endpoint`` gives j/m.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"grid size must be a positive integer, got {m!r}")
    m = int(m)
    idx = np.arange(1, m + 1, dtype=float)
    if scheme == "uniform_interior":
        pts = idx / (m + 1)
    elif scheme == "midpoint":
        pts = (2 * idx - 1) / (2 * m)
    elif scheme == "right_endpoint":
        pts = idx / m
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    pts.setflags(write=False)
    return GridSpec(m=m, scheme=scheme, points=pts)


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the substream (seed, *stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def draw_noise(m: int, rng: np.random.Generator, distribution: str = "gaussian") -> np.ndarray:
    """Unit-variance i.i.d. draws."""
    if distribution == "gaussian":
        return rng.standard_normal(m)
    if distribution == "heavy_tailed":
        # Student t with 3 degrees of freedom has variance 3.
        return rng.standard_t(3, size=m) / math.sqrt(3.0)
    raise ValueError(f"unknown noise distribution {distribution!r}")


ExactSource = Callable[[GridSpec], np.ndarray]


@dataclass(frozen=True, eq=False)
class NoisySample:
    """Noisy point evaluations g(xi_l) + delta Z_l, possibly block-averaged.

    ``delta`` is always the noise level of the original fine data;
    ``noise_std`` is the per-entry standard deviation after averaging.
    """

    grid: GridSpec
    exact: np.ndarray
    noisy: np.ndarray
    delta: float
    seed: int
    distribution: str = "gaussian"
    o: int = 1
    run_index: int = 0
    exact_source: ExactSource | None = field(default=None, repr=False)

    @property
    def m_o(self) -> int:
        return self.grid.m

    @property
    def m(self) -> int:
        return self.grid.m * self.o

    @property
    def noise_std(self) -> float:
        return self.delta / math.sqrt(self.o)

    def to_csv(self) -> str:
        lines = ["index,xi,exact,noisy"]
        for i, (x, e, y) in enumerate(zip(self.grid.points.tolist(), self.exact.tolist(), self.noisy.tolist()), start=1):
            lines.append(f"{i},{x!r},{e!r},{y!r}")
        return "\n".join(lines) + "\n"


def exact_source(kernel: Kernel, f: TrueSolution, mode: str = "auto") -> ExactSource:
    """Map a grid to exact data (K f) on it.

    ``series``: closed-form image of a spectral solution under deriv2.
    ``collocation``: A_n x_n with the discrete solution of matching size
    (the toolbox convention for right-hand sides).
    ``quadrature``: reference quadrature of the integral.
    ``auto`` picks series, then collocation, then quadrature.
    """
    if mode == "auto":
        if f.kind == "synthetic_spectral":
            mode = "series"
        elif f.kind == "grid_vector" and f.vector is not None:
            mode = "collocation"
        else:
            mode = "quadrature"

    if mode == "series":
        if kernel.name != "deriv2" or f.kind != "synthetic_spectral":
            raise ValueError("series mode needs deriv2 and a spectral solution")
        c = f.coefficients()
        sigma = (np.pi * np.arange(1, len(c) + 1)) ** -2.0
        return lambda grid: sine_series(sigma * c, grid.points)

    if mode == "collocation":
        from .quadrature_svd import collocation_matrix

        def src(grid: GridSpec) -> np.ndarray:
            if grid.scheme != kernel.collocation:
                raise ValueError(f"{kernel.name} collocation rows use the {kernel.collocation} grid")
            return collocation_matrix(kernel, grid.m) @ f.grid_vector(grid.m)

        return src

    if mode == "quadrature":
        from .quadrature import apply_kernel

        return lambda grid: apply_kernel(kernel, f, grid.points, breakpoints=f.breakpoints)

    raise ValueError(f"unknown exact-data mode {mode!r}")


def sample_noisy(
    kernel: Kernel,
    f: TrueSolution,
    grid: GridSpec,
    delta: float,
    seed: int,
    distribution: str = "gaussian",
    run_index: int = 0,
    exact_mode: str = "auto",
    exact: np.ndarray | None = None,
) -> NoisySample:
    """Draw g(xi_l) + delta Z_l on ``grid``.

    The noise comes from the Philox substream (seed, run_index).  Pass
    ``exact`` to reuse precomputed exact data across runs.
    """
    if not delta >= 0:
        raise ValueError("delta must be nonnegative")
    src = exact_source(kernel, f, exact_mode)
    if exact is None:
        exact = src(grid)
    exact = np.asarray(exact, dtype=float)
    if exact.shape != (grid.m,):
        raise ValueError("exact data does not match the grid")
    z = draw_noise(grid.m, make_rng(seed, run_index), distribution)
    return NoisySample(
        grid=grid,
        exact=exact,
        noisy=exact + delta * z,
        delta=float(delta),
        seed=int(seed),
        distribution=distribution,
        run_index=int(run_index),
        exact_source=src,
    )


def block_mean(values: np.ndarray, o: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if o < 1 or len(values) % o:
        raise ValueError(f"averaging factor {o} does not divide {len(values)}")
    if o == 1:
        return values.copy()
    return values.reshape(-1, o).mean(axis=1)


def average(sample: NoisySample, o: int, exact: np.ndarray | None = None) -> NoisySample:
    """Block means of o consecutive noisy entries on the coarse grid m/o.

    Exact values are re-evaluated on the coarse grid rather than averaged.
    """
    if int(o) != o or o < 1 or sample.grid.m % o:
        raise ValueError(f"averaging factor {o!r} does not divide m={sample.grid.m}")
    o = int(o)
    if o == 1:
        return sample
    grid = make_grid(sample.grid.m // o, sample.grid.scheme)
    if exact is None:
        if sample.exact_source is None:
            raise ValueError("sample has no exact-data source for the coarse grid")
        exact = sample.exact_source(grid)
    return replace(
        sample,
        grid=grid,
        exact=np.asarray(exact, dtype=float),
        noisy=block_mean(sample.noisy, o),
        o=sample.o * o,
    )


def divisors(m: int) -> list[int]:
    small = [d for d in range(1, math.isqrt(m) + 1) if m % d == 0]
    return sorted(set(small + [m // d for d in small]))


@dataclass(frozen=True)
class AveragingPlan:
    o: int
    m_o: int
    admissible_set: tuple[int, ...]


def admissible_averaging(m: int, delta: float, rho: float) -> AveragingPlan:
    """Divisors o of m with o <= max(sqrt((m+1) delta^2 / rho^2), 1); o is the largest."""
    if m < 1:
        raise ValueError("m must be positive")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not delta >= 0:
        raise ValueError("delta must be nonnegative")
    bound = max(math.sqrt((m + 1) * delta**2 / rho**2), 1.0)
    # Guard the comparison against rounding in the square root.
    admissible = tuple(d for d in divisors(m) if d <= bound * (1 + 1e-12))
    o = admissible[-1]
    return AveragingPlan(o=o, m_o=m // o, admissible_set=admissible)


def level_ladder(m: int, a: int = 4, n0: int = 2) -> tuple[int, ...]:
    """Levels a^n0, ..., a^n = m, coarsest first."""
    n = round(math.log(m, a))
    if a**n != m:
        raise ValueError(f"m={m} is not a power of {a}")
    if not 0 <= n0 <= n:
        raise ValueError("n0 must lie in [0, n]")
    return tuple(a**e for e in range(n0, n + 1))


class AprioriLevel(NamedTuple):
    o_raw: float
    m_o: int


def apriori_factor(
    m: int,
    delta: float,
    g_prime_norm: float,
    levels: Sequence[int] | None = None,
    a: int = 4,
) -> AprioriLevel:
    """Balance bias |g'|^2/m_o against averaged variance: o = (m^2 delta^2/|g'|^2)^(1/3).

    The snapped level is the ladder entry closest to m/o on a log scale.
    """
    if not g_prime_norm > 0:
        raise ValueError("g_prime_norm must be positive")
    o_raw = (m**2 * delta**2 / g_prime_norm**2) ** (1.0 / 3.0)
    if levels is None:
        levels = level_ladder(m, a, n0=min(2, round(math.log(m, a))))
    levels = np.asarray(sorted(levels), dtype=float)
    if o_raw == 0:
        return AprioriLevel(0.0, int(levels[-1]))
    target = math.log(m) - math.log(o_raw)
    pick = int(np.argmin(np.abs(np.log(levels) - target)))
    return AprioriLevel(float(o_raw), int(levels[pick]))


def delta_from_snr(g_norm: float, m: int, snr: float) -> float:
    """Noise level for SNR = |g| / (sqrt(m) delta), |g| the Euclidean norm of exact grid data."""
    if not snr > 0:
        raise ValueError("snr must be positive")
    if m < 1:
        raise ValueError("m must be positive")
    return g_norm / (math.sqrt(m) * snr)
