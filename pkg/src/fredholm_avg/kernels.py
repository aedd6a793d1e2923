"""Integral kernels and benchmark solutions on the unit interval.

Three kernels are provided: the Green's function of the second derivative
(``deriv2``), a gravity surveying kernel and a Volterra heat kernel.  The
gravity and heat problems follow the conventions of Hansen's Regularization
Tools so that grid solutions and right-hand sides match the toolbox.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

KernelFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Row collocation conventions understood by the quadrature path.
COLLOCATION_SCHEMES = ("midpoint", "right_endpoint")


@dataclass(frozen=True, eq=False)
class Kernel:
    """An integral kernel kappa(x, y) on [0, 1]^2.

    ``smoothness_bound`` is C_K, the supremum of all partial derivatives of
    total order at most two.  ``collocation`` selects where the rows of the
    quadrature matrix are evaluated; column nodes are always midpoints.
    """

    name: str
    eval: KernelFunc
    smoothness_bound: float
    symmetric: bool
    volterra: bool = False
    collocation: str = "midpoint"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.collocation not in COLLOCATION_SCHEMES:
            raise ValueError(f"unknown collocation scheme {self.collocation!r}")
        if not self.smoothness_bound >= 0:
            raise ValueError("smoothness_bound must be nonnegative")

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.eval(x, y)

    @property
    def kinks(self) -> bool:
        """True when kappa(x, .) has a derivative jump at y = x."""
        return self.name == "deriv2"


def estimate_smoothness_bound(func: KernelFunc, n: int = 201, h: float = 1e-4) -> float:
    """Max of |d^a_x d^b_y kappa| (a + b <= 2) on an n x n grid by central differences."""
    t = np.linspace(0.0, 1.0, n)
    x, y = np.meshgrid(t, t, indexing="ij")
    f = func(x, y)
    fx = (func(x + h, y) - func(x - h, y)) / (2 * h)
    fy = (func(x, y + h) - func(x, y - h)) / (2 * h)
    fxx = (func(x + h, y) - 2 * f + func(x - h, y)) / h**2
    fyy = (func(x, y + h) - 2 * f + func(x, y - h)) / h**2
    fxy = (func(x + h, y + h) - func(x + h, y - h) - func(x - h, y + h) + func(x - h, y - h)) / (4 * h**2)
    return float(max(np.max(np.abs(d)) for d in (f, fx, fy, fxx, fyy, fxy)))


def _deriv2(x, y):
    return np.minimum(x * (1 - y), y * (1 - x))


def deriv2_kernel() -> Kernel:
    """Green's function of -u'' with homogeneous Dirichlet conditions.

    The kernel is only Lipschitz, so C_K is set to 1, the bound on |kappa| and
    its first derivatives almost everywhere.
    """
    return Kernel(name="deriv2", eval=_deriv2, smoothness_bound=1.0, symmetric=True)


def gravity_kernel(d: float = 0.25) -> Kernel:
    """Vertical component of a gravity field from a mass layer at depth ``d``."""
    if not d > 0:
        raise ValueError("depth d must be positive")

    def func(s, t):
        return d * (d**2 + (s - t) ** 2) ** -1.5

    return Kernel(
        name="gravity",
        eval=func,
        smoothness_bound=estimate_smoothness_bound(func),
        symmetric=True,
        params={"d": float(d)},
    )


def heat_kernel(kappa_param: float = 1.0) -> Kernel:
    """Inverse heat conduction kernel h(s - t), zero for s <= t.

    Rows of the collocation matrix sit at the right interval endpoints, which
    is how the toolbox discretizes this Volterra problem.
    """
    if not kappa_param > 0:
        raise ValueError("kappa_param must be positive")
    c = 1.0 / (2 * kappa_param * np.sqrt(np.pi))
    q = 1.0 / (4 * kappa_param**2)

    def func(s, t):
        u = np.asarray(s - t, dtype=float)
        pos = u >= 1e-12
        safe = np.where(pos, u, 1.0)
        return np.where(pos, c * safe**-1.5 * np.exp(-q / safe), 0.0)

    return Kernel(
        name="heat",
        eval=func,
        smoothness_bound=estimate_smoothness_bound(func),
        symmetric=False,
        volterra=True,
        collocation="right_endpoint",
        params={"kappa_param": float(kappa_param)},
    )


KERNELS: dict[str, Callable[..., Kernel]] = {
    "deriv2": deriv2_kernel,
    "gravity": gravity_kernel,
    "heat": heat_kernel,
}

KERNEL_HINTS = {
    "deriv2": "no parameters; closed-form spectral path; solutions need --s",
    "gravity": "d=0.25 (depth); midpoint collocation",
    "heat": "kappa_param=1 (diffusivity); right-endpoint collocation",
}


def get_kernel(name: str, **params) -> Kernel:
    try:
        factory = KERNELS[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {sorted(KERNELS)}") from None
    return factory(**params)


@dataclass(frozen=True, eq=False)
class TrueSolution:
    """The exact unknown f.

    kind is one of
      * ``synthetic_spectral``: f = sum_j coeff_j sqrt(2) sin(j pi x), j <= D,
        with coeff_j = (pi j)^(-decay);
      * ``grid_vector``: a discrete solution generator ``vector(n)`` plus an
        optional continuous limit ``func``;
      * ``closure``: a plain callable ``func``.
    """

    kind: str
    smoothness_s: float | None = None
    D: int | None = None
    values: np.ndarray | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = None
    vector: Callable[[int], np.ndarray] | None = None
    decay: float | None = None
    breakpoints: tuple[float, ...] = ()
    name: str = ""

    def __post_init__(self):
        if self.kind == "synthetic_spectral":
            if self.smoothness_s is None or not self.smoothness_s > 0:
                raise ValueError("synthetic_spectral requires smoothness_s > 0")
            if self.D is None or self.D < 1:
                raise ValueError("synthetic_spectral requires D >= 1")
        elif self.kind == "grid_vector":
            if self.vector is None and self.values is None:
                raise ValueError("grid_vector requires a generator or values")
        elif self.kind == "closure":
            if self.func is None:
                raise ValueError("closure requires func")
        else:
            raise ValueError(f"unknown solution kind {self.kind!r}")

    def coefficients(self) -> np.ndarray:
        """Coefficients (f, v_j) in the sine basis, j = 1..D."""
        if self.kind != "synthetic_spectral":
            raise TypeError("coefficients are only defined for spectral solutions")
        j = np.arange(1, self.D + 1)
        return (np.pi * j) ** -self.decay

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "synthetic_spectral":
            return sine_series(self.coefficients(), x)
        if self.func is None:
            raise TypeError("this solution has no continuous representation")
        return self.func(x)

    def norm(self) -> float:
        """L2(0, 1) norm; exact for spectral solutions."""
        if self.kind == "synthetic_spectral":
            return float(np.sqrt(np.sum(self.coefficients() ** 2)))
        from .quadrature import l2_norm

        return l2_norm(self, breakpoints=self.breakpoints)

    def grid_vector(self, n: int) -> np.ndarray:
        """Discrete solution of size n (midpoint samples if no generator)."""
        if self.vector is not None:
            return self.vector(n)
        if self.values is not None:
            if len(self.values) != n:
                raise ValueError(f"stored values have size {len(self.values)}, not {n}")
            return np.asarray(self.values, dtype=float)
        return self(midpoints(n))


def midpoints(n: int) -> np.ndarray:
    return (2 * np.arange(1, n + 1) - 1) / (2 * n)


def sine_series(coeffs: np.ndarray, x: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    """Evaluate sum_j coeffs[j-1] sqrt(2) sin(j pi x)."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    j = np.arange(1, len(coeffs) + 1)
    out = np.empty_like(flat)
    step = max(1, chunk // max(len(j), 1))
    for a in range(0, len(flat), step):
        xs = flat[a : a + step]
        out[a : a + step] = np.sqrt(2) * np.sin(np.pi * np.outer(xs, j)) @ coeffs
    return out.reshape(x.shape)


def synthetic_solution(s: float, D: int = 5000, decay: float | None = None) -> TrueSolution:
    """f = sum_{j<=D} (pi j)^(-decay) sqrt(2) sin(j pi x); decay defaults to 2s.

    With decay = 2s the coefficients are sigma_j^s.  The benchmark tables use
    sigma_j^(2s), see :func:`table_solution`.
    """
    if decay is None:
        decay = 2.0 * s
    return TrueSolution(kind="synthetic_spectral", smoothness_s=float(s), D=int(D), decay=float(decay), name=f"spectral_s{s:g}")


def table_solution(s: float, D: int = 5000) -> TrueSolution:
    """Spectral solution with coefficients (pi j)^(-4s), as in the benchmark tables."""
    return synthetic_solution(s, D, decay=4.0 * s)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def gravity_vector(n: int, example: int = 2) -> np.ndarray:
    """Toolbox gravity solution of size n, indexed by i = 1..n."""
    t = midpoints(n)
    if example == 1:
        return np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)
    nt = _round_half_up(n / 3)
    x = np.zeros(n)
    i = np.arange(1, n + 1, dtype=float)
    if example == 2:
        nn = _round_half_up(n * 7 / 8)
        x[:nt] = 2 / nt * i[:nt]
        x[nt:nn] = ((2 * nn - nt) - i[nt:nn]) / (nn - nt)
        x[nn:] = (n - i[nn:]) / (n - nn)
        return x
    if example == 3:
        x[:nt] = 2.0
        return x
    raise ValueError("gravity example must be 1, 2 or 3")


def _gravity2_func(t):
    t = np.asarray(t, dtype=float)
    return np.where(t <= 1 / 3, 6 * t, np.where(t <= 7 / 8, (17 / 12 - t) * 24 / 13, 8 * (1 - t)))


def gravity_solution(example: int = 2) -> TrueSolution:
    """Gravity benchmark solution; example 2 is a piecewise linear profile."""
    if example == 1:
        func = lambda t: np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)  # noqa: E731
        bps: tuple[float, ...] = ()
    elif example == 2:
        func, bps = _gravity2_func, (1 / 3, 7 / 8)
    elif example == 3:
        func = lambda t: np.where(np.asarray(t) <= 1 / 3, 2.0, 0.0)  # noqa: E731
        bps = (1 / 3,)
    else:
        raise ValueError("gravity example must be 1, 2 or 3")
    return TrueSolution(
        kind="grid_vector",
        func=func,
        vector=lambda n: gravity_vector(n, example),
        breakpoints=bps,
        name=f"gravity{example}",
    )


def _heat_func(t):
    # Profile on [0, 1/2] in the stretched variable tau = 20 t, zero beyond.
    tau = 20 * np.asarray(t, dtype=float)
    out = np.where(tau < 2, 0.75 * tau**2 / 4, 0.0)
    out = np.where((tau >= 2) & (tau < 3), 0.75 + (tau - 2) * (3 - tau), out)
    out = np.where(tau >= 3, 0.75 * np.exp(-(tau - 3) * 2), out)
    return np.where(t <= 0.5, out, 0.0)


def heat_vector(n: int) -> np.ndarray:
    """Toolbox heat solution of size n, sampled at i/n for i <= n/2."""
    x = np.zeros(n)
    half = n // 2
    x[:half] = _heat_func(np.arange(1, half + 1) / n)
    return x


def heat_solution() -> TrueSolution:
    return TrueSolution(kind="grid_vector", func=_heat_func, vector=heat_vector, breakpoints=(0.1, 0.15, 0.5), name="heat")


def default_solution(problem: str, s: float | None = None) -> TrueSolution:
    """Benchmark solution used for a named problem."""
    if problem == "deriv2":
        if s is None:
            raise ValueError("deriv2 requires a smoothness parameter s")
        return table_solution(s)
    if problem == "gravity":
        return gravity_solution(2)
    if problem == "heat":
        return heat_solution()
    raise ValueError(f"unknown problem {problem!r}")
