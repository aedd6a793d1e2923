"""Monte-Carlo harness for the averaging benchmarks.

For each SNR the noise is drawn once per run at the full resolution m and
shared by every level of the ladder; coarse data are block averages of that
single draw.  Cell values are means over runs.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .adaptive import DiscrepancyConfig, choose_level, k_from_tails
from .kernels import TrueSolution, default_solution, get_kernel, midpoints
from .quadrature_svd import build_collocation, collocation_matrix, residual_tails
from .sampling import apriori_factor, average, delta_from_snr, make_grid, sample_noisy
from .spectral_deriv2 import (
    deriv2_spectral,
    error_profile,
    image_derivative_norm,
    image_second_derivative_sup,
    image_values,
)

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (4096, 1024, 256, 64, 16)
DEFAULT_SNRS = (512.0, 64.0, 8.0, 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    solution: TrueSolution | None = None
    s: float | None = None
    m: int = 4096
    levels: tuple[int, ...] = DEFAULT_LEVELS
    snr_list: tuple[float, ...] = DEFAULT_SNRS
    runs: int = 50
    tau: float = 1.5
    seed: int = 0
    err_sys_variant: str = "gprime"
    D: int | None = None
    distribution: str = "gaussian"
    a: int = 4

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be positive")
        for lv in self.levels:
            if lv < 1 or self.m % lv:
                raise ValueError(f"level {lv} does not divide m={self.m}")
        if self.problem == "deriv2" and self.solution is None and self.s is None:
            raise ValueError("deriv2 experiments need s or an explicit solution")

    @property
    def resolved_solution(self) -> TrueSolution:
        return self.solution if self.solution is not None else default_solution(self.problem, self.s)

    @property
    def spline_size(self) -> int:
        return self.D if self.D is not None else 2 * self.m

    def echo(self) -> dict:
        return {
            "problem": self.problem,
            "solution": self.resolved_solution.name,
            "s": self.s,
            "m": self.m,
            "levels": list(self.levels),
            "snr_list": list(self.snr_list),
            "runs": self.runs,
            "tau": self.tau,
            "seed": self.seed,
            "err_sys_variant": self.err_sys_variant,
            "D": self.spline_size if self.problem != "deriv2" else None,
            "distribution": self.distribution,
            "rng": "Philox(SeedSequence([seed, run_index]))",
            "version": __version__,
        }


@dataclass
class Cell:
    snr: float
    m_o: int
    e_opt: float
    k_opt: float
    e_dp: float
    k_dp: float
    k_opt_of_mean: int
    apriori: bool = False

    @property
    def k_opt_flag(self) -> bool:
        """True when mean-of-argmins and argmin-of-mean differ by more than 1."""
        return abs(self.k_opt - self.k_opt_of_mean) > 1


@dataclass
class ExperimentReport:
    cells: list[Cell] = field(default_factory=list)
    apriori_level: dict[float, int] = field(default_factory=dict)
    apriori_o_raw: dict[float, float] = field(default_factory=dict)
    chosen_levels: dict[float, list[int]] = field(default_factory=dict)
    chosen_k: dict[float, list[int]] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def cell(self, snr: float, m_o: int) -> Cell:
        for c in self.cells:
            if c.snr == snr and c.m_o == m_o:
                return c
        raise KeyError((snr, m_o))

    def to_dict(self) -> dict:
        return {
            "cells": [asdict(c) for c in self.cells],
            "apriori_level": {repr(k): v for k, v in self.apriori_level.items()},
            "apriori_o_raw": {repr(k): v for k, v in self.apriori_o_raw.items()},
            "chosen_levels": {repr(k): v for k, v in self.chosen_levels.items()},
            "chosen_k": {repr(k): v for k, v in self.chosen_k.items()},
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        keyed = lambda name: {float(k): v for k, v in d.get(name, {}).items()}  # noqa: E731
        return cls(
            cells=[Cell(**c) for c in d.get("cells", [])],
            apriori_level=keyed("apriori_level"),
            apriori_o_raw=keyed("apriori_o_raw"),
            chosen_levels=keyed("chosen_levels"),
            chosen_k=keyed("chosen_k"),
            metadata=d.get("metadata", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))


def spline_project(values: np.ndarray, D: int) -> np.ndarray:
    """Linear spline through (0, 0), the midpoint samples and (1, 0), sampled at D midpoints."""
    values = np.asarray(values, dtype=float)
    m_o = len(values)
    if D < m_o:
        raise ValueError("D must be at least the number of samples")
    xp = np.concatenate(([0.0], midpoints(m_o), [1.0]))
    fp = np.concatenate(([0.0], values, [0.0]))
    return np.interp(midpoints(D), xp, fp)


def grid_errors(est, x_exact_mo: np.ndarray, x_exact_D: np.ndarray, D: int) -> tuple[float, float, float]:
    """(e_k, e_disc, total) for a grid estimate (or a plain value vector)."""
    values = np.asarray(getattr(est, "values", est), dtype=float)
    x_exact_mo = np.asarray(x_exact_mo, dtype=float)
    x_exact_D = np.asarray(x_exact_D, dtype=float)
    if values.shape != x_exact_mo.shape:
        raise ValueError("estimate and exact grid vectors differ in size")
    if len(x_exact_D) != D:
        raise ValueError("fine exact vector must have length D")
    m_o = len(values)
    e_k = float(np.linalg.norm(values - x_exact_mo) / math.sqrt(m_o))
    e_disc = float(np.linalg.norm(spline_project(x_exact_mo, D) - x_exact_D) / math.sqrt(D))
    return e_k, e_disc, math.hypot(e_k, e_disc)


class _Deriv2Level:
    """Per-level state for the closed-form path."""

    def __init__(self, f: TrueSolution, level: int, m: int):
        self.level = level
        self.o = m // level
        self.spectral = deriv2_spectral(level)
        self.exact = image_values(f, self.spectral.grid.points)
        self.f = f
        self.f_norm = f.norm()

    def evaluate(self, sample, cfg: DiscrepancyConfig):
        avg = average(sample, self.o, exact=self.exact)
        errs = error_profile(avg, self.f, self.spectral) / self.f_norm
        tails = residual_tails(self.spectral.projections(avg.noisy))
        kdp = k_from_tails(tails, cfg.threshold(self.level, self.o), cap=self.level)
        return errs, kdp


class _GridLevel:
    """Per-level state for the collocation path."""

    def __init__(self, kernel, f: TrueSolution, level: int, m: int, D: int, x_D: np.ndarray):
        self.level = level
        self.o = m // level
        self.sys = build_collocation(kernel, level)
        x = f.grid_vector(level)
        self.exact = self.sys.A @ x
        self.rank = self.sys.rank
        self.px = self.sys.z[:, : self.rank].T @ x
        self.xnorm2 = float(x @ x)
        self.e_disc = float(np.linalg.norm(spline_project(x, D) - x_D) / math.sqrt(D))
        self.scale = float(np.linalg.norm(x_D) / math.sqrt(D))

    def evaluate(self, sample, cfg: DiscrepancyConfig):
        avg = average(sample, self.o, exact=self.exact)
        proj = self.sys.projections(avg.noisy)
        c = proj[: self.rank] / self.sys.sigma[: self.rank]
        # |sum_{j<=k} c_j z_j - x|^2 in the orthonormal z basis
        ek2 = self.xnorm2 + np.concatenate(([0.0], np.cumsum(c * c - 2 * c * self.px)))
        ek2 = np.maximum(ek2, 0.0) / self.level
        errs = np.sqrt(ek2 + self.e_disc**2) / self.scale
        kdp = k_from_tails(residual_tails(proj), cfg.threshold(self.level, self.o), cap=self.rank)
        return errs, kdp


def _finite_difference_norms(b: np.ndarray) -> tuple[float, float]:
    """||g'||_L2 and ||g''||_inf from grid data with spacing 1/m."""
    m = len(b)
    gp = math.sqrt(m * float(np.sum(np.diff(b) ** 2)))
    gpp = float(np.max(np.abs(np.diff(b, 2)))) * m**2 if m > 2 else 0.0
    return gp, gpp


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every (SNR, level) cell and collect means over runs."""
    f = cfg.resolved_solution
    levels = sorted(set(cfg.levels))  # coarse to fine
    m = cfg.m

    if cfg.problem == "deriv2":
        grid = make_grid(m, "uniform_interior")
        kernel = get_kernel("deriv2")
        exact_m = image_values(f, grid.points)
        g_prime = image_derivative_norm(f)
        g_pp = image_second_derivative_sup(f)
        states = {lv: _Deriv2Level(f, lv, m) for lv in levels}
    else:
        kernel = get_kernel(cfg.problem)
        D = cfg.spline_size
        x_D = f.grid_vector(D)
        states = {}
        for lv in levels:
            log.info("building %s collocation at m_o=%d", cfg.problem, lv)
            states[lv] = _GridLevel(kernel, f, lv, m, D, x_D)
        grid = make_grid(m, kernel.collocation)
        exact_m = states[m].exact if m in states else collocation_matrix(kernel, m) @ f.grid_vector(m)
        g_prime, g_pp = _finite_difference_norms(exact_m)

    report = ExperimentReport(metadata=cfg.echo())
    full_ladder = _is_full_ladder(levels, m, cfg.a)
    g_norm = float(np.linalg.norm(exact_m))

    for si, snr in enumerate(cfg.snr_list):
        delta = delta_from_snr(g_norm, m, snr)
        dcfg = DiscrepancyConfig(
            delta=delta, tau=cfg.tau, err_sys_variant=cfg.err_sys_variant, g_prime_norm=g_prime, g_pp_inf=g_pp
        )
        ap = apriori_factor(m, delta, g_prime, levels=levels)
        report.apriori_level[snr] = ap.m_o
        report.apriori_o_raw[snr] = ap.o_raw

        sums = {lv: np.zeros(4) for lv in levels}
        curves = {lv: 0.0 for lv in levels}
        chosen, chosen_k = [], []
        for r in range(cfg.runs):
            run_index = si * cfg.runs + r
            sample = sample_noisy(
                kernel, f, grid, delta, cfg.seed, cfg.distribution, run_index=run_index, exact=exact_m
            )
            kdps = []
            for lv in levels:
                try:
                    errs, kdp = states[lv].evaluate(sample, dcfg)
                except (np.linalg.LinAlgError, FloatingPointError) as exc:
                    raise RuntimeError(f"numerical failure at snr={snr}, m_o={lv}, run={r}: {exc}") from exc
                kopt = int(np.argmin(errs))
                sums[lv] += (errs[kopt], kopt, errs[kdp], kdp)
                curves[lv] = curves[lv] + errs
                kdps.append(kdp)
            if full_ladder:
                _, lv, k = choose_level(levels, kdps)
                chosen.append(lv)
                chosen_k.append(k)
        if full_ladder:
            report.chosen_levels[snr] = chosen
            report.chosen_k[snr] = chosen_k

        for lv in reversed(levels):
            e_opt, k_opt, e_dp, k_dp = (sums[lv] / cfg.runs).tolist()
            report.cells.append(
                Cell(
                    snr=float(snr),
                    m_o=lv,
                    e_opt=e_opt,
                    k_opt=k_opt,
                    e_dp=e_dp,
                    k_dp=k_dp,
                    k_opt_of_mean=int(np.argmin(curves[lv])),
                    apriori=lv == ap.m_o,
                )
            )
        log.info("snr=%g done (apriori level %d)", snr, ap.m_o)
    return report


def _is_full_ladder(levels, m, a) -> bool:
    if not levels or levels[-1] != m:
        return False
    return all(levels[i + 1] == a * levels[i] for i in range(len(levels) - 1)) and len(levels) > 1


def _fmt(x: float) -> str:
    return f"{x:.1e}"


def emit_table(report: ExperimentReport, fmt: str = "markdown") -> str:
    """Serialize a report as csv, json or a markdown table (a-priori column in bold)."""
    if fmt == "json":
        return report.to_json() + "\n"
    cells = sorted(report.cells, key=lambda c: (-c.snr, -c.m_o))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr", "m_o", "e_opt", "k_opt", "e_dp", "k_dp", "k_opt_of_mean", "apriori"])
        for c in cells:
            w.writerow([repr(c.snr), c.m_o, repr(c.e_opt), repr(c.k_opt), repr(c.e_dp), repr(c.k_dp), c.k_opt_of_mean, int(c.apriori)])
        return buf.getvalue()
    if fmt != "markdown":
        raise ValueError(f"unknown format {fmt!r}")

    levels = sorted({c.m_o for c in cells}, reverse=True)
    header = "| SNR | | " + " | ".join(f"m_o={lv}" for lv in levels) + " |"
    lines = [header, "|" + "---|" * (len(levels) + 2)]
    for snr in sorted({c.snr for c in cells}, reverse=True):
        row = {c.m_o: c for c in cells if c.snr == snr}
        for label, attr, fn in (
            ("e_opt", "e_opt", _fmt),
            ("k_opt", "k_opt", lambda v: str(round(v))),
            ("e_dp", "e_dp", _fmt),
            ("k_dp", "k_dp", lambda v: str(round(v))),
        ):
            vals = []
            for lv in levels:
                if lv not in row:
                    vals.append("")
                    continue
                text = fn(getattr(row[lv], attr))
                vals.append(f"**{text}**" if row[lv].apriori else text)
            lines.append(f"| {snr:g} | {label} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"
