"""Synthetic site networks and counts drawn from the model's own generative process.

Latent blocks are sampled from their (constrained) GMRF priors, combined into
a log-rate surface, and pushed through a Poisson draw.  Optional corruption
mimics real detector pathologies: a random missing mask, a zig-zag site whose
alternate bins read low, and a stuck-low cell for imputation studies.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .chol import cholesky_matrix
from .errors import InvalidInputError
from .frames import CountFrame
from .graphs import SiteGraph
from .structures import (
    PrecisionStructure,
    build_icar_structure,
    build_seasonal_structure,
)

COUNT_CAP = 1_000_000
DEFAULT_START = dt.date(2024, 1, 1)  # a Monday, so weekday grids start clean


@dataclass(frozen=True)
class SimConfig:
    """Generator settings; block precisions are on the natural (not log) scale."""

    n_sites: int = 10
    n_days: int = 14
    period: int = 12
    intercept: float = float(np.log(300.0))
    tau_spatial_structured: float = 4.0
    tau_spatial_iid: float = 25.0
    tau_seasonal: float = 2.0
    tau_temporal_iid: float = 100.0
    tau_interaction: float | None = None
    missing_rate: float = 0.0
    weekdays_only: bool = False
    start_date: dt.date = DEFAULT_START
    zigzag_site: int | None = None
    zigzag_factor: float = 0.3
    stuck_low: bool = False
    stuck_low_cell: tuple[int, int, int] | None = None  # (site, day_index, bin)
    stuck_low_factor: float = 0.25
    jitter: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.missing_rate <= 1.0:
            raise InvalidInputError(f"missing rate {self.missing_rate} outside [0, 1]")
        for name in ("tau_spatial_structured", "tau_spatial_iid", "tau_seasonal",
                     "tau_temporal_iid"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.tau_interaction is not None and self.tau_interaction <= 0:
            raise InvalidInputError("tau_interaction must be positive when set")


@dataclass(frozen=True)
class GroundTruth:
    """Everything needed to score a fit against the generator."""

    lam: np.ndarray                     # true rate per frame row
    counts: np.ndarray                  # Poisson draws before mask/faults
    latent: dict[str, np.ndarray]
    log_precisions: dict[str, float]
    fault_cells: list[tuple[int, int, int, float, float]]  # site, day, bin, injected, true rate
    day_dates: tuple[dt.date, ...]


def sample_graph(n_sites: int, seed: int) -> SiteGraph:
    """Connected road-network-like graph: a chain plus a few random chords."""
    if n_sites < 2:
        raise InvalidInputError(f"need at least 2 sites, got {n_sites}")
    rng = np.random.default_rng(seed)
    edges = {(i, i + 1) for i in range(1, n_sites)}
    n_chords = n_sites // 4
    attempts = 0
    while n_chords > 0 and attempts < 50 * n_sites:
        attempts += 1
        i, j = sorted(rng.integers(1, n_sites + 1, size=2).tolist())
        if i == j or (i, j) in edges:
            continue
        edges.add((i, j))
        n_chords -= 1
    return SiteGraph(n_sites=n_sites, edges=frozenset(edges))


def _sample_gmrf(structure: PrecisionStructure, tau: float, jitter: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Draw from the constrained intrinsic prior at precision tau.

    The jitter rides inside the scaling, tau*(R + jitter*I): identical law on
    the constrained directions but well conditioned for any tau.
    """
    q = (tau * (structure.entries + jitter * sp.eye(structure.dim))).tocsc()
    factor = cholesky_matrix(q)
    z = rng.standard_normal(structure.dim)
    w = spsolve_triangular(factor.lower_factor.T.tocsr(), z, lower=False)
    x = np.empty(structure.dim)
    x[factor.permutation] = w
    cons = structure.constraints
    if cons.shape[0]:
        v = factor.solve(cons.T)
        if v.ndim == 1:
            v = v[:, None]
        s = cons @ v
        x = x - v @ np.linalg.solve(s, cons @ x)
    return x


def _grid_dates(cfg: SimConfig) -> list[dt.date]:
    dates = []
    d = cfg.start_date
    while len(dates) < cfg.n_days:
        if not cfg.weekdays_only or d.weekday() < 5:
            dates.append(d)
        d += dt.timedelta(days=1)
    return dates


def sample_counts(cfg: SimConfig, graph: SiteGraph) -> tuple[CountFrame, GroundTruth]:
    """Draw a full (site x day x bin) panel of counts plus its generating truth."""
    if graph.n_sites != cfg.n_sites:
        raise InvalidInputError("graph size does not match the configuration")
    rng = np.random.default_rng(cfg.seed)
    n, p = cfg.n_sites, cfg.period
    day_dates = _grid_dates(cfg)
    T = p * cfg.n_days

    mu = _sample_gmrf(build_icar_structure(graph), cfg.tau_spatial_structured, cfg.jitter, rng)
    ups = rng.standard_normal(n) / np.sqrt(cfg.tau_spatial_iid)
    gam = _sample_gmrf(build_seasonal_structure(T, p), cfg.tau_seasonal, cfg.jitter, rng)
    phi = rng.standard_normal(T) / np.sqrt(cfg.tau_temporal_iid)
    latent = {"intercept": np.array([cfg.intercept]), "spatial_structured": mu,
              "spatial_iid": ups, "temporal_seasonal": gam, "temporal_iid": phi}
    log_precisions = {
        "spatial_structured": float(np.log(cfg.tau_spatial_structured)),
        "spatial_iid": float(np.log(cfg.tau_spatial_iid)),
        "temporal_seasonal": float(np.log(cfg.tau_seasonal)),
        "temporal_iid": float(np.log(cfg.tau_temporal_iid)),
    }
    delta = None
    if cfg.tau_interaction is not None:
        delta = rng.standard_normal(n * T) / np.sqrt(cfg.tau_interaction)
        latent["interaction"] = delta
        log_precisions["interaction"] = float(np.log(cfg.tau_interaction))

    dates_col, bins_col, sites_col = [], [], []
    eta = []
    for day_idx, date in enumerate(day_dates):
        for b in range(p):
            t = day_idx * p + b
            for s in range(1, n + 1):
                dates_col.append(date)
                bins_col.append(b)
                sites_col.append(s)
                e = cfg.intercept + mu[s - 1] + ups[s - 1] + gam[t] + phi[t]
                if delta is not None:
                    e += delta[(s - 1) * T + t]
                eta.append(e)
    eta = np.array(eta)
    lam = np.exp(eta)
    counts = np.minimum(rng.poisson(lam).astype(float), COUNT_CAP)

    values = counts.copy()
    sites_arr = np.array(sites_col, dtype=int)
    bins_arr = np.array(bins_col, dtype=int)
    dates_arr = np.array(dates_col, dtype=object)
    day_index = {d: i for i, d in enumerate(day_dates)}

    fault_cells: list[tuple[int, int, int, float, float]] = []
    if cfg.zigzag_site is not None:
        zig = (sites_arr == cfg.zigzag_site) & (bins_arr % 2 == 1)
        values[zig] = np.floor(values[zig] * cfg.zigzag_factor)
        for i in np.where(zig)[0]:
            fault_cells.append((int(sites_arr[i]), day_index[dates_arr[i]],
                                int(bins_arr[i]), float(values[i]), float(lam[i])))
    if cfg.stuck_low:
        cell = cfg.stuck_low_cell or _pick_monotone_cell(lam, sites_arr, bins_arr,
                                                         dates_arr, day_dates, p)
        s, d_idx, b = cell
        row = np.where((sites_arr == s) & (bins_arr == b)
                       & (dates_arr == day_dates[d_idx]))[0]
        if row.size != 1:
            raise InvalidInputError(f"stuck-low cell {cell} not found in the grid")
        i = int(row[0])
        injected = max(1.0, float(np.floor(lam[i] * cfg.stuck_low_factor)))
        values[i] = injected
        fault_cells.append((s, d_idx, b, injected, float(lam[i])))

    if cfg.missing_rate > 0:
        mask = rng.random(len(values)) < cfg.missing_rate
        values[mask] = np.nan

    frame = CountFrame(dates=dates_arr, time_bins=bins_arr, sites=sites_arr,
                       values=values, bins_per_day=p)
    truth = GroundTruth(lam=lam, counts=counts, latent=latent,
                        log_precisions=log_precisions, fault_cells=fault_cells,
                        day_dates=tuple(day_dates))
    return frame, truth


def _pick_monotone_cell(lam, sites_arr, bins_arr, dates_arr, day_dates, p):
    """Middle-of-a-monotone-stretch cell, so adjacent hours bracket the true rate."""
    best = None
    best_gap = -1.0
    mid_day = day_dates[len(day_dates) // 2]
    for s in sorted(set(sites_arr.tolist())):
        sel = (sites_arr == s) & (dates_arr == mid_day)
        rates = np.full(p, np.nan)
        rates[bins_arr[sel]] = lam[sel]
        for b in range(1, p - 1):
            lo, mid, hi = rates[b - 1], rates[b], rates[b + 1]
            if np.isfinite([lo, mid, hi]).all() and (lo < mid < hi or lo > mid > hi):
                gap = abs(hi - lo)
                if gap > best_gap:
                    best_gap = gap
                    best = (int(s), day_dates.index(mid_day), b)
    if best is None:
        raise InvalidInputError("no monotone three-hour stretch found for the stuck-low fault")
    return best


def write_truth(truth: GroundTruth, frame: CountFrame, out_dir: str | Path) -> None:
    """Persist the generating truth next to the observed frame."""
    out = Path(out_dir)
    frame.with_values(truth.lam).write_csv(out / "truth_lambda.csv")
    frame.with_values(truth.counts).write_csv(out / "truth_counts.csv")
    payload = {
        "log_precisions": truth.log_precisions,
        "intercept": float(truth.latent["intercept"][0]),
        "fault_cells": [list(c) for c in truth.fault_cells],
        "day_dates": [d.isoformat() for d in truth.day_dates],
    }
    with open(out / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
