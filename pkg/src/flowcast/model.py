"""Spatio-temporal count model: assembly, fitting, and prediction.

The latent field stacks an intercept, optional fixed-effect coefficients, a
structured-plus-iid spatial pair over the site graph, a seasonal-plus-iid pair
over the global time axis (period-length seasons replicated over days), and an
optional identity-structured space-time interaction.  Each observation row
loads one entry of every active block; counts enter through a Poisson
log-link (or a Gaussian identity link with known noise precision).
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, InvalidSpecError
from .frames import CountFrame
from .graphs import SiteGraph
from .inference import (
    GAUSSIAN_IDENTITY,
    POISSON_LOG_LINK,
    GaussianApprox,
    LatentGaussianProblem,
    eb_optimize,
    gamma_precision_hyperprior,
    gaussian_approximation,
    log_hyper_posterior,
    predictor_variances,
)
from .structures import (
    PrecisionStructure,
    build_icar_structure,
    build_iid_structure,
    build_seasonal_structure,
)

INTERACTION_NONE = "none"
INTERACTION_TYPE_I = "type1"
FAMILY_POISSON = "poisson"
FAMILY_GAUSSIAN = "gaussian"
STRATEGY_GAUSSIAN_EB = "gaussian_eb"

FIXED_EFFECT_PRECISION = 1e-6
DEFAULT_JITTER = 1e-6


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of the additive model and inference strategy."""

    intercept: bool = True
    fixed_effects: tuple[str, ...] = ()
    spatial: bool = True
    temporal_seasonal: bool = True
    period: int = 12
    temporal_iid: bool = True
    interaction: str = INTERACTION_NONE
    family: str = FAMILY_POISSON
    strategy: str = STRATEGY_GAUSSIAN_EB
    noise_precision: float = 1.0
    hyperprior_shape: float = 1.0
    hyperprior_rate: float = 5e-5
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        if self.period < 2:
            raise InvalidSpecError(f"season length must be >= 2, got {self.period}")
        if self.family not in (FAMILY_POISSON, FAMILY_GAUSSIAN):
            raise InvalidSpecError(f"unknown family {self.family!r}")
        if self.interaction not in (INTERACTION_NONE, INTERACTION_TYPE_I):
            raise InvalidSpecError(f"unknown interaction {self.interaction!r}")
        if self.strategy != STRATEGY_GAUSSIAN_EB:
            raise InvalidSpecError(f"unsupported strategy {self.strategy!r}")
        if self.interaction == INTERACTION_TYPE_I and not (self.spatial and self.temporal_iid):
            raise InvalidSpecError(
                "the identity-structured interaction needs both the spatial and the "
                "unstructured temporal component"
            )

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "ModelSpec":
        def flag(key: str, default: bool) -> bool:
            raw = cfg.get(key)
            if raw is None:
                return default
            return raw.strip().lower() in ("1", "true", "yes", "on")

        covs = tuple(c.strip() for c in cfg.get("covariates", "").split(",") if c.strip())
        return cls(
            intercept=flag("intercept", True),
            fixed_effects=covs,
            spatial=flag("spatial", True),
            temporal_seasonal=flag("temporal_seasonal", True),
            period=int(cfg.get("period", 12)),
            temporal_iid=flag("temporal_iid", True),
            interaction=cfg.get("interaction", INTERACTION_NONE).strip().lower(),
            family=cfg.get("family", FAMILY_POISSON).strip().lower(),
            strategy=cfg.get("strategy", STRATEGY_GAUSSIAN_EB).strip().lower(),
            noise_precision=float(cfg.get("noise_precision", 1.0)),
            hyperprior_shape=float(cfg.get("hyperprior_shape", 1.0)),
            hyperprior_rate=float(cfg.get("hyperprior_rate", 5e-5)),
            jitter=float(cfg.get("jitter", DEFAULT_JITTER)),
        )


@dataclass(frozen=True)
class LatentLayout:
    """Contiguous (name, offset, length) blocks covering the latent vector."""

    blocks: tuple[tuple[str, int, int], ...]

    @property
    def dim(self) -> int:
        if not self.blocks:
            return 0
        name, offset, length = self.blocks[-1]
        return offset + length

    def offset(self, name: str) -> int:
        for n, off, _ in self.blocks:
            if n == name:
                return off
        raise KeyError(name)

    def length(self, name: str) -> int:
        for n, _, ln in self.blocks:
            if n == name:
                return ln
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(n == name for n, _, _ in self.blocks)

    def slice(self, name: str) -> slice:
        off = self.offset(name)
        return slice(off, off + self.length(name))


@dataclass(frozen=True)
class ObservationKey:
    site_id: int
    day_index: int
    time_bin: int


@dataclass(frozen=True)
class FitResult:
    """Posterior summaries plus fitted counts for every row of the fit frame."""

    layout: LatentLayout
    latent_mean: np.ndarray
    latent_sd: np.ndarray
    psi_mode: np.ndarray
    hyper_names: tuple[str, ...]
    fitted: np.ndarray
    log_evidence: float
    frame: CountFrame
    eta_mean: np.ndarray
    eta_var: np.ndarray
    day_dates: tuple[dt.date, ...]
    family: str
    _approx: GaussianApprox | None = field(repr=False, default=None)
    _design: sp.csr_matrix | None = field(repr=False, default=None)

    def fitted_sd(self) -> np.ndarray:
        """Posterior sd of the fitted value on the response scale."""
        if self.family == FAMILY_POISSON:
            return self.fitted * np.sqrt(np.expm1(self.eta_var))
        return np.sqrt(self.eta_var)

    def row_index(self) -> dict[tuple[int, int, int], int]:
        date_pos = {d: i for i, d in enumerate(self.day_dates)}
        return {
            (int(s), date_pos[d], int(t)): i
            for i, (d, t, s) in enumerate(zip(self.frame.dates, self.frame.time_bins, self.frame.sites))
        }

    def write_csv(self, path: str | Path) -> None:
        sd = self.fitted_sd()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["Date", "TimeBin", "ID", "Observed", "Fitted", "Sd"])
            for i, (d, t, s) in enumerate(
                zip(self.frame.dates, self.frame.time_bins, self.frame.sites)
            ):
                obs = self.frame.values[i]
                writer.writerow([
                    d.isoformat(), int(t), int(s),
                    "" if not np.isfinite(obs) else f"{obs:g}",
                    f"{self.fitted[i]:.6f}", f"{sd[i]:.6f}",
                ])


@dataclass(frozen=True)
class _BlockDef:
    name: str
    offset: int
    size: int
    kind: str  # "fixed" | "iid" | "intrinsic"
    base: sp.csr_matrix | None = None
    eigenvalues: np.ndarray | None = None
    constraints: np.ndarray | None = None
    cons_proj: np.ndarray | None = None  # constraints @ eigenvectors


def _build_blocks(spec: ModelSpec, graph: SiteGraph, T: int) -> list[_BlockDef]:
    blocks: list[_BlockDef] = []
    offset = 0

    def add(name: str, size: int, kind: str, structure: PrecisionStructure | None = None):
        nonlocal offset
        base = eigs = cons = proj = None
        if structure is not None and kind == "intrinsic":
            base = structure.entries
            eigs, vecs = np.linalg.eigh(structure.toarray())
            cons = structure.constraints
            proj = cons @ vecs
        blocks.append(_BlockDef(name=name, offset=offset, size=size, kind=kind,
                                base=base, eigenvalues=eigs, constraints=cons,
                                cons_proj=proj))
        offset += size

    if spec.intercept:
        add("intercept", 1, "fixed")
    if spec.fixed_effects:
        add("fixed", len(spec.fixed_effects), "fixed")
    if spec.spatial:
        add("spatial_structured", graph.n_sites, "intrinsic", build_icar_structure(graph))
        add("spatial_iid", graph.n_sites, "iid")
    if spec.temporal_seasonal:
        add("temporal_seasonal", T, "intrinsic", build_seasonal_structure(T, spec.period))
    if spec.temporal_iid:
        add("temporal_iid", T, "iid")
    if spec.interaction == INTERACTION_TYPE_I:
        add("interaction", graph.n_sites * T, "iid")
    return blocks


def interaction_structure(n_sites: int, T: int) -> PrecisionStructure:
    """Prior structure of the space-time interaction: identity of order n*T."""
    return build_iid_structure(n_sites * T)


HYPER_BLOCK_ORDER = (
    "spatial_structured", "spatial_iid", "temporal_seasonal", "temporal_iid", "interaction",
)


def assemble(
    spec: ModelSpec,
    data: CountFrame,
    graph: SiteGraph,
    covariates: dict[str, np.ndarray] | None = None,
) -> tuple[Callable[[np.ndarray], LatentGaussianProblem], LatentLayout]:
    """Build the (log-precision vector -> problem) closure and the block layout."""
    if len(data) == 0:
        raise InvalidInputError("empty data frame")
    if data.bins_per_day != spec.period:
        raise InvalidInputError(
            f"frame has {data.bins_per_day} bins per day but the season length is {spec.period}"
        )
    if data.n_sites > graph.n_sites or data.sites.min() < 1:
        raise InvalidInputError("data refers to site IDs outside the graph")
    covariates = covariates or {}
    for name in spec.fixed_effects:
        if name not in covariates:
            raise InvalidInputError(f"covariate column {name!r} not supplied")
        col = np.asarray(covariates[name], dtype=float)
        if col.shape != (len(data),) or not np.all(np.isfinite(col)):
            raise InvalidInputError(f"covariate column {name!r} must be complete and row-aligned")

    day_dates = data.distinct_dates()
    n_days = len(day_dates)
    T = spec.period * n_days
    blocks = _build_blocks(spec, graph, T)
    layout = LatentLayout(blocks=tuple((b.name, b.offset, b.size) for b in blocks))
    dim = layout.dim

    day_of = {d: i for i, d in enumerate(day_dates)}
    time_index = np.array(
        [day_of[d] * spec.period + int(t) for d, t in zip(data.dates, data.time_bins)], dtype=int
    )
    site_index = data.sites - 1

    rows, cols, vals = [], [], []
    n_obs = len(data)
    obs_range = np.arange(n_obs)

    def load(col_idx: np.ndarray, weight: np.ndarray | None = None):
        rows.extend(obs_range.tolist())
        cols.extend(col_idx.tolist())
        vals.extend((np.ones(n_obs) if weight is None else weight).tolist())

    for b in blocks:
        if b.name == "intercept":
            load(np.full(n_obs, b.offset))
        elif b.name == "fixed":
            for j, name in enumerate(spec.fixed_effects):
                load(np.full(n_obs, b.offset + j), np.asarray(covariates[name], dtype=float))
        elif b.name in ("spatial_structured", "spatial_iid"):
            load(b.offset + site_index)
        elif b.name in ("temporal_seasonal", "temporal_iid"):
            load(b.offset + time_index)
        elif b.name == "interaction":
            load(b.offset + site_index * T + time_index)
    design = sp.csr_matrix((vals, (rows, cols)), shape=(n_obs, dim))

    constraint_rows = []
    for b in blocks:
        if b.constraints is not None and b.constraints.shape[0]:
            padded = np.zeros((b.constraints.shape[0], dim))
            padded[:, b.offset : b.offset + b.size] = b.constraints
            constraint_rows.append(padded)
    constraints = np.vstack(constraint_rows) if constraint_rows else np.zeros((0, dim))

    hyper_blocks = [b for b in blocks if b.kind != "fixed"]
    hyper_blocks.sort(key=lambda b: HYPER_BLOCK_ORDER.index(b.name))
    offset_vec = np.zeros(n_obs)
    observations = data.values.copy()
    likelihood = POISSON_LOG_LINK if spec.family == FAMILY_POISSON else GAUSSIAN_IDENTITY

    def builder(psi: np.ndarray) -> LatentGaussianProblem:
        psi = np.atleast_1d(np.asarray(psi, dtype=float))
        if psi.size != len(hyper_blocks):
            raise InvalidInputError(
                f"expected {len(hyper_blocks)} log precisions, got {psi.size}"
            )
        tau = {b.name: float(np.exp(p)) for b, p in zip(hyper_blocks, psi)}
        parts = []
        log_det = 0.0
        cons_log_det = 0.0
        for b in blocks:
            if b.kind == "fixed":
                parts.append(sp.diags(np.full(b.size, FIXED_EFFECT_PRECISION)))
                log_det += b.size * np.log(FIXED_EFFECT_PRECISION)
            elif b.kind == "iid":
                parts.append(sp.diags(np.full(b.size, tau[b.name])))
                log_det += b.size * np.log(tau[b.name])
            else:
                parts.append(tau[b.name] * b.base + spec.jitter * sp.eye(b.size))
                spectrum = tau[b.name] * b.eigenvalues + spec.jitter
                log_det += float(np.sum(np.log(spectrum)))
                gram = (b.cons_proj / spectrum) @ b.cons_proj.T
                cons_log_det += float(np.linalg.slogdet(gram)[1])
        q = sp.block_diag(parts, format="csr")
        precision = PrecisionStructure(dim=dim, entries=q, rank_deficiency=0,
                                       constraints=constraints)
        return LatentGaussianProblem(
            prior_precision=precision,
            prior_mean=np.zeros(dim),
            design=design,
            offset=offset_vec,
            likelihood=likelihood,
            observations=observations,
            noise_precision=spec.noise_precision,
            prior_log_det=log_det,
            prior_constraint_log_det=cons_log_det,
        )

    builder.hyper_names = tuple(b.name for b in hyper_blocks)
    builder.design = design
    builder.day_dates = tuple(day_dates)
    return builder, layout


def fit(
    spec: ModelSpec,
    data: CountFrame,
    graph: SiteGraph,
    covariates: dict[str, np.ndarray] | None = None,
    init_log_precision: float | np.ndarray = 0.0,
    max_evals: int = 500,
) -> FitResult:
    """Empirical-Bayes fit; fitted values cover every row, observed or missing."""
    observed = np.isfinite(data.values)
    if not observed.any():
        raise InvalidInputError("no non-missing count to fit")
    builder, layout = assemble(spec, data, graph, covariates=covariates)
    n_hyper = len(builder.hyper_names)
    init = np.atleast_1d(np.asarray(init_log_precision, dtype=float))
    if init.size == 1:
        init = np.full(n_hyper, float(init[0]))
    if init.size != n_hyper:
        raise InvalidInputError(f"init_log_precision needs {n_hyper} entries, got {init.size}")

    x0 = np.zeros(layout.dim)
    if layout.has("intercept"):
        level = float(np.mean(data.values[observed]))
        if spec.family == FAMILY_POISSON:
            x0[layout.offset("intercept")] = np.log1p(max(level, 0.0))
        else:
            x0[layout.offset("intercept")] = level

    hyperprior = gamma_precision_hyperprior(spec.hyperprior_shape, spec.hyperprior_rate)
    if n_hyper == 0:
        psi_mode = np.zeros(0)
        approx = gaussian_approximation(builder(psi_mode), x0=x0)
    else:
        psi_mode, approx = eb_optimize(
            builder, init, log_hyperprior=hyperprior, max_evals=max_evals, x0=x0
        )
    design = builder.design
    eta = np.asarray(design @ approx.mode, dtype=float)
    eta_var = predictor_variances(approx, design)
    if spec.family == FAMILY_POISSON:
        fitted = np.exp(eta + 0.5 * eta_var)
    else:
        fitted = eta.copy()
    log_evidence = log_hyper_posterior(builder, psi_mode, log_hyperprior=hyperprior,
                                       x0=approx.mode)
    return FitResult(
        layout=layout,
        latent_mean=approx.mode,
        latent_sd=approx.marginal_sds,
        psi_mode=psi_mode,
        hyper_names=builder.hyper_names,
        fitted=fitted,
        log_evidence=log_evidence,
        frame=data,
        eta_mean=eta,
        eta_var=eta_var,
        day_dates=builder.day_dates,
        family=spec.family,
        _approx=approx,
        _design=design,
    )


def predict(fit_result: FitResult, keys: list[ObservationKey]) -> np.ndarray:
    """Fitted count for each key; keys must lie inside the fitted ranges."""
    n_days = len(fit_result.day_dates)
    layout = fit_result.layout
    n_sites = layout.length("spatial_structured") if layout.has("spatial_structured") else None
    period = fit_result.frame.bins_per_day
    index = fit_result.row_index()
    out = np.empty(len(keys))
    for i, key in enumerate(keys):
        if key.day_index < 0 or key.day_index >= n_days:
            raise InvalidInputError(f"day index {key.day_index} outside 0..{n_days - 1}")
        if key.time_bin < 0 or key.time_bin >= period:
            raise InvalidInputError(f"time bin {key.time_bin} outside 0..{period - 1}")
        if n_sites is not None and not (1 <= key.site_id <= n_sites):
            raise InvalidInputError(f"site {key.site_id} outside 1..{n_sites}")
        row = index.get((key.site_id, key.day_index, key.time_bin))
        if row is None:
            raise InvalidInputError(
                f"key {key} was not part of the fitted frame; include it as a missing row"
            )
        out[i] = fit_result.fitted[row]
    return out
