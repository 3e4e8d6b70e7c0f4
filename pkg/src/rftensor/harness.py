"""Experiment orchestration: recovery runs, sampling sweeps, fits and reports.

Every trial draws its phantom, link subset, noise and solver initialization
from independent streams spawned from ``SeedSequence([seed, trial])``, so a
trial's outcome depends only on the config, the master seed and the trial
index.  Trials run with BLAS limited to one thread, which keeps results
bit-identical whatever the worker count.
"""
from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .phantom import PhantomSpec, make_phantom
from .rf_sim import (
    ChannelParams,
    SensingEnsemble,
    VoxelGrid,
    build_sensing_ensemble,
    enumerate_links,
    place_nodes,
    sample_links,
)
from .solver import SolverConfig, alt_min, reconstruct
from .tensor import (
    DCT,
    FFT,
    TransformSpec,
    as_tensor,
    energy_cdf,
    frobenius_norm,
    mode3_unfolding,
    singular_value_cdf,
)

RSE_FLOOR = 1e-14


@dataclass(frozen=True)
class SceneConfig:
    counts: tuple[int, int, int] = (20, 20, 5)
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 4.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    nodes: int = 140
    rings: int | None = None
    stagger: bool = True

    def grid(self) -> VoxelGrid:
        return VoxelGrid(self.counts, self.voxel_size, self.origin)


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = SceneConfig()
    channel: ChannelParams = ChannelParams()
    phantom: PhantomSpec = PhantomSpec()
    solver: SolverConfig = SolverConfig(rank=2)
    rate: float = 0.5
    rates: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    trials: int = 5
    seed: int = 0
    workers: int = 1
    # None draws a fresh phantom per trial; an int fixes one ground truth
    phantom_seed: int | None = None

    def __post_init__(self):
        if not self.rates:
            raise ValueError("at least one sampling rate is required")
        for r in (self.rate,) + tuple(self.rates):
            if not 0.0 < r <= 1.0:
                raise ValueError(f"sampling rate {r} outside (0, 1]")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if tuple(self.phantom.dims) != tuple(self.scene.counts):
            raise ValueError(
                f"phantom dims {self.phantom.dims} differ from grid counts {self.scene.counts}"
            )


def desk_config(**overrides) -> ExperimentConfig:
    return dataclasses.replace(ExperimentConfig(), **overrides)


def paper_scale_config(**overrides) -> ExperimentConfig:
    """60 x 60 x 15 grid, rank 3, squeeze backend.  Minutes per run, GBs of RAM."""
    dims = (60, 60, 15)
    cfg = ExperimentConfig(
        scene=SceneConfig(counts=dims, voxel_size=(1.0, 1.0, 1.0), nodes=400),
        phantom=PhantomSpec(dims=dims, rank=3),
        solver=SolverConfig(rank=3, backend="squeeze"),
        trials=1,
    )
    return dataclasses.replace(cfg, **overrides)


@dataclass(frozen=True)
class TrialSeeds:
    phantom: int
    links: int
    noise: int
    init: int


def trial_seeds(seed: int, trial: int) -> TrialSeeds:
    state = np.random.SeedSequence([seed, trial]).generate_state(4)
    return TrialSeeds(*(int(s) for s in state))


@dataclass
class TrialResult:
    rate: float
    trial: int
    seeds: TrialSeeds
    M: int
    final_rse: float
    iterations: int
    seconds: float
    rse: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    iter_seconds: list[float] = field(default_factory=list)


@dataclass
class Recovery:
    result: TrialResult
    X_true: np.ndarray
    X_hat: np.ndarray
    H: SensingEnsemble


@dataclass
class SweepResult:
    trials: list[TrialResult]

    @property
    def rates(self) -> list[float]:
        return sorted({t.rate for t in self.trials})

    def per_rate(self, rate: float) -> list[TrialResult]:
        return sorted((t for t in self.trials if t.rate == rate), key=lambda t: t.trial)

    def mean_rse(self, rate: float) -> float:
        return float(np.mean([t.final_rse for t in self.per_rate(rate)]))


def rse(X_hat: np.ndarray, X: np.ndarray) -> float:
    X_hat = as_tensor(X_hat)
    X = as_tensor(X)
    if X_hat.shape != X.shape:
        raise ValueError(f"shape mismatch: {X_hat.shape} vs {X.shape}")
    denom = frobenius_norm(X)
    if denom == 0.0:
        raise ValueError("RSE undefined for a zero ground truth")
    return frobenius_norm(X_hat - X) / denom


def ground_truth(cfg: ExperimentConfig, trial: int = 0) -> np.ndarray:
    seeds = trial_seeds(cfg.seed, trial)
    seed = seeds.phantom if cfg.phantom_seed is None else cfg.phantom_seed
    spec = dataclasses.replace(cfg.phantom, seed=seed)
    return make_phantom(spec)


def simulate(cfg: ExperimentConfig, rate: float, trial: int = 0) -> tuple[np.ndarray, SensingEnsemble]:
    """Ground truth and noisy measurement ensemble for one trial."""
    seeds = trial_seeds(cfg.seed, trial)
    X = ground_truth(cfg, trial)
    grid = cfg.scene.grid()
    nodes = place_nodes(cfg.scene.nodes, grid, cfg.scene.rings, cfg.scene.stagger)
    links = enumerate_links(nodes)
    selected = sample_links(links, rate, seeds.links)
    channel = dataclasses.replace(cfg.channel, rng_seed=seeds.noise)
    return X, build_sensing_ensemble(selected, links, nodes, X, grid, channel)


def recover(cfg: ExperimentConfig, rate: float, trial: int = 0) -> Recovery:
    """Phantom, ensemble, Alt-Min and RSE for one (rate, trial)."""
    with threadpool_limits(limits=1):
        seeds = trial_seeds(cfg.seed, trial)
        X, H = simulate(cfg, rate, trial)
        solver = dataclasses.replace(cfg.solver, init_seed=seeds.init)
        start = time.perf_counter()
        factors, trace = alt_min(H, solver, X_true=X)
        seconds = time.perf_counter() - start
        X_hat = reconstruct(factors, solver.transform_spec(X.shape[2]))
    result = TrialResult(
        rate=rate,
        trial=trial,
        seeds=seeds,
        M=H.M,
        final_rse=rse(X_hat, X),
        iterations=len(trace),
        seconds=seconds,
        rse=list(trace.rse),
        residual=list(trace.residual),
        iter_seconds=list(trace.seconds),
    )
    return Recovery(result, X, X_hat, H)


def run_recovery(cfg: ExperimentConfig, rate: float | None = None, trial: int = 0) -> TrialResult:
    return recover(cfg, cfg.rate if rate is None else rate, trial).result


def _run_task(args) -> TrialResult:
    cfg, rate, trial = args
    return run_recovery(cfg, rate, trial)


def sweep_sampling(cfg: ExperimentConfig) -> SweepResult:
    tasks = [(cfg, rate, t) for rate in cfg.rates for t in range(cfg.trials)]
    if cfg.workers == 1 or len(tasks) == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    return SweepResult(results)


def convergence_fit(rse_values, floor: float = RSE_FLOOR) -> tuple[float, float]:
    """Least-squares line through ``log10(RSE)`` vs 1-based iteration index.

    Non-positive values are dropped, as is everything from the first
    iteration at or below ``floor``.
    """
    vals = np.asarray(rse_values, dtype=float)
    its = np.arange(1, len(vals) + 1)
    at_floor = np.flatnonzero(vals <= floor)
    cut = at_floor[0] if at_floor.size else len(vals)
    vals, its = vals[:cut], its[:cut]
    keep = np.isfinite(vals) & (vals > 0)
    if keep.sum() < 2:
        raise ValueError("convergence fit needs at least two positive RSE values above the floor")
    slope, intercept = np.polyfit(its[keep], np.log10(vals[keep]), 1)
    return float(slope), float(intercept)


def first_iteration_below(rse_values, threshold: float) -> int | None:
    for k, v in enumerate(rse_values, start=1):
        if v <= threshold:
            return k
    return None


CDF_METHODS = ("lsvd_fft", "lsvd_dct", "lsvd_fft_slices", "lsvd_dct_slices", "matrix_svd_mode3")


def cdf_curves(X: np.ndarray) -> dict[str, list[tuple[int, float]]]:
    """Singular-value energy CDFs of ``X`` under each decomposition."""
    X = as_tensor(X)
    n3 = X.shape[2]
    fft, dct = TransformSpec(FFT, n3), TransformSpec(DCT, n3)
    return {
        "lsvd_fft": singular_value_cdf(X, fft, "tubes"),
        "lsvd_dct": singular_value_cdf(X, dct, "tubes"),
        "lsvd_fft_slices": singular_value_cdf(X, fft, "slices"),
        "lsvd_dct_slices": singular_value_cdf(X, dct, "slices"),
        "matrix_svd_mode3": energy_cdf(np.linalg.svd(mode3_unfolding(X), compute_uv=False)),
    }


def cdf_rows(X: np.ndarray) -> list[tuple[str, int, float]]:
    curves = cdf_curves(X)
    return [(method, k, f) for method in CDF_METHODS for k, f in curves[method]]
