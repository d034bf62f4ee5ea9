"""
Seeded Monte Carlo power sweeps.

A sweep runs a grid of communication (beta) or sensing (gamma) powers across
several receive-array sizes. Every (grid value, n_rx) cell gets its own seed
derived from the master seed, and every trial inside a cell draws from its
own Philox counter block, so results are bit-identical across runs and
across worker counts. Both receiver chains are evaluated on the same
observation (common random numbers), which makes their MSE difference a
low-variance paired statistic.

The per-trial reference path (`run_trial`) and the vectorized per-cell
kernel consume identical random substreams; a test pins their agreement.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as metrics_mod
from .metrics import AggregateMetrics, RunningStat, TrialRecord, q_function
from .model import (
    Observation,
    SystemConfig,
    composite_sensing_channel,
    derive_cell_seed,
    generate_observation,
    philox_key,
    sample_scene,
    _draw_scene_parts,
    trial_rng,
)
from .mmse import run_mmse_chain
from .sic import interference_covariance, run_sic_chain, whitening_matrix

THREADS_ENV_VAR = "ISAC_SIM_THREADS"

# Rows below this trial count are flagged as too small for acceptance-grade
# statistics (they still compute).
MIN_ACCEPTANCE_TRIALS = 1000

# Trials per vectorized batch; fixed so aggregation order (and therefore the
# result bits) never depends on worker count.
_BLOCK = 8192

_SWEEP_VARIABLES = ("beta", "gamma")


@dataclass(frozen=True)
class SweepSpec:
    """One power sweep: grid of the swept power times a list of array sizes.

    Power semantics: with `normalize_signal_power` (the default) the grid and
    the fixed power are powers of unit-average-power signals. The model's raw
    signal scales (E||h_c s||^2 = n_rx and ||g x||^2 = n_tx^2 n_rx) are
    divided out when each cell's config is built, so the communication and
    sensing budgets compare on equal footing and independently of the array
    sizes. Disable it to pass grid values straight into the model.
    """

    base: SystemConfig
    sweep_variable: str
    grid: tuple[float, ...]
    n_rx_list: tuple[int, ...] = (1, 2, 4)
    trials_per_point: int = 100_000
    master_seed: int = 0
    normalize_signal_power: bool = True

    def __post_init__(self):
        if self.sweep_variable not in _SWEEP_VARIABLES:
            raise ValueError(
                f"sweep_variable must be one of {_SWEEP_VARIABLES}"
            )
        grid = tuple(float(v) for v in self.grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(
            self, "n_rx_list", tuple(int(n) for n in self.n_rx_list)
        )
        if not grid:
            raise ValueError("grid must be nonempty")
        if any(v <= 0 for v in grid):
            raise ValueError("grid values must be positive")
        if list(grid) != sorted(grid):
            raise ValueError("grid must be sorted ascending")
        if not self.n_rx_list or any(n < 1 for n in self.n_rx_list):
            raise ValueError("n_rx_list must contain positive integers")
        if self.trials_per_point < 1:
            raise ValueError("trials_per_point must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must fit in 64 bits")


@dataclass
class SweepRow:
    sweep_variable: str
    sweep_value: float
    n_rx: int
    trials: int
    seed: int
    metrics: AggregateMetrics
    low_trial_count: bool = False


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow] = field(default_factory=list)


def default_grid(low: float = 1e-3, high: float = 1e3,
                 points: int = 13) -> tuple[float, ...]:
    """Log-spaced power grid; 13 points spans six decades at 2 per decade."""
    return tuple(np.logspace(math.log10(low), math.log10(high), points))


def beta_sweep_spec(trials_per_point: int = 100_000, master_seed: int = 0,
                    n_rx_list: tuple[int, ...] = (1, 2, 4),
                    grid: tuple[float, ...] | None = None,
                    base: SystemConfig | None = None) -> SweepSpec:
    """Communication-power sweep at fixed unit sensing power."""
    base = base if base is not None else SystemConfig(gamma=1.0)
    return SweepSpec(
        base=base,
        sweep_variable="beta",
        grid=grid if grid is not None else default_grid(),
        n_rx_list=n_rx_list,
        trials_per_point=trials_per_point,
        master_seed=master_seed,
    )


def gamma_sweep_spec(trials_per_point: int = 100_000, master_seed: int = 0,
                     n_rx_list: tuple[int, ...] = (1, 2, 4),
                     grid: tuple[float, ...] | None = None,
                     base: SystemConfig | None = None) -> SweepSpec:
    """Sensing-power sweep at fixed unit communication power."""
    base = base if base is not None else SystemConfig(beta=1.0)
    return SweepSpec(
        base=base,
        sweep_variable="gamma",
        grid=grid if grid is not None else default_grid(),
        n_rx_list=n_rx_list,
        trials_per_point=trials_per_point,
        master_seed=master_seed,
    )


def resolve_workers(requested: int | None = None) -> int:
    """Worker count for a sweep.

    Explicit requests are capped by ISAC_SIM_THREADS; without a request the
    env value (if set) is used directly, else the sweep runs serially. The
    per-trial sampling loop is GIL-bound, so CPython rarely gains from more
    workers; results are bit-identical at any count either way.
    """
    cap = None
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            cap = int(raw)
        except ValueError as exc:
            raise ValueError(
                f"{THREADS_ENV_VAR} must be an integer, got {raw!r}"
            ) from exc
        if cap < 1:
            raise ValueError(f"{THREADS_ENV_VAR} must be >= 1")
    if requested:
        return max(1, min(requested, cap) if cap else requested)
    return cap if cap else 1


def run_trial(cfg: SystemConfig, trial_index: int) -> TrialRecord:
    """Reference path: one scene, one observation, both chains on it."""
    rng = trial_rng(cfg.seed, trial_index)
    scene = sample_scene(cfg, rng)
    obs = generate_observation(cfg, scene)
    sic_out = run_sic_chain(obs)
    mmse_out = run_mmse_chain(obs)
    return TrialRecord(
        true_symbol=scene.symbol_index,
        detected_symbol=sic_out.detected_index,
        true_alpha=scene.alpha,
        alpha_sic=sic_out.alpha_hat,
        alpha_mmse=mmse_out.alpha_hat,
    )


@dataclass
class CellTrace:
    """Raw per-trial outcomes of one cell (only kept on request)."""

    true_symbol: np.ndarray
    detected_symbol: np.ndarray
    true_alpha: np.ndarray
    alpha_sic: np.ndarray
    alpha_mmse: np.ndarray
    ber_theory_per_trial: np.ndarray


def _reset_stream(bit_gen: np.random.Philox, trial_index: int) -> None:
    """Point an existing Philox at the counter block of `trial_index`."""
    state = bit_gen.state
    counter = state["state"]["counter"]
    counter[:] = 0
    counter[2] = trial_index
    state["buffer_pos"] = 4
    state["has_uint32"] = 0
    state["uinteger"] = 0
    bit_gen.state = state


def run_cell(cfg: SystemConfig, trials: int,
             collect: bool = False) -> tuple[AggregateMetrics, CellTrace | None]:
    """Vectorized Monte Carlo of one (config, trial count) cell.

    Trials are processed in fixed-size blocks whose partial moments merge in
    block order, so the result is independent of scheduling. Within a block
    the receiver math is evaluated for all trials at once; the cancellation
    and posterior-mean chains share every intermediate they have in common,
    which makes their paired difference exactly zero whenever the posterior
    collapses onto the detected symbol.
    """
    const = cfg.constellation
    points = const.points
    a_size = const.size
    n = cfg.n_rx
    beta, gamma, sigma2 = cfg.beta, cfg.gamma, cfg.sigma2
    root_beta, root_gamma = math.sqrt(beta), math.sqrt(gamma)

    g = composite_sensing_channel(cfg)
    g_conj = g.conj()
    g_norm2 = float(np.vdot(g, g).real)
    obs_stub = Observation(
        y=np.zeros(n, dtype=np.complex128), g=g,
        h_c=np.zeros(n, dtype=np.complex128), x=1.0,
        beta=beta, gamma=gamma, sigma2=sigma2, constellation=const,
    )
    q = whitening_matrix(interference_covariance(obs_stub))
    q_t = q.T.copy()

    key = philox_key(cfg.seed)
    bit_gen = np.random.Philox(key=key)
    rng = np.random.Generator(bit_gen)

    bit_errors = 0
    theory_stat = RunningStat()
    sic_stat = RunningStat()
    mmse_stat = RunningStat()
    diff_stat = RunningStat()

    traces: list[tuple] = []

    for start in range(0, trials, _BLOCK):
        count = min(_BLOCK, trials - start)
        h_c = np.empty((count, n), dtype=np.complex128)
        noise = np.empty((count, n), dtype=np.complex128)
        alpha = np.empty(count, dtype=np.complex128)
        sym = np.empty(count, dtype=np.intp)
        x_idx = np.empty(count, dtype=np.intp)
        for j in range(count):
            _reset_stream(bit_gen, start + j)
            h_c[j], alpha[j], sym[j], x_idx[j], noise[j] = _draw_scene_parts(
                rng, n, a_size, sigma2
            )
        xs = points[x_idx]
        s_tx = points[sym]

        scaled_h = root_beta * h_c
        y = scaled_h * s_tx[:, None] \
            + (root_gamma * alpha * xs)[:, None] * g[None, :] + noise

        # Detection: whiten, combine, nearest symbol.
        qy = y @ q_t
        w = h_c @ q_t
        gain = np.einsum("ij,ij->i", w.conj(), w).real
        combined = np.einsum("ij,ij->i", w.conj(), qy)
        metric = np.abs(
            combined[:, None] - (root_beta * gain)[:, None] * points[None, :]
        ) ** 2
        detected = np.argmin(metric, axis=1)

        # Cancellation chain.
        resid_sic = y - scaled_h * points[detected][:, None]
        x_abs2 = np.abs(xs) ** 2
        denom = gamma * x_abs2 * g_norm2 + sigma2
        coef = root_gamma * xs.conj()
        alpha_sic = coef * (resid_sic @ g_conj) / denom

        # Posterior-mean chain: per-symbol residuals, log weights, mixture.
        resid_all = y[:, None, :] - scaled_h[:, None, :] * points[None, :, None]
        g_dot = resid_all @ g_conj
        r_norm2 = np.einsum("tan,tan->ta", resid_all.conj(), resid_all).real
        quad = (
            r_norm2
            - (gamma * x_abs2)[:, None] * np.abs(g_dot) ** 2 / denom[:, None]
        ) / sigma2
        log_w = -quad
        log_w -= log_w.max(axis=1, keepdims=True)
        weights = np.exp(log_w)
        weights /= weights.sum(axis=1, keepdims=True)
        resid_mix = np.einsum("ta,tan->tn", weights, resid_all)
        alpha_mmse = coef * (resid_mix @ g_conj) / denom

        theory = q_function(np.sqrt(beta * gain))

        bit_errors += metrics_mod.bit_error_count(sym, detected, const)
        err_sic = np.abs(alpha - alpha_sic) ** 2
        err_mmse = np.abs(alpha - alpha_mmse) ** 2
        theory_stat = theory_stat.merge(RunningStat.from_values(theory))
        sic_stat = sic_stat.merge(RunningStat.from_values(err_sic))
        mmse_stat = mmse_stat.merge(RunningStat.from_values(err_mmse))
        diff_stat = diff_stat.merge(RunningStat.from_values(err_sic - err_mmse))

        if collect:
            traces.append((sym, detected, alpha, alpha_sic, alpha_mmse, theory))

    n_bits = trials * const.bits_per_symbol
    ber = bit_errors / n_bits if n_bits else 0.0
    agg = AggregateMetrics(
        ber_empirical=ber,
        ber_theoretical=theory_stat.mean,
        mse_sic=sic_stat.mean,
        mse_mmse=mmse_stat.mean,
        trials=trials,
        ber_stderr=metrics_mod.binomial_stderr(ber, n_bits),
        mse_stderr_sic=sic_stat.stderr,
        mse_stderr_mmse=mmse_stat.stderr,
        mse_diff_mean=diff_stat.mean,
        mse_diff_stderr=diff_stat.stderr,
    )
    trace = None
    if collect:
        cols = [np.concatenate([t[i] for t in traces]) for i in range(6)]
        trace = CellTrace(*cols)
    return agg, trace


def cell_config(spec: SweepSpec, value: float, n_rx: int,
                cell_index: int) -> SystemConfig:
    """Config of one sweep cell, with its derived per-cell seed."""
    powers = {"beta": spec.base.beta, "gamma": spec.base.gamma}
    powers[spec.sweep_variable] = value
    if spec.normalize_signal_power:
        powers["beta"] /= n_rx
        powers["gamma"] /= spec.base.n_tx ** 2 * n_rx
    return replace(
        spec.base,
        n_rx=n_rx,
        seed=derive_cell_seed(spec.master_seed, cell_index),
        **powers,
    )


def run_sweep(spec: SweepSpec, max_workers: int | None = None,
              progress=None) -> SweepResult:
    """Run every (grid value, n_rx) cell and aggregate per-cell metrics.

    Cells execute independently (optionally on a thread pool); rows are
    emitted in grid order regardless of completion order.
    """
    cells = [
        (index, value, n_rx)
        for index, (value, n_rx) in enumerate(
            (v, n) for v in spec.grid for n in spec.n_rx_list
        )
    ]

    def one_cell(item):
        index, value, n_rx = item
        cfg = cell_config(spec, value, n_rx, index)
        agg, _ = run_cell(cfg, spec.trials_per_point)
        row = SweepRow(
            sweep_variable=spec.sweep_variable,
            sweep_value=value,
            n_rx=n_rx,
            trials=spec.trials_per_point,
            seed=cfg.seed,
            metrics=agg,
            low_trial_count=spec.trials_per_point < MIN_ACCEPTANCE_TRIALS,
        )
        if progress is not None:
            progress(row)
        return index, row

    workers = resolve_workers(max_workers)
    if workers == 1:
        indexed = [one_cell(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            indexed = list(pool.map(one_cell, cells))
    rows = [row for _, row in sorted(indexed, key=lambda item: item[0])]
    return SweepResult(spec=spec, rows=rows)
