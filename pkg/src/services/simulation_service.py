"""
Euler-Maruyama integration of the coupled data/parameter system across a
Monte Carlo ensemble.

Each path owns a counter-based (Philox) substream keyed by a hash of the
master seed and the path index, so a path's Brownian increments never depend
on the ensemble size, the chunking, or the worker count.
"""

import time
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ..models.constants import LabConfig
from ..models.drift import ArrayLike, DriftModel
from ..models.simulation import PathEnsemble, PathRecord, SimConfig
from logger_config import get_logger

logger = get_logger(__name__)


class SimulationService:
    """Simulates (X_t, theta_t) paths and assembles snapshot ensembles."""

    @staticmethod
    def path_seed(master_seed: int, path_index: int) -> int:
        """Substream seed of one path: a hash of (master_seed, path_index)."""
        state = np.random.SeedSequence([int(master_seed), int(path_index)]).generate_state(1, np.uint64)
        return int(state[0])

    @staticmethod
    def path_generator(seed: int) -> np.random.Generator:
        """Counter-based generator for one path substream."""
        return np.random.Generator(np.random.Philox(int(seed)))

    @staticmethod
    def noise_blocks(seeds: Sequence[int], n_steps: int, dt: float,
                     zero_noise: bool = False) -> Iterator[Tuple[int, np.ndarray]]:
        """
        Yield Brownian increments in blocks of steps.

        Args:
            seeds: Substream seeds, one per path
            n_steps: Total number of steps
            dt: Time step (increments are N(0, dt))
            zero_noise: Yield zeros instead of drawing

        Yields:
            (first step index, array of shape (block steps, n_paths))
        """
        generators = [] if zero_noise else [SimulationService.path_generator(s) for s in seeds]
        root_dt = np.sqrt(dt)
        block = LabConfig.NOISE_BLOCK_STEPS
        for start in range(0, n_steps, block):
            size = min(block, n_steps - start)
            if zero_noise:
                yield start, np.zeros((size, len(seeds)))
                continue
            draws = np.empty((size, len(seeds)))
            for j, gen in enumerate(generators):
                draws[:, j] = gen.standard_normal(size)
            yield start, draws * root_dt

    @staticmethod
    def step(model: DriftModel, x: ArrayLike, theta: ArrayLike, t: ArrayLike, delta: float,
             dw: ArrayLike, c_alpha: float, c0: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
        """
        One Euler-Maruyama step of the data process and the SGDCT update.

        The same increment dW drives both equations: the parameter update
        consumes the data increment dX directly,
            x'     = x + f*(x) delta + sigma dW
            theta' = theta + alpha_t f_theta sigma^-2 (x' - x - f(x, theta) delta).
        Without a data process the update reads
            theta' = theta - alpha_t g_theta delta + alpha_t f_theta sigma^-1 dW.

        Args:
            model: Drift model
            x, theta: Current state (scalars or arrays over paths)
            t: Current time
            delta: Step size
            dw: Brownian increment N(0, delta)
            c_alpha, c0: Learning-rate parameters

        Returns:
            (x_next, theta_next)
        """
        alpha = c_alpha / (c0 + np.asarray(t, dtype=float))
        sigma = model.sigma
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        f_theta = model.f_theta(x, theta)
        if not model.has_x_process:
            g_theta = (model.f(x, theta) - model.f_star(x)) * f_theta / sigma ** 2
            theta_next = theta - alpha * g_theta * delta + alpha * f_theta / sigma * dw
            return x + np.zeros_like(theta_next), theta_next
        x_next = x + model.f_star(x) * delta + sigma * dw
        dx = x_next - x
        theta_next = theta + alpha * f_theta / sigma ** 2 * (dx - model.f(x, theta) * delta)
        return x_next, theta_next

    @staticmethod
    def _simulate_chunk(model: DriftModel, cfg: SimConfig, indices: Sequence[int]):
        """Simulate one chunk of paths; returns snapshot rows, flags, seeds and full records."""
        n = len(indices)
        seeds = [SimulationService.path_seed(cfg.master_seed, i) for i in indices]
        snap_rows = {k: row for row, k in enumerate(cfg.snapshot_steps)}
        theta_snap = np.empty((len(snap_rows), n))
        x_snap = np.empty((len(snap_rows), n))

        x = np.full(n, cfg.x0, dtype=float)
        theta = np.full(n, cfg.theta0, dtype=float)
        flagged = np.zeros(n, dtype=bool)

        stored = [(col, i) for col, i in enumerate(indices) if i in set(cfg.store_full)]
        full: Dict[int, Dict[str, np.ndarray]] = {
            i: {"x": np.empty(cfg.n_steps + 1), "theta": np.empty(cfg.n_steps + 1),
                "dw": np.empty(cfg.n_steps)}
            for _, i in stored
        }
        for col, i in stored:
            full[i]["x"][0], full[i]["theta"][0] = x[col], theta[col]

        with np.errstate(over="ignore", invalid="ignore"):
            for start, dw_block in SimulationService.noise_blocks(seeds, cfg.n_steps, cfg.dt, cfg.zero_noise):
                for j in range(dw_block.shape[0]):
                    k = start + j
                    dw = dw_block[j]
                    x, theta = SimulationService.step(
                        model, x, theta, cfg.time_at(k), cfg.dt, dw, cfg.c_alpha, cfg.c0
                    )
                    bad = ~(np.isfinite(x) & np.isfinite(theta))
                    if np.any(bad):
                        flagged |= bad
                        x[bad] = np.nan
                        theta[bad] = np.nan
                    for col, i in stored:
                        full[i]["x"][k + 1] = x[col]
                        full[i]["theta"][k + 1] = theta[col]
                        full[i]["dw"][k] = dw[col]
                    row = snap_rows.get(k + 1)
                    if row is not None:
                        theta_snap[row] = theta
                        x_snap[row] = x

        records = {
            i: PathRecord(path_index=i, t_start=cfg.t_start, dt=cfg.dt,
                          x=data["x"], theta=data["theta"], dw=data["dw"])
            for i, data in full.items()
        }
        return np.asarray(indices), theta_snap, x_snap, flagged, np.asarray(seeds, dtype=np.uint64), records

    @staticmethod
    def chunks(n_paths: int, size: int = LabConfig.PATH_CHUNK_SIZE) -> List[List[int]]:
        """Fixed-size index chunks; the split never depends on the worker count."""
        return [list(range(lo, min(lo + size, n_paths))) for lo in range(0, n_paths, size)]

    @staticmethod
    def run_ensemble(model: DriftModel, cfg: SimConfig, workers: int = 1) -> PathEnsemble:
        """
        Simulate cfg.n_paths paths and record the requested snapshots.

        Args:
            model: Drift model
            cfg: Validated simulation configuration
            workers: Number of worker processes (scheduling only)

        Returns:
            PathEnsemble with index-ordered snapshot arrays
        """
        start = time.time()
        logger.info(
            f"[SIM] {model.name}: {cfg.n_paths} paths x {cfg.n_steps} steps, "
            f"C_alpha={cfg.c_alpha}, dt={cfg.dt}, workers={workers}"
        )
        chunks = SimulationService.chunks(cfg.n_paths)
        results = Parallel(n_jobs=workers)(
            delayed(SimulationService._simulate_chunk)(model, cfg, chunk) for chunk in chunks
        )

        n_snap = len(cfg.snapshot_times)
        theta = np.empty((n_snap, cfg.n_paths))
        x = np.empty((n_snap, cfg.n_paths))
        flagged = np.zeros(cfg.n_paths, dtype=bool)
        seeds = np.zeros(cfg.n_paths, dtype=np.uint64)
        full: Dict[int, PathRecord] = {}
        for indices, theta_snap, x_snap, chunk_flags, chunk_seeds, records in results:
            theta[:, indices] = theta_snap
            x[:, indices] = x_snap
            flagged[indices] = chunk_flags
            seeds[indices] = chunk_seeds
            full.update(records)

        ensemble = PathEnsemble(
            config=cfg, snapshot_times=np.asarray(cfg.snapshot_times), theta=theta, x=x,
            seeds=seeds, flagged=flagged, full=full,
        )
        if ensemble.n_flagged:
            logger.warning(f"[SIM] {ensemble.n_flagged} of {cfg.n_paths} paths produced non-finite values")
        logger.info(f"[SIM] ✅ Ensemble complete in {time.time() - start:.2f}s")
        return ensemble
