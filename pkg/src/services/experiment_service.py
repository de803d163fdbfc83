"""
Experiment orchestration: simulation -> statistics -> rate fits -> CSV bundles,
for the published presets, custom config files and the single-purpose
subcommands.
"""

import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd

import config
from ..models.constants import LabConfig
from ..models.drift import DriftModel
from ..models.errors import ConfigurationError, FitError, NumericalError
from ..models.preset import ExperimentPreset, get_preset
from ..models.results import AnchorSet, DensityTable, UniformGrid, VarianceReport
from ..models.run_config import RunConfig
from ..models.simulation import PathEnsemble, snapshot_schedule
from .config_service import ConfigService
from .csv_service import CSVService
from .density_service import DensityService
from .drift_service import DriftService
from .malliavin_service import MalliavinService
from .poisson_service import PoissonService
from .simulation_service import SimulationService
from .stats_service import StatsService
from logger_config import get_logger

logger = get_logger(__name__)

SUMMARY_COLUMNS = [
    "preset", "c_alpha", "c_gbar", "c_gbar_c_alpha", "sigma_bar_closed_form", "t_var_final",
    "log_w1_over_log_t_final", "regime", "w1_slope", "w1_non_decaying", "predicted_w1_exponent",
    "gaussian_target_variance", "reported_sigma_bar", "t_var_at_reported_time",
    "reported_vs_closed_form", "reported_vs_simulation", "n_flagged",
]


@dataclass
class ArtifactBundle:
    """Files written by one run plus its summary table."""
    out_dir: Path
    files: List[Path] = field(default_factory=list)
    summary: Optional[pd.DataFrame] = None


def _c_alpha_dir(c_alpha: float) -> str:
    return f"c_alpha_{c_alpha:g}"


def _nan(value: Optional[float]) -> float:
    return float("nan") if value is None else float(value)


def _relative_gap(value: float, reference: Optional[float]) -> float:
    if reference is None or not np.isfinite(value):
        return float("nan")
    return abs(value - reference) / abs(reference)


class ExperimentService:
    """Runs subcommands and presets, writing every artifact through CSVService."""

    @staticmethod
    def model_and_density(run: RunConfig) -> Tuple[DriftModel, DensityTable]:
        """Build the drift model, probe it, and tabulate its invariant density."""
        model = run.builtin().build()
        DriftService.check_model(model, run.theta_star)
        grid = None
        if run.quadrature.half_width is not None:
            grid = UniformGrid(run.quadrature.half_width, run.quadrature.n_points)
        density = DensityService.for_model(model, grid=grid, n_points=run.quadrature.n_points)
        return model, density

    @staticmethod
    def target_variance(run: RunConfig, report: VarianceReport) -> float:
        """
        Variance of the Gaussian W1 target: the override, else the closed-form
        Sigma_bar, else (divergent regime) C_alpha^2 h_bar.
        """
        if run.sigma_bar is not None:
            return run.sigma_bar
        if report.sigma_bar is not None:
            return report.sigma_bar
        return report.c_alpha ** 2 * report.h_bar

    @staticmethod
    def metadata(run: RunConfig, c_alpha: Optional[float] = None,
                 ensemble: Optional[PathEnsemble] = None, **extra: Any) -> Dict[str, Any]:
        """Header entries: resolved config, selected C_alpha, seed and flagged count."""
        meta: Dict[str, Any] = {"run": run.name, **run.to_dict()}
        if c_alpha is not None:
            meta["c_alpha_selected"] = c_alpha
        meta["master_seed"] = run.seed
        meta["flagged_paths"] = ensemble.n_flagged if ensemble is not None else 0
        meta.update(extra)
        return meta

    @staticmethod
    def check_flagged(ensembles: List[PathEnsemble]) -> None:
        """Raise once outputs are written if any ensemble lost more than 1% of its paths."""
        for ensemble in ensembles:
            fraction = ensemble.n_flagged / ensemble.n_paths
            if fraction > LabConfig.MAX_FLAGGED_FRACTION:
                raise NumericalError(
                    f"{ensemble.n_flagged} of {ensemble.n_paths} paths flagged non-finite at "
                    f"C_alpha={ensemble.config.c_alpha} (more than "
                    f"{LabConfig.MAX_FLAGGED_FRACTION:.0%})"
                )

    # ------------------------------------------------------------------
    # Single-purpose subcommands
    # ------------------------------------------------------------------

    @staticmethod
    def run_simulate(run: RunConfig, out_dir: Path, workers: int = 1) -> ArtifactBundle:
        """snapshots.csv (t, path_index, x, theta) per C_alpha."""
        model, _ = ExperimentService.model_and_density(run)
        bundle = ArtifactBundle(out_dir=Path(out_dir))
        ensembles = []
        for c_alpha in run.c_alphas:
            ensemble = SimulationService.run_ensemble(model, run.sim_config(c_alpha), workers)
            ensembles.append(ensemble)
            frame = pd.DataFrame(ensemble.to_frame_dict(), columns=["t", "path_index", "x", "theta"])
            bundle.files.append(CSVService.write(
                frame, out_dir, Path(_c_alpha_dir(c_alpha)) / "snapshots.csv",
                ExperimentService.metadata(run, c_alpha, ensemble),
            ))
        ExperimentService.check_flagged(ensembles)
        return bundle

    @staticmethod
    def run_variance(run: RunConfig, out_dir: Path) -> ArtifactBundle:
        """variance.csv: one closed-form VarianceReport row per C_alpha."""
        model, density = ExperimentService.model_and_density(run)
        rows = []
        for c_alpha in run.c_alphas:
            report = PoissonService.limiting_variance(model, density, run.theta_star, c_alpha)
            row = report.to_dict()
            row["c_gbar_c_alpha"] = report.c_gbar_c_alpha
            row["predicted_w1_exponent"] = _nan(report.predicted_w1_exponent)
            rows.append(row)
        frame = pd.DataFrame(rows, columns=[
            "model", "theta_star", "c_alpha", "c_gbar", "h_bar", "sigma_bar", "regime",
            "c_gbar_c_alpha", "predicted_w1_exponent",
        ])
        path = CSVService.write(frame, out_dir, "variance.csv", ExperimentService.metadata(run))
        return ArtifactBundle(out_dir=Path(out_dir), files=[path], summary=frame)

    @staticmethod
    def run_poisson(run: RunConfig, out_dir: Path) -> ArtifactBundle:
        """poisson.csv: x, m, H, v, v_x for H = gbar_theta(theta) - g_theta(x, theta)."""
        model, density = ExperimentService.model_and_density(run)
        theta = run.theta_star if run.poisson_theta is None else run.poisson_theta
        source = PoissonService.fluctuation_source(model, density, theta)
        solution = PoissonService.solve(source, model, density)
        h_bar = PoissonService.h_bar(model, density, theta)
        frame = pd.DataFrame({
            "x": solution.x, "m": density.m, "H": solution.source, "v": solution.v, "v_x": solution.v_x,
        })
        meta = ExperimentService.metadata(
            run, theta=theta, h_bar=h_bar,
            gbar=[PoissonService.gbar(model, density, theta, order) for order in range(4)],
            centering_residual=solution.centering_residual,
            source_residual=solution.source_residual,
            tail_discrepancy=solution.tail_discrepancy,
            tail_mass=density.tail_mass,
        )
        path = CSVService.write(frame, out_dir, "poisson.csv", meta)
        return ArtifactBundle(out_dir=Path(out_dir), files=[path])

    @staticmethod
    def run_malliavin(run: RunConfig, out_dir: Path, workers: int = 1) -> ArtifactBundle:
        """
        malliavin.csv per C_alpha for every configured order and power.

        The tables are written before a failed fit is raised.
        """
        model, density = ExperimentService.model_and_density(run)
        settings = run.malliavin
        c_gbar = PoissonService.gbar(model, density, run.theta_star, 2)
        bundle = ArtifactBundle(out_dir=Path(out_dir))
        fit_failures = []
        for c_alpha in run.c_alphas:
            cfg = run.sim_config(c_alpha, n_paths=settings.n_paths or run.n_paths)
            defaults = MalliavinService.default_anchors(cfg)
            anchors = AnchorSet(
                anchors=settings.anchors if settings.anchors is not None else defaults.anchors,
                pairs=settings.pairs if settings.pairs is not None else defaults.pairs,
            )
            rows = []
            for order in settings.orders:
                for p in settings.powers:
                    for moment in MalliavinService.moment_scaling(
                        model, cfg, anchors, p, order, c_gbar, None, settings.fit_window, workers,
                        settings.n_times,
                    ):
                        rows.extend(moment.to_rows())
                        if moment.series.slope is None:
                            fit_failures.append((c_alpha, order, p, moment.r1, moment.r2))
            frame = pd.DataFrame(rows, columns=[
                "order", "p", "r1", "r2", "t", "moment", "stderr", "predicted_exponent", "fitted_slope",
            ])
            bundle.files.append(CSVService.write(
                frame, out_dir, Path(_c_alpha_dir(c_alpha)) / "malliavin.csv",
                ExperimentService.metadata(run, c_alpha, c_gbar=c_gbar),
            ))
        if fit_failures:
            raise FitError(f"log-log fit failed for (c_alpha, order, p, r1, r2) = {fit_failures}")
        return bundle

    # ------------------------------------------------------------------
    # Bundles
    # ------------------------------------------------------------------

    @staticmethod
    def run_bundle(run: RunConfig, out_dir: Path, workers: int = 1,
                   preset: Optional[ExperimentPreset] = None) -> ArtifactBundle:
        """
        w1.csv and variance_series.csv per C_alpha, plus summary.csv.

        Args:
            run: Validated configuration
            out_dir: Output root
            workers: Worker processes (scheduling only)
            preset: Source preset, for the separate variance horizon and the
                reported Sigma_bar comparison

        Returns:
            ArtifactBundle with the summary table

        Raises:
            NumericalError: more than 1% of some ensemble's paths were flagged
                (raised after every file is written)
        """
        start = time.time()
        out_dir = Path(out_dir)
        model, density = ExperimentService.model_and_density(run)
        bundle = ArtifactBundle(out_dir=out_dir)
        ensembles: List[PathEnsemble] = []
        rows = []
        notes = {}
        if preset is not None and preset.note and run.theta0 != run.theta_star:
            notes["note"] = preset.note

        for c_alpha in run.c_alphas:
            report = PoissonService.limiting_variance(model, density, run.theta_star, c_alpha)
            target = ExperimentService.target_variance(run, report)
            ensemble = SimulationService.run_ensemble(model, run.sim_config(c_alpha), workers)
            ensembles.append(ensemble)

            variance_ensemble = ensemble
            if preset is not None and preset.variance_t_end is not None and preset.variance_t_end < run.t_end:
                times = ExperimentService.preset_snapshots(run, preset, preset.variance_t_end)
                variance_ensemble = SimulationService.run_ensemble(
                    model, run.sim_config(c_alpha, snapshot_times=times, t_end=preset.variance_t_end), workers
                )
                ensembles.append(variance_ensemble)

            w1 = StatsService.w1_frame(ensemble, run.theta_star, target, run.w1_mode, run.seed)
            variance = StatsService.variance_frame(variance_ensemble, run.theta_star)
            w1_fit = StatsService.w1_rate(w1, run.w1_mode)

            header = dict(
                regime=report.regime.value, c_gbar=report.c_gbar, h_bar=report.h_bar,
                sigma_bar=report.sigma_bar, gaussian_target_variance=target,
                predicted_w1_exponent=report.predicted_w1_exponent,
                **notes,
            )
            sub = Path(_c_alpha_dir(c_alpha))
            bundle.files.append(CSVService.write(
                w1, out_dir, sub / "w1.csv", ExperimentService.metadata(run, c_alpha, ensemble, **header)
            ))
            bundle.files.append(CSVService.write(
                variance, out_dir, sub / "variance_series.csv",
                ExperimentService.metadata(run, c_alpha, variance_ensemble, **header),
            ))

            reported_sigma = preset.reported_sigma_bar(c_alpha) if preset is not None else None
            t_var_reported = float("nan")
            if preset is not None and preset.reported_time is not None:
                match = np.isclose(variance["t"].to_numpy(), preset.reported_time)
                if match.any():
                    t_var_reported = float(variance["t_var"].to_numpy()[match][0])
            slope = w1_fit.slope if w1_fit is not None else None
            rows.append({
                "preset": run.name,
                "c_alpha": c_alpha,
                "c_gbar": report.c_gbar,
                "c_gbar_c_alpha": report.c_gbar_c_alpha,
                "sigma_bar_closed_form": _nan(report.sigma_bar),
                "t_var_final": float(variance["t_var"].iloc[-1]),
                "log_w1_over_log_t_final": float(w1["log_w1_over_log_t"].iloc[-1]),
                "regime": report.regime.value,
                "w1_slope": _nan(slope),
                "w1_non_decaying": bool(slope is not None and slope >= LabConfig.NON_DECAYING_SLOPE),
                "predicted_w1_exponent": _nan(report.predicted_w1_exponent),
                "gaussian_target_variance": target,
                "reported_sigma_bar": _nan(reported_sigma),
                "t_var_at_reported_time": t_var_reported,
                "reported_vs_closed_form": _relative_gap(_nan(report.sigma_bar), reported_sigma),
                "reported_vs_simulation": _relative_gap(t_var_reported, reported_sigma),
                "n_flagged": ensemble.n_flagged,
            })
            logger.info(
                f"[PRESET] {run.name} C_alpha={c_alpha}: regime={report.regime.value}, "
                f"t_var_final={rows[-1]['t_var_final']:.6g}, W1 slope={slope}"
            )

        bundle.summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
        bundle.files.append(CSVService.write(
            bundle.summary, out_dir, "summary.csv", ExperimentService.metadata(run, **notes)
        ))
        logger.info(f"[PRESET] ✅ {run.name}: {len(bundle.files)} files in {time.time() - start:.2f}s")
        ExperimentService.check_flagged(ensembles)
        return bundle

    @staticmethod
    def preset_snapshots(run: RunConfig, preset: ExperimentPreset, t_end: float) -> Tuple[float, ...]:
        """Log-spaced schedule up to t_end plus the reported-estimate time when it is on the grid."""
        times = set(snapshot_schedule(f"log:40:10:{t_end}", t_end, run.dt, run.t_start))
        if preset.reported_time is not None and preset.reported_time <= t_end:
            k = round((preset.reported_time - run.t_start) / run.dt)
            if abs(run.t_start + k * run.dt - preset.reported_time) <= LabConfig.SNAPSHOT_GRID_RTOL * preset.reported_time:
                times.add(float(run.t_start + k * run.dt))
        return tuple(sorted(times))

    @staticmethod
    def preset_run_config(preset: ExperimentPreset, overrides: Optional[Mapping[str, Any]] = None,
                          workers: Optional[int] = None) -> RunConfig:
        """
        RunConfig of a preset; overrides may change n_paths, seed, dt and t_end only.

        Raises:
            ConfigurationError: any other override key
        """
        overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        bad = sorted(set(overrides) - {"n_paths", "seed", "dt", "t_end"})
        if bad:
            raise ConfigurationError(f"preset overrides may change n_paths, seed, dt, t_end only; got {bad}")
        data = {
            "model": preset.model.value,
            "theta_star": preset.theta_star,
            "c_alpha": list(preset.c_alphas),
            "dt": preset.dt,
            "t_end": preset.t_end,
            "n_paths": preset.n_paths,
            "seed": 0,
            "workers": ConfigService.resolve_workers(workers),
        }
        run = ConfigService.from_mapping(data, name=preset.name, overrides=overrides)
        return replace(run, snapshots=ExperimentService.preset_snapshots(run, preset, run.t_end))

    @staticmethod
    def run_preset(name: str, overrides: Optional[Mapping[str, Any]] = None,
                   out_dir: Optional[Path] = None, workers: Optional[int] = None) -> ArtifactBundle:
        """Run a published preset into out_dir/<name>/."""
        preset = get_preset(name)
        run = ExperimentService.preset_run_config(preset, overrides, workers)
        root = Path(out_dir) if out_dir is not None else config.OUTPUT_DIR
        logger.info(f"[PRESET] {name}: C_alpha={list(run.c_alphas)}, paths={run.n_paths}, seed={run.seed}")
        return ExperimentService.run_bundle(run, root / name, run.workers, preset=preset)

    @staticmethod
    def run_custom(config_path: Path, overrides: Optional[Mapping[str, Any]] = None,
                   out_dir: Optional[Path] = None, workers: Optional[int] = None) -> ArtifactBundle:
        """Run a config file into out_dir with the same bundle shape as a preset."""
        run = ConfigService.load(config_path, overrides)
        root = Path(out_dir) if out_dir is not None else config.OUTPUT_DIR
        return ExperimentService.run_bundle(run, root, ConfigService.resolve_workers(workers, run))
