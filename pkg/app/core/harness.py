"""Monte Carlo campaigns over schemes and sweep points, ECDFs and CSV output."""

import json
import logging
import math
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.exceptions import ConfigurationError, EmptySampleError, OutputError
from app.core.model import NetworkConfig, db_to_linear, generate_channels
from app.core.optimizer import Design, Scheme, design_for, evaluate, jds_optimize, power_audit
from app.models.schemas import CampaignResult, PointSummary, SweepSpec, TrialRecord

logger = logging.getLogger(__name__)

SWEEP_ALIASES = {"power": "power_db", "power_db": "power_db", "lsr": "l_sr", "l_sr": "l_sr", "none": "none"}

CSV_FLOAT_FORMAT = "%.17g"


def parse_schemes(names: Iterable[str]) -> List[Scheme]:
    schemes = []
    for name in names:
        try:
            scheme = Scheme(str(name).strip().lower())
        except ValueError as e:
            raise ConfigurationError(f"Unknown scheme {name!r}; expected one of {[s.value for s in Scheme]}") from e
        if scheme not in schemes:
            schemes.append(scheme)
    return schemes


def make_sweep(name: str, values: Sequence[float] = ()) -> SweepSpec:
    """Sweep from a CLI-style name (power, lsr, none or their canonical forms)."""
    variable = SWEEP_ALIASES.get(str(name).strip().lower())
    if variable is None:
        raise ConfigurationError(f"Unknown sweep variable {name!r}; expected power, lsr or none")
    return SweepSpec(variable=variable, values=[float(v) for v in values])


def normalize_sweep(sweep: SweepSpec, config: NetworkConfig) -> SweepSpec:
    """Canonical sweep with validated points.

    none becomes one point at the base relay power; with an explicit value
    it is a one-point power sweep, so the value sets P1 = P2 = Pr.
    """
    variable = SWEEP_ALIASES.get(sweep.variable)
    if variable is None:
        raise ConfigurationError(f"Unknown sweep variable {sweep.variable!r}")
    values = [float(v) for v in sweep.values]
    if any(not math.isfinite(v) for v in values):
        raise ConfigurationError("Sweep values must be finite")

    if variable == "none":
        if len(values) > 1:
            raise ConfigurationError("A campaign without sweep takes at most one point")
        if values:
            variable = "power_db"
        else:
            values = [10.0 * math.log10(config.p_r) if config.p_r > 0 else 0.0]
    elif not values:
        raise ConfigurationError(f"Sweep over {variable} needs at least one value")

    if variable == "l_sr":
        l_sd = config.l_sd
        bad = [v for v in values if not 0.0 < v < l_sd]
        if bad:
            raise ConfigurationError(f"l_sr values {bad} fall outside (0, {l_sd})")
    if len(set(values)) != len(values):
        raise ConfigurationError("Sweep values must be distinct")
    return SweepSpec(variable=variable, values=values)


def point_config(config: NetworkConfig, variable: str, value: float) -> NetworkConfig:
    if variable == "power_db":
        linear = db_to_linear(value)
        return config.with_updates(p1=linear, p2=linear, p_r=linear)
    if variable == "l_sr":
        return config.with_updates(l_sr=value, l_rd=config.l_sd - value)
    return config


def _record(trial_index: int, value: float, design: Design, channels, config: NetworkConfig) -> TrialRecord:
    metrics = evaluate(design, channels)
    audit = power_audit(design, channels)
    relay = design.relay
    alphas = relay.alpha_trace if relay is not None and relay.alpha_trace else (0.0,)
    return TrialRecord(
        trial_index=trial_index,
        scheme=design.scheme.value,
        sweep_value=value,
        capacity_bits=metrics.capacity,
        sum_mse=metrics.sum_mse,
        outer_iters=design.outer_iters,
        converged=design.converged,
        termination=design.termination.value,
        non_monotone_sweeps=design.non_monotone_sweeps,
        precoder_fallbacks=design.precoder_fallbacks,
        relay_fallbacks=design.relay_fallbacks,
        inner_iters=relay.inner_iters if relay is not None else 0,
        inner_maxed_out=relay.inner_maxed_out if relay is not None else False,
        alpha_final=relay.alpha if relay is not None else 0.0,
        alpha_min=float(min(alphas)),
        alpha_max=float(max(alphas)),
        power_residual=relay.power_residual if relay is not None else 0.0,
        source1_power=audit.source1,
        source2_power=audit.source2,
        relay_power=audit.relay,
        feasible=audit.feasible(config),
    )


def run_trial(config: NetworkConfig, schemes: Sequence[Scheme], trial_index: int,
              sweep_value: float = 0.0) -> List[TrialRecord]:
    """All schemes on one shared channel realization (paired comparison)."""
    channels = generate_channels(config, trial_index)
    records = []
    blind: Optional[Design] = None
    for scheme in schemes:
        if scheme in (Scheme.SOS, Scheme.NOD):
            # SOS and NOD share the direct-link-blind design phase.
            if blind is None:
                blind = jds_optimize(channels.without_direct_links(), config)
            design = replace(blind, scheme=scheme, direct_links=scheme == Scheme.SOS)
        else:
            design = design_for(channels, config, scheme)
        records.append(_record(trial_index, sweep_value, design, channels, config))
    return records


def _run_task(task: Tuple[NetworkConfig, Tuple[str, ...], int, float]) -> List[TrialRecord]:
    config, scheme_names, trial_index, value = task
    return run_trial(config, [Scheme(name) for name in scheme_names], trial_index, value)


def _mean_stderr(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and standard error with exactly rounded sums, independent of order."""
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def summarize(records: Sequence[TrialRecord], schemes: Sequence[str], values: Sequence[float]) -> List[PointSummary]:
    grouped: Dict[Tuple[float, str], List[TrialRecord]] = {}
    for record in records:
        grouped.setdefault((record.sweep_value, record.scheme), []).append(record)

    summaries = []
    for value in values:
        for scheme in schemes:
            group = sorted(grouped.get((value, scheme), []), key=lambda r: r.trial_index)
            if not group:
                continue
            capacities = [r.capacity_bits for r in group]
            mses = [r.sum_mse for r in group]
            cap_mean, cap_se = _mean_stderr(capacities)
            mse_mean, mse_se = _mean_stderr(mses)
            summaries.append(PointSummary(
                scheme=scheme,
                sweep_value=value,
                trials=len(group),
                ergodic_capacity=cap_mean,
                capacity_stderr=cap_se,
                sum_mse=mse_mean,
                mse_stderr=mse_se,
                capacity_samples=sorted(capacities),
            ))
    return summaries


def run_campaign(config: NetworkConfig, schemes: Sequence, sweep: SweepSpec, trials: int,
                 workers: int = 1) -> CampaignResult:
    """Run every (sweep point, trial) pair for the requested schemes and aggregate."""
    if trials < 1:
        raise ConfigurationError(f"trials must be at least 1, got {trials}")
    if workers < 1:
        raise ConfigurationError(f"workers must be at least 1, got {workers}")
    scheme_list = parse_schemes(schemes)
    sweep = normalize_sweep(sweep, config)
    configs = [point_config(config, sweep.variable, v) for v in sweep.values]
    names = tuple(s.value for s in scheme_list)

    records: List[TrialRecord] = []
    if scheme_list:
        tasks = [(cfg, names, trial, value)
                 for cfg, value in zip(configs, sweep.values)
                 for trial in range(trials)]
        if workers == 1:
            results = map(_run_task, tasks)
            executor = None
        else:
            executor = ProcessPoolExecutor(max_workers=workers)
            results = executor.map(_run_task, tasks, chunksize=max(1, trials // (4 * workers)))
        try:
            for done, batch in enumerate(results, start=1):
                records.extend(batch)
                if done % trials == 0:
                    logger.info("Sweep point %s=%g done (%d/%d)", sweep.variable,
                                tasks[done - 1][3], done // trials, len(configs))
        finally:
            if executor is not None:
                executor.shutdown()

    records.sort(key=lambda r: (sweep.values.index(r.sweep_value), r.trial_index, names.index(r.scheme)))
    infeasible = sum(1 for r in records if not r.feasible)
    if infeasible:
        logger.warning("%d designs violate a power constraint", infeasible)

    return CampaignResult(
        sweep_variable=sweep.variable,
        sweep_values=sweep.values,
        schemes=list(names),
        trials=trials,
        seed=config.seed,
        config=config.model_dump(mode="json"),
        summaries=summarize(records, names, sweep.values),
        records=records,
    )


def ecdf(samples) -> pd.DataFrame:
    """Empirical CDF table with columns value and cdf (steps of 1/n)."""
    values = np.sort(np.asarray(list(samples), dtype=float))
    if values.size == 0:
        raise EmptySampleError("ECDF of an empty sample")
    n = values.size
    return pd.DataFrame({"value": values, "cdf": np.arange(1, n + 1) / n})


def paired_difference(result: CampaignResult, scheme_a: str, scheme_b: str, sweep_value: float,
                      metric: str = "capacity_bits") -> Tuple[float, float]:
    """Mean and standard error of metric(a) - metric(b) over trials sharing a realization."""
    by_trial: Dict[int, Dict[str, float]] = {}
    for r in result.records:
        if r.sweep_value == sweep_value and r.scheme in (scheme_a, scheme_b):
            by_trial.setdefault(r.trial_index, {})[r.scheme] = getattr(r, metric)
    diffs = [v[scheme_a] - v[scheme_b] for _, v in sorted(by_trial.items()) if len(v) == 2]
    if not diffs:
        raise EmptySampleError(f"no paired trials for {scheme_a} and {scheme_b} at {sweep_value}")
    return _mean_stderr(diffs)


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=10, check=True,
        )
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    try:
        frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8", float_format=CSV_FLOAT_FORMAT)
    except OSError as e:
        raise OutputError(path, str(e)) from e
    return path


def _summary_frame(result: CampaignResult, axis: str, metric: str) -> pd.DataFrame:
    rows = []
    for s in result.summaries:
        if metric == "capacity":
            rows.append({axis: s.sweep_value, "scheme": s.scheme, "ergodic_capacity": s.ergodic_capacity,
                         "stderr": s.capacity_stderr, "trials": s.trials})
        else:
            rows.append({axis: s.sweep_value, "scheme": s.scheme, "sum_mse": s.sum_mse,
                         "stderr": s.mse_stderr, "trials": s.trials})
    return pd.DataFrame(rows)


def cdf_filename(power_db: float) -> str:
    return f"cdf_{power_db:g}.csv"


def write_results(result: CampaignResult, out_dir, describe: Optional[str] = None) -> List[Path]:
    """Write the figure CSVs and the run manifest; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(out, str(e)) from e

    written: List[Path] = []
    if result.schemes and result.summaries:
        if result.sweep_variable == "l_sr":
            written.append(_write_csv(_summary_frame(result, "l_sr", "capacity"), out / "capacity_vs_lsr.csv"))
            written.append(_write_csv(_summary_frame(result, "l_sr", "mse"), out / "mse_vs_lsr.csv"))
        else:
            written.append(_write_csv(_summary_frame(result, "power_db", "capacity"), out / "capacity_vs_power.csv"))
            written.append(_write_csv(_summary_frame(result, "power_db", "mse"), out / "mse_vs_power.csv"))
            for value in result.sweep_values:
                frames = []
                for scheme in result.schemes:
                    table = ecdf(result.summary(scheme, value).capacity_samples)
                    frames.append(pd.DataFrame({"capacity": table["value"], "cdf": table["cdf"], "scheme": scheme}))
                written.append(_write_csv(pd.concat(frames, ignore_index=True), out / cdf_filename(value)))

    manifest = {
        "config": result.config,
        "seed": result.seed,
        "sweep": {"variable": result.sweep_variable, "values": result.sweep_values},
        "schemes": result.schemes,
        "trials": result.trials,
        "git_describe": describe if describe is not None else git_describe(),
        "files": [p.name for p in written],
    }
    manifest_path = out / "campaign.json"
    try:
        with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise OutputError(manifest_path, str(e)) from e
    written.append(manifest_path)
    return written
