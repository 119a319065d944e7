"""Experiment orchestration: config files, seeded runs, sweeps, metrics.

A run directory always receives the fully resolved config (including the
calibrated attacker threshold), the per-episode training log CSV, a summary
JSON with converged means and baseline references, and parameter
checkpoints. Re-running from the echoed config reproduces every file
bit-identically.
"""

from __future__ import annotations

import copy
import csv
import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, evaluate_baseline
from .channel import ChannelParams
from .env import OBSERVATION_MODES, BeamEnv, EnvConfig
from .numerics import STREAM_PREDICTOR, RngStream, mix_ids
from .nncore import save_checkpoint
from .predictor import (
    PredictorConfig,
    build_dataset,
    evaluate_predictor,
    generate_rollout,
    save_dataset_csv,
    save_predictor,
    train_predictor,
)
from .sac import CSV_COLUMNS, MASACTrainer, SACConfig

SWEEP_AXES = ("lambda_k", "N", "P", "observation_mode")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    episodes: int = 200
    out_dir: str = "runs/run"
    converged_window: int = 50

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.converged_window < 1:
            raise ValueError("converged_window must be >= 1")


@dataclass
class ExperimentConfig:
    channel: ChannelParams
    env: EnvConfig
    sac: SACConfig
    predictor: PredictorConfig
    run: RunConfig
    raw: dict


_SECTION_TYPES = {
    "channel": ChannelParams,
    "env": EnvConfig,
    "sac": SACConfig,
    "predictor": PredictorConfig,
    "run": RunConfig,
}

# config keys (lowercased dataclass field names differ for a few env fields)
_ENV_FIELDS = ("Pa", "Pb", "Pmax", "lambda_k", "B", "episode_len",
               "observation_mode")


def _build_section(name: str, cls, data: dict, **extra):
    known = {f.name for f in fields(cls)} - set(extra)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(
            f"unknown key(s) in section '{name}': {sorted(unknown)}"
        )
    try:
        return cls(**extra, **data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value in section '{name}': {exc}") from exc


def build_config(data: dict) -> ExperimentConfig:
    """Build a fully resolved config from a (possibly empty) raw dict."""
    unknown = set(data) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError(f"unknown top-level section(s): {sorted(unknown)}")
    raw = copy.deepcopy(data)
    channel_data = dict(data.get("channel", {}))
    if "n" not in channel_data:
        channel_data["n"] = 8
    channel = _build_section("channel", ChannelParams, channel_data)
    env_data = dict(data.get("env", {}))
    bad = set(env_data) - set(_ENV_FIELDS)
    if bad:
        raise ConfigError(f"unknown key(s) in section 'env': {sorted(bad)}")
    env = _build_section("env", EnvConfig, env_data, channel=channel)
    sac = _build_section("sac", SACConfig, dict(data.get("sac", {})))
    predictor = _build_section("predictor", PredictorConfig,
                               dict(data.get("predictor", {})))
    run = _build_section("run", RunConfig, dict(data.get("run", {})))
    return ExperimentConfig(channel, env, sac, predictor, run, raw)


def load_config(path) -> ExperimentConfig:
    """Parse one JSON document into a validated, fully resolved config."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"top level of {path} must be a JSON object")
    return build_config(data)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Fully resolved config as a plain dict, suitable for echoing."""
    ch = cfg.channel
    env = cfg.env
    return {
        "channel": {
            "n": ch.n, "rho": ch.rho, "sigma_zeta2": ch.sigma_zeta2,
            "sigma_z2": ch.sigma_z2, "tau": ch.tau, "kappa": ch.kappa,
            "delta": ch.delta,
        },
        "env": {
            "Pa": env.Pa, "Pb": env.Pb, "Pmax": env.Pmax,
            "lambda_k": env.lambda_k, "B": env.B,
            "episode_len": env.episode_len,
            "observation_mode": env.observation_mode,
        },
        "sac": {f.name: getattr(cfg.sac, f.name) for f in fields(SACConfig)},
        "predictor": {f.name: getattr(cfg.predictor, f.name)
                      for f in fields(PredictorConfig)},
        "run": {f.name: getattr(cfg.run, f.name) for f in fields(RunConfig)},
    }


def apply_axis(raw: dict, axis: str, value) -> dict:
    """Return a copy of the raw config dict with one sweep axis applied."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    data = copy.deepcopy(raw)
    if axis == "lambda_k":
        data.setdefault("env", {})["lambda_k"] = float(value)
    elif axis == "N":
        data.setdefault("channel", {})["n"] = int(value)
    elif axis == "P":
        p = float(value)
        env = data.setdefault("env", {})
        env["Pa"] = p
        env["Pb"] = p
        env["Pmax"] = max(p, float(env.get("Pmax", 0.0)))
    else:
        data.setdefault("env", {})["observation_mode"] = str(value)
    return data


def parse_axis_values(axis: str, text: str) -> list:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty sweep value list")
    if axis == "N":
        return [int(p) for p in parts]
    if axis in ("lambda_k", "P"):
        return [float(p) for p in parts]
    for p in parts:
        if p not in OBSERVATION_MODES:
            raise ConfigError(f"invalid observation_mode {p!r}")
    return parts


def _write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _stats_summary(stats) -> dict:
    return {
        "mean_reward": float(np.mean([s.mean_reward for s in stats])),
        "mean_rk": float(np.mean([s.mean_rk for s in stats])),
        "mean_rd": float(np.mean([s.mean_rd for s in stats])),
        "eavesdrop_frac": float(np.mean([s.eavesdrop_frac for s in stats])),
    }


def pretrain_predictor(cfg: ExperimentConfig, out_dir: Path | None = None):
    """Rollout + dataset + pretraining for the adversary predictor.

    Uses streams derived from the run seed; optionally caches the rollout
    CSV, checkpoint, and metrics into the output directory.
    """
    root = RngStream(cfg.run.seed)
    rollout = generate_rollout(
        cfg.channel, cfg.env.Pa, cfg.predictor.rollout_slots,
        root.child(STREAM_PREDICTOR, 0), root.child(STREAM_PREDICTOR, 1),
        reset_every=cfg.predictor.rollout_reset_every,
    )
    train, val = build_dataset(rollout, cfg.predictor,
                               root.child(STREAM_PREDICTOR, 2),
                               segment_len=cfg.predictor.rollout_reset_every)
    predictor, metrics = train_predictor(train, val, cfg.predictor,
                                         root.child(STREAM_PREDICTOR, 3))
    if out_dir is not None:
        save_dataset_csv(out_dir / "predictor_dataset.csv", rollout)
        save_predictor(out_dir / "predictor.ckpt", predictor)
        _write_json(out_dir / "predictor_metrics.json", {
            "val_mse": metrics.val_mse,
            "val_bce": metrics.val_bce,
            "mode_accuracy": metrics.mode_accuracy,
            "channel_r2": metrics.channel_r2,
            "base_rate": metrics.base_rate,
        })
    return predictor, metrics


def run_experiment(cfg: ExperimentConfig, out_dir=None,
                   baseline_kind: BaselineKind | None = None) -> dict:
    """Train (or evaluate a baseline) and write all metrics files.

    Returns the summary dict that was written to summary.json.
    """
    out = Path(out_dir if out_dir is not None else cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", config_to_dict(cfg))
    window = min(cfg.run.converged_window, cfg.run.episodes)
    offset = cfg.run.episodes - window
    summary: dict = {
        "seed": cfg.run.seed,
        "episodes": cfg.run.episodes,
        "converged_window": window,
    }

    if baseline_kind is not None:
        stats = evaluate_baseline(cfg.env, baseline_kind, cfg.run.seed,
                                  cfg.run.episodes)
        rows = [
            (ep, s.mean_reward, s.mean_rk, s.mean_rd, s.eavesdrop_frac)
            for ep, s in enumerate(stats)
        ]
        _write_csv(out / "baseline_log.csv",
                   ("episode", "mean_reward", "mean_rk", "mean_rd",
                    "eavesdrop_frac"), rows)
        summary["baseline_kind"] = baseline_kind.value
        summary["converged"] = _stats_summary(stats[offset:])
        _write_json(out / "summary.json", summary)
        return summary

    predictor = None
    if cfg.env.observation_mode == "partial-predicted":
        predictor, pmetrics = pretrain_predictor(cfg, out)
        summary["predictor"] = {
            "val_mse": pmetrics.val_mse,
            "mode_accuracy": pmetrics.mode_accuracy,
            "channel_r2": pmetrics.channel_r2,
            "base_rate": pmetrics.base_rate,
        }

    env = BeamEnv(cfg.env, predictor)
    trainer = MASACTrainer(env, cfg.sac, cfg.run.seed)
    log_path = out / "training_log.csv"
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)

        def log_cb(row):
            writer.writerow([_format_cell(getattr(row, col))
                             for col in CSV_COLUMNS])
            fh.flush()

        rows = trainer.train(cfg.run.episodes, log_cb=log_cb)

    save_checkpoint(out / "networks.ckpt", trainer.named_params())
    tail = rows[offset:]
    summary["converged"] = {
        "mean_reward": float(np.mean([r.mean_reward for r in tail])),
        "mean_rk": float(np.mean([r.mean_rk for r in tail])),
        "mean_rd": float(np.mean([r.mean_rd for r in tail])),
        "eavesdrop_frac": float(np.mean([r.eavesdrop_frac for r in tail])),
        "alpha": float(np.mean([r.alpha for r in tail])),
    }
    summary["diagnostics"] = {
        "rke_clamps": env.diagnostics.rke_clamps,
        "domain_errors": env.diagnostics.domain_errors,
    }
    summary["baselines"] = {}
    # baseline policies never read the observation; full mode avoids
    # dragging the predictor into their env
    eval_env_cfg = replace(cfg.env, observation_mode="full")
    for kind in (BaselineKind.RANDOM, BaselineKind.ORACLE_SVD):
        stats = evaluate_baseline(eval_env_cfg, kind, cfg.run.seed,
                                  window, episode_offset=offset)
        summary["baselines"][kind.value] = _stats_summary(stats)
    _write_json(out / "summary.json", summary)
    return summary


def sweep(cfg: ExperimentConfig, axis: str, values, out_dir=None) -> list[dict]:
    """Run one experiment per axis value with derived seeds; merge results.

    Failures of individual points are recorded in the merged table and the
    sweep continues. Rows are sorted by axis value for a stable merge.
    """
    out = Path(out_dir if out_dir is not None else cfg.run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for i, value in enumerate(values):
        point_dir = out / f"point_{axis}_{value}"
        try:
            point_raw = apply_axis(cfg.raw, axis, value)
            point_cfg = build_config(point_raw)
            point_cfg.run.seed = mix_ids(cfg.run.seed, SWEEP_AXES.index(axis),
                                         i) % (1 << 32)
            point_cfg.run.episodes = cfg.run.episodes
            summary = run_experiment(point_cfg, point_dir)
            results.append({"axis_value": value, "summary": summary, "error": None})
        except Exception as exc:  # record and continue per contract
            results.append({"axis_value": value, "summary": None,
                            "error": f"{type(exc).__name__}: {exc}"})
    results.sort(key=lambda r: (str(r["axis_value"])
                                if axis == "observation_mode"
                                else float(r["axis_value"])))
    rows = []
    for r in results:
        if r["summary"] is None:
            rows.append((r["axis_value"], "", "", "", "", "", r["error"]))
            continue
        conv = r["summary"]["converged"]
        base = r["summary"].get("baselines", {})
        rows.append((
            r["axis_value"], conv["mean_reward"], conv["mean_rk"],
            conv["mean_rd"],
            base.get("random", {}).get("mean_reward", ""),
            base.get("oracle-svd", {}).get("mean_reward", ""),
            "",
        ))
    _write_csv(out / f"sweep_{axis}.csv",
               (axis, "mean_reward", "mean_rk", "mean_rd",
                "random_reward", "oracle_reward", "error"), rows)
    return results


def resolve_seed_and_out(cfg: ExperimentConfig, seed_arg, out_arg):
    """Apply CLI/env overrides: flag beats PLKG_* env var beats config file."""
    seed = cfg.run.seed
    env_seed = os.environ.get("PLKG_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    if seed_arg is not None:
        seed = int(seed_arg)
    cfg.run.seed = seed
    out = cfg.run.out_dir
    env_out = os.environ.get("PLKG_OUT")
    if env_out is not None:
        out = env_out
    if out_arg is not None:
        out = out_arg
    cfg.run.out_dir = out
    return cfg
