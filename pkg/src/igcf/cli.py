"""Command-line entry points and experiment orchestration.

Subcommands: ``pretrain`` (fit embeddings, write a snapshot),
``evaluate`` (replay a protocol for the configured policies),
``regret`` (synthetic-bandit regret curves), ``inspect-snapshot``.

Configuration is an INI file with sections [experiment], [propagation],
[pretrain], [regret] and one [policy:NAME] section per policy.  Keys of
the first four sections may be overridden through environment variables
``IGCF_<SECTION>_<KEY>`` (uppercase), and a few common knobs through
command-line flags.  Exit codes: 0 success, 2 configuration error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, metrics, regret_lab, replay
from .datasets import (
    DataError,
    filter_records,
    ingest,
    sample_mask,
    subsample_users,
    write_id_maps,
)
from .graph import PropagationSpec, propagate
from .online import BayesLinUcbPolicy, PolicyConfig, build_meta_prior
from .pretrain import (
    NumericalError,
    PretrainConfig,
    PretrainedModel,
    VariationalParams,
    make_context,
    pretrain,
    softplus,
)
from .snapshot import Snapshot, export_csv, load_snapshot, save_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

ENV_PREFIX = "IGCF_"
_ENV_SECTIONS = ("experiment", "propagation", "pretrain", "regret")


class ConfigError(Exception):
    """Invalid or missing configuration."""


def load_config(path) -> dict:
    """Read the INI file and apply IGCF_* environment overrides."""
    parser = configparser.ConfigParser()
    loaded = parser.read(path)
    if not loaded:
        raise ConfigError(f"config file {path} not found")
    config = {section: dict(parser[section]) for section in parser.sections()}
    for section in _ENV_SECTIONS:
        prefix = f"{ENV_PREFIX}{section.upper()}_"
        for name, value in os.environ.items():
            if name.startswith(prefix):
                key = name[len(prefix):].lower()
                config.setdefault(section, {})[key] = value
    return config


def _get(config, section, key, default=None, cast=str):
    value = config.get(section, {}).get(key)
    if value is None:
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    try:
        if cast is bool:
            return str(value).strip().lower() in ("1", "true", "yes", "on")
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}={value!r} is not a valid {cast.__name__}") from None


def propagation_spec(config) -> PropagationSpec:
    scheme = _get(config, "propagation", "scheme", "lightgcn")
    depth = _get(config, "propagation", "depth", 3, int)
    weights = config.get("propagation", {}).get("layer_weights")
    teleport = config.get("propagation", {}).get("teleport")
    try:
        return PropagationSpec(
            scheme=scheme,
            depth=depth,
            layer_weights=tuple(float(w) for w in weights.split(",")) if weights else None,
            teleport=float(teleport) if teleport else None,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def pretrain_config(config, spec_dim_key="dim") -> PretrainConfig:
    section = config.get("pretrain", {})
    try:
        return PretrainConfig(
            dim=int(section.get(spec_dim_key, 16)),
            prior_variance=float(section.get("prior_variance", 1.0)),
            noise_variance=float(section.get("noise_variance", 1.0)),
            feedback=section.get("feedback", "continuous"),
            learning_rate=float(section.get("learning_rate", 0.1)),
            batch_size=int(section.get("batch_size", 512)),
            max_epochs=int(section.get("max_epochs", 500)),
            convergence_tol=float(section.get("convergence_tol", 1e-4)),
            seed=int(section.get("seed", _get(config, "experiment", "seed", 0, int))),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, config, inputs) -> None:
    manifest = {
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).is_file()},
        "tool": "igcf 0.1.0",
    }
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def prepare_data(config):
    """Ingest, optionally subsample users, and cut the protocol's training set."""
    path = _get(config, "experiment", "dataset")
    fmt = _get(config, "experiment", "format")
    seed = _get(config, "experiment", "seed", 0, int)
    dataset = ingest(path, fmt)
    subsample = _get(config, "experiment", "subsample", 1.0, float)
    if subsample < 1.0:
        dataset = subsample_users(dataset, subsample, seed)

    protocol = _get(config, "experiment", "protocol", "cold_start")
    num_test = _get(config, "experiment", "test_users", 200, int)
    genres = None
    drift_split = None
    if protocol in ("cold_start", "topk", "regret"):
        train, test_users = replay.cold_start_split(dataset, num_test)
    elif protocol == "drift":
        genres_path = config.get("experiment", {}).get("genres")
        if genres_path is None:
            raise ConfigError("drift protocol requires [experiment] genres")
        genres = _load_genres(genres_path, dataset)
        switch = _get(config, "experiment", "switch_round", 60, int)
        drift_split = replay.build_drift_split(dataset, genres, num_test, switch)
        train = filter_records(dataset, np.isin(dataset.users, drift_split.train_users))
        test_users = drift_split.test_users
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")

    fraction = _get(config, "experiment", "train_fraction", 0.5, float)
    if fraction < 1.0:
        train = filter_records(train, sample_mask(len(train), fraction, seed))
    return dataset, train, test_users, drift_split


def _load_genres(path, dataset) -> np.ndarray:
    """CSV of ``item,genres`` rows with pipe-separated genre labels."""
    import csv as _csv

    labels = {}
    per_item = {}
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = _csv.reader(handle)
        next(reader)
        for row in reader:
            item_id, names = row[0], row[1].split("|")
            for name in names:
                labels.setdefault(name, len(labels))
            per_item[item_id] = [labels[name] for name in names]
    genres = np.zeros((dataset.num_items, max(len(labels), 1)))
    originals = [str(v) for v in dataset.item_ids]
    for dense, original in enumerate(originals):
        for column in per_item.get(original, []):
            genres[dense, column] = 1.0
    return genres


def _train_models(config, train, spec, need_depth0):
    base = pretrain_config(config)
    model = pretrain(train, spec, base)
    model0 = None
    if need_depth0:
        spec0 = PropagationSpec(scheme="lightgcn", depth=0)
        model0 = pretrain(train, spec0, base)
    return model, model0


def build_policies(config, names, model, model0, train, seed):
    """Instantiate every requested [policy:NAME] section."""
    policies = {}
    for name in names:
        section = config.get(f"policy:{name}")
        if section is None:
            raise ConfigError(f"missing [policy:{name}] section")
        kind = section.get("kind", name)
        if kind == "igcf":
            meta = build_meta_prior(
                model,
                gamma=float(section.get("gamma", 0.1)),
                users=np.unique(train.users),
            )
            policy_config = PolicyConfig(
                mode=section.get("mode", "ucb_info"),
                delta=float(section.get("delta", 0.05)),
                nu=float(section.get("nu", 1.0)),
                sigma_noise=float(section.get("sigma_noise", 1.0)),
                seed=seed,
            )
            policies[name] = BayesLinUcbPolicy(model.item_vectors, meta, policy_config)
        elif kind in ("icf_ucb", "icf_ts"):
            if model0 is None:
                raise ConfigError(f"[policy:{name}] needs the depth-0 baseline model")
            policies[name] = baselines.IcfPolicy(
                model0.item_vectors,
                mode="ts" if kind == "icf_ts" else "ucb",
                c=float(section.get("c", 1.0)),
                lam=float(section.get("lambda", 1.0)),
                sigma_noise=float(section.get("sigma_noise", 1.0)),
                seed=seed,
            )
        elif kind == "mf":
            if model0 is None:
                raise ConfigError(f"[policy:{name}] needs the depth-0 baseline model")
            policies[name] = baselines.MfPolicy(model0.item_vectors, seed=seed)
        elif kind == "pop":
            policies[name] = baselines.PopPolicy(baselines.popularity_counts(train))
        elif kind == "random":
            policies[name] = baselines.RandomPolicy(seed=seed)
        else:
            raise ConfigError(f"unknown policy kind {kind!r} for [policy:{name}]")
        policies[name].name = name
    return policies


def _policy_names(config, override):
    if override:
        return [n.strip() for n in override.split(",") if n.strip()]
    names = [s.split(":", 1)[1] for s in config if s.startswith("policy:")]
    if not names:
        raise ConfigError("no [policy:NAME] sections configured")
    return names


def cmd_pretrain(args) -> int:
    config = load_config(args.config)
    _apply_flag_overrides(config, args)
    out_dir = Path(_get(config, "experiment", "out", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset, train, _, _ = prepare_data(config)
    spec = propagation_spec(config)
    base = pretrain_config(config)
    model = pretrain(train, spec, base)
    params = VariationalParams(model.phi_star, model.rho_star)
    save_snapshot(out_dir / "snapshot.igcf", params, model.num_users,
                  model.num_items, spec.depth, spec.scheme)
    write_id_maps(dataset, out_dir / "id_map.csv")
    write_manifest(out_dir, config, [_get(config, "experiment", "dataset")])
    print(f"snapshot written to {out_dir / 'snapshot.igcf'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    _apply_flag_overrides(config, args)
    out_dir = Path(_get(config, "experiment", "out", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _get(config, "experiment", "seed", 0, int)
    horizon = _get(config, "experiment", "t", 40, int)
    slate_k = _get(config, "experiment", "k", 1, int)
    protocol = _get(config, "experiment", "protocol", "cold_start")
    env_protocol = _get(config, "experiment", "env_protocol", "zero_fill")

    dataset, train, test_users, drift_split = prepare_data(config)
    spec = propagation_spec(config)
    names = _policy_names(config, args.policies)
    need_depth0 = any(
        config.get(f"policy:{n}", {}).get("kind", n) in ("icf_ucb", "icf_ts", "mf")
        for n in names
    )

    snapshot_path = args.snapshot or config.get("experiment", {}).get("snapshot")
    if snapshot_path:
        snap = load_snapshot(snapshot_path)
        if (snap.scheme, snap.depth) != (spec.scheme, spec.depth):
            raise ConfigError(
                f"snapshot {snapshot_path} was built for {snap.scheme}/depth={snap.depth}"
            )
        model = _model_from_snapshot(snap, train, spec, config)
        model0 = None
        if need_depth0:
            base = pretrain_config(config)
            model0 = pretrain(train, PropagationSpec("lightgcn", 0), base)
    elif args.pretrain:
        model, model0 = _train_models(config, train, spec, need_depth0)
    else:
        raise ConfigError("evaluate needs [experiment] snapshot or --pretrain")

    policies = build_policies(config, names, model, model0, train, seed)

    if drift_split is not None:
        env = replay.drift_environment(dataset, drift_split, env_protocol)
        histories = _drift_histories(dataset, drift_split)
    else:
        env = replay.ReplayEnvironment.from_dataset(dataset, env_protocol,
                                                    users=test_users)
        histories = None

    logs_by_policy = {}
    for name, policy in policies.items():
        logs_by_policy[name] = replay.run_policy(env, policy, test_users,
                                                 horizon, slate_k, histories)

    satisfied = dataset.satisfied_counts()
    checkpoints = _checkpoints(config, horizon)
    summary = metrics.summarize(logs_by_policy, checkpoints, slate_k, satisfied)
    replay.write_log_csv(out_dir / "episodes.csv", protocol, logs_by_policy)
    with open(out_dir / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")
    write_id_maps(dataset, out_dir / "id_map.csv")
    inputs = [_get(config, "experiment", "dataset")]
    if snapshot_path:
        inputs.append(snapshot_path)
    write_manifest(out_dir, config, inputs)
    for name, entry in sorted(summary.items()):
        print(name, json.dumps(entry, sort_keys=True))
    return EXIT_OK


def _model_from_snapshot(snap: Snapshot, train, spec, config):
    ctx = make_context(train, spec, pretrain_config(config))
    finals = propagate(snap.params.mu, ctx.operator, spec)
    return PretrainedModel(
        phi_star=snap.params.mu,
        rho_star=snap.params.rho,
        scale_star=softplus(snap.params.rho),
        user_vectors=finals[:snap.num_users],
        item_vectors=finals[snap.num_users:],
        spec=spec,
        num_users=snap.num_users,
        num_items=snap.num_items,
        provenance="snapshot",
    )


def _drift_histories(dataset, split):
    """Default warm start: the first-half interactions seed the posterior."""
    histories = {}
    lookup = {}
    for u, i, v in zip(dataset.users, dataset.items, dataset.values):
        lookup[(int(u), int(i))] = float(v)
    for user in split.test_users:
        items = split.first_half[int(user)]
        rewards = np.asarray([lookup[(int(user), int(i))] for i in items])
        histories[int(user)] = (items, rewards)
    return histories


def _checkpoints(config, horizon):
    raw = config.get("experiment", {}).get("checkpoints")
    if not raw:
        return [horizon]
    points = [int(p) for p in raw.split(",")]
    return [p for p in points if p <= horizon] or [horizon]


def cmd_regret(args) -> int:
    config = load_config(args.config)
    _apply_flag_overrides(config, args)
    out_dir = Path(_get(config, "experiment", "out", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    section = config.get("regret", {})
    env_config = regret_lab.SyntheticEnvConfig(
        dim=int(section.get("dim", 4)),
        num_items=int(section.get("num_items", 50)),
        item_cov_scale=float(section.get("item_cov_scale", 0.25)),
        norm_bound=float(section.get("norm_bound", 1.0)),
        prior_mu_scale=float(section.get("prior_mu_scale", 0.5)),
        prior_cov_scale=float(section.get("prior_cov_scale", 0.25)),
        sigma_noise=float(section.get("sigma_noise", 0.5)),
    )
    seed = _get(config, "experiment", "seed", 0, int)
    horizon = int(section.get("t", _get(config, "experiment", "t", 500, int)))
    reps = int(section.get("reps", 50))
    env = regret_lab.sample_env(env_config, seed)

    policy_config = PolicyConfig(
        mode=section.get("mode", "ucb_info"),
        delta=float(section.get("delta", 0.1)),
        nu=float(section.get("nu", 1.0)),
        sigma_noise=env.sigma_noise,
        seed=seed,
    )

    def factory(theta, rng):
        return regret_lab.PosteriorUcbPolicy(env.mu_star, env.sigma_star,
                                             policy_config)

    curve = regret_lab.empirical_regret(env, factory, horizon, reps, seed)
    regret_lab.write_regret_csv(out_dir / "regret.csv", curve)
    finite = curve.taus[np.isfinite(curve.taus)]
    tau = float(finite.mean()) if finite.size else float(horizon)
    bound_params = {
        "tau": tau,
        "dim": env.dim,
        "num_items": env.num_items,
        "num_tasks": int(section.get("num_tasks", 100)),
        "lambda_bar": env.lambda_bar,
        "sigma_noise": env.sigma_noise,
        "norm_bound": env.norm_bound,
        "mean_bound": float(np.linalg.norm(env.mu_star)),
        "k1": float(section.get("k1", 0.0)),
    }
    summary = regret_lab.regret_summary(curve, [horizon], bound_params)
    regret_lab.write_regret_summary(out_dir / "regret_summary.json", summary)
    write_manifest(out_dir, config, [])
    print(json.dumps(summary["checkpoints"], sort_keys=True))
    return EXIT_OK


def cmd_inspect(args) -> int:
    snap = load_snapshot(args.snapshot)
    print(f"users={snap.num_users} items={snap.num_items} dim={snap.dim} "
          f"depth={snap.depth} scheme={snap.scheme}")
    print(f"mu:  mean={snap.params.mu.mean():+.6f} max|.|={np.abs(snap.params.mu).max():.6f}")
    print(f"rho: mean={snap.params.rho.mean():+.6f} max|.|={np.abs(snap.params.rho).max():.6f}")
    if args.csv:
        export_csv(args.csv, snap)
        print(f"csv written to {args.csv}")
    return EXIT_OK


def _apply_flag_overrides(config, args) -> None:
    experiment = config.setdefault("experiment", {})
    if getattr(args, "seed", None) is not None:
        experiment["seed"] = str(args.seed)
    if getattr(args, "out", None) is not None:
        experiment["out"] = args.out
    if getattr(args, "horizon", None) is not None:
        experiment["t"] = str(args.horizon)
    if getattr(args, "slate", None) is not None:
        experiment["k"] = str(args.slate)
    if getattr(args, "subsample", None) is not None:
        experiment["subsample"] = str(args.subsample)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="igcf",
        description="Graph-convolutional interactive recommendation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--T", dest="horizon", type=int, default=None)
        p.add_argument("--k", dest="slate", type=int, default=None)
        p.add_argument("--subsample", type=float, default=None)

    p_pre = sub.add_parser("pretrain", help="fit embeddings and write a snapshot")
    common(p_pre)
    p_pre.set_defaults(func=cmd_pretrain)

    p_eval = sub.add_parser("evaluate", help="replay a protocol for the configured policies")
    common(p_eval)
    p_eval.add_argument("--policies", default=None, help="comma-separated policy names")
    p_eval.add_argument("--snapshot", default=None, help="embedding snapshot to load")
    p_eval.add_argument("--pretrain", action="store_true",
                        help="train embeddings now instead of loading a snapshot")
    p_eval.set_defaults(func=cmd_evaluate)

    p_reg = sub.add_parser("regret", help="synthetic-bandit regret curves")
    common(p_reg)
    p_reg.set_defaults(func=cmd_regret)

    p_ins = sub.add_parser("inspect-snapshot", help="print snapshot header and stats")
    p_ins.add_argument("snapshot")
    p_ins.add_argument("--csv", default=None, help="also export as CSV")
    p_ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
