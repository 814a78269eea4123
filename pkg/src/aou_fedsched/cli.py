"""Command-line front end: config parsing, experiment execution, CSV output.

Subcommands:
  run            execute one experiment and emit per-round metrics as CSV
  sweep          run several seeds (optionally in parallel) into one CSV
  inspect-alloc  replay one round and dump its candidate list and selection
  gen-data       write a synthetic dataset as CSV (label, then features)

The metrics CSV contract is the fixed header
``round,policy,seed,accuracy,scheduled,mean_aou,max_aou,objective`` with
floats at 6 significant digits and rows sorted by (seed, round); reruns
with the same config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import streams
from .allocation import RadioConfig, build_candidate_list
from .channel import ChannelConfig, sample_gains, sample_topology
from .errors import ConfigError, FormatError, InvariantViolation
from .learning import LearningConfig, generate_synthetic, save_dataset_csv
from .scheduler import FairnessConfig, aou_step, f_alpha
from .simulation import DataConfig, ExperimentConfig, run, schedule_round, sweep

METRICS_HEADER = "round,policy,seed,accuracy,scheduled,mean_aou,max_aou,objective"

_SECTION_FIELDS = {
    "channel": ("noise_power", "cell_radius", "min_distance", "fading_mean", "path_loss_exponent"),
    "radio": ("max_power", "rate_target", "rate_prefactor"),
    "fairness": ("alpha",),
    "learning": ("step_size", "local_steps", "regularizer_weight", "loss"),
    "data": (
        "source",
        "partition",
        "test_fraction",
        "num_samples",
        "dimension",
        "margin",
        "csv_path",
        "train_images",
        "train_labels",
        "test_images",
        "test_labels",
        "digit_a",
        "digit_b",
    ),
}
_TOP_FIELDS = ("K", "N", "rounds", "seed", "policy") + tuple(_SECTION_FIELDS)


def parse_config(path) -> ExperimentConfig:
    """Load and validate an experiment config, rejecting unknown keys."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")

    for key in raw:
        if key not in _TOP_FIELDS:
            raise ConfigError(f"unknown config key '{key}'")
    sections = {}
    for name, allowed in _SECTION_FIELDS.items():
        body = raw.get(name, {})
        if not isinstance(body, dict):
            raise ConfigError(f"section '{name}' must be a JSON object")
        for key in body:
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in section '{name}'")
        sections[name] = body

    def _int(key, default, minimum):
        value = raw.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise ConfigError(f'"{key}" must be an integer >= {minimum}, got {value!r}')
        return value

    num_ues = _int("K", 20, 1)
    num_subchannels = _int("N", 5, 1)
    rounds = _int("rounds", 50, 1)
    seed = _int("seed", 0, 0)
    policy = raw.get("policy", "abs")

    channel = ChannelConfig(num_subchannels=num_subchannels, **sections["channel"])
    return ExperimentConfig(
        num_ues=num_ues,
        rounds=rounds,
        master_seed=seed,
        policy=policy,
        channel=channel,
        radio=RadioConfig(**sections["radio"]),
        fairness=FairnessConfig(**sections["fairness"]),
        learning=LearningConfig(**sections["learning"]),
        data=DataConfig(**sections["data"]),
    )


def _fmt(value: float) -> str:
    return format(float(value), ".6g")


def emit_metrics(results, path_or_file) -> None:
    """Write the metrics CSV for one or more runs (see module docstring)."""
    results = list(results)
    if not results:
        raise ValueError("emit_metrics requires at least one result")
    lines = [METRICS_HEADER]
    for result in sorted(results, key=lambda r: r.seed):
        for m in result.metrics:
            lines.append(
                f"{m.round_index},{result.config.policy},{result.seed},"
                f"{_fmt(m.accuracy)},{m.scheduled_count},{_fmt(m.mean_age)},"
                f"{m.max_age},{_fmt(m.objective)}"
            )
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)


def inspect_alloc(config: ExperimentConfig, round_index: int, out=None, csv_path=None) -> None:
    """Replay scheduling up to a round and dump its candidate list and selection.

    The schedule trajectory is independent of the learning state, so the
    replay only re-draws channels and decisions.
    """
    out = out or sys.stdout
    if not 0 <= round_index < config.rounds:
        raise ConfigError(f"round {round_index} out of range [0, {config.rounds})")
    seed = config.master_seed
    topology = sample_topology(
        config.num_ues, config.channel, streams.substream(seed, streams.TOPOLOGY)
    )
    ages = np.zeros(config.num_ues, dtype=np.int64)
    cursor = 0
    for t in range(round_index + 1):
        realization = sample_gains(
            topology, config.channel, streams.substream(seed, streams.FADING, t)
        )
        decision, new_cursor = schedule_round(config, ages, realization, cursor, t)
        if t < round_index:
            ages = aou_step(ages, decision.selected)
            cursor = new_cursor

    full_set = tuple(range(config.channel.num_subchannels))
    candidates = build_candidate_list(realization, full_set, config.radio)
    alpha = config.fairness.alpha

    print(f"round {round_index}  policy={config.policy}  seed={seed}", file=out)
    print(f"candidates on the full spectrum ({len(candidates.members)} of {config.num_ues} UEs):", file=out)
    print("  ue  age  n*  channels        rate      score", file=out)
    rows = []
    for k in candidates.members:
        alloc = candidates.allocations[k]
        score = f_alpha(float(ages[k]), alpha) / alloc.count
        chans = "|".join(str(c) for c in alloc.channels)
        pows = "|".join(_fmt(p) for p in alloc.powers)
        print(
            f"  {k:>3} {int(ages[k]):>4} {alloc.count:>3}  {chans:<14} {_fmt(alloc.rate):>9} {_fmt(score):>10}",
            file=out,
        )
        rows.append((k, alloc.count, chans, pows, _fmt(alloc.rate)))
    print("selection order:", file=out)
    for position, k in enumerate(decision.order):
        alloc = decision.allocations[k]
        chans = "|".join(str(c) for c in alloc.channels)
        print(
            f"  #{position}: ue {k} on channels {chans} (rate {_fmt(alloc.rate)})",
            file=out,
        )
    if not decision.order:
        print("  (empty schedule)", file=out)
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            fh.write("ue_id,n_star,channels,powers,rate\n")
            for ue, n_star, chans, pows, rate in rows:
                fh.write(f"{ue},{n_star},{chans},{pows},{rate}\n")


def _thread_cap() -> int:
    raw = os.environ.get("AOU_FEDSCHED_THREADS", "")
    if raw == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"AOU_FEDSCHED_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise ConfigError(f"AOU_FEDSCHED_THREADS must be >= 0, got {value}")
    return value if value > 0 else (os.cpu_count() or 1)


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "seed", None) is not None:
        config = replace(config, master_seed=args.seed)
    if getattr(args, "policy", None) is not None:
        config = replace(config, policy=args.policy)
    if getattr(args, "rounds", None) is not None:
        config = replace(config, rounds=args.rounds)
    return config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aou-fedsched",
        description="Age-of-update client scheduling for federated learning over shared spectrum",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_seed=True):
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        if with_seed:
            p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--policy", choices=["abs", "maxpack", "round_robin", "random"])
        p.add_argument("--rounds", type=int, help="override the number of rounds")
        p.add_argument("--output", help="output CSV path (default: stdout)")

    common(sub.add_parser("run", help="execute one experiment"))
    p_sweep = sub.add_parser("sweep", help="run several seeds into one CSV")
    common(p_sweep, with_seed=False)
    p_sweep.add_argument(
        "--seeds", required=True, help="comma-separated seed list, e.g. 0,1,2"
    )
    p_inspect = sub.add_parser("inspect-alloc", help="dump one round's allocation detail")
    common(p_inspect)
    p_inspect.add_argument("--round", type=int, default=0, help="round index to replay")
    p_gen = sub.add_parser("gen-data", help="write the config's synthetic dataset as CSV")
    common(p_gen)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _apply_overrides(parse_config(args.config), args)
        if args.command == "run":
            result = run(config)
            emit_metrics([result], args.output or sys.stdout)
        elif args.command == "sweep":
            try:
                seeds = [int(s) for s in args.seeds.split(",") if s != ""]
            except ValueError:
                raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
            if not seeds:
                raise ConfigError("--seeds must name at least one seed")
            results = sweep(config, seeds, max_workers=_thread_cap())
            emit_metrics(results, args.output or sys.stdout)
        elif args.command == "inspect-alloc":
            inspect_alloc(config, args.round, csv_path=args.output)
        elif args.command == "gen-data":
            if not args.output:
                raise ConfigError("gen-data requires --output")
            data = config.data
            dataset, _ = generate_synthetic(
                data.num_samples,
                data.dimension,
                data.margin,
                streams.substream(config.master_seed, streams.SYNTH_DATA),
            )
            save_dataset_csv(dataset, args.output)
        return 0
    except (ConfigError, FormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
