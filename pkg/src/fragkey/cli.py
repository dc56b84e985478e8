"""``fragkey`` command line: run sessions, sweep subsampling, tabulate attacks.

Exit codes: 0 authentic / success, 2 attacked verdict, 1 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .attacks import ATTACK_KINDS, AttackSpec
from .core import FragkeyError
from .experiments import REFERENCE_RATIOS, attack_matrix, default_grid, sweep_subsampling
from .ghost import center_weighted_profile
from .protocol import METHODS, PRESETS, SessionConfig, SessionTranscript, audit_channels, run_session
from .patterns import SHAPES

EXIT_OK, EXIT_ERROR, EXIT_ATTACKED = 0, 1, 2


def _seed(value):
    if value is not None:
        return value
    env = os.environ.get("FRAGKEY_SEED")
    return int(env) if env else 0


def _load_profile(spec: str | None, shape) -> np.ndarray | None:
    """``center``, ``center:STRENGTH`` or a CSV grid at measurement resolution."""
    if spec is None:
        return None
    if spec == "flat":
        return None
    if spec.startswith("center"):
        strength = float(spec.split(":", 1)[1]) if ":" in spec else 1.0
        return center_weighted_profile(shape, strength)
    return io.deserialize_gray_csv(Path(spec).read_text())


def _session_config(args) -> SessionConfig:
    if args.config:
        base = json.loads(Path(args.config).read_text())
        if "config" in base:
            base = base["config"]
        cfg = SessionConfig.from_dict(base)
    else:
        cfg = SessionConfig(**PRESETS[args.preset]) if args.preset else SessionConfig()
    overrides = {}
    for name in ("t", "p", "q", "nu", "N", "shape", "ratio", "method", "discard_mode"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.noise is not None:
        overrides["noise_sigma"] = args.noise
    if args.balanced:
        overrides["balanced"] = True
    if args.index_dark:
        overrides["index_dark"] = True
    if args.seed is not None or not args.config:
        overrides["seed"] = _seed(args.seed)
    if args.parent:
        overrides["parent"] = io.deserialize_pattern(Path(args.parent).read_text())
    cfg = replace(cfg, **overrides)
    if args.source_profile:
        shape = (cfg.q * cfg.nu, cfg.p * cfg.nu)
        cfg = replace(cfg, source_profile=_load_profile(args.source_profile, shape))
    if args.attack:
        cfg = replace(cfg, attack=AttackSpec(args.attack, args.attack_fraction, args.attack_user, args.attack_seed))
    return cfg


def _add_session_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="session config JSON (or a transcript to replay)")
    p.add_argument("--seed", type=int, help="master seed (falls back to $FRAGKEY_SEED, then 0)")
    p.add_argument("--t", type=int, help="number of users")
    p.add_argument("--p", type=int, help="pattern width in pixel-units")
    p.add_argument("--q", type=int, help="pattern height in pixel-units")
    p.add_argument("--nu", type=int, help="upsampling factor")
    p.add_argument("--N", type=int, help="number of measurements")
    p.add_argument("--shape", choices=SHAPES)
    p.add_argument("--ratio", help="dark:bright ratio of the parent pattern")
    p.add_argument("--parent", help="PBM file with an explicit parent pattern")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--noise", type=float, help="detector noise, fraction of mean bucket value")
    p.add_argument("--source-profile", help="'center[:STRENGTH]' or CSV grid of illumination")
    p.add_argument("--balanced", action="store_true", help="deal bright cells round-robin")
    p.add_argument("--index-dark", action="store_true", help="read keys from dark fragment cells")
    p.add_argument("--discard-mode", choices=("reject", "truncate"))
    p.add_argument("--attack", choices=ATTACK_KINDS)
    p.add_argument("--attack-fraction", type=float, default=0.01)
    p.add_argument("--attack-user", type=int, default=0)
    p.add_argument("--attack-seed", type=int)


def cmd_run(args) -> int:
    cfg = _session_config(args)
    print("config " + json.dumps({k: v for k, v in cfg.to_dict().items() if k != "source_profile"}, sort_keys=True))
    transcript = run_session(cfg)
    text = transcript.to_json()
    if args.out:
        Path(args.out).write_text(text)
    problems = audit_channels(transcript)
    for line in problems:
        print("audit: " + line, file=sys.stderr)
    data = transcript.data
    print(f"verdict {data['verdict']['status']}")
    for u in data["users"]:
        if u["error"]:
            print(f"user{u['user']}: {u['error']}")
    if transcript.authentic:
        for j, key in enumerate(data["keys"]):
            print(f"user{j} key {key}")
        print(f"key agreement {data['key_agreement']}")
        if args.keys_out:
            Path(args.keys_out).write_text("".join(k + "\n" for k in data["keys"]))
    if problems:
        return EXIT_ERROR
    return EXIT_OK if transcript.authentic else EXIT_ATTACKED


def _parse_grid(text: str | None) -> list[float]:
    if not text:
        return default_grid()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        return default_grid(start, stop, step)
    return [float(x) for x in text.split(",")]


def cmd_sweep(args) -> int:
    trials = 25 if args.smoke else args.trials
    seed = _seed(args.seed)
    shape = (args.q * args.nu, args.p * args.nu)
    profile = _load_profile(args.source_profile, shape)
    ratios = args.ratios.split(",") if args.ratios else list(REFERENCE_RATIOS)
    print(
        "config "
        + json.dumps(
            dict(nu=args.nu, p=args.p, q=args.q, ratios=ratios, trials=trials, threshold=args.threshold,
                 seed=seed, shape=args.shape, noise=args.noise, source_profile=args.source_profile),
            sort_keys=True,
        )
    )
    result = sweep_subsampling(
        ratios, _parse_grid(args.grid), trials, args.nu, args.p, args.q, args.shape,
        args.threshold, seed, args.noise, profile, args.workers,
    )
    for ratio, m, lim in zip(result.fragment_ratios, result.bright_counts, result.limits):
        shown = "none" if lim is None else f"{lim:.0%}"
        print(f"nu={args.nu} ratio={ratio} bright={m} limit={shown}")
    for note in result.notes:
        print("note: " + note)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"sweep_nu{args.nu}.csv").write_text(result.to_csv())
        (out / f"limits_nu{args.nu}.csv").write_text(result.limits_csv())
        (out / f"sweep_nu{args.nu}.dat").write_text(result.to_gnuplot())
    return EXIT_OK


def cmd_attacks(args) -> int:
    cfg = _session_config(args)
    kinds = args.kinds.split(",") if args.kinds else ATTACK_KINDS
    print("config " + json.dumps({k: v for k, v in cfg.to_dict().items() if k != "source_profile"}, sort_keys=True))
    table = attack_matrix(
        cfg, kinds, args.trials, args.attack_fraction, args.attack_user, cfg.seed,
        None if args.control_N == 0 else args.control_N, args.workers,
    )
    text = table.to_csv()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


def cmd_export(args) -> int:
    transcript = SessionTranscript.from_json(Path(args.transcript).read_text())
    data = transcript.data
    cfg = data["config"]
    lines = [
        f"session seed {cfg['seed']}: t={cfg['t']} {cfg['q']}x{cfg['p']} {cfg['shape']} "
        f"nu={cfg['nu']} N={cfg['N']} method={cfg['method']}",
        f"parent ratio (dark:bright) {data['realized_ratio']}, fragment sizes {data['bright_counts']}",
    ]
    if data["attack"]:
        a = data["attack"]
        lines.append(
            f"attack {a['spec']['kind']} on user{a['spec']['target_user']} "
            f"(fraction {a['spec']['fraction']}, length {a['original_length']} -> {a['attacked_length']})"
        )
    lines.append(f"messages: {len(data['messages'])}, channel audit: {audit_channels(data) or 'clean'}")
    for u in data["users"]:
        lines.append(f"user{u['user']} ({u['method']}, {u['bucket_length']} buckets): {u['status']}")
        if u["error"]:
            lines.append(f"  {u['error']}")
        claim = io.deserialize_pattern(u["claim"])
        lines += ["  " + "".join("#" if v else "." for v in row) for row in claim]
    lines.append("fragment synthesis:")
    lines += ["  " + "".join("." if v == 0 else str(v) for v in row) for row in data["fsp"]]
    v = data["verdict"]
    lines.append(f"verdict: {v['status']}")
    if v["status"] != "authentic":
        lines.append(
            f"  overlaps {v['overlap_cells']}; mismatches {v['mismatch_cells']}; invalid users {v['invalid_users']}"
        )
    else:
        lines += [f"  user{j} key {k}" for j, k in enumerate(data["keys"])]
    report = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fragkey", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one protocol session")
    _add_session_args(run)
    run.add_argument("--out", help="write the transcript JSON here")
    run.add_argument("--keys-out", help="write extracted keys, one per line")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="subsampling-limit sweep with sorting binarization")
    sweep.add_argument("--nu", type=int, default=8)
    sweep.add_argument("--p", type=int, default=8)
    sweep.add_argument("--q", type=int, default=8)
    sweep.add_argument("--shape", choices=SHAPES, default="rhombus")
    sweep.add_argument("--ratios", help="comma separated dark:bright fragment ratios")
    sweep.add_argument("--grid", help="start:stop:step or comma list of sampling ratios")
    sweep.add_argument("--trials", type=int, default=100)
    sweep.add_argument("--smoke", action="store_true", help="25 trials per point")
    sweep.add_argument("--threshold", type=float, default=1.0, help="success rate defining the limit")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--noise", type=float, default=0.0)
    sweep.add_argument("--source-profile")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--out", help="directory for CSV and gnuplot data")
    sweep.set_defaults(func=cmd_sweep)

    attacks = sub.add_parser("attacks", help="detection rate of every attack kind")
    _add_session_args(attacks)
    attacks.set_defaults(preset="paper-fig5", attack_user=2)
    attacks.add_argument("--kinds", help="comma separated subset of attacks")
    attacks.add_argument("--trials", type=int, default=100)
    attacks.add_argument("--control-N", type=int, default=4096, help="clean control length (0 disables)")
    attacks.add_argument("--workers", type=int, default=1)
    attacks.add_argument("--out", help="write the CSV table here")
    attacks.set_defaults(func=cmd_attacks)

    export = sub.add_parser("export", help="render a transcript as a readable report")
    export.add_argument("transcript")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FragkeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
