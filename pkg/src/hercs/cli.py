"""Command line entry point: ``hercs run | compare | validate-config``.

Config files hold one ``key = value`` per line, ``#`` starts a comment, and
keys are the long flag names without the leading dashes (``fgb-capacity = 50``).
Flags given on the command line win over file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .harness import ExperimentConfig, compare, run_suite, summary_table, write_manifest
from .sampling import ALGOS


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _algo_list(text: str) -> Tuple[str, ...]:
    algos = tuple(a.strip() for a in text.split(",") if a.strip())
    bad = [a for a in algos if a not in ALGOS]
    if bad or not algos:
        raise argparse.ArgumentTypeError(
            f"unknown algo {','.join(bad) or text!r}; choose from {', '.join(ALGOS)}")
    return algos


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _typed(kind: Callable, name: str) -> Callable:
    def parse(text):
        try:
            return kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {name} value {text!r}")
    parse.__name__ = name
    return parse


# flag name -> (ExperimentConfig field or None, parser, help)
OPTIONS: Dict[str, Tuple[Optional[str], Callable, str]] = {
    "env": ("env", str, "bitflip:<n>, reach2d or push2d"),
    "algo": ("algo", _algo_list, f"one of {', '.join(ALGOS)}; comma list for compare"),
    "epochs": ("epochs", _typed(int, "int"), "training epochs"),
    "seeds": ("seeds", _int_list, "comma-separated seeds"),
    "k": ("k", _typed(int, "int"), "number of goal clusters"),
    "fgb-capacity": ("fgb_capacity", _typed(int, "int"), "failed goal buffer size"),
    "batch-size": ("batch_size", _typed(int, "int"), "transitions per update"),
    "future-p": ("future_p", _typed(float, "float"), "relabel probability"),
    "cycles-per-epoch": ("cycles_per_epoch", _typed(int, "int"), None),
    "episodes-per-cycle": ("episodes_per_cycle", _typed(int, "int"), None),
    "optimizer-steps": ("optimizer_steps", _typed(int, "int"), "updates per cycle"),
    "eval-episodes": ("eval_episodes", _typed(int, "int"), None),
    "buffer-capacity": ("buffer_capacity", _typed(int, "int"), "episodes kept in replay"),
    "energy-epsilon": ("energy_epsilon", _typed(float, "float"), None),
    "gamma": ("gamma", _typed(float, "float"), None),
    "lr-actor": ("lr_actor", _typed(float, "float"), None),
    "lr-critic": ("lr_critic", _typed(float, "float"), None),
    "polyak-tau": ("polyak_tau", _typed(float, "float"), None),
    "exploration-eps": ("exploration_eps", _typed(float, "float"), None),
    "action-noise-sigma": ("action_noise_sigma", _typed(float, "float"), None),
    "target-clip": ("target_clip", _bool, "clip Q targets to the reachable range"),
    "hidden": ("hidden", _int_list, "hidden layer widths, e.g. 64,64"),
    "workers": ("workers", _typed(int, "int"), "parallel seed processes"),
    "record-wall-time": ("record_wall_time", _bool, "fill the wall_time_ms column"),
    "out": (None, str, "output directory"),
}


def read_config_file(path) -> Dict[str, object]:
    values: Dict[str, object] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = OPTIONS[key][1](value)
        except argparse.ArgumentTypeError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hercs", description="Goal-relabeling RL experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "train one algorithm over several seeds"),
                            ("compare", "train several algorithms on shared seeds"),
                            ("validate-config", "check a configuration and exit")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="FILE", help="key = value config file")
        for flag, (_, kind, text) in OPTIONS.items():
            if flag == "record-wall-time":
                p.add_argument("--record-wall-time", action="store_const", const=True,
                               default=None, help=text)
            else:
                p.add_argument(f"--{flag}", type=kind, default=None, help=text)
    return parser


def resolve(args: argparse.Namespace) -> Tuple[ExperimentConfig, Tuple[str, ...], Path]:
    """Merge defaults, config file and flags into a config, algo list and output dir."""
    values: Dict[str, object] = read_config_file(args.config) if args.config else {}
    for flag in OPTIONS:
        given = getattr(args, flag.replace("-", "_"))
        if given is not None:
            values[flag] = given
    algos = values.pop("algo", (ExperimentConfig.algo,))
    out = Path(values.pop("out", "runs"))
    fields = {OPTIONS[flag][0]: v for flag, v in values.items()}
    cfg = ExperimentConfig(algo=algos[0], **fields)
    return cfg, tuple(algos), out


def _problems(cfg: ExperimentConfig, algos) -> List[str]:
    return sorted({p for a in algos for p in dataclasses.replace(cfg, algo=a).problems()},
                  key=lambda p: p)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, algos, out = resolve(args)
    except ConfigError as exc:
        print(f"hercs: error: {exc}", file=sys.stderr)
        return 2

    problems = _problems(cfg, algos)
    if args.command == "run" and len(algos) > 1:
        problems.append("run takes a single --algo; use compare for several")
    if problems:
        for p in problems:
            print(f"hercs: invalid config: {p}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        print("config ok")
        return 0

    try:
        if args.command == "run":
            summaries = [run_suite(cfg, out)]
            write_manifest(out, cfg, algos, summaries)
        else:
            summaries = compare(cfg, algos, out)
    except Exception as exc:  # surface seed failures as a diagnostic, not a traceback
        print(f"hercs: error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(summary_table(summaries))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
