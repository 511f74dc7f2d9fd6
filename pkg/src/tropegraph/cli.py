"""Command-line front end: validate, patterns, eval, distance, render, evolve."""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import sys
from importlib import resources
from pathlib import Path

from .elites import (
    InfeasibleRootError,
    RunConfig,
    best_per_step,
    evolve,
    write_archive,
    write_metrics_csv,
)
from .graph import NarrativeGraph, ParseError, parse_ng, serialize_ng, to_dot, validate
from .metrics import STEP_THRESHOLD, evaluate, quality_report, step_distance
from .patterns import catalog_lines, detect_all

log = logging.getLogger("tropegraph")

CONFIG_FILE = "tropegraph.cfg"
EXAMPLES = ("zelda_oot", "zelda_lttp", "smb")


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def load_examples() -> dict[str, NarrativeGraph]:
    """The three bundled root graphs, keyed by file stem."""
    roots = resources.files("tropegraph") / "roots"
    return {name: parse_ng((roots / f"{name}.ng").read_text(encoding="utf-8")) for name in EXAMPLES}


def read_graph(path: str) -> NarrativeGraph:
    p = Path(path)
    if not p.exists() and path in EXAMPLES:
        return load_examples()[path]
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{path}: {e.strerror}") from e
    try:
        g = parse_ng(text)
    except ParseError as e:
        raise CliError(f"{path}:{e}") from e
    problems = validate(g)
    if problems:
        raise CliError(f"{path}: " + "; ".join(problems))
    return g


def cmd_validate(args) -> int:
    try:
        text = Path(args.file).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"{args.file}: {e.strerror}") from e
    try:
        g = parse_ng(text)
    except ParseError as e:
        print(f"{args.file}:{e}")
        return 1
    problems = validate(g)
    for p in problems:
        print(p)
    return 1 if problems else 0


def cmd_patterns(args) -> int:
    for line in catalog_lines(detect_all(read_graph(args.file))):
        print(line)
    return 0


def cmd_eval(args) -> int:
    g = read_graph(args.file)
    root = read_graph(args.root) if args.root else g
    root_cat = detect_all(root)
    report = quality_report(detect_all(g), root_cat)
    # the behaviour-space coordinate: clamped distance over the threshold
    step = evaluate(g, root_cat).step / STEP_THRESHOLD
    print(f"cohesion={report.cohesion:.3f}")
    print(f"consistency={report.consistency:.3f}")
    print(f"coherence={report.coherence:.3f}")
    print(f"interestingness={report.interestingness:.3f}")
    print(f"step={step:.3f}")
    return 0


def cmd_distance(args) -> int:
    print(step_distance(read_graph(args.a), read_graph(args.b)))
    return 0


def cmd_render(args) -> int:
    dot = to_dot(read_graph(args.file))
    if args.out:
        Path(args.out).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return 0


# -- evolve ----------------------------------------------------------------------

_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_EXTRA_KEYS = {"root": str, "out": str, "runs": int}


def read_config(path: Path) -> dict[str, object]:
    """``key = value`` lines; ``#`` comments; keys are RunConfig fields plus root/out/runs."""
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as e:
        raise CliError(f"{path}: {e}") from e
    out: dict[str, object] = {}
    for key, raw in parser["run"].items():
        key = key.replace("-", "_")
        if key in _RUN_FIELDS:
            kind = type(getattr(RunConfig(), key))
        elif key in _EXTRA_KEYS:
            kind = _EXTRA_KEYS[key]
        else:
            raise CliError(f"{path}: unknown key {key!r}")
        try:
            out[key] = _coerce(raw, kind)
        except ValueError as e:
            raise CliError(f"{path}: bad value for {key}: {raw!r}") from e
    return out


def _coerce(raw: str, kind: type):
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(raw)
    return kind(raw.strip())


def resolve_settings(args, config_path: Path | None) -> dict[str, object]:
    """Flags win over the config file, which wins over built-in defaults."""
    settings: dict[str, object] = {"out": "tropegraph-out", "runs": 1}
    settings.update(dataclasses.asdict(RunConfig()))
    if config_path is not None:
        settings.update(read_config(config_path))
    for key in (*_RUN_FIELDS, *_EXTRA_KEYS):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def write_run_outputs(result, run_dir: Path) -> None:
    """archive.json, metrics.csv, and the best elite of every step row as .ng/.dot."""
    run_dir.mkdir(parents=True, exist_ok=True)
    write_archive(result, run_dir / "archive.json")
    write_metrics_csv(result.metrics, run_dir / "metrics.csv")
    for step, elite in sorted(best_per_step(result.archive).items()):
        g = elite.phenotype.with_name(f"elite_step{step}")
        (run_dir / f"elite_step{step}.ng").write_text(serialize_ng(g), encoding="utf-8")
        (run_dir / f"elite_step{step}.dot").write_text(to_dot(g), encoding="utf-8")


def cmd_evolve(args) -> int:
    config_path = Path(args.config) if args.config else None
    if config_path is None and Path(CONFIG_FILE).exists():
        config_path = Path(CONFIG_FILE)
    settings = resolve_settings(args, config_path)
    if not settings.get("root"):
        raise CliError("evolve needs --root (or root = ... in the config file)")
    root = read_graph(str(settings["root"]))
    runs = int(settings["runs"])
    if runs < 1:
        raise CliError("--runs must be at least 1")
    out = Path(str(settings["out"]))
    base = {k: settings[k] for k in _RUN_FIELDS}
    for i in range(runs):
        try:
            config = RunConfig(**{**base, "seed": int(base["seed"]) + i})
        except ValueError as e:
            raise CliError(str(e)) from e
        run_dir = out / f"run{i}_seed{config.seed}"
        log.info("run %d/%d seed=%d -> %s", i + 1, runs, config.seed, run_dir)

        def progress(row, total=config.generations):
            if row.generation % 50 == 0 or row.generation == total:
                log.info("gen %d coverage=%.3f avg_fitness=%.3f", row.generation, row.coverage, row.avg_fitness)

        try:
            result = evolve(root, config, progress)
        except InfeasibleRootError as e:
            raise CliError(str(e), code=2) from e
        write_run_outputs(result, run_dir)
        print(f"{run_dir} coverage={result.metrics[-1].coverage:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tropegraph", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a .ng file against the graph invariants")
    p.add_argument("file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("patterns", help="list every detected pattern instance")
    p.add_argument("file")
    p.set_defaults(func=cmd_patterns)

    p = sub.add_parser("eval", help="print cohesion, consistency, coherence, interestingness, step")
    p.add_argument("file")
    p.add_argument("--root", help="root graph (defaults to the file itself)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("distance", help="step distance between two graphs")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("render", help="export a graph as Graphviz DOT")
    p.add_argument("file")
    p.add_argument("--out", help="output .dot path (default: stdout)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("evolve", help="run constrained MAP-Elites from a root graph")
    p.add_argument("--root", help="root .ng file or bundled name (zelda_oot, zelda_lttp, smb)")
    p.add_argument("--seed", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--runs", type=int, help="sequential runs with seeds seed, seed+1, ...")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help=f"key = value settings file (default: ./{CONFIG_FILE} if present)")
    p.add_argument("--initial-population", dest="initial_population", type=int)
    p.add_argument("--offspring", dest="offspring_per_generation", type=int)
    p.add_argument("--mutation-probability", dest="mutation_probability", type=float)
    p.add_argument("--exclusive-variation", dest="exclusive_variation", action="store_const", const=True,
                   help="either crossover or mutation per pair, not both")
    p.set_defaults(func=cmd_evolve)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
