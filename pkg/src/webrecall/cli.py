"""Command-line entry point: ``webrecall <command> ...``.

Commands:
    explore   run the exploration phase and write buffer, memory, results, report
    infer     run inference rounds on top of a stored buffer and memory
    baseline  run the memoryless base policy
    bench     baseline, full run and ablations on one world, with a comparison
    eval      rebuild a report from a results file
    inspect   print a buffer or memory file (optionally as Graphviz dot)
    compare   compare two report files

Exit codes: 0 success, 2 configuration error, 3 run error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .buffer import BufferGraph
from .config import RunConfig, load_config, manifest
from .env import World
from .errors import ConfigError, SchemaError, WebRecallError
from .memory import MemoryStore
from .metrics import MetricsReport, build_report, compare_runs, read_results, write_results
from .runtime import ABLATIONS, EpisodeResult, run_baseline, run_experiment, run_exploration

log = logging.getLogger("webrecall")

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 2, 3

BUFFER_FILE = "buffer.jsonl"
MEMORY_FILE = "memory.jsonl"
RESULTS_FILE = "results.jsonl"
MANIFEST_FILE = "manifest.json"


def _config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {"seed": getattr(args, "seed", None)}
    if getattr(args, "ablate", None):
        overrides["ablations"] = tuple(args.ablate)
    return cfg.with_overrides(**overrides)


def _write_run(
    out: Path,
    cfg: RunConfig,
    command: str,
    world: World,
    results: list[EpisodeResult],
    buf: BufferGraph | None = None,
    mem: MemoryStore | None = None,
) -> MetricsReport:
    out.mkdir(parents=True, exist_ok=True)
    if buf is not None:
        buf.save(out / BUFFER_FILE)
    if mem is not None:
        mem.persist(out / MEMORY_FILE)
    write_results(out / RESULTS_FILE, results, world=world.world_id)
    report = build_report(results, cfg.report_settings())
    report.save(out)
    (out / MANIFEST_FILE).write_text(json.dumps(manifest(cfg, command, world), indent=2, sort_keys=True) + "\n")
    return report


def cmd_explore(args: argparse.Namespace) -> int:
    cfg = _config(args)
    world = cfg.load_world()
    buf, mem = BufferGraph(cfg.capacity, cfg.eviction), cfg.make_memory()
    _, _, results = run_exploration(world, world.tasks, cfg.make_policy(), buf, mem, cfg.make_oracle(), cfg.runtime_options())
    report = _write_run(Path(args.out), cfg, "explore", world, results, buf, mem)
    print(report.render(), end="")
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    cfg = _config(args)
    world = cfg.load_world()
    state = Path(args.state or args.out)
    if (state / BUFFER_FILE).exists():
        buf = BufferGraph.load(state / BUFFER_FILE)
    else:
        buf = BufferGraph(cfg.capacity, cfg.eviction)
    mem = MemoryStore.load(state / MEMORY_FILE) if (state / MEMORY_FILE).exists() else cfg.make_memory()
    exp = run_experiment(
        world, world.tasks, cfg.make_policy(), cfg.make_oracle(), cfg.runtime_options(), buf, mem, explore=False
    )
    report = _write_run(Path(args.out), cfg, "infer", world, exp.results, exp.buffer, exp.memory)
    print(report.render(), end="")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = _config(args)
    world = cfg.load_world()
    rounds = run_baseline(world, world.tasks, cfg.make_policy(), cfg.runtime_options())
    report = _write_run(Path(args.out), cfg, "baseline", world, [r for rnd in rounds for r in rnd])
    print(report.render(), end="")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config(args)
    world = cfg.load_world()
    out = Path(args.out)
    oracle, policy = cfg.make_oracle(), cfg.make_policy()
    base_rounds = run_baseline(world, world.tasks, policy, cfg.runtime_options())
    baseline = _write_run(out / "baseline", cfg, "bench:baseline", world, [r for rnd in base_rounds for r in rnd])
    variants = [("full", cfg.ablations)]
    if args.ablations:
        variants += [(name, (name,)) for name in ABLATIONS]
    summary = {"world": world.world_id, "baseline_sr": baseline.success_rate, "runs": {}}
    lines = [f"world {world.world_id}: {len(world.tasks)} tasks, baseline SR {100 * baseline.success_rate:.1f}%"]
    for name, ablations in variants:
        vcfg = cfg.with_overrides(ablations=tuple(ablations))
        exp = run_experiment(
            world, world.tasks, policy, oracle, vcfg.runtime_options(), BufferGraph(vcfg.capacity, vcfg.eviction), vcfg.make_memory()
        )
        report = _write_run(out / name, vcfg, f"bench:{name}", world, exp.results, exp.buffer, exp.memory)
        cmp = compare_runs(baseline, report)
        (out / name / "compare.json").write_text(json.dumps(cmp.to_dict(), indent=2, sort_keys=True) + "\n")
        summary["runs"][name] = {"success_rate": report.success_rate, "compare": cmp.to_dict()}
        lines.append(f"{name}: SR {100 * report.success_rate:.1f}%")
        if name == "full":
            lines.append(cmp.render().rstrip("\n"))
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    results = read_results(args.results)
    settings = load_config(args.config).report_settings() if args.config else {}
    report = build_report(results, settings)
    if args.out:
        report.save(args.out)
    print(report.render(), end="")
    return EXIT_OK


def render_buffer(buf: BufferGraph) -> str:
    lines = [f"buffer (capacity {buf.capacity}, {buf.policy})", f"{len(buf.nodes)} nodes, {len(buf.edges)} edges"]
    for obs_id, n in buf.sorted_nodes():
        tag = " root" if obs_id in buf.root_ids else ""
        tag += " pinned" if obs_id in buf.pinned else ""
        lines.append(f"  node d={n.depth} {obs_id[:12]} {n.obs.locator} visits={n.visit_count}{tag}")
    for src, dst, action in buf.sorted_edges():
        lines.append(f"  edge {src[:12]} -> {dst[:12]} {action.render()}")
    return "\n".join(lines) + "\n"


def render_memory(mem: MemoryStore) -> str:
    lines = [f"memory (dim {mem.embedder.dim}, {mem.embedder.method.value})", f"{len(mem)} entries"]
    for i, e in enumerate(mem.entries):
        lines.append(
            f"  [{i}] v{e.version} {e.value.label_at_store.value} {e.query.site}/{e.query.id} "
            f"steps={e.value.trajectory.horizon} {e.query.text!r}"
        )
    return "\n".join(lines) + "\n"


def cmd_inspect(args: argparse.Namespace) -> int:
    if args.kind == "buffer":
        buf = BufferGraph.load(args.path)
        print(buf.to_dot() if args.graphviz else render_buffer(buf), end="")
    else:
        if args.graphviz:
            raise ConfigError("--graphviz applies to buffers only")
        print(render_memory(MemoryStore.load(args.path)), end="")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cmp = compare_runs(MetricsReport.load(args.baseline), MetricsReport.load(args.candidate))
    print(cmp.render(), end="")
    if args.out:
        Path(args.out).write_text(json.dumps(cmp.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="webrecall", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p: argparse.ArgumentParser, out_required: bool = True) -> None:
        p.add_argument("--config", help="JSON or YAML run configuration (defaults: bundled benchmark)")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--ablate", action="append", choices=ABLATIONS, help="switch off a component (repeatable)")

    p = sub.add_parser("explore", help="exploration phase")
    run_args(p)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("infer", help="inference rounds")
    run_args(p)
    p.add_argument("--state", help="directory holding buffer.jsonl and memory.jsonl (default: --out)")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("baseline", help="memoryless base policy")
    run_args(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("bench", help="baseline vs. full run (and ablations)")
    run_args(p)
    p.add_argument("--ablations", action="store_true", help="also run each single-component ablation")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="report from a results file")
    p.add_argument("results")
    p.add_argument("--config", help="configuration whose settings are echoed in the report")
    p.add_argument("--out", help="write report.txt and report.json here")
    p.add_argument("--seed", type=int, help="accepted for uniformity; reports do not depend on it")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="dump a buffer or memory file")
    p.add_argument("kind", choices=("buffer", "memory"))
    p.add_argument("path")
    p.add_argument("--graphviz", action="store_true", help="emit the buffer as a dot graph")
    p.add_argument("--seed", type=int, help="accepted for uniformity")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("compare", help="compare a baseline report with another report")
    p.add_argument("baseline")
    p.add_argument("candidate")
    p.add_argument("--out", help="write the comparison as JSON")
    p.add_argument("--seed", type=int, help="accepted for uniformity")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WebRecallError, OSError) as exc:
        kind = "schema error" if isinstance(exc, SchemaError) else "run error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
