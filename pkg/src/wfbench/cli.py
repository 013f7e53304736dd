"""Command-line entry point: validate, transcribe, simulate, analyze, net.

Exit codes are a stable contract: 0 success, 1 validation failure,
2 usage or environment error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

from . import bench, cost, metrics
from .definition import DefinitionSyntaxError, SchemaError, WorkflowDefinition, parse_definition, validate
from .net import FanoutMissing, build_net, check_workflow_net
from .sim.engine import Simulator
from .sim.model import load_model
from .sim.trace import TraceFormatError, read_traces, write_traces
from .transcribe import InvalidDefinition, Untranscribable, transcribe

OK, INVALID, USAGE = 0, 1, 2
PLATFORMS = ("aws", "google", "azure")
PLATFORM_MODEL = {"aws": "aws-like", "google": "gcp-like", "azure": "azure-like"}


class UsageError(Exception):
    """Bad flags, missing files, or anything else the user must fix before retrying."""


@dataclass
class RunConfig:
    definition: str
    models: list[str]
    burst: int = 30
    reps: int = 180
    seed: int = 0
    out: str = "runs"
    input: str | None = None
    memory_mb: int | None = None

    def __post_init__(self) -> None:
        if self.burst < 1:
            raise UsageError("--burst must be >= 1")
        if self.reps < 1:
            raise UsageError("--reps must be >= 1")

    def digest(self, definition_text: str, input_doc: Any) -> str:
        """Hash of everything that determines the output bytes (not the output path)."""
        key = {k: v for k, v in asdict(self).items() if k not in ("out", "definition", "input")}
        key["definition"] = definition_text
        key["input"] = input_doc
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# helpers


def _read_definition(path: str) -> tuple[WorkflowDefinition, str]:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"definition file not found: {path}")
    text = p.read_text(encoding="utf-8")
    return parse_definition(text), text


def _parse_fanouts(items: Sequence[str] | None) -> dict[str, int]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not value.isdigit():
            raise UsageError(f"--fanout expects phase=N, got {item!r}")
        out[name] = int(value)
    return out


def _corpus(defn: WorkflowDefinition) -> bench.BenchmarkSpec | None:
    return bench.kernels_for(defn.name)


def _default_fanouts(defn: WorkflowDefinition, given: dict[str, int]) -> tuple[dict[str, int], tuple[str, ...]]:
    spec = _corpus(defn)
    fanouts = dict(spec.canonical_fanouts) if spec else {}
    fanouts.update(given)
    failures = spec.failures if spec else ()
    return fanouts, failures


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold an object of flag values")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_validate(path: str, fanouts: dict[str, int] | None = None, out=sys.stdout) -> int:
    defn, _ = _read_definition(path)
    report = validate(defn, fanouts or None)
    for line in report.lines():
        print(line, file=out)
    if not report.ok:
        return INVALID
    widths, _ = _default_fanouts(defn, fanouts or {})
    widths = {**{p: 1 for p in defn.phases}, **widths}
    net_report = check_workflow_net(build_net(defn, widths))
    for line in net_report.lines():
        print(line, file=out)
    if not net_report.ok:
        return INVALID
    print(f"ok: {defn.name}", file=out)
    return OK


def cmd_transcribe(path: str, platform: str, out_dir: str, fanouts: dict[str, int] | None = None, out=sys.stdout) -> int:
    defn, _ = _read_definition(path)
    targets = PLATFORMS if platform == "all" else (platform,)
    widths, failures = _default_fanouts(defn, fanouts or {})
    dest = Path(out_dir)
    dest.mkdir(parents=True, exist_ok=True)
    for plat in targets:
        program = transcribe(defn, plat)
        if plat == "aws":
            files = {f"{defn.name}.aws.json": program.document}
        elif plat == "google":
            files = {
                f"{defn.name}.google.json": program.document,
                f"{defn.name}.google.yaml": program.extras["workflow.yaml"],
            }
        else:
            files = {
                f"{defn.name}.azure/orchestrator.json": program.document,
                f"{defn.name}.azure/manifest.json": program.extras["manifest.json"],
            }
        for rel, text in files.items():
            target = dest / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
            print(f"wrote {target}", file=out)
        try:
            n = program.census.transitions_per_execution(widths, failures)
        except (FanoutMissing, KeyError) as exc:
            print(f"{plat}: transitions/exec unknown without fan-outs ({exc})", file=out)
        else:
            delta = program.census.documented_delta
            note = f" (published differs by {delta:+d}: {program.census.delta_reason})" if delta else ""
            print(f"{plat}: transitions/exec: {n}{note}", file=out)
        for n_ in program.notes:
            print(f"{plat}: note {json.dumps(n_, sort_keys=True)}", file=out)
    return OK


def cmd_simulate(cfg: RunConfig, out=sys.stdout) -> list[Path]:
    """Run ``cfg.reps`` bursts per model; returns the run directories written."""
    defn, text = _read_definition(cfg.definition)
    report = validate(defn)
    if not report.ok:
        raise InvalidDefinition(report.errors)
    spec = _corpus(defn)
    if spec is None:
        raise UsageError(f"no kernels are bound to workflow {defn.name!r}; name it after a corpus benchmark")
    if cfg.input:
        p = Path(cfg.input)
        if not p.is_file():
            raise UsageError(f"input file not found: {cfg.input}")
        payload = json.loads(p.read_text(encoding="utf-8"))
    else:
        payload = spec.canonical_input
    models = [load_model(m) for m in cfg.models]

    digest = cfg.digest(text, payload)
    written = []
    for model in models:
        run_dir = Path(cfg.out) / f"{defn.name}-{model.name}-{digest}"
        run_dir.mkdir(parents=True, exist_ok=True)
        traces = []
        for rep in range(cfg.reps):
            # fresh platform per repetition: bursts are spaced far enough apart for containers to expire
            sim = Simulator(model, spec.kernels, seed=cfg.seed * 100_003 + rep, memory_mb=cfg.memory_mb)
            spec.prepare(sim.objects)
            ids = [f"r{rep:04d}-i{k:04d}" for k in range(cfg.burst)]
            traces += sim.run_burst(defn, [payload], cfg.burst, ids=ids)
        write_traces(run_dir / "traces.jsonl", traces)
        config = {**asdict(cfg), "models": [model.name], "digest": digest, "model": model.to_dict()}
        config.pop("out")
        (run_dir / "config.json").write_text(_dump(config), encoding="utf-8")
        statuses: dict[str, int] = {}
        for t in traces:
            statuses[t.status] = statuses.get(t.status, 0) + 1
        summary = {
            "workflow": defn.name,
            "model": model.name,
            "invocations": len(traces),
            "statuses": statuses,
            "median_total_runtime_us": sorted(t.total_runtime for t in traces)[len(traces) // 2],
        }
        (run_dir / "summary.json").write_text(_dump(summary), encoding="utf-8")
        print(f"wrote {len(traces)} traces to {run_dir}", file=out)
        written.append(run_dir)
    return written


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_analyze(trace_dir: str, out_dir: str | None = None, out=sys.stdout) -> int:
    src = Path(trace_dir)
    if not src.is_dir():
        raise UsageError(f"not a directory: {trace_dir}")
    files = sorted(src.rglob("traces.jsonl"))
    traces = [t for f in files for t in read_traces(f)]
    if not traces:
        raise UsageError(f"no traces under {trace_dir}")
    dest = Path(out_dir) if out_dir else src
    dest.mkdir(parents=True, exist_ok=True)

    decomp_rows = []
    by_model: dict[str, list] = {}
    for t in traces:
        by_model.setdefault(t.model, []).append(t)
        if t.status != "succeeded" or not t.events:
            continue
        d = metrics.critical_path(t)
        decomp_rows.append((t.model, t.invocation, d.T_C, d.T_O, d.total, f"{d.relative_overhead:.6f}"))
    _write_csv(dest / "decomposition.csv", ("model", "invocation", "T_C_us", "T_O_us", "total_us", "relative_overhead"), decomp_rows)

    report: dict[str, Any] = {"traces": len(traces), "models": {}}
    scaling_rows = []
    for name, ts in sorted(by_model.items()):
        ok = [t for t in ts if t.status == "succeeded" and t.events]
        entry: dict[str, Any] = {"invocations": len(ts), "succeeded": len(ok)}
        if ok:
            totals = [t.total_runtime for t in ok]
            rel = [metrics.critical_path(t).relative_overhead for t in ok]
            if len(ok) >= 6:
                ci = metrics.median_ci(totals)
                entry["total_runtime_median_ci_us"] = {"low": ci.low, "high": ci.high, "coverage": ci.coverage}
                rci = metrics.median_ci(rel)
                entry["relative_overhead_median_ci"] = {"low": rci.low, "high": rci.high, "coverage": rci.coverage}
            entry["cold_fraction"] = metrics.cold_fraction(ok)
            # every repetition runs on its own platform from virtual time 0, so profile bursts separately
            bursts: dict[str, list] = {}
            for t in ok:
                bursts.setdefault(t.invocation.rsplit("-i", 1)[0], []).append(t)
            peaks = []
            for burst_id, group in sorted(bursts.items()):
                prof = metrics.scaling_profile(group)
                peaks.append(prof.max)
                scaling_rows += [(name, burst_id, t, n) for t, n in prof.points]
            entry["scaling_max"] = max(peaks)
            platform = ok[0].shape
            if platform in PLATFORMS:
                entry["cost"] = cost.estimate(ok, platform=platform).to_dict()
        report["models"][name] = entry
    _write_csv(dest / "scaling.csv", ("model", "burst", "time_us", "active_containers"), scaling_rows)
    (dest / "report.json").write_text(_dump(report), encoding="utf-8")
    print(f"analyzed {len(traces)} traces; report in {dest / 'report.json'}", file=out)
    return OK


def cmd_net(path: str, fanouts: dict[str, int] | None = None, out=sys.stdout) -> int:
    defn, _ = _read_definition(path)
    widths, _ = _default_fanouts(defn, fanouts or {})
    widths = {**{p: 1 for p in defn.phases}, **widths}
    for line in build_net(defn, widths).export_lines():
        print(line, file=out)
    return OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wfbench", description="Serverless workflow toolkit.")
    parser.add_argument("--config", help="JSON file setting any flag (flags on the command line win)")
    sub = parser.add_subparsers(dest="command", required=True)

    def fanout_flag(p: argparse.ArgumentParser) -> None:
        p.add_argument("--fanout", action="append", metavar="PHASE=N", help="fan-out of a map or loop phase")

    p = sub.add_parser("validate", help="check a definition and its net")
    p.add_argument("path")
    fanout_flag(p)

    p = sub.add_parser("transcribe", help="render platform programs")
    p.add_argument("path")
    p.add_argument("--platform", choices=(*PLATFORMS, "all"), default=None)
    p.add_argument("--out", default=None)
    fanout_flag(p)

    p = sub.add_parser("simulate", help="run bursts on platform models")
    p.add_argument("path")
    p.add_argument("--platform", choices=(*PLATFORMS, "all"), default=None)
    p.add_argument("--model", action="append", help="builtin model name or model file")
    p.add_argument("--burst", type=int, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--input", default=None, help="JSON input document")
    p.add_argument("--memory", type=int, default=None, help="function memory in MB")

    p = sub.add_parser("analyze", help="metrics and cost over a trace directory")
    p.add_argument("path")
    p.add_argument("--out", default=None)

    p = sub.add_parser("net", help="print the workflow net")
    p.add_argument("path")
    fanout_flag(p)
    return parser


def _setting(args: argparse.Namespace, config: dict, name: str, default: Any) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _run(args: argparse.Namespace, out) -> int:
    config = _load_config(args.config)
    cmd = args.command
    fanouts = _parse_fanouts(_setting(args, config, "fanout", None))
    if cmd == "validate":
        return cmd_validate(args.path, fanouts, out)
    if cmd == "transcribe":
        return cmd_transcribe(
            args.path, _setting(args, config, "platform", "all"), _setting(args, config, "out", "."), fanouts, out
        )
    if cmd == "simulate":
        models = _setting(args, config, "model", None)
        if isinstance(models, str):
            models = [models]
        if not models:
            plat = _setting(args, config, "platform", "all")
            models = [PLATFORM_MODEL[p] for p in (PLATFORMS if plat == "all" else (plat,))]
        cfg = RunConfig(
            definition=args.path,
            models=list(models),
            burst=int(_setting(args, config, "burst", 30)),
            reps=int(_setting(args, config, "reps", 180)),
            seed=int(_setting(args, config, "seed", 0)),
            out=_setting(args, config, "out", "runs"),
            input=_setting(args, config, "input", None),
            memory_mb=_setting(args, config, "memory", None),
        )
        cmd_simulate(cfg, out)
        return OK
    if cmd == "analyze":
        return cmd_analyze(args.path, _setting(args, config, "out", None), out)
    return cmd_net(args.path, fanouts, out)


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return _run(args, out)
    except (DefinitionSyntaxError, SchemaError, InvalidDefinition) as exc:
        print(f"invalid definition: {exc}", file=sys.stderr)
        return INVALID
    except Untranscribable as exc:
        print(f"untranscribable: {exc}", file=sys.stderr)
        return USAGE
    except (UsageError, FileNotFoundError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
