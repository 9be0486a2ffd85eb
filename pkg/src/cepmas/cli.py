"""Operator command line: serve, ingest, query, replay and experiments.

Exit codes: 0 success, 1 unexpected failure, 2 configuration problems,
3 golden-transcript mismatch, 4 gateway failures.
"""
from __future__ import annotations

import argparse
import difflib
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .agents import ConversationRuntime, export_transcript
from .broker import DirectorySource, SyntheticSource, VideoFileSource
from .charts import grouped_bar_svg
from .clocks import VirtualClock
from .config import PipelineConfig, build_pipeline, load_config
from .errors import CepError, ConfigError, GatewayTimeout, GatewayUnavailable
from .evaluation import CRITERIA, aggregate_scorecards, scorecards_to_csv
from .experiments import (
    matrix_csv,
    run_agents_experiment,
    run_complexity_experiment,
    run_resolution_experiment,
)
from .flows import DEMO_QUERY, DEMO_TOPIC, build_topology, demo_corpus_spec
from .frames import RESOLUTIONS, SyntheticCorpusSpec
from .metrics import aggregate_experiment, aggregate_to_csv, reports_to_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_GOLDEN_MISMATCH = 3
EXIT_GATEWAY = 4


def transcript_lines(records: list[dict]) -> list[str]:
    return [json.dumps(record, separators=(",", ":")) for record in records]


def golden_transcript_text() -> str:
    return resources.files("cepmas.data.golden").joinpath("two_agent_replay.jsonl").read_text()


def parse_source(raw: str, work_dir: Path):
    """Parse an ingest source: synthetic:<k=v,...>, a directory, or a video file."""
    if raw.startswith("synthetic:"):
        fields = {}
        body = raw[len("synthetic:"):]
        for chunk in filter(None, body.split(",")):
            key, _, value = chunk.partition("=")
            fields[key.strip()] = value.strip()
        resolution = fields.get("res", "1080p")
        if resolution not in RESOLUTIONS:
            raise ConfigError(f"unknown resolution {resolution!r}")
        width, height = RESOLUTIONS[resolution]
        spec = SyntheticCorpusSpec(
            level=int(fields.get("level", 3)),
            frame_count=int(fields.get("frames", 24)),
            width=width,
            height=height,
            frame_rate=int(fields.get("fps", 24)),
            seed=int(fields.get("seed", 0)),
            label=fields.get("label") or None,
        )
        return SyntheticSource(spec)
    path = Path(raw)
    if path.is_dir():
        return DirectorySource(path)
    return VideoFileSource(path, work_dir=work_dir)


def _build_replay_pipeline(config: PipelineConfig):
    config.gateway_backend = "scripted"
    config.gateway_script = "appendix"
    bundle = build_pipeline(config, clock=VirtualClock())
    bundle.broker.create_topic(DEMO_TOPIC)
    bundle.broker.ingest_stream(DEMO_TOPIC, SyntheticSource(demo_corpus_spec()))
    return bundle


def cmd_replay_appendix(args, config: PipelineConfig) -> int:
    bundle = _build_replay_pipeline(config)
    runtime = ConversationRuntime(
        bundle.gateway, bundle.registry, clock=bundle.clock, collector=bundle.collector
    )
    topology = build_topology("2-agent")
    answer, state, report = runtime.run_conversation(topology, DEMO_QUERY)
    produced = transcript_lines(export_transcript(state))
    golden = golden_transcript_text().splitlines()
    if produced != golden:
        diff = "\n".join(
            difflib.unified_diff(golden, produced, "golden", "replay", lineterm="")
        )
        print("replay diverged from the golden transcript:", file=sys.stderr)
        print(diff, file=sys.stderr)
        return EXIT_GOLDEN_MISMATCH
    if args.out:
        Path(args.out).write_text("\n".join(produced) + "\n")
    print(f"replay matched golden transcript ({len(produced)} messages)")
    print(f"answer: {answer}")
    print(f"termination: {state.termination_reason.value}")
    return EXIT_OK


def cmd_experiment(args, config: PipelineConfig) -> int:
    out_dir = Path(args.out or config.workspace / "experiments")
    out_dir.mkdir(parents=True, exist_ok=True)
    scale = args.scale if args.scale is not None else config.scale
    # Resolution cells are deterministic; one run per cell unless asked.
    default_runs = config.runs if args.kind == "agents" else 1
    runs = args.runs if args.runs is not None else default_runs
    work = Path(config.workspace) / f"experiment_{args.kind}"
    if args.kind == "agents":
        reports = run_agents_experiment(work, runs=runs, scale=scale)
        rows = aggregate_experiment(reports, "topology")
        (out_dir / "agents.csv").write_text(aggregate_to_csv(rows, "topology", scale=scale))
        (out_dir / "agents_runs.csv").write_text(reports_to_csv(reports, scale=scale))
        (out_dir / "agents.svg").write_text(grouped_bar_svg(
            f"Mean latency by agent count (scale {scale:g})", "ms",
            [(row.group, {"total": row.stats["total_ms"]["mean"],
                          "overhead": row.stats["overhead_ms"]["mean"]})
             for row in rows],
        ))
        print(f"wrote {out_dir / 'agents.csv'}")
    elif args.kind == "complexity":
        cards, reports = run_complexity_experiment(work, scale=scale)
        (out_dir / "complexity_eval_matrix.csv").write_text(matrix_csv(cards))
        (out_dir / "complexity_scorecards.csv").write_text(scorecards_to_csv(cards))
        (out_dir / "complexity_latency.csv").write_text(reports_to_csv(reports, scale=scale))
        matrix = aggregate_scorecards(cards)
        (out_dir / "complexity_eval.svg").write_text(grouped_bar_svg(
            "Evaluation scores by scene complexity level", "score",
            [(f"level {lv}",
              {c.value: matrix.means[c][lv] for c in CRITERIA})
             for lv in matrix.levels],
            width=1080,
        ))
        print(f"wrote {out_dir / 'complexity_eval_matrix.csv'}")
    else:
        reports = run_resolution_experiment(work, scale=scale, runs=runs)
        (out_dir / "resolution.csv").write_text(reports_to_csv(reports, scale=scale))
        rows = aggregate_experiment(reports, "resolution")
        (out_dir / "resolution_summary.csv").write_text(
            aggregate_to_csv(rows, "resolution", scale=scale)
        )
        levels = sorted({r.complexity for r in reports})
        resolution_order = ["1080p", "720p", "360p", "144p"]
        (out_dir / "resolution.svg").write_text(grouped_bar_svg(
            f"Total duration by resolution (scale {scale:g})", "ms",
            [(f"level {lv}",
              {res: next(r.total_duration_ms for r in reports
                         if r.complexity == lv and r.resolution == res)
               for res in resolution_order})
             for lv in levels],
        ))
        print(f"wrote {out_dir / 'resolution.csv'}")
    return EXIT_OK


def _print_answer(answer: str, report) -> None:
    print(answer)
    row = report.as_row()
    print(
        f"[latency] total={row['total_ms']:.1f}ms model={row['model_ms']:.1f}ms "
        f"extract={row['extract_ms']:.1f}ms create={row['create_ms']:.1f}ms "
        f"consume={row['consume_ms']:.1f}ms overhead={row['overhead_ms']:.1f}ms"
    )


def cmd_query(args, config: PipelineConfig) -> int:
    bundle = build_pipeline(config)
    if args.demo:
        bundle.broker.create_topic(DEMO_TOPIC)
        bundle.broker.ingest_stream(DEMO_TOPIC, SyntheticSource(demo_corpus_spec()))
    session = bundle.service.create_session(args.topology or config.topology)
    answer, report = bundle.service.query(session.id, args.text)
    _print_answer(answer, report)
    if args.interactive:
        # Prompted follow-ups; a Reflection topology continues the same
        # conversation, a 2-agent one restarts per prompt.
        while True:
            try:
                line = input("followup> ").strip()
            except EOFError:
                break
            if not line or line in {"exit", "quit"}:
                break
            answer, report = bundle.service.query(session.id, line)
            _print_answer(answer, report)
    return EXIT_OK


def cmd_subscribe(args, config: PipelineConfig) -> int:
    bundle = build_pipeline(config)
    bundle.broker.create_topic(args.topic)
    bundle.broker.ingest_stream(
        args.topic,
        SyntheticSource(demo_corpus_spec()) if args.demo
        else parse_source(args.source, Path(config.workspace)),
    )
    subscription = bundle.service.subscribe(
        args.text, [args.topic], cadence_frames=args.cadence, capacity=args.capacity
    )
    # One-shot evaluation over a fresh segment.
    bundle.broker.ingest_stream(args.topic, SyntheticSource(demo_corpus_spec(seed=11)))
    bundle.service.pump_subscriptions()
    matches = bundle.service.fetch_matches(subscription.id, args.capacity)
    print(f"subscription {subscription.id}: {len(matches)} match(es)")
    for event in matches:
        span = event.seq_span
        print(f"  frames {span[0]}..{span[1]} on {event.topic}: {event.answer}")
    return EXIT_OK


def cmd_ingest(args, config: PipelineConfig) -> int:
    bundle = build_pipeline(config)
    if not bundle.broker.has_topic(args.topic):
        bundle.broker.create_topic(args.topic)
    source = parse_source(args.source, Path(config.workspace))
    summary = bundle.broker.ingest_stream(args.topic, source)
    print(
        f"ingested {summary.frame_count} frames into {summary.topic} "
        f"({summary.duration_ms} ms of footage, label {summary.label})"
    )
    return EXIT_OK


def cmd_report(args, config: PipelineConfig) -> int:
    from .metrics import LatencyReport, SpanKind

    text = Path(args.input).read_text()
    import csv as csvmod
    import io

    reader = csvmod.DictReader(io.StringIO(text))
    reports = []
    for row in reader:
        sums = {
            SpanKind.MODEL_CALL: float(row["model_ms"]),
            SpanKind.FRAME_EXTRACTION: float(row["extract_ms"]),
            SpanKind.VIDEO_CREATION: float(row["create_ms"]),
            SpanKind.STREAM_CONSUME: float(row["consume_ms"]),
        }
        reports.append(
            LatencyReport(
                conversation_id=row["conversation_id"],
                total_duration_ms=float(row["total_ms"]),
                kind_sums_ms=sums,
                agent_overhead_ms=float(row["overhead_ms"]),
                topology=row.get("topology", ""),
                complexity=int(row["complexity"]) if row.get("complexity") else None,
                resolution=row.get("resolution", ""),
            )
        )
    rows = aggregate_experiment(reports, args.group_by)
    output = aggregate_to_csv(rows, args.group_by)
    if args.out:
        Path(args.out).write_text(output)
        print(f"wrote {args.out}")
    else:
        print(output, end="")
    return EXIT_OK


def cmd_serve(args, config: PipelineConfig) -> int:
    import uvicorn

    from .service import build_app

    bundle = build_pipeline(config)
    if args.demo:
        bundle.broker.create_topic(DEMO_TOPIC)
        bundle.broker.ingest_stream(DEMO_TOPIC, SyntheticSource(demo_corpus_spec()))
    static_dir = Path(args.static) if args.static else None
    app = build_app(bundle.service, static_dir=static_dir)
    bundle.service.start_pumping()
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        bundle.service.stop_pumping()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cepmas",
        description="Multi-agent video query pipeline over pub/sub camera streams.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="pipeline config file (YAML)")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--scale", type=float, default=None,
                        help="replay scale factor for simulated delays")
    parser.add_argument("--out", default=None,
                        help="output path or directory for the chosen command")
    parser.add_argument("--workspace", help="override the workspace root")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP query service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8099)
    p_serve.add_argument("--static", help="directory with the web console build")
    p_serve.add_argument("--demo", action="store_true",
                         help="ingest the bundled demo stream into camera-1")

    p_ingest = sub.add_parser("ingest", help="publish a stream source to a topic")
    p_ingest.add_argument("topic")
    p_ingest.add_argument("source",
                          help="synthetic:level=3,frames=24,res=1080p | frames dir | video file")

    p_query = sub.add_parser("query", help="run one synchronous query")
    p_query.add_argument("text")
    p_query.add_argument("--topology", choices=["2-agent", "3-agent", "4-agent"])
    p_query.add_argument("--demo", action="store_true", default=True,
                         help="ingest the bundled demo stream first (default)")
    p_query.add_argument("--no-demo", dest="demo", action="store_false")
    p_query.add_argument("--interactive", action="store_true",
                         help="prompt for follow-up questions after the answer")

    p_subscribe = sub.add_parser("subscribe", help="demo an asynchronous subscription")
    p_subscribe.add_argument("text")
    p_subscribe.add_argument("--topic", default=DEMO_TOPIC)
    p_subscribe.add_argument("--source", default="synthetic:level=3")
    p_subscribe.add_argument("--cadence", type=int, default=24)
    p_subscribe.add_argument("--capacity", type=int, default=16)
    p_subscribe.add_argument("--demo", action="store_true", default=True)

    p_replay = sub.add_parser("replay-appendix",
                              help="replay the bundled two-agent golden flow")
    p_replay.add_argument("--out", default=argparse.SUPPRESS,
                          help="write the replayed transcript here")

    p_exp = sub.add_parser("experiment", help="run a replayed experiment sweep")
    p_exp.add_argument("kind", choices=["agents", "complexity", "resolution"])
    p_exp.add_argument("--out", default=argparse.SUPPRESS,
                       help="output directory for CSV files")
    p_exp.add_argument("--runs", type=int, default=None)

    p_report = sub.add_parser("report", help="aggregate a runs CSV into groups")
    p_report.add_argument("--input", required=True)
    p_report.add_argument("--group-by", default="topology",
                          choices=["topology", "complexity", "resolution"])
    p_report.add_argument("--out", default=argparse.SUPPRESS)

    return parser


_COMMANDS = {
    "serve": cmd_serve,
    "ingest": cmd_ingest,
    "query": cmd_query,
    "subscribe": cmd_subscribe,
    "replay-appendix": cmd_replay_appendix,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.workspace:
            config.workspace = Path(args.workspace)
        if args.seed is not None:
            config.seed = args.seed
        if args.scale is not None:
            config.scale = args.scale
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GatewayUnavailable, GatewayTimeout) as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except CepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
