"""Command-line entry point: parse, index, plan, execute, validate, write.

Exit codes::

    0  all tasks succeeded and the output validated
    1  output written but validation failed or a task failed
    2  planning failed
    3  provider or transport failure
    4  configuration error (bad flags, missing input, unsafe output location)
"""
from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

from featgraft.errors import ConfigError, MockScriptError, PlanningError, ProviderError, TaskParseError
from featgraft.executor import apply_plan
from featgraft.parser import build_dependency_graph
from featgraft.planner import FeatureRequest, TaskPlan, build_schema, map_feature, order_tasks, validate_tasks
from featgraft.project import DEFAULT_IGNORE, load_project, write_project
from featgraft.providers import MockScript, ProviderConfig, Transcript, make_provider
from featgraft.validator import validate
from featgraft.vectors import build_index

log = logging.getLogger("featgraft")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PLANNING = 2
EXIT_PROVIDER = 3
EXIT_CONFIG = 4

CONFIG_FILE = "featgraft.json"
PLAN_FILE = "plan.json"
EXECUTION_REPORT = "execution-report.json"
VALIDATION_REPORT = "validation-report.json"
TRANSCRIPT_FILE = "transcript.jsonl"


def _inside(child: Path, parent: Path) -> bool:
    try:
        child.relative_to(parent)
        return True
    except ValueError:
        return False


def default_output(input_dir: Path) -> Path:
    name = input_dir.resolve().name
    stem = name[:-4] if name.endswith("_old") else name
    return input_dir.resolve().parent / f"{stem}_new"


@dataclass
class RunConfig:
    input_dir: Path
    output_dir: Path
    prompt_text: str | None = None
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    top_k: int = 3
    dry_run: bool = False
    mock_script_path: Path | None = None
    ignore_rules: tuple[str, ...] = DEFAULT_IGNORE
    plan_path: Path | None = None
    reports_dir: Path | None = None
    transcript_path: Path | None = None
    force: bool = False

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output_dir = Path(self.output_dir)
        if self.reports_dir is None:
            self.reports_dir = self.output_dir.parent / f"{self.output_dir.name}-reports"
        self.reports_dir = Path(self.reports_dir)

    def check(self) -> None:
        """Raise ConfigError unless this run is safe to start."""
        if not self.input_dir.is_dir():
            raise ConfigError(f"input directory does not exist: {self.input_dir}")
        src = self.input_dir.resolve()
        for label, p in (("output", self.output_dir), ("reports", self.reports_dir)):
            dst = p.resolve()
            if dst == src or _inside(dst, src):
                raise ConfigError(f"{label} directory {p} must not be the input directory or inside it")
            if _inside(src, dst):
                raise ConfigError(f"{label} directory {p} must not contain the input directory")
        if not self.dry_run and self.output_dir.exists() and any(self.output_dir.iterdir()) and not self.force:
            raise ConfigError(f"output directory {self.output_dir} is not empty (use --force to replace it)")
        if self.top_k < 0:
            raise ConfigError("--top-k must be >= 0")
        if not (self.prompt_text and self.prompt_text.strip()) and self.plan_path is None:
            raise ConfigError("--prompt is required unless a saved plan is given with --plan")
        if self.provider.kind == "mock" and self.mock_script_path is None:
            raise ConfigError("the mock provider needs --mock-script")


def _write_json_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _relative_ref(path: Path, base: Path) -> str:
    # reports must not embed absolute locations, or two identical runs differ
    try:
        return path.resolve().relative_to(base.resolve()).as_posix()
    except ValueError:
        return path.name


def _load_saved_plan(path: Path) -> TaskPlan:
    try:
        return TaskPlan.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, TaskParseError, ValueError) as exc:
        raise ConfigError(f"cannot use saved plan {path}: {exc}") from exc


def run_pipeline(cfg: RunConfig) -> int:
    """Run every stage for ``cfg`` and return the process exit code."""
    try:
        cfg.check()
        project = load_project(cfg.input_dir, cfg.ignore_rules)
        script = MockScript.load(cfg.mock_script_path) if cfg.provider.kind == "mock" else None
        transcript_path = cfg.transcript_path or cfg.reports_dir / TRANSCRIPT_FILE
        transcript = Transcript(transcript_path)
        provider = make_provider(cfg.provider, script, transcript)
    except (ConfigError, MockScriptError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    log.info("loaded %d files from %s (%d skipped)", len(project), cfg.input_dir,
             project.report.skipped_count)

    graph = build_dependency_graph(project)
    log.info("dependency graph: %d files, %d edges", len(graph.vertices), len(graph.edges))

    try:
        saved = _load_saved_plan(cfg.plan_path) if cfg.plan_path is not None else None
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG

    try:
        index = build_index(project, provider, cfg.provider.dimension,
                            parallelism=cfg.provider.max_in_flight)
        if saved is not None:
            schema = build_schema(project, graph, index, FeatureRequest(saved.request_echo), provider, 0)
            validate_tasks(list(saved.tasks), schema)
            plan = TaskPlan(tuple(order_tasks(list(saved.tasks), graph)), saved.request_echo)
        else:
            request = FeatureRequest(cfg.prompt_text)
            schema = build_schema(project, graph, index, request, provider, cfg.top_k)
            plan = map_feature(schema, request, provider)
    except PlanningError as exc:
        log.error("planning failed: %s", exc)
        return EXIT_PLANNING
    except ProviderError as exc:
        log.error("provider failure: %s", exc)
        return EXIT_PROVIDER
    except MockScriptError as exc:
        log.error("mock script: %s", exc)
        return EXIT_CONFIG

    try:
        _write_json_text(cfg.reports_dir / PLAN_FILE, plan.to_json())
    except OSError as exc:
        log.error("cannot write reports to %s: %s", cfg.reports_dir, exc)
        return EXIT_CONFIG
    log.info("plan: %d task(s)", len(plan))
    for t in plan.tasks:
        log.info("  %d. %s %s", t.task_id, t.action, t.target_path)
    if cfg.dry_run:
        log.info("dry run: plan written to %s", cfg.reports_dir / PLAN_FILE)
        return EXIT_OK

    try:
        new_project, exec_report = apply_plan(project, plan, provider, schema,
                                              transcript_ref=_relative_ref(transcript_path, cfg.reports_dir))
    except MockScriptError as exc:
        log.error("mock script: %s", exc)
        return EXIT_CONFIG
    report = validate(new_project, project)

    try:
        if cfg.output_dir.exists():
            shutil.rmtree(cfg.output_dir)
        write_project(new_project, cfg.output_dir)
        _write_json_text(cfg.reports_dir / EXECUTION_REPORT, exec_report.to_json())
        _write_json_text(cfg.reports_dir / VALIDATION_REPORT, report.to_json())
    except OSError as exc:
        log.error("cannot write output: %s", exc)
        return EXIT_CONFIG

    d = exec_report.diff
    log.info("output written to %s: %d modified, %d added, %d unchanged",
             cfg.output_dir, len(d.modified), len(d.added), len(d.unchanged))
    for o in exec_report.outcomes:
        if o.status != "succeeded":
            log.error("task %d (%s) failed: %s", o.task_id, o.target_path, o.reason)
    for v in report.violations:
        log.error("%s: %s: %s", v.kind, v.path, v.detail)

    log.info("validation %s", "passed" if report.verdict else "FAILED")
    if exec_report.transport_failed:
        return EXIT_PROVIDER
    if not exec_report.succeeded or not report.verdict:
        return EXIT_INVALID
    return EXIT_OK


def emit_graph(input_dir: Path, ignore_rules=DEFAULT_IGNORE, out=None) -> int:
    """Print the dependency graph of ``input_dir`` as JSON."""
    out = out or sys.stdout
    try:
        project = load_project(input_dir, ignore_rules)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    out.write(build_dependency_graph(project).to_json())
    return EXIT_OK


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="featgraft",
        description="Integrate a natural-language feature request into a source tree.",
    )
    ap.add_argument("--prompt", help="feature request text")
    ap.add_argument("--input", help="project directory to read (default: current directory)")
    ap.add_argument("--output", help="directory for the updated project (default: sibling <name>_new)")
    ap.add_argument("--reports", help="directory for plan and report JSON (default: <output>-reports)")
    ap.add_argument("--provider", choices=["mock", "http"], help="generation backend (default: mock)")
    ap.add_argument("--model", help="model id sent to the http provider")
    ap.add_argument("--endpoint", help="base URL of the http provider")
    ap.add_argument("--api-key-env", help="environment variable holding the API key")
    ap.add_argument("--api-style", choices=["openai", "watsonx"], help="request field names for http")
    ap.add_argument("--top-k", type=int, help="files that get content excerpts in the planning prompt")
    ap.add_argument("--dimension", type=int, help="embedding dimension")
    ap.add_argument("--max-retries", type=int, help="http retries after the first attempt")
    ap.add_argument("--timeout", type=float, help="http timeout in seconds")
    ap.add_argument("--dry-run", action="store_true", default=None, help="plan only; write plan.json")
    ap.add_argument("--plan", help="use a saved plan.json instead of asking the provider")
    ap.add_argument("--mock-script", help="JSON script for the mock provider")
    ap.add_argument("--ignore", action="append", help="extra ignore glob (repeatable)")
    ap.add_argument("--transcript", help="where to write the provider transcript (JSON lines)")
    ap.add_argument("--force", action="store_true", default=None, help="replace a non-empty output directory")
    ap.add_argument("--graph", action="store_true", help="print the dependency graph of --input as JSON and exit")
    ap.add_argument("--config", help=f"config file (default: ./{CONFIG_FILE} when present)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load_config_file(path: str | None) -> dict:
    p = Path(path) if path else Path(CONFIG_FILE)
    if not p.exists():
        if path:
            raise ConfigError(f"config file not found: {path}")
        return {}
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad config file {p}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {p} must hold a JSON object")
    if "api_key" in doc:
        raise ConfigError("API keys are not read from config files; use api_key_env")
    return {k.replace("-", "_"): v for k, v in doc.items()}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_cfg = _load_config_file(args.config)

    def pick(name, default=None):
        v = getattr(args, name, None)
        if v is not None:
            return v
        return file_cfg.get(name, default)

    input_dir = Path(pick("input", "."))
    output = pick("output")
    output_dir = Path(output) if output else default_output(input_dir)
    kind = pick("provider", "mock")
    provider = ProviderConfig(
        kind=kind,
        endpoint=pick("endpoint"),
        model_id=pick("model", "mock" if kind == "mock" else "ibm/granite-3-8b-instruct"),
        api_key_ref=pick("api_key_env", None if kind == "mock" else "FEATGRAFT_API_KEY"),
        timeout=float(pick("timeout", 60.0)),
        max_retries=int(pick("max_retries", 2)),
        dimension=int(pick("dimension", 64)),
        api_style=pick("api_style", "openai"),
    )
    ignore = tuple(DEFAULT_IGNORE) + tuple(pick("ignore", []) or [])
    mock = pick("mock_script")
    plan = pick("plan")
    reports = pick("reports")
    transcript = pick("transcript")
    return RunConfig(
        input_dir=input_dir,
        output_dir=output_dir,
        prompt_text=pick("prompt"),
        provider=provider,
        top_k=int(pick("top_k", 3)),
        dry_run=bool(pick("dry_run", False)),
        mock_script_path=Path(mock) if mock else None,
        ignore_rules=ignore,
        plan_path=Path(plan) if plan else None,
        reports_dir=Path(reports) if reports else None,
        transcript_path=Path(transcript) if transcript else None,
        force=bool(pick("force", False)),
    )


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="featgraft: %(message)s", stream=sys.stderr)
    try:
        if args.graph:
            file_cfg = _load_config_file(args.config)
            ignore = tuple(DEFAULT_IGNORE) + tuple(args.ignore or file_cfg.get("ignore", []))
            return emit_graph(Path(args.input or file_cfg.get("input", ".")), ignore)
        cfg = config_from_args(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return run_pipeline(cfg)


if __name__ == "__main__":
    sys.exit(main())
