"""Turning a feature request into an ordered, path-anchored task plan."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from featgraft import prompts
from featgraft.errors import PlanningError, PlanValidationError, TaskParseError
from featgraft.parser import DependencyGraph, execution_order, extract_imports
from featgraft.project import Project, check_relpath
from featgraft.providers import CompletionRequest, Provider
from featgraft.vectors import Embedder, VectorIndex, query_top_k

log = logging.getLogger(__name__)

ACTIONS = ("create", "update")
TASK_FIELDS = ("task_id", "action", "target_path", "instruction", "context_paths")
DEFAULT_SNIPPET_BYTES = 1500


@dataclass(frozen=True)
class FeatureRequest:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("feature request is empty")


@dataclass(frozen=True)
class FileRecord:
    path: str
    language: str
    byte_count: int
    imports: tuple[str, ...]
    snippet: str | None = None


@dataclass(frozen=True)
class ProjectSchema:
    files: tuple[FileRecord, ...]
    edges: tuple[tuple[str, str], ...]

    @property
    def paths(self) -> list[str]:
        return [r.path for r in self.files]

    def graph(self) -> DependencyGraph:
        return DependencyGraph(frozenset(self.paths), frozenset(self.edges))

    def to_dict(self) -> dict:
        files = []
        for r in self.files:
            rec = {"path": r.path, "language": r.language, "byte_count": r.byte_count,
                   "imports": list(r.imports)}
            if r.snippet is not None:
                rec["snippet"] = r.snippet
            files.append(rec)
        return {"files": files, "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class Task:
    task_id: int
    action: str
    target_path: str
    instruction: str
    context_paths: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "action": self.action, "target_path": self.target_path,
                "instruction": self.instruction, "context_paths": list(self.context_paths)}


@dataclass(frozen=True)
class TaskPlan:
    tasks: tuple[Task, ...]
    request_echo: str

    def __post_init__(self):
        ids = [t.task_id for t in self.tasks]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValueError(f"task ids must be unique and dense from 1, got {ids}")

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def targets(self) -> list[str]:
        return [t.target_path for t in self.tasks]

    def to_dict(self) -> dict:
        return {"request": self.request_echo, "tasks": [t.to_dict() for t in self.tasks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> TaskPlan:
        if not isinstance(doc, dict) or "tasks" not in doc or "request" not in doc:
            raise TaskParseError("plan document needs 'request' and 'tasks'")
        tasks = parse_task_list(json.dumps(doc["tasks"]))
        return cls(tuple(tasks), doc["request"])


def _snippet(content: str, budget: int) -> str:
    return content.encode("utf-8")[:budget].decode("utf-8", errors="ignore")


def build_schema(project: Project, graph: DependencyGraph, index: VectorIndex,
                 request: FeatureRequest, embedder: Embedder, k: int,
                 snippet_bytes: int = DEFAULT_SNIPPET_BYTES) -> ProjectSchema:
    """Describe every file; the ``k`` files closest to the request also get a leading excerpt."""
    if set(graph.vertices) != set(project):
        raise ValueError("dependency graph was not built from this project")
    chosen: set[str] = set()
    if k > 0 and len(index):
        hits = query_top_k(index, embedder.embed(request.text), k)
        chosen = {p for p, _ in hits}
    records = []
    for f in project.values():
        imports = tuple(r.raw_module for r in extract_imports(f)) if f.language.value == "python" else ()
        records.append(FileRecord(
            path=f.path,
            language=f.language.value,
            byte_count=len(f.data),
            imports=imports,
            snippet=_snippet(f.content, snippet_bytes) if f.path in chosen else None,
        ))
    return ProjectSchema(tuple(records), tuple(sorted(graph.edges)))


def parse_task_list(raw: str) -> list[Task]:
    """Strictly parse the JSON task array documented in the planning prompt."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TaskParseError(f"invalid JSON ({exc.msg} at line {exc.lineno} column {exc.colno})") from exc
    if not isinstance(doc, list):
        raise TaskParseError(f"expected a JSON array, got {type(doc).__name__}")
    tasks = []
    seen_ids = set()
    for i, item in enumerate(doc):
        loc = f"$[{i}]"
        if not isinstance(item, dict):
            raise TaskParseError("task must be an object", loc)
        missing = [f for f in TASK_FIELDS if f not in item]
        if missing:
            raise TaskParseError(f"missing fields {missing}", loc)
        extra = sorted(set(item) - set(TASK_FIELDS))
        if extra:
            raise TaskParseError(f"unknown fields {extra}", loc)
        tid = item["task_id"]
        if not isinstance(tid, int) or isinstance(tid, bool) or tid < 1:
            raise TaskParseError("task_id must be a positive integer", f"{loc}.task_id")
        if tid in seen_ids:
            raise TaskParseError(f"duplicate task_id {tid}", f"{loc}.task_id")
        seen_ids.add(tid)
        if item["action"] not in ACTIONS:
            raise TaskParseError(f"action must be one of {list(ACTIONS)}, got {item['action']!r}",
                                 f"{loc}.action")
        target = item["target_path"]
        if not isinstance(target, str):
            raise TaskParseError("target_path must be a string", f"{loc}.target_path")
        try:
            check_relpath(target)
        except ValueError as exc:
            raise TaskParseError(str(exc), f"{loc}.target_path") from exc
        instruction = item["instruction"]
        if not isinstance(instruction, str) or not instruction.strip():
            raise TaskParseError("instruction must be a non-empty string", f"{loc}.instruction")
        ctx = item["context_paths"]
        if not isinstance(ctx, list) or not all(isinstance(c, str) for c in ctx):
            raise TaskParseError("context_paths must be an array of strings", f"{loc}.context_paths")
        tasks.append(Task(tid, item["action"], target, instruction, tuple(ctx)))
    return tasks


def task_problem(task: Task, paths: set[str], dirs: set[str]) -> str | None:
    """Why ``task`` cannot run against a project with these paths, or None."""
    if task.action == "update" and task.target_path not in paths:
        return "update target does not exist"
    if task.action == "create":
        if task.target_path in paths:
            return "create target already exists"
        if task.target_path in dirs:
            return "create target is an existing directory"
        parts = task.target_path.split("/")
        for i in range(1, len(parts)):
            if "/".join(parts[:i]) in paths:
                return "create target lies below an existing file"
    bad_ctx = [c for c in task.context_paths if c not in paths]
    if bad_ctx:
        return f"unknown context paths {bad_ctx}"
    return None


def validate_tasks(tasks: list[Task], schema: ProjectSchema) -> None:
    paths = set(schema.paths)
    dirs = set()
    for p in paths:
        parts = p.split("/")[:-1]
        dirs.update("/".join(parts[:i]) for i in range(1, len(parts) + 1))
    offenders = []
    created: set[str] = set()
    for t in tasks:
        if t.action == "create" and t.target_path in created:
            offenders.append((t.target_path, "created twice"))
            continue
        why = task_problem(t, paths, dirs)
        if why:
            offenders.append((t.target_path, why))
        if t.action == "create":
            created.add(t.target_path)
    if offenders:
        raise PlanValidationError(offenders)


def order_tasks(tasks: list[Task], graph: DependencyGraph) -> list[Task]:
    """Sort tasks by dependency-first target order and renumber them from 1."""
    rank = {p: i for i, p in enumerate(execution_order(graph, {t.target_path for t in tasks}))}
    ordered = sorted(enumerate(tasks), key=lambda it: (rank[it[1].target_path], it[0]))
    return [Task(n, t.action, t.target_path, t.instruction, t.context_paths)
            for n, (_, t) in enumerate(ordered, start=1)]


def plan_request(schema: ProjectSchema, request: FeatureRequest) -> CompletionRequest:
    return CompletionRequest(
        system_text=prompts.render("plan_system"),
        user_text=prompts.render("plan_user", request=request.text, schema=schema.to_json()),
        response_format_hint="json",
    )


def map_feature(schema: ProjectSchema, request: FeatureRequest, provider: Provider) -> TaskPlan:
    """Ask the provider for tasks, parse, check against the schema, and order them.

    A reply that does not parse gets exactly one corrective re-prompt.
    """
    first = plan_request(schema, request)
    raw = provider.complete(first)
    try:
        tasks = parse_task_list(prompts.strip_code_fences(raw))
    except TaskParseError as exc:
        log.info("plan reply unparseable (%s); re-prompting once", exc)
        retry = CompletionRequest(
            system_text=first.system_text,
            user_text=prompts.render("plan_retry", original=first.user_text,
                                     error=str(exc), previous=raw),
            response_format_hint="json",
        )
        raw = provider.complete(retry)
        try:
            tasks = parse_task_list(prompts.strip_code_fences(raw))
        except TaskParseError as exc2:
            raise PlanningError(f"plan reply unparseable after corrective re-prompt: {exc2}") from exc2
    if not tasks:
        raise PlanningError("provider returned an empty plan")
    validate_tasks(tasks, schema)
    return TaskPlan(tuple(order_tasks(tasks, schema.graph())), request.text)
