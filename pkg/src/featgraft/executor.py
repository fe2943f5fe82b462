"""Applying a task plan: one provider call per task, whole-file replacement."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from featgraft import prompts
from featgraft.errors import FeatgraftError, PlanDriftError, ProviderError
from featgraft.planner import ProjectSchema, Task, TaskPlan
from featgraft.project import Language, Project, ProjectDiff, SourceFile, copy_project, diff_projects
from featgraft.providers import CompletionRequest, Provider
from featgraft.validator import syntax_gate

log = logging.getLogger(__name__)

SUCCEEDED = "succeeded"
FAILED = "failed"


@dataclass(frozen=True)
class GeneratedArtifact:
    task_id: int
    target_path: str
    content: str
    provider_round_trips: int

    def __post_init__(self):
        if not self.content:
            raise ValueError("generated content is empty")


class GenerationError(FeatgraftError):
    def __init__(self, message: str, round_trips: int):
        super().__init__(message)
        self.round_trips = round_trips


@dataclass(frozen=True)
class TaskOutcome:
    task_id: int
    target_path: str
    action: str
    status: str
    reason: str | None = None
    provider_round_trips: int = 0
    transport_failure: bool = False

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "target_path": self.target_path, "action": self.action,
                "status": self.status, "reason": self.reason,
                "provider_round_trips": self.provider_round_trips}


@dataclass(frozen=True)
class ExecutionReport:
    outcomes: tuple[TaskOutcome, ...]
    diff: ProjectDiff
    transcript: str | None = None

    @property
    def succeeded(self) -> bool:
        return all(o.status == SUCCEEDED for o in self.outcomes)

    @property
    def transport_failed(self) -> bool:
        return any(o.transport_failure for o in self.outcomes)

    def to_dict(self) -> dict:
        return {"succeeded": self.succeeded,
                "tasks": [o.to_dict() for o in self.outcomes],
                "diff": self.diff.to_dict(),
                "transcript": self.transcript}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fenced(path: str, content: str) -> str:
    return f"--- {path} ---\n{content}" + ("" if content.endswith("\n") else "\n") + f"--- end {path} ---\n"


def render_task_prompt(task: Task, project: Project, schema: ProjectSchema,
                       request_text: str = "") -> CompletionRequest:
    """Prompt for one task: instruction, current target content, and context files in full."""
    if task.action == "update" and task.target_path not in project:
        raise PlanDriftError(f"update target {task.target_path} is no longer in the project")
    missing = [c for c in task.context_paths if c not in project]
    if missing:
        raise PlanDriftError(f"context paths missing from the project: {missing}")

    current = ""
    if task.action == "update":
        current = "\nCurrent content of the target file:\n" + _fenced(task.target_path, project.content(task.target_path))
    context = ""
    ctx = [c for c in task.context_paths if c != task.target_path]
    if ctx:
        context = "\nRelated files:\n" + "".join(_fenced(c, project.content(c)) for c in ctx)
    listing = "\n".join(f"  {p}" for p in (project.paths or schema.paths)) or "  (none)"
    user = prompts.render(
        "task_user",
        request=request_text or "(see instruction)",
        task_id=task.task_id,
        action=task.action,
        target_path=task.target_path,
        instruction=task.instruction,
        file_list=listing,
        current_section=current,
        context_section=context,
    )
    return CompletionRequest(system_text=prompts.render("task_system"), user_text=user)


def generate_code(task: Task, prompt: CompletionRequest, provider: Provider) -> GeneratedArtifact:
    """Call the provider and normalize the reply.

    Empty replies and python replies that fail the syntax gate get one
    corrective re-prompt. A still-empty reply raises GenerationError; a reply
    that still fails the gate is kept and left for the validator to report.
    """
    is_python = SourceFile(task.target_path, "").language is Language.PYTHON
    content = prompts.strip_code_fences(provider.complete(prompt))
    trips = 1
    problem = _reply_problem(task, content, is_python)
    if problem:
        log.info("task %d: %s; re-prompting once", task.task_id, problem)
        retry = CompletionRequest(
            system_text=prompt.system_text,
            user_text=prompts.render("task_retry", original=prompt.user_text, error=problem),
            max_output_tokens=prompt.max_output_tokens,
            temperature=prompt.temperature,
        )
        content = prompts.strip_code_fences(provider.complete(retry))
        trips += 1
        if not content.strip():
            raise GenerationError("provider returned empty content twice", trips)
    return GeneratedArtifact(task.task_id, task.target_path, content, trips)


def _reply_problem(task: Task, content: str, is_python: bool) -> str | None:
    if not content.strip():
        return "the reply was empty"
    if is_python:
        verdict = syntax_gate(SourceFile(task.target_path, content))
        if not verdict.ok:
            return f"the file does not pass a syntax check ({verdict.detail})"
    return None


def apply_plan(project: Project, plan: TaskPlan, provider: Provider,
               schema: ProjectSchema | None = None,
               transcript_ref: str | None = None) -> tuple[Project, ExecutionReport]:
    """Run ``plan`` against a copy of ``project``.

    Tasks run in plan order and each sees the output of earlier ones. A
    failing task is recorded and the rest still run.
    """
    if schema is None:
        schema = ProjectSchema((), ())
    current = copy_project(project)
    outcomes = []
    for task in plan.tasks:
        try:
            prompt = render_task_prompt(task, current, schema, plan.request_echo)
            artifact = generate_code(task, prompt, provider)
        except PlanDriftError as exc:
            outcomes.append(TaskOutcome(task.task_id, task.target_path, task.action, FAILED, str(exc)))
            continue
        except GenerationError as exc:
            outcomes.append(TaskOutcome(task.task_id, task.target_path, task.action, FAILED,
                                        str(exc), exc.round_trips))
            continue
        except ProviderError as exc:
            outcomes.append(TaskOutcome(task.task_id, task.target_path, task.action, FAILED,
                                        str(exc), transport_failure=True))
            continue
        current = current.with_file(artifact.target_path, artifact.content)
        outcomes.append(TaskOutcome(task.task_id, task.target_path, task.action, SUCCEEDED,
                                    None, artifact.provider_round_trips))
    report = ExecutionReport(tuple(outcomes), diff_projects(project, current), transcript_ref)
    return current, report
