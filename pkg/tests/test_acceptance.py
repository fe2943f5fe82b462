"""Acceptance suite: one test per criterion, each reporting PASS/FAIL/SKIP.

The summary lines are printed at the end of the pytest run (see conftest).
Criterion 8 talks to a real model and only runs when FEATGRAFT_LIVE_ENDPOINT
and FEATGRAFT_API_KEY are set.
"""
import itertools
import json
import os
import random
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

import conftest
from conftest import DEMO, DEMO_REQUEST, make_project, synthetic_files, write_tree
from featgraft.cli import EXIT_OK, RunConfig, run_pipeline
from featgraft.errors import PlanningError, PlanValidationError
from featgraft.executor import apply_plan
from featgraft.parser import build_dependency_graph
from featgraft.planner import FeatureRequest, TaskPlan, build_schema, map_feature
from featgraft.project import load_project, tree_fingerprint
from featgraft.providers import MockProvider, MockScript, ProviderConfig, ScriptEntry
from featgraft.validator import UNRESOLVED_INTERNAL_IMPORT, validate
from featgraft.vectors import build_index, cosine_similarity, load_index, persist_index, query_top_k

@contextmanager
def criterion(n, title):
    try:
        yield
    except pytest.skip.Exception:
        conftest.ACCEPTANCE[n] = (title, "SKIP")
        print(f"criterion {n}: SKIP  {title}")
        raise
    except BaseException:
        conftest.ACCEPTANCE[n] = (title, "FAIL")
        print(f"criterion {n}: FAIL  {title}")
        raise
    conftest.ACCEPTANCE[n] = (title, "PASS")
    print(f"criterion {n}: PASS  {title}")


def mock_run(input_dir, output_dir, script=DEMO / "logging_run.json", **kw):
    cfg = RunConfig(input_dir=input_dir, output_dir=output_dir, prompt_text=kw.pop("prompt", DEMO_REQUEST),
                    mock_script_path=script, **kw)
    return run_pipeline(cfg)


def tree_bytes(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def reach(edges):
    """Transitive closure by fixpoint iteration."""
    r = set(edges)
    while True:
        extra = {(a, d) for a, b in r for c, d in r if b == c} - r
        if not extra:
            return r
        r |= extra


def ordered_ok(targets, graph):
    r = reach(graph.edges)
    pos = {p: i for i, p in enumerate(targets)}
    for a, b in itertools.permutations([t for t in targets if t in graph.vertices], 2):
        if (a, b) in r and (b, a) not in r and pos[b] > pos[a]:
            return False
    new = [t for t in targets if t not in graph.vertices]
    return targets[len(targets) - len(new):] == sorted(new)


# 1 ----------------------------------------------------------------------------

def test_criterion_1_golden_run(tmp_path):
    with criterion(1, "golden run reproduces the updated project byte-exactly in < 1 s"):
        shutil.copytree(DEMO / "project_old", tmp_path / "project_old")
        t0 = time.perf_counter()
        rc = mock_run(tmp_path / "project_old", tmp_path / "project_new")
        elapsed = time.perf_counter() - t0
        assert rc == EXIT_OK
        assert tree_bytes(tmp_path / "project_new") == tree_bytes(DEMO / "project_new_golden")
        diff = json.loads((tmp_path / "project_new-reports" / "execution-report.json").read_text())["diff"]
        assert sorted(diff["modified"]) == ["app.py", "utils/helpers.py"]
        assert diff["unchanged"] == ["requirements.txt"]
        assert diff["added"] == [] and diff["removed"] == []
        assert elapsed < 1.0, f"{elapsed:.3f}s"


# 2 ----------------------------------------------------------------------------

def test_criterion_2_graph_reproduction():
    with criterion(2, "dependency graph of project_old is 3 vertices, 1 edge"):
        g = build_dependency_graph(load_project(DEMO / "project_old"))
        assert len(g.vertices) == 3
        assert g.vertices == {"app.py", "requirements.txt", "utils/helpers.py"}
        assert g.edges == {("app.py", "utils/helpers.py")}


# 3 ----------------------------------------------------------------------------

def test_criterion_3_validation_soundness():
    with criterion(3, "golden output validates; removing helpers yields one unresolved import"):
        old = load_project(DEMO / "project_old")
        golden = load_project(DEMO / "project_new_golden")
        report = validate(golden, old)
        assert report.verdict is True and report.violations == ()
        broken = validate(golden.without_file("utils/helpers.py"), golden)
        assert broken.verdict is False
        assert [v.kind for v in broken.violations] == [UNRESOLVED_INTERNAL_IMPORT]


# 4 ----------------------------------------------------------------------------

def random_corpus(rng, n):
    words = ["alpha", "beta", "gamma", "delta", "parse", "load", "emit", "node", "edge", "cache"]
    files = {}
    for i in range(n):
        body = "\n".join(f"def {rng.choice(words)}_{j}(x):\n    return x * {rng.randint(0, 999)}\n"
                         for j in range(rng.randint(1, 5)))
        files[f"pkg{i % 7}/mod_{i:03d}.py"] = f"# file {i} salt {rng.getrandbits(48)}\n{body}"
    return files


def test_criterion_4_vector_index(tmp_path):
    with criterion(4, "index: self-retrieval 100%, symmetric cosine, scale-invariant top-k, round-trip, < 5 s"):
        t0 = time.perf_counter()
        rng = random.Random(4)
        project = make_project(random_corpus(rng, 100))
        assert len(project) == 100
        idx = build_index(project, MockProvider(MockScript()), 64)

        hits = sum(query_top_k(idx, idx.vector(p), 1)[0][0] == p for p in project)
        assert hits / len(project) == 1.0

        paths = project.paths
        worst = max(abs(cosine_similarity(idx.vector(a), idx.vector(b)) -
                        cosine_similarity(idx.vector(b), idx.vector(a)))
                    for a, b in itertools.combinations(paths, 2))
        assert worst <= 1e-12

        for p in rng.sample(paths, 20):
            q = idx.vector(p)
            base = [x for x, _ in query_top_k(idx, q, 10)]
            for c in (1e-3, 0.5, 7.0, 1e3):
                assert [x for x, _ in query_top_k(idx, q.scaled(c), 10)] == base

        persist_index(idx, tmp_path / "index.jsonl")
        assert load_index(tmp_path / "index.jsonl") == idx
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0, f"{elapsed:.3f}s"


# 5 ----------------------------------------------------------------------------

def test_criterion_5_identity_and_isolation(tmp_path):
    with criterion(5, "empty plan is identity; 50 random plans leave non-targets and input untouched"):
        old = load_project(DEMO / "project_old")
        same, report = apply_plan(old, TaskPlan((), DEMO_REQUEST), MockProvider(MockScript()))
        assert same == old and report.diff.is_identity

        for case in range(50):
            rng = random.Random(1000 + case)
            files = synthetic_files(rng, rng.randint(2, 9))
            root = write_tree(tmp_path / f"c{case}" / "in", files)
            before = tree_fingerprint(root)
            targets = rng.sample(sorted(files), rng.randint(1, min(4, len(files))))
            tasks = [{"task_id": i, "action": "update", "target_path": t, "instruction": "rewrite",
                      "context_paths": []} for i, t in enumerate(targets, 1)]
            if rng.random() < 0.5:
                tasks.append({"task_id": len(tasks) + 1, "action": "create", "target_path": "extra/new.py",
                              "instruction": "add", "context_paths": []})
            plan_file = tmp_path / f"c{case}" / "plan.json"
            plan_file.write_text(json.dumps({"request": "r", "tasks": tasks}))
            script = tmp_path / f"c{case}" / "script.json"
            script.write_text(json.dumps({"responses": [
                {"ordinal": i, "response": f"# generated {case}.{i}\n"} for i in range(1, len(tasks) + 1)]}))

            out = tmp_path / f"c{case}" / "out"
            rc = mock_run(root, out, script=script, prompt=None, plan_path=plan_file)
            assert rc in (0, 1), f"case {case}: exit {rc}"
            assert tree_fingerprint(root) == before
            got = tree_bytes(out)
            for path, text in files.items():
                if path not in targets:
                    assert got[path] == text.encode("utf-8"), f"case {case}: {path} changed"
                else:
                    assert got[path].startswith(b"# generated")


# 6 ----------------------------------------------------------------------------

def planner_cases(rng):
    kinds = ["valid"] * 10 + ["malformed"] * 6 + ["wrong_path"] * 5 + ["empty"] * 4
    rng.shuffle(kinds)
    malformed = ["", "not json at all", '[{"task_id": 1', '[{"task_id": 1}]',
                 'Here is the plan: []', '{"tasks": []}']
    for i, kind in enumerate(kinds):
        files = synthetic_files(rng, rng.randint(3, 8))
        paths = sorted(files)
        if kind == "valid":
            targets = rng.sample(paths, rng.randint(1, min(5, len(paths))))
            tasks = [{"task_id": j, "action": "update", "target_path": t, "instruction": "log calls",
                      "context_paths": rng.sample(paths, rng.randint(0, 2))}
                     for j, t in enumerate(targets, 1)]
            if rng.random() < 0.4:
                tasks.append({"task_id": len(tasks) + 1, "action": "create",
                              "target_path": "logging_setup.py", "instruction": "x", "context_paths": []})
            replies = [json.dumps(tasks)]
        elif kind == "malformed":
            replies = [malformed[i % len(malformed)], "still {not json"]
        elif kind == "wrong_path":
            bad = rng.choice([
                {"action": "update", "target_path": "missing/module.py"},
                {"action": "create", "target_path": rng.choice(paths)},
            ])
            replies = [json.dumps([dict(task_id=1, instruction="x", context_paths=[], **bad)])]
        else:
            replies = ["[]"]
        yield kind, files, replies


def test_criterion_6_planner_contract():
    with criterion(6, "planner accepts exactly the valid replies, one re-prompt per malformed, ordered plans"):
        rng = random.Random(6)
        accepted, expected, seen_kinds = [], [], set()
        for i, (kind, files, replies) in enumerate(planner_cases(rng)):
            seen_kinds.add(kind)
            project = make_project(files)
            graph = build_dependency_graph(project)
            emb = MockProvider(MockScript())
            schema = build_schema(project, graph, build_index(project, emb, 64),
                                  FeatureRequest("add logging"), emb, 2)
            prov = MockProvider(MockScript([ScriptEntry(r, ordinal=n) for n, r in enumerate(replies, 1)]))
            if kind == "valid":
                expected.append(i)
            try:
                plan = map_feature(schema, FeatureRequest("add logging"), prov)
            except PlanValidationError:
                assert kind == "wrong_path"
            except PlanningError:
                assert kind in ("malformed", "empty")
            else:
                accepted.append(i)
                assert ordered_ok(plan.targets, graph)
            assert prov.calls == (2 if kind == "malformed" else 1), f"case {i} ({kind})"
        assert i == 24 and seen_kinds == {"valid", "malformed", "wrong_path", "empty"}
        assert accepted == expected


# 7 ----------------------------------------------------------------------------

def test_criterion_7_determinism(tmp_path):
    with criterion(7, "two mock runs give byte-identical plan, reports, and output trees"):
        src = shutil.copytree(DEMO / "project_old", tmp_path / "project_old")
        runs = []
        for n in (1, 2):
            out = tmp_path / f"run{n}" / "project_new"
            assert mock_run(src, out) == EXIT_OK
            reports = tmp_path / f"run{n}" / "project_new-reports"
            runs.append((tree_bytes(out), {name: (reports / name).read_bytes() for name in
                                           ("plan.json", "execution-report.json", "validation-report.json")}))
        assert runs[0] == runs[1]


# 8 ----------------------------------------------------------------------------

@pytest.mark.live
def test_criterion_8_live_smoke(tmp_path):
    with criterion(8, "live provider completes a run on project_old (manual, non-gating)"):
        endpoint = os.environ.get("FEATGRAFT_LIVE_ENDPOINT")
        if not endpoint or not os.environ.get("FEATGRAFT_API_KEY"):
            pytest.skip("set FEATGRAFT_LIVE_ENDPOINT and FEATGRAFT_API_KEY to run against a real model")
        provider = ProviderConfig(kind="http", endpoint=endpoint, api_key_ref="FEATGRAFT_API_KEY",
                                  model_id=os.environ.get("FEATGRAFT_LIVE_MODEL", "ibm/granite-3-8b-instruct"),
                                  api_style=os.environ.get("FEATGRAFT_LIVE_API_STYLE", "openai"),
                                  dimension=int(os.environ.get("FEATGRAFT_LIVE_DIMENSION", "768")))
        src = shutil.copytree(DEMO / "project_old", tmp_path / "project_old")
        cfg = RunConfig(input_dir=src, output_dir=tmp_path / "project_new", prompt_text=DEMO_REQUEST,
                        provider=provider)
        rc = run_pipeline(cfg)
        assert rc in (0, 1)
        verdict = json.loads((tmp_path / "project_new-reports" / "validation-report.json").read_text())
        assert isinstance(verdict["verdict"], bool)
