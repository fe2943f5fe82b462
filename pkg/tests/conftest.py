import random
from pathlib import Path

import pytest

from featgraft.project import Project, SourceFile, load_project

FIXTURES = Path(__file__).parent / "fixtures"
DEMO = FIXTURES / "demo"
DEMO_REQUEST = "Add logging functionality to all major modules in the project"


@pytest.fixture
def demo_dir():
    return DEMO


@pytest.fixture
def project_old():
    return load_project(DEMO / "project_old")


@pytest.fixture
def project_golden():
    return load_project(DEMO / "project_new_golden")


@pytest.fixture
def demo_script_path():
    return DEMO / "logging_run.json"


def make_project(files: dict[str, str]) -> Project:
    return Project([SourceFile(p, c) for p, c in files.items()], root_label="synthetic")


def write_tree(root: Path, files: dict[str, str]) -> Path:
    for rel, text in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(text.encode("utf-8"))
    return root


def synthetic_files(rng: random.Random, n_modules: int = 6) -> dict[str, str]:
    """A small package tree whose modules import earlier modules (acyclic, valid python)."""
    pkgs = ["core", "util", "app"]
    files: dict[str, str] = {}
    modules: list[str] = []
    for p in pkgs:
        files[f"{p}/__init__.py"] = ""
    for i in range(n_modules):
        pkg = rng.choice(pkgs)
        name = f"m{i}"
        dotted = f"{pkg}.{name}"
        imports = []
        for dep in rng.sample(modules, k=min(len(modules), rng.randint(0, 2))):
            imports.append(f"import {dep}")
        if rng.random() < 0.5:
            imports.append("import os")
        body = "\n".join(imports)
        files[f"{pkg}/{name}.py"] = (
            f"{body}\n\n"
            f"def f{i}(x):\n"
            f"    \"\"\"Module {i}, salt {rng.getrandbits(32)}.\"\"\"\n"
            f"    return x + {i}\n"
        )
        modules.append(dotted)
    files["README.md"] = f"# demo {rng.getrandbits(16)}\n"
    return files


# acceptance results, filled by tests/test_acceptance.py and echoed after the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, status = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
