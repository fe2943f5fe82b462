import pytest

from featgraft.errors import ConfigError
from featgraft.project import (
    FileKind,
    Language,
    Project,
    SourceFile,
    copy_project,
    diff_projects,
    load_project,
    tree_fingerprint,
    write_project,
)

from conftest import make_project, write_tree


def test_load_demo_project(project_old):
    assert project_old.paths == ["app.py", "requirements.txt", "utils/helpers.py"]
    assert project_old["app.py"].language is Language.PYTHON
    assert project_old["requirements.txt"].kind is FileKind.MANIFEST
    assert project_old["utils/helpers.py"].kind is FileKind.SOURCE
    assert project_old.content("app.py").startswith("from utils.helpers import greet\n")


def test_load_empty_dir(tmp_path):
    assert len(load_project(tmp_path)) == 0


def test_load_zero_byte_file(tmp_path):
    (tmp_path / "x.py").write_bytes(b"")
    p = load_project(tmp_path)
    assert p.paths == ["x.py"]
    assert p.content("x.py") == ""


def test_load_missing_root_is_fatal(tmp_path):
    with pytest.raises(ConfigError):
        load_project(tmp_path / "nope")


def test_binary_and_undecodable_files_are_skipped(tmp_path):
    write_tree(tmp_path, {"a.py": "x = 1\n"})
    (tmp_path / "logo.png").write_bytes(b"\x89PNG\r\n\x1a\n\x00\x00")
    (tmp_path / "latin1.txt").write_bytes("caf\xe9".encode("latin-1"))
    p = load_project(tmp_path)
    assert p.paths == ["a.py"]
    assert set(p.report.skipped_binary) == {"logo.png", "latin1.txt"}
    assert p.report.skipped_count == 2


def test_default_ignores(tmp_path):
    write_tree(tmp_path, {
        "a.py": "",
        ".git/config": "x",
        ".env": "SECRET=1",
        "pkg/__pycache__/a.cpython-310.pyc": "x",
        "build/lib/a.py": "",
        "node_modules/x/index.js": "",
        "pkg/b.py": "",
    })
    assert load_project(tmp_path).paths == ["a.py", "pkg/b.py"]


def test_custom_ignore_rules_replace_defaults(tmp_path):
    write_tree(tmp_path, {"a.py": "", "docs/x.md": "", ".hidden": "h"})
    assert load_project(tmp_path, ["docs"]).paths == [".hidden", "a.py"]
    assert load_project(tmp_path, ["*.md", ".*"]).paths == ["a.py"]


def test_content_round_trips_byte_exactly(tmp_path):
    raw = "a = '\u00e9'\r\nb = 2\n\ufeffc\n\tx  \n".encode("utf-8")
    (tmp_path / "src").mkdir()
    (tmp_path / "src" / "m.py").write_bytes(raw)
    p = load_project(tmp_path)
    write_project(p, tmp_path / "out")
    assert (tmp_path / "out" / "src" / "m.py").read_bytes() == raw


def test_load_is_deterministic(tmp_path):
    write_tree(tmp_path, {"b.py": "1", "a/c.py": "2", "a/b.txt": "3"})
    assert load_project(tmp_path) == load_project(tmp_path)
    assert load_project(tmp_path).paths == ["a/b.txt", "a/c.py", "b.py"]


@pytest.mark.parametrize("bad", ["", "/abs.py", "a/../b.py", "./a.py", "a//b.py", "a\\b.py", "dir/"])
def test_malformed_paths_rejected(bad):
    with pytest.raises(ValueError):
        SourceFile(bad, "")


def test_duplicate_paths_rejected():
    with pytest.raises(ValueError):
        Project([SourceFile("a.py", "1"), SourceFile("a.py", "2")])


def test_copy_is_identity_under_diff(project_old):
    d = diff_projects(project_old, copy_project(project_old))
    assert d.is_identity
    assert d.unchanged == set(project_old)


def test_modifying_copy_leaves_original(project_old):
    before = project_old.content("app.py")
    changed = copy_project(project_old).with_file("app.py", "print('hi')\n")
    assert changed.content("app.py") == "print('hi')\n"
    assert project_old.content("app.py") == before


def test_copy_of_empty():
    assert len(copy_project(Project())) == 0


def test_project_is_read_only(project_old):
    with pytest.raises(TypeError):
        project_old._files["x.py"] = SourceFile("x.py", "")


def test_diff_demo_scenario(project_old, project_golden):
    d = diff_projects(project_old, project_golden)
    assert d.modified == {"app.py", "utils/helpers.py"}
    assert d.unchanged == {"requirements.txt"}
    assert not d.added and not d.removed


def test_diff_disjoint():
    d = diff_projects(make_project({"a.py": ""}), make_project({"b.py": ""}))
    assert d.removed == {"a.py"} and d.added == {"b.py"}
    assert not d.modified and not d.unchanged


def test_diff_sets_partition_union():
    before = make_project({"a": "1", "b": "2", "c": "3"})
    after = make_project({"b": "2", "c": "x", "d": "4"})
    d = diff_projects(before, after)
    parts = [d.added, d.modified, d.removed, d.unchanged]
    assert sum(len(s) for s in parts) == len(set().union(*parts))
    assert set().union(*parts) == set(before) | set(after)


def test_tree_fingerprint_sees_content_and_names(tmp_path):
    write_tree(tmp_path, {"a.py": "1"})
    f0 = tree_fingerprint(tmp_path)
    (tmp_path / "a.py").write_text("2")
    f1 = tree_fingerprint(tmp_path)
    (tmp_path / "a.py").rename(tmp_path / "b.py")
    assert len({f0, f1, tree_fingerprint(tmp_path)}) == 3
