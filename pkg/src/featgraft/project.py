"""In-memory project snapshots.

A :class:`Project` is an immutable, path-sorted collection of text files.
Transformations never touch the value they start from: they build a new
``Project`` with :meth:`Project.with_file` / :meth:`Project.without_file`.
"""
from __future__ import annotations

import enum
import fnmatch
import hashlib
import logging
import os
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

from featgraft.errors import ConfigError

log = logging.getLogger(__name__)

DEFAULT_IGNORE = (
    ".*",  # hidden files and VCS dirs (.git, .hg, .svn, .venv, ...)
    "__pycache__",
    "*.pyc",
    "*.egg-info",
    "build",
    "dist",
    "node_modules",
    "venv",
)

MANIFEST_NAMES = frozenset({
    "requirements.txt",
    "pyproject.toml",
    "setup.cfg",
    "Pipfile",
    "Pipfile.lock",
    "package.json",
    "Cargo.toml",
    "go.mod",
    "pom.xml",
    "build.gradle",
})


class FileKind(str, enum.Enum):
    SOURCE = "source"
    MANIFEST = "manifest"
    OTHER = "other"


class Language(str, enum.Enum):
    PYTHON = "python"
    UNKNOWN = "unknown"


def check_relpath(path: str) -> str:
    """Return ``path`` if it is a well-formed project-relative path, else raise ValueError."""
    if not path:
        raise ValueError("empty path")
    if "\\" in path or path.startswith("/") or path.endswith("/"):
        raise ValueError(f"malformed path {path!r}")
    for seg in path.split("/"):
        if seg in ("", ".", ".."):
            raise ValueError(f"malformed path {path!r}")
    return path


def classify(path: str) -> tuple[FileKind, Language]:
    name = path.rsplit("/", 1)[-1]
    language = Language.PYTHON if name.endswith(".py") else Language.UNKNOWN
    if name in MANIFEST_NAMES or fnmatch.fnmatchcase(name, "requirements*.txt"):
        return FileKind.MANIFEST, language
    if language is Language.PYTHON:
        return FileKind.SOURCE, language
    return FileKind.OTHER, language


@dataclass(frozen=True)
class SourceFile:
    path: str
    content: str
    kind: FileKind = None  # type: ignore[assignment]
    language: Language = None  # type: ignore[assignment]

    def __post_init__(self):
        check_relpath(self.path)
        kind, language = classify(self.path)
        if self.kind is None:
            object.__setattr__(self, "kind", kind)
        if self.language is None:
            object.__setattr__(self, "language", language)

    @property
    def data(self) -> bytes:
        return self.content.encode("utf-8")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


@dataclass(frozen=True)
class LoadReport:
    skipped_binary: tuple[str, ...] = ()
    skipped_unreadable: tuple[str, ...] = ()
    ignored: int = 0

    @property
    def skipped_count(self) -> int:
        return len(self.skipped_binary) + len(self.skipped_unreadable)


class Project(Mapping[str, SourceFile]):
    """Immutable mapping ``path -> SourceFile``, iterated in lexicographic path order."""

    __slots__ = ("root_label", "_files", "report")

    def __init__(self, files: Iterable[SourceFile] = (), root_label: str = "",
                 report: LoadReport | None = None):
        table: dict[str, SourceFile] = {}
        for f in files:
            if f.path in table:
                raise ValueError(f"duplicate path {f.path!r}")
            table[f.path] = f
        self._files = MappingProxyType(dict(sorted(table.items())))
        self.root_label = root_label
        self.report = report or LoadReport()

    def __getitem__(self, path: str) -> SourceFile:
        return self._files[path]

    def __iter__(self) -> Iterator[str]:
        return iter(self._files)

    def __len__(self) -> int:
        return len(self._files)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Project):
            return NotImplemented
        return dict(self._files) == dict(other._files)

    def __hash__(self) -> int:
        return hash(tuple(self._files.values()))

    def __repr__(self) -> str:
        return f"Project({self.root_label!r}, {len(self)} files)"

    @property
    def paths(self) -> list[str]:
        return list(self._files)

    def files(self) -> list[SourceFile]:
        return list(self._files.values())

    def content(self, path: str) -> str:
        return self._files[path].content

    def with_file(self, path: str, content: str) -> Project:
        """Copy of this project with ``path`` added or replaced."""
        rest = [f for p, f in self._files.items() if p != path]
        return Project([*rest, SourceFile(path, content)], self.root_label)

    def without_file(self, path: str) -> Project:
        if path not in self._files:
            raise KeyError(path)
        return Project([f for p, f in self._files.items() if p != path], self.root_label)

    def directories(self) -> set[str]:
        """Every directory prefix implied by the file paths."""
        dirs = set()
        for p in self._files:
            parts = p.split("/")[:-1]
            for i in range(1, len(parts) + 1):
                dirs.add("/".join(parts[:i]))
        return dirs


@dataclass(frozen=True)
class ProjectDiff:
    added: frozenset[str] = field(default_factory=frozenset)
    modified: frozenset[str] = field(default_factory=frozenset)
    removed: frozenset[str] = field(default_factory=frozenset)
    unchanged: frozenset[str] = field(default_factory=frozenset)

    @property
    def is_identity(self) -> bool:
        return not (self.added or self.modified or self.removed)

    def to_dict(self) -> dict:
        return {
            "added": sorted(self.added),
            "modified": sorted(self.modified),
            "removed": sorted(self.removed),
            "unchanged": sorted(self.unchanged),
        }


def _ignored(rel: str, rules: Iterable[str]) -> bool:
    name = rel.rsplit("/", 1)[-1]
    for rule in rules:
        if fnmatch.fnmatchcase(name, rule) or fnmatch.fnmatchcase(rel, rule):
            return True
    return False


def load_project(root: str | os.PathLike, ignore_rules: Iterable[str] | None = None) -> Project:
    """Read every non-ignored text file below ``root``.

    Files that are not valid UTF-8 (or contain NUL bytes) are skipped and
    listed in ``project.report``; so are files that cannot be read.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"input directory does not exist: {root}")
    rules = tuple(DEFAULT_IGNORE if ignore_rules is None else ignore_rules)

    files: list[SourceFile] = []
    binary: list[str] = []
    unreadable: list[str] = []
    ignored = 0
    for dirpath, dirnames, filenames in os.walk(root, onerror=lambda e: log.warning("walk: %s", e)):
        reldir = Path(dirpath).relative_to(root).as_posix()
        reldir = "" if reldir == "." else reldir + "/"
        keep = []
        for d in sorted(dirnames):
            if _ignored(reldir + d, rules):
                ignored += 1
            else:
                keep.append(d)
        dirnames[:] = keep
        for name in sorted(filenames):
            rel = reldir + name
            if _ignored(rel, rules):
                ignored += 1
                continue
            full = Path(dirpath, name)
            if not full.is_file():
                continue
            try:
                raw = full.read_bytes()
            except OSError as exc:
                log.warning("skipping unreadable file %s: %s", rel, exc)
                unreadable.append(rel)
                continue
            try:
                if b"\x00" in raw:
                    raise UnicodeDecodeError("utf-8", raw, 0, 1, "NUL byte")
                text = raw.decode("utf-8")
            except UnicodeDecodeError:
                binary.append(rel)
                continue
            files.append(SourceFile(rel, text))

    report = LoadReport(tuple(binary), tuple(unreadable), ignored)
    if report.skipped_count:
        log.info("skipped %d non-text or unreadable files", report.skipped_count)
    return Project(files, root_label=root.resolve().name, report=report)


def copy_project(p: Project) -> Project:
    return Project(p.files(), root_label=p.root_label, report=p.report)


def diff_projects(before: Project, after: Project) -> ProjectDiff:
    old, new = set(before), set(after)
    common = old & new
    modified = {p for p in common if before[p].data != after[p].data}
    return ProjectDiff(
        added=frozenset(new - old),
        modified=frozenset(modified),
        removed=frozenset(old - new),
        unchanged=frozenset(common - modified),
    )


def write_project(p: Project, dest: str | os.PathLike) -> None:
    """Write every file of ``p`` below ``dest``, creating directories as needed."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    for f in p.values():
        target = dest.joinpath(*f.path.split("/"))
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(f.data)


def tree_fingerprint(root: str | os.PathLike) -> str:
    """Hash of every path and byte under ``root`` (nothing ignored)."""
    root = Path(root)
    h = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            full = Path(dirpath, name)
            h.update(full.relative_to(root).as_posix().encode() + b"\0")
            h.update(full.read_bytes() + b"\0")
    return h.hexdigest()
