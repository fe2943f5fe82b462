"""Import extraction and the file-level dependency graph.

Extraction is line based rather than a full parse: each logical line that
starts with ``import`` or ``from ... import`` yields references, wherever
it is indented. Lines inside triple-quoted strings are skipped. Edges
point from the importing file to the imported one.
"""
from __future__ import annotations

import heapq
import json
import logging
import re
from collections.abc import Iterable
from dataclasses import dataclass, field, replace

from featgraft.errors import NotInGraphError
from featgraft.project import Language, Project, SourceFile

log = logging.getLogger(__name__)

INTERNAL = "internal"
EXTERNAL = "external"
UNRESOLVED = "unresolved"

_DOTTED = r"[A-Za-z_]\w*(?:\s*\.\s*[A-Za-z_]\w*)*"
_IMPORT_RE = re.compile(rf"^import\s+(?P<mods>{_DOTTED}(?:\s+as\s+\w+)?(?:\s*,\s*{_DOTTED}(?:\s+as\s+\w+)?)*)\s*,?\s*$")
_FROM_RE = re.compile(rf"^from\s+(?P<mod>\.+\s*(?:{_DOTTED})?|{_DOTTED})\s+import\s*(?P<names>.*)$")
_NAME_RE = re.compile(r"^([A-Za-z_]\w*|\*)(?:\s+as\s+\w+)?$")
_TRIPLE_RE = re.compile(r"(?<![A-Za-z0-9_])[rRbBuUfF]{0,2}('''|\"\"\")")


@dataclass(frozen=True)
class ImportRef:
    raw_module: str
    origin: str
    names: tuple[str, ...] = ()
    line: int = 0
    resolution: str = UNRESOLVED
    target: str | None = None

    @property
    def is_internal(self) -> bool:
        return self.resolution == INTERNAL

    @property
    def level(self) -> int:
        return len(self.raw_module) - len(self.raw_module.lstrip("."))

    def key(self) -> tuple[str, str, tuple[str, ...]]:
        """Identity of the statement independent of where it sits in the file."""
        return (self.origin, self.raw_module, self.names)


def _strip_comment(line: str) -> str:
    # Only used on candidate import lines, which carry no string literals.
    return line.split("#", 1)[0].rstrip()


def _logical_lines(text: str) -> Iterable[tuple[int, str]]:
    """Yield ``(lineno, stripped_code)`` for lines outside triple-quoted strings.

    Parenthesised ``from x import (a,\\n b)`` continuations and backslash
    continuations are joined onto the first line.
    """
    lines = text.splitlines()
    in_triple: str | None = None
    i = 0
    while i < len(lines):
        raw = lines[i]
        lineno = i + 1
        i += 1
        if in_triple:
            if raw.count(in_triple) % 2 == 1:
                in_triple = None
            continue
        stripped = raw.strip()
        quotes = [m.group(1) for m in _TRIPLE_RE.finditer(stripped)]
        if quotes and len(quotes) % 2 == 1:
            # opens a block string that runs past this line
            in_triple = quotes[-1]
        if not (stripped.startswith("import") or stripped.startswith("from")):
            continue
        code = _strip_comment(stripped)
        while (code.endswith("\\") or code.count("(") > code.count(")")) and i < len(lines):
            code = code.rstrip("\\") + " " + _strip_comment(lines[i].strip())
            i += 1
        for part in code.split(";"):
            yield lineno, part.strip()


def extract_imports(file: SourceFile) -> list[ImportRef]:
    """Import references of ``file`` in source order, all unresolved."""
    if file.language is not Language.PYTHON:
        log.warning("no import grammar for %s (language %s)", file.path, file.language.value)
        return []
    refs: list[ImportRef] = []
    for lineno, code in _logical_lines(file.content):
        m = _IMPORT_RE.match(code)
        if m:
            for item in m.group("mods").split(","):
                item = item.strip()
                if not item:
                    continue
                mod = item.split(" as ")[0].strip() if " as " in item else item
                refs.append(ImportRef(re.sub(r"\s+", "", mod), file.path, (), lineno))
            continue
        m = _FROM_RE.match(code)
        if m:
            mod = re.sub(r"\s+", "", m.group("mod"))
            names_txt = m.group("names").strip().strip("()").strip()
            names = []
            for n in names_txt.split(","):
                n = n.strip()
                if not n:
                    continue
                nm = _NAME_RE.match(n)
                if nm is None:
                    names = None
                    break
                names.append(nm.group(1))
            if names is None or not names:
                log.warning("%s:%d: unparseable import statement skipped", file.path, lineno)
                continue
            refs.append(ImportRef(mod, file.path, tuple(names), lineno))
            continue
        if code.startswith(("import ", "from ")):
            log.warning("%s:%d: unparseable import statement skipped", file.path, lineno)
    return refs


def _module_candidates(parts: list[str], project: Project) -> str | None:
    base = "/".join(parts)
    as_file = base + ".py"
    as_pkg = base + "/__init__.py"
    has_file, has_pkg = as_file in project, as_pkg in project
    if has_file and has_pkg:
        log.warning("ambiguous module %s: both %s and %s exist; using the package",
                    ".".join(parts), as_file, as_pkg)
        return as_pkg
    if has_pkg:
        return as_pkg
    if has_file:
        return as_file
    return None


def resolve_import(ref: ImportRef, project: Project) -> ImportRef:
    """Resolve ``ref`` against ``project``.

    ``a.b.c`` maps to ``a/b/c.py`` or ``a/b/c/__init__.py``. For
    ``from a.b import name`` the submodule ``a/b/name`` is tried first and
    ``a/b`` is the fallback. Relative imports are resolved from the
    importer's directory and come back ``unresolved`` when nothing matches;
    absolute imports that match nothing are ``external``.
    """
    level = ref.level
    mod = ref.raw_module[level:]
    mod_parts = [p for p in mod.split(".") if p]

    if level:
        base = ref.origin.split("/")[:-1]
        up = level - 1
        if up > len(base):
            return replace(ref, resolution=UNRESOLVED, target=None)
        prefix = base[: len(base) - up] if up else base
    else:
        prefix = []

    parts = prefix + mod_parts
    candidates: list[list[str]] = []
    for name in ref.names:
        if name != "*":
            candidates.append(parts + [name])
    if parts:
        candidates.append(parts)

    for cand in candidates:
        target = _module_candidates(cand, project)
        if target is not None:
            if target == ref.origin and cand is not parts:
                continue
            return replace(ref, resolution=INTERNAL, target=target)

    if level:
        return replace(ref, resolution=UNRESOLVED, target=None)
    dirs = project.directories()
    top = mod_parts[0] if mod_parts else ""
    if top in dirs or "/".join(mod_parts) in dirs:
        log.warning("import %r in %s names a project directory but matches no module file",
                    ref.raw_module, ref.origin)
    return replace(ref, resolution=EXTERNAL, target=None)


def resolved_imports(project: Project) -> list[ImportRef]:
    """Every import of every python file, resolved."""
    out = []
    for f in project.values():
        if f.language is Language.PYTHON:
            out.extend(resolve_import(r, project) for r in extract_imports(f))
    return out


@dataclass(frozen=True)
class DependencyGraph:
    vertices: frozenset[str] = field(default_factory=frozenset)
    edges: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    def __post_init__(self):
        for a, b in self.edges:
            if a not in self.vertices or b not in self.vertices:
                raise ValueError(f"edge ({a!r}, {b!r}) leaves the vertex set")
            if a == b:
                raise ValueError(f"self-loop on {a!r}")

    def to_dict(self) -> dict:
        return {"vertices": sorted(self.vertices), "edges": [list(e) for e in sorted(self.edges)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> DependencyGraph:
        return cls(frozenset(doc["vertices"]), frozenset((a, b) for a, b in doc["edges"]))

    def successors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for a, b in self.edges:
            adj[a].add(b)
        return adj


def build_dependency_graph(project: Project) -> DependencyGraph:
    edges = set()
    for ref in resolved_imports(project):
        if not ref.is_internal:
            continue
        if ref.target == ref.origin:
            log.warning("%s imports itself (%s); no edge recorded", ref.origin, ref.raw_module)
            continue
        edges.add((ref.origin, ref.target))
    return DependencyGraph(frozenset(project), frozenset(edges))


def dependencies_of(g: DependencyGraph, v: str) -> set[str]:
    if v not in g.vertices:
        raise NotInGraphError(v)
    return {b for a, b in g.edges if a == v}


def dependents_of(g: DependencyGraph, v: str) -> set[str]:
    if v not in g.vertices:
        raise NotInGraphError(v)
    return {a for a, b in g.edges if b == v}


def strongly_connected_components(vertices: Iterable[str], adj: dict[str, set[str]]) -> list[frozenset[str]]:
    """Tarjan's algorithm, iterative so deep chains do not hit the recursion limit."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    out: list[frozenset[str]] = []
    counter = 0
    for root in sorted(vertices):
        if root in index:
            continue
        work = [(root, iter(sorted(adj.get(root, ()))))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(sorted(adj.get(w, ())))))
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[v])
                if low[v] == index[v]:
                    comp = set()
                    while True:
                        w = stack.pop()
                        on_stack.discard(w)
                        comp.add(w)
                        if w == v:
                            break
                    out.append(frozenset(comp))
    return out


def execution_order(g: DependencyGraph, targets: Iterable[str]) -> list[str]:
    """Order ``targets`` dependency-first.

    Precedence between two targets also holds when the path between them
    runs through non-target files. Mutually dependent targets form one unit
    whose members are listed lexicographically. Targets not yet in the
    graph (files to be created) come last.
    """
    targets = set(targets)
    existing = sorted(t for t in targets if t in g.vertices)
    new = sorted(t for t in targets if t not in g.vertices)
    adj = g.successors()

    # reach[t] = targets reachable from t through any path in g
    reach: dict[str, set[str]] = {}
    tset = set(existing)
    for t in existing:
        seen = {t}
        todo = [t]
        while todo:
            for w in adj[todo.pop()]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        reach[t] = (seen & tset) - {t}

    comps = strongly_connected_components(existing, reach)
    comp_of = {v: i for i, c in enumerate(comps) for v in c}
    # unit u must wait for every unit it depends on
    waits_on: dict[int, set[int]] = {i: set() for i in range(len(comps))}
    for a, bs in reach.items():
        for b in bs:
            if comp_of[a] != comp_of[b]:
                waits_on[comp_of[a]].add(comp_of[b])
    blocks: dict[int, set[int]] = {i: set() for i in range(len(comps))}
    for u, deps in waits_on.items():
        for d in deps:
            blocks[d].add(u)

    pending = {u: len(deps) for u, deps in waits_on.items()}
    ready = [(min(comps[u]), u) for u, n in pending.items() if n == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        _, u = heapq.heappop(ready)
        order.extend(sorted(comps[u]))
        for nxt in blocks[u]:
            pending[nxt] -= 1
            if pending[nxt] == 0:
                heapq.heappush(ready, (min(comps[nxt]), nxt))
    return order + new
