"""Static checks on a transformed project.

``syntax_gate`` is deliberately not a Python parser. It checks the
structure a generated file most often gets wrong: balanced brackets and
quotes, indentation blocks, and the shape of ``def``/``class``/``import``/
``return`` lines. Swap in a full parser through ``validate(..., gate=...)``
when stronger guarantees are needed.
"""
from __future__ import annotations

import json
import re
from collections.abc import Callable
from dataclasses import dataclass, field

from featgraft.parser import (
    _FROM_RE,
    _IMPORT_RE,
    EXTERNAL,
    INTERNAL,
    UNRESOLVED,
    extract_imports,
    resolve_import,
)
from featgraft.project import Language, Project, SourceFile

UNRESOLVED_INTERNAL_IMPORT = "unresolved_internal_import"
DANGLING_DEPENDENT = "dangling_dependent"
SYNTAX_ERROR = "syntax_error"
DUPLICATE_PATH = "duplicate_path"

_BRACKETS = {")": "(", "]": "[", "}": "{"}
_PREFIX_RE = re.compile(r"[rRbBuUfF]{1,2}$")
_COMPOUND = ("if", "elif", "else", "for", "while", "try", "except", "finally",
             "with", "def", "class", "async")
_DEF_RE = re.compile(r"^(async\s+)?def\s+[A-Za-z_]\w*\s*\(.*\)\s*(->\s*\S.*)?:")
_CLASS_RE = re.compile(r"^class\s+[A-Za-z_]\w*\s*(\(.*\))?\s*:")
_RETURN_RE = re.compile(r"^return(\s|$|\()")


@dataclass(frozen=True)
class SyntaxVerdict:
    ok: bool
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


PASS = SyntaxVerdict(True)


@dataclass(frozen=True)
class _Line:
    lineno: int
    indent: int
    code: str  # string literals blanked, comments removed


def _scan(text: str) -> tuple[list[_Line], str | None]:
    """Split ``text`` into logical lines; returns an error message on bad brackets/quotes."""
    lines: list[_Line] = []
    stack: list[tuple[str, int]] = []
    buf: list[str] = []
    start_line, indent = 1, 0
    at_line_start = True
    lineno = 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if at_line_start:
            # measure indentation of a fresh logical line
            col = 0
            while i < n and text[i] in " \t\f":
                col = (col // 8 + 1) * 8 if text[i] == "\t" else col + 1
                i += 1
            start_line, indent = lineno, col
            at_line_start = False
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in "'\"":
            quote = text[i:i + 3] if text[i:i + 3] in ("'''", '"""') else c
            j = i + len(quote)
            begin = lineno
            while True:
                if j >= n:
                    return lines, f"line {begin}: unterminated string literal"
                ch = text[j]
                if ch == "\\":
                    if j + 1 < n and text[j + 1] == "\n":
                        lineno += 1
                    j += 2
                    continue
                if ch == "\n":
                    if len(quote) == 1:
                        return lines, f"line {begin}: unterminated string literal"
                    lineno += 1
                if text.startswith(quote, j):
                    j += len(quote)
                    break
                j += 1
            buf.append('""')
            i = j
            continue
        if c == "\\" and text[i + 1:i + 2] == "\n":
            lineno += 1
            i += 2
            continue
        if c in "([{":
            stack.append((c, lineno))
        elif c in ")]}":
            if not stack or stack[-1][0] != _BRACKETS[c]:
                return lines, f"line {lineno}: unmatched {c!r}"
            stack.pop()
        if c == "\n":
            lineno += 1
            if stack:
                buf.append(" ")
                i += 1
                continue
            code = "".join(buf).strip()
            if code:
                lines.append(_Line(start_line, indent, code))
            buf = []
            at_line_start = True
            i += 1
            continue
        buf.append(c)
        i += 1
    if stack:
        ch, ln = stack[-1]
        return lines, f"line {ln}: {ch!r} was never closed"
    code = "".join(buf).strip()
    if code:
        lines.append(_Line(start_line, indent, code))
    return lines, None


def _top_level_colon(code: str) -> int:
    depth = 0
    for k, ch in enumerate(code):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == ":" and depth == 0 and not code.startswith(":=", k):
            return k
    return -1


def _keyword(code: str) -> str:
    m = re.match(r"[A-Za-z_]\w*", code)
    return m.group(0) if m else ""


def _check_statement(line: _Line) -> str | None:
    code, kw = line.code, _keyword(line.code)
    where = f"line {line.lineno}"
    if kw in _COMPOUND and (len(code) == len(kw) or not (code[len(kw)].isalnum() or code[len(kw)] == "_")):
        if kw == "async" and not re.match(r"async\s+(def|for|with)\b", code):
            return None
        if _top_level_colon(code) < 0:
            return f"{where}: expected ':' after {kw} statement"
        if kw == "def" or (kw == "async" and code.split()[1] == "def"):
            if not _DEF_RE.match(code):
                return f"{where}: malformed function header"
        if kw == "class" and not _CLASS_RE.match(code):
            return f"{where}: malformed class header"
    elif kw == "import" and code[len(kw):len(kw) + 1] in (" ", "\t"):
        if not _IMPORT_RE.match(code):
            return f"{where}: malformed import statement"
    elif kw == "from" and re.match(r"from\s", code) and " import" in code:
        m = _FROM_RE.match(code)
        names = m.group("names").strip() if m else ""
        if not m or not names or not re.fullmatch(
                r"\(?\s*(\*|[A-Za-z_]\w*(\s+as\s+\w+)?(\s*,\s*[A-Za-z_]\w*(\s+as\s+\w+)?)*\s*,?)\s*\)?", names):
            return f"{where}: malformed import statement"
    return None


def _opens_block(code: str) -> bool:
    kw = _keyword(code)
    if kw not in _COMPOUND and kw not in ("match", "case"):
        return False
    colon = _top_level_colon(code)
    return colon >= 0 and code[colon + 1:].strip() == ""


def syntax_gate(file: SourceFile) -> SyntaxVerdict:
    """Structural well-formedness of a python file; other languages always pass."""
    if file.language is not Language.PYTHON:
        return PASS
    lines, err = _scan(file.content)
    if err:
        return SyntaxVerdict(False, err)

    # (indent, opening keyword) of every enclosing block
    blocks: list[tuple[int, str]] = [(0, "")]
    expect_body = False
    pending_kw = ""
    for line in lines:
        top = blocks[-1][0]
        if expect_body:
            if line.indent <= top:
                return SyntaxVerdict(False, f"line {line.lineno}: expected an indented block")
            blocks.append((line.indent, pending_kw))
        elif line.indent > top:
            return SyntaxVerdict(False, f"line {line.lineno}: unexpected indent")
        elif line.indent < top:
            while blocks and blocks[-1][0] > line.indent:
                blocks.pop()
            if not blocks or blocks[-1][0] != line.indent:
                return SyntaxVerdict(False, f"line {line.lineno}: unindent does not match any outer level")
        problem = _check_statement(line)
        if problem:
            return SyntaxVerdict(False, problem)
        if _RETURN_RE.match(line.code) and not any(kw == "def" for _, kw in blocks):
            return SyntaxVerdict(False, f"line {line.lineno}: 'return' outside function")
        expect_body = _opens_block(line.code)
        if expect_body:
            kw = _keyword(line.code)
            pending_kw = "def" if kw == "def" or line.code.startswith("async def") else kw
    if expect_body:
        return SyntaxVerdict(False, f"line {lines[-1].lineno}: expected an indented block")
    return PASS


@dataclass(frozen=True)
class Violation:
    kind: str
    path: str
    detail: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "path": self.path, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def verdict(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.verdict

    def of_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "violations": [v.to_dict() for v in self.violations]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def validate(p_prime: Project, p_before: Project,
             gate: Callable[[SourceFile], SyntaxVerdict] = syntax_gate) -> ValidationReport:
    """Check that ``p_prime`` keeps the import structure of ``p_before`` intact.

    Checks, in report order: imports that resolved inside the old project
    still do; relative imports resolve at all; imports of removed files
    have not silently rebound to another file; python files pass ``gate``;
    no two paths collide case-insensitively.
    """
    lost, unresolved, dangling, syntax, dupes = [], [], [], [], []
    for f in p_prime.values():
        if f.language is not Language.PYTHON:
            continue
        for ref in extract_imports(f):
            now = resolve_import(ref, p_prime)
            then = resolve_import(ref, p_before)
            if now.resolution == UNRESOLVED:
                unresolved.append(Violation(
                    UNRESOLVED_INTERNAL_IMPORT, f.path,
                    f"line {ref.line}: relative import {ref.raw_module!r} matches no project file"))
            elif now.resolution == EXTERNAL and then.resolution == INTERNAL:
                lost.append(Violation(
                    UNRESOLVED_INTERNAL_IMPORT, f.path,
                    f"line {ref.line}: {ref.raw_module!r} resolved to {then.target} before the "
                    f"change and no longer resolves inside the project"))
            elif (now.resolution == INTERNAL and then.resolution == INTERNAL
                  and then.target not in p_prime and now.target != then.target):
                dangling.append(Violation(
                    DANGLING_DEPENDENT, then.target,
                    f"removed, but {f.path} line {ref.line} still imports it "
                    f"(now resolves to {now.target})"))
        verdict = gate(f)
        if not verdict.ok:
            syntax.append(Violation(SYNTAX_ERROR, f.path, verdict.detail))

    seen: dict[str, str] = {}
    for p in p_prime:
        folded = p.casefold()
        if folded in seen:
            dupes.append(Violation(DUPLICATE_PATH, p, f"collides with {seen[folded]} on case-insensitive filesystems"))
        else:
            seen[folded] = p

    return ValidationReport(tuple(lost + unresolved + dangling + syntax + dupes))
