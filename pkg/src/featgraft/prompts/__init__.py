"""Versioned prompt templates and the one response normalization we apply."""
from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from string import Template

VERSION = "v1"

_FENCE_OPEN = re.compile(r"^\s*```[\w+.-]*[ \t]*\r?\n")
_FENCE_CLOSE = re.compile(r"\r?\n[ \t]*```[ \t]*\s*$")


@lru_cache(maxsize=None)
def template(name: str, version: str = VERSION) -> Template:
    text = resources.files(__name__).joinpath(f"{name}.{version}.txt").read_text(encoding="utf-8")
    return Template(text)


def render(name: str, **fields: object) -> str:
    return template(name).substitute({k: str(v) for k, v in fields.items()})


def strip_code_fences(text: str) -> str:
    """Remove a fence pair wrapping the whole response, e.g. ```python ... ```.

    The inner text keeps its own line endings and gains one trailing newline.
    Anything not fully wrapped is returned untouched.
    """
    opened = _FENCE_OPEN.match(text)
    if not opened:
        return text
    body = text[opened.end():]
    closed = _FENCE_CLOSE.search(body)
    if closed:
        inner = body[: closed.start()]
        return inner + "\n"
    if body.strip() == "```":
        return ""
    return text
