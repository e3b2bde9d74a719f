"""Structured-output descriptors for agents' final answers.

An OutputSchema states which fields a final answer must carry and their
JSON types; ``parse`` extracts a JSON object from raw model text (tolerant
of fenced code blocks and surrounding prose) and validates it. Invariants
that span fields are expressed as ``checks`` so the format corrector gets
told exactly what to fix.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable

_JSON_TYPES = {
    "str": str,
    "bool": bool,
    "int": int,
    "float": (int, float),
    "list": list,
    "dict": dict,
}

_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


class SchemaViolation(ValueError):
    """Raw output does not satisfy the schema."""


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str
    required: bool = True
    description: str = ""

    def __post_init__(self):
        if self.kind not in _JSON_TYPES:
            raise ValueError(f"unsupported field kind: {self.kind!r}")


def field_spec(name: str, kind: str, required: bool = True, description: str = "") -> FieldSpec:
    return FieldSpec(name=name, kind=kind, required=required, description=description)


@dataclass(frozen=True)
class OutputSchema:
    name: str
    fields: tuple[FieldSpec, ...]
    checks: tuple[Callable[[dict], str | None], ...] = field(default_factory=tuple)

    def parse(self, raw: str) -> dict:
        """Extract and validate a JSON object from raw model output."""
        value = _extract_json_object(raw)
        if value is None:
            raise SchemaViolation(f"{self.name}: no JSON object found in output")
        problems = []
        for spec in self.fields:
            if spec.name not in value:
                if spec.required:
                    problems.append(f"missing required field {spec.name!r}")
                continue
            expected = _JSON_TYPES[spec.kind]
            if not isinstance(value[spec.name], expected):
                problems.append(
                    f"field {spec.name!r} must be of JSON type {spec.kind}"
                )
        if not problems:
            for check in self.checks:
                message = check(value)
                if message:
                    problems.append(message)
        if problems:
            raise SchemaViolation(f"{self.name}: " + "; ".join(problems))
        return value

    def describe(self) -> str:
        """Instructions appended to prompts for this answer format."""
        lines = [
            "Your final answer must be a single JSON object with these fields:",
        ]
        for spec in self.fields:
            req = "required" if spec.required else "optional"
            desc = f" - {spec.description}" if spec.description else ""
            lines.append(f'  "{spec.name}" ({spec.kind}, {req}){desc}')
        lines.append("Reply with the JSON object only, no other commentary around it.")
        return "\n".join(lines)


def _extract_json_object(raw: str) -> dict | None:
    """Pull the first parseable JSON object out of model text."""
    raw = raw.strip()
    for candidate in _candidates(raw):
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    return None


def _candidates(raw: str):
    yield raw
    for match in _FENCE_RE.finditer(raw):
        yield match.group(1).strip()
    start = raw.find("{")
    end = raw.rfind("}")
    if start != -1 and end > start:
        yield raw[start : end + 1]
