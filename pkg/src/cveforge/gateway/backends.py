"""Chat-completion backends: a live OpenAI-compatible client and a
scripted backend that replays canned turns for deterministic runs."""

from __future__ import annotations

import json
import os
import time
import uuid
from collections import deque
from pathlib import Path
from typing import NamedTuple, Protocol

from cveforge.errors import ProviderError, ScriptExhausted
from cveforge.gateway.roles import ModelRole
from cveforge.gateway.turns import ChatTurn, ToolInvocationRequest


class TokenUsage(NamedTuple):
    prompt_tokens: int
    completion_tokens: int


def estimate_tokens(text: str) -> int:
    """Cheap token estimate used for budgeting and context trimming."""
    return max(1, len(text) // 4)


class ChatBackend(Protocol):
    def complete(
        self, role: ModelRole, history: list[ChatTurn], tool_schema: list[dict] | None
    ) -> tuple[ChatTurn, TokenUsage]: ...

    def estimate_usage(self, role: ModelRole, history: list[ChatTurn]) -> TokenUsage: ...


# --- Scripted (mock) backend -------------------------------------------------

_DEFAULT_USAGE = TokenUsage(prompt_tokens=200, completion_tokens=100)
_TXT_SEPARATOR = "==="


class ScriptedBackend:
    """Replays an ordered list of canned assistant turns per role.

    Turn specs are dicts with optional keys ``content`` (str),
    ``tool_calls`` (list of {tool_name, arguments}) and ``usage``
    ({prompt_tokens, completion_tokens}). Exhausting a role's script
    raises ScriptExhausted, which is a test failure, never a fallback.

    ``substitutions`` maps placeholder names to strings; ``{{NAME}}``
    occurrences in content are replaced at replay time (used to inject
    per-attempt secrets such as the flag token into canned scripts).
    """

    def __init__(
        self,
        scripts: dict[str, list[dict]],
        *,
        delay_s: float = 0.0,
        substitutions: dict[str, str] | None = None,
    ):
        self._queues: dict[str, deque[dict]] = {
            role: deque(turns) for role, turns in scripts.items()
        }
        self.delay_s = delay_s
        self.substitutions = dict(substitutions or {})
        self.call_count = 0
        self.calls_by_role: dict[str, int] = {}
        self._call_id_counter = 0

    @classmethod
    def from_dir(
        cls,
        path: str | Path,
        *,
        delay_s: float = 0.0,
        substitutions: dict[str, str] | None = None,
    ) -> "ScriptedBackend":
        """Load ``<role>.json`` / ``<role>.txt`` script files from a directory.

        A ``scripts/`` subdirectory is used when present so fixture roots
        can hold registry/repo/advisory data next to the scripts.
        """
        root = Path(path)
        if (root / "scripts").is_dir():
            root = root / "scripts"
        if not root.is_dir():
            raise FileNotFoundError(f"no script directory at {root}")
        scripts: dict[str, list[dict]] = {}
        for file in sorted(root.iterdir()):
            if file.suffix == ".json":
                turns = json.loads(file.read_text(encoding="utf-8"))
                if not isinstance(turns, list):
                    raise ValueError(f"{file}: script file must hold a list of turns")
                scripts[file.stem] = turns
            elif file.suffix == ".txt":
                scripts[file.stem] = _parse_txt_script(file.read_text(encoding="utf-8"))
        return cls(scripts, delay_s=delay_s, substitutions=substitutions)

    def complete(
        self, role: ModelRole, history: list[ChatTurn], tool_schema: list[dict] | None
    ) -> tuple[ChatTurn, TokenUsage]:
        if self.delay_s:
            time.sleep(self.delay_s)
        spec = self._pop(role.role_name)
        self.call_count += 1
        self.calls_by_role[role.role_name] = self.calls_by_role.get(role.role_name, 0) + 1
        return self._build_turn(spec), _usage_of(spec)

    def estimate_usage(self, role: ModelRole, history: list[ChatTurn]) -> TokenUsage:
        queue = self._queues.get(role.role_name)
        if not queue:
            raise ScriptExhausted(f"no scripted turns left for role {role.role_name!r}")
        return _usage_of(queue[0])

    def remaining(self, role_name: str) -> int:
        return len(self._queues.get(role_name, ()))

    def _pop(self, role_name: str) -> dict:
        queue = self._queues.get(role_name)
        if not queue:
            raise ScriptExhausted(f"no scripted turns left for role {role_name!r}")
        return queue.popleft()

    def _next_call_id(self) -> str:
        # Sequential ids keep replays byte-for-byte identical.
        self._call_id_counter += 1
        return f"call-{self._call_id_counter}"

    def _build_turn(self, spec: dict) -> ChatTurn:
        content = spec.get("content", "")
        for key, value in self.substitutions.items():
            content = content.replace("{{" + key + "}}", value)
        calls = tuple(
            ToolInvocationRequest(
                call_id=call.get("call_id", self._next_call_id()),
                tool_name=call["tool_name"],
                arguments=dict(call.get("arguments") or {}),
            )
            for call in spec.get("tool_calls", [])
        )
        return ChatTurn(author="assistant", content=content, tool_calls=calls)


def _usage_of(spec: dict) -> TokenUsage:
    usage = spec.get("usage")
    if not usage:
        return _DEFAULT_USAGE
    return TokenUsage(
        prompt_tokens=int(usage.get("prompt_tokens", 0)),
        completion_tokens=int(usage.get("completion_tokens", 0)),
    )


def _parse_txt_script(text: str) -> list[dict]:
    """Plain-text scripts: turns separated by lines containing only ``===``."""
    turns, current = [], []
    for line in text.splitlines():
        if line.strip() == _TXT_SEPARATOR:
            turns.append({"content": "\n".join(current).strip()})
            current = []
        else:
            current.append(line)
    tail = "\n".join(current).strip()
    if tail:
        turns.append({"content": tail})
    return turns


# --- Live OpenAI-compatible backend ------------------------------------------

KEY_ENV_TEMPLATE = "CVEFORGE_{provider}_KEY"


class OpenAiChatBackend:
    """Minimal client for OpenAI-compatible /chat/completions endpoints.

    API keys are read from ``CVEFORGE_<PROVIDER>_KEY`` environment
    variables; ``providers`` may override base URLs and key env names per
    provider. Final-message semantics only (no streaming).
    """

    def __init__(self, providers: dict | None = None, timeout_s: float = 120.0):
        self._providers = providers or {}
        self._timeout_s = timeout_s
        self._clients: dict[str, object] = {}

    def _client(self, provider: str):
        import httpx

        if provider not in self._clients:
            settings = self._providers.get(provider, {})
            base_url = settings.get("base_url", "https://api.openai.com/v1")
            key_env = settings.get(
                "key_env", KEY_ENV_TEMPLATE.format(provider=provider.upper())
            )
            api_key = os.environ.get(key_env, "")
            if not api_key:
                raise ProviderError(
                    f"no API key for provider {provider!r}; set {key_env}"
                )
            self._clients[provider] = httpx.Client(
                base_url=base_url,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self._timeout_s,
            )
        return self._clients[provider]

    def complete(
        self, role: ModelRole, history: list[ChatTurn], tool_schema: list[dict] | None
    ) -> tuple[ChatTurn, TokenUsage]:
        import httpx

        body: dict = {
            "model": role.model_id,
            "messages": [_to_wire(turn) for turn in history],
        }
        if tool_schema:
            body["tools"] = [
                {"type": "function", "function": schema} for schema in tool_schema
            ]
        try:
            response = self._client(role.provider).post("/chat/completions", json=body)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderError(f"{role.provider}: {exc}") from exc
        return _from_wire(response.json())

    def estimate_usage(self, role: ModelRole, history: list[ChatTurn]) -> TokenUsage:
        prompt = sum(estimate_tokens(turn.content) for turn in history)
        return TokenUsage(prompt_tokens=prompt, completion_tokens=0)


def _to_wire(turn: ChatTurn) -> dict:
    message: dict = {"role": turn.author, "content": turn.content}
    if turn.author == "tool":
        message["tool_call_id"] = turn.tool_result_for
    if turn.tool_calls:
        message["tool_calls"] = [
            {
                "id": call.call_id,
                "type": "function",
                "function": {
                    "name": call.tool_name,
                    "arguments": json.dumps(call.arguments),
                },
            }
            for call in turn.tool_calls
        ]
    return message


def _from_wire(payload: dict) -> tuple[ChatTurn, TokenUsage]:
    try:
        message = payload["choices"][0]["message"]
    except (KeyError, IndexError) as exc:
        raise ProviderError(f"malformed completion payload: {payload!r}") from exc
    calls = []
    for call in message.get("tool_calls") or []:
        try:
            arguments = json.loads(call["function"].get("arguments") or "{}")
        except json.JSONDecodeError:
            arguments = {"_raw": call["function"].get("arguments", "")}
        calls.append(
            ToolInvocationRequest(
                call_id=call.get("id", f"call-{uuid.uuid4().hex[:8]}"),
                tool_name=call["function"]["name"],
                arguments=arguments,
            )
        )
    usage = payload.get("usage") or {}
    return (
        ChatTurn(
            author="assistant",
            content=message.get("content") or "",
            tool_calls=tuple(calls),
        ),
        TokenUsage(
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        ),
    )
