"""Chat message types exchanged with providers and persisted in transcripts."""

from __future__ import annotations

from dataclasses import dataclass, field

AUTHORS = ("system", "user", "assistant", "tool")


@dataclass(frozen=True)
class ToolInvocationRequest:
    """A model's request to invoke one registered tool."""

    call_id: str
    tool_name: str
    arguments: dict

    def to_record(self) -> dict:
        return {
            "call_id": self.call_id,
            "tool_name": self.tool_name,
            "arguments": self.arguments,
        }

    @classmethod
    def from_record(cls, record: dict) -> "ToolInvocationRequest":
        return cls(
            call_id=record["call_id"],
            tool_name=record["tool_name"],
            arguments=dict(record.get("arguments") or {}),
        )


@dataclass(frozen=True)
class ChatTurn:
    """One message in a conversation.

    Only assistant turns may carry tool calls; tool turns must name the
    call they answer via ``tool_result_for``.
    """

    author: str
    content: str
    tool_calls: tuple[ToolInvocationRequest, ...] = field(default_factory=tuple)
    tool_result_for: str | None = None

    def __post_init__(self):
        if self.author not in AUTHORS:
            raise ValueError(f"unknown turn author: {self.author!r}")
        if self.tool_calls and self.author != "assistant":
            raise ValueError("only assistant turns may carry tool calls")
        if self.author == "tool" and not self.tool_result_for:
            raise ValueError("tool turns must reference the call they answer")
        if self.tool_result_for and self.author != "tool":
            raise ValueError("tool_result_for is reserved for tool turns")

    def to_record(self) -> dict:
        record: dict = {"author": self.author, "content": self.content}
        if self.tool_calls:
            record["tool_calls"] = [c.to_record() for c in self.tool_calls]
        if self.tool_result_for is not None:
            record["tool_result_for"] = self.tool_result_for
        return record

    @classmethod
    def from_record(cls, record: dict) -> "ChatTurn":
        return cls(
            author=record["author"],
            content=record.get("content", ""),
            tool_calls=tuple(
                ToolInvocationRequest.from_record(c)
                for c in record.get("tool_calls", [])
            ),
            tool_result_for=record.get("tool_result_for"),
        )


def system_turn(content: str) -> ChatTurn:
    return ChatTurn(author="system", content=content)


def user_turn(content: str) -> ChatTurn:
    return ChatTurn(author="user", content=content)


def tool_result_turn(call_id: str, content: str) -> ChatTurn:
    return ChatTurn(author="tool", content=content, tool_result_for=call_id)
