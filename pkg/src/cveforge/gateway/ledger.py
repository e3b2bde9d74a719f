"""Append-only usage ledger: tokens, dollars, and wall time per call."""

from __future__ import annotations

import threading
from dataclasses import dataclass


@dataclass(frozen=True)
class UsageEntry:
    role_name: str
    prompt_tokens: int
    completion_tokens: int
    cost_usd: float
    wall_time_s: float

    def to_record(self) -> dict:
        return {
            "role_name": self.role_name,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "cost_usd": self.cost_usd,
            "wall_time_s": self.wall_time_s,
        }


class UsageLedger:
    """Thread-safe, append-only record of gateway usage.

    One ledger exists per reproduction attempt; critics and the format
    corrector draw from the same ledger as developers.
    """

    def __init__(self):
        self._entries: list[UsageEntry] = []
        self._lock = threading.Lock()

    def record(self, entry: UsageEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    @property
    def entries(self) -> tuple[UsageEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    @property
    def total_cost_usd(self) -> float:
        with self._lock:
            return sum(e.cost_usd for e in self._entries)

    @property
    def total_wall_time_s(self) -> float:
        with self._lock:
            return sum(e.wall_time_s for e in self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def to_records(self) -> list[dict]:
        return [e.to_record() for e in self.entries]
