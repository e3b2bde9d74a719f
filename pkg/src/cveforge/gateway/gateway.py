"""The gateway proper: budget-guarded completions and format correction."""

from __future__ import annotations

import time

from cveforge.errors import BudgetExceeded, FormatError, MissingRole, ProviderError
from cveforge.gateway.backends import ChatBackend
from cveforge.gateway.ledger import UsageEntry, UsageLedger
from cveforge.gateway.roles import ModelRole
from cveforge.gateway.schemas import OutputSchema, SchemaViolation
from cveforge.gateway.turns import ChatTurn, system_turn, user_turn

TRANSPORT_RETRIES = 3
FORMAT_CORRECTION_ATTEMPTS = 3

_CORRECTOR_PROMPT = (
    "You repair malformed agent output. You receive raw text and a target "
    "format; re-emit the same information as a single JSON object matching "
    "the format exactly. Do not add fields, do not invent values."
)


class Gateway:
    """Routes completions per role, enforces the cost cap, records usage.

    Shareable across concurrently running pipelines; every pipeline passes
    its own ledger, so caps and accounting stay per attempt.
    """

    def __init__(
        self,
        bindings: dict[str, ModelRole],
        backend: ChatBackend,
        ledger: UsageLedger,
        budget_cap_usd: float,
        *,
        retry_base_delay_s: float = 0.5,
        clock=time.monotonic,
    ):
        self._bindings = bindings
        self._backend = backend
        self.ledger = ledger
        self.budget_cap_usd = budget_cap_usd
        self._retry_base_delay_s = retry_base_delay_s
        self._clock = clock

    def role(self, role_name: str) -> ModelRole:
        try:
            return self._bindings[role_name]
        except KeyError:
            raise MissingRole(f"no binding for role {role_name!r}") from None

    def complete(
        self,
        role_name: str,
        history: list[ChatTurn],
        tool_schema: list[dict] | None = None,
    ) -> tuple[ChatTurn, UsageEntry]:
        """One provider call for ``role_name``; usage is recorded atomically.

        Raises BudgetExceeded before contacting the provider when the
        ledger total has reached the cap or the estimated call cost would
        push past it.
        """
        if not history:
            raise ValueError("history must be non-empty")
        role = self.role(role_name)
        self._check_budget(role, history)

        started = self._clock()
        last_error: ProviderError | None = None
        for attempt in range(1 + TRANSPORT_RETRIES):
            try:
                turn, usage = self._backend.complete(role, history, tool_schema)
                break
            except ProviderError as exc:
                last_error = exc
                if attempt < TRANSPORT_RETRIES:
                    time.sleep(self._retry_base_delay_s * (2**attempt))
        else:
            raise last_error  # type: ignore[misc]

        entry = UsageEntry(
            role_name=role_name,
            prompt_tokens=usage.prompt_tokens,
            completion_tokens=usage.completion_tokens,
            cost_usd=role.cost_usd(usage.prompt_tokens, usage.completion_tokens),
            wall_time_s=self._clock() - started,
        )
        self.ledger.record(entry)
        return turn, entry

    def enforce_format(self, role_name: str, raw: str, schema: OutputSchema) -> dict:
        """Parse ``raw`` against ``schema``, correcting up to three times.

        The corrector role is consulted only when the raw output fails to
        parse; the first corrected output that parses wins. After three
        failed corrections a FormatError is raised.
        """
        try:
            return schema.parse(raw)
        except SchemaViolation as violation:
            last_problem = str(violation)

        for _ in range(FORMAT_CORRECTION_ATTEMPTS):
            history = [
                system_turn(_CORRECTOR_PROMPT),
                user_turn(
                    "The following output failed to parse.\n"
                    f"Problem: {last_problem}\n\n"
                    f"Target format:\n{schema.describe()}\n\n"
                    f"Raw output:\n{raw}"
                ),
            ]
            turn, _ = self.complete("format_corrector", history)
            try:
                return schema.parse(turn.content)
            except SchemaViolation as violation:
                last_problem = str(violation)

        raise FormatError(
            f"{role_name}: output unparseable after "
            f"{FORMAT_CORRECTION_ATTEMPTS} correction attempts: {last_problem}"
        )

    def budget_reached(self) -> bool:
        return self.ledger.total_cost_usd >= self.budget_cap_usd

    def _check_budget(self, role: ModelRole, history: list[ChatTurn]) -> None:
        total = self.ledger.total_cost_usd
        if total >= self.budget_cap_usd:
            raise BudgetExceeded(
                f"ledger at {total:.6f} USD has reached the cap of "
                f"{self.budget_cap_usd:.2f} USD"
            )
        estimate = self._backend.estimate_usage(role, history)
        estimated_cost = role.cost_usd(estimate.prompt_tokens, estimate.completion_tokens)
        if total + estimated_cost > self.budget_cap_usd:
            raise BudgetExceeded(
                f"next call (~{estimated_cost:.6f} USD) would exceed the cap: "
                f"{total:.6f} + {estimated_cost:.6f} > {self.budget_cap_usd:.2f}"
            )
