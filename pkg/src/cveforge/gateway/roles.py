"""Agent role -> model bindings with per-role pricing.

Each of the nine roles is bound to exactly one model. Defaults can be
overridden per role from configuration; pricing always comes from
configuration (defaults are zero so offline runs never invent costs).
"""

from __future__ import annotations

from dataclasses import dataclass

from cveforge.errors import MissingRole, UnknownProvider

ROLE_NAMES = (
    "knowledge_builder",
    "prereq_developer",
    "setup_developer",
    "setup_critic",
    "exploit_developer",
    "exploit_critic",
    "verifier_developer",
    "verifier_critic",
    "format_corrector",
)

# Built-in providers; configurations may register more under "providers".
KNOWN_PROVIDERS = ("openai", "mock")


@dataclass(frozen=True)
class ModelRole:
    """One role's binding: model id plus USD prices per 1k tokens."""

    role_name: str
    model_id: str
    prompt_price: float = 0.0
    completion_price: float = 0.0
    provider: str = "openai"

    def cost_usd(self, prompt_tokens: int, completion_tokens: int) -> float:
        return (
            prompt_tokens / 1000.0 * self.prompt_price
            + completion_tokens / 1000.0 * self.completion_price
        )


_DEFAULT_MODELS = {
    "knowledge_builder": "o4-mini",
    "prereq_developer": "o4-mini",
    "setup_developer": "o4-mini",
    "setup_critic": "o3",
    "exploit_developer": "o3",
    "exploit_critic": "o4-mini",
    "verifier_developer": "o3",
    "verifier_critic": "o3",
    "format_corrector": "gpt-4o-mini",
}

DEFAULT_BINDINGS = {
    name: ModelRole(role_name=name, model_id=model)
    for name, model in _DEFAULT_MODELS.items()
}


def load_role_bindings(
    overrides: dict | None = None,
    providers: dict | None = None,
) -> dict[str, ModelRole]:
    """Merge per-role overrides onto the default bindings.

    ``overrides`` maps role name to either a model id string or a mapping
    with keys ``model``, ``prompt_price``, ``completion_price``,
    ``provider``. An explicit ``None`` override removes the binding, which
    raises MissingRole: every role must end up bound.
    """
    overrides = overrides or {}
    known = set(KNOWN_PROVIDERS) | set(providers or {})

    for role_name in overrides:
        if role_name not in ROLE_NAMES:
            raise MissingRole(f"unknown role in configuration: {role_name!r}")

    bindings: dict[str, ModelRole] = {}
    for role_name in ROLE_NAMES:
        if role_name in overrides and overrides[role_name] is None:
            continue
        spec = overrides.get(role_name)
        if spec is None:
            bindings[role_name] = DEFAULT_BINDINGS[role_name]
            continue
        if isinstance(spec, str):
            spec = {"model": spec}
        if not isinstance(spec, dict) or "model" not in spec:
            raise MissingRole(f"binding for {role_name} needs a model id")
        provider = spec.get("provider", "openai")
        if provider not in known:
            raise UnknownProvider(f"{role_name}: provider {provider!r} is not configured")
        bindings[role_name] = ModelRole(
            role_name=role_name,
            model_id=spec["model"],
            prompt_price=float(spec.get("prompt_price", 0.0)),
            completion_price=float(spec.get("completion_price", 0.0)),
            provider=provider,
        )

    missing = [name for name in ROLE_NAMES if name not in bindings]
    if missing:
        raise MissingRole(f"roles without a model binding: {', '.join(missing)}")
    return bindings
