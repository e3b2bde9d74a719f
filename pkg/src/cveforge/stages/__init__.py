"""Pipeline stages: knowledge distillation, environment build, exploit
development, and the flag-releasing verifier loop."""

from cveforge.stages.knowledge import KnowledgeBase, build_knowledge_base
from cveforge.stages.builder import (
    BuilderResult,
    PreReqPlan,
    SetupReport,
    plan_prerequisites,
    run_setup,
)
from cveforge.stages.exploiter import ExploitReport, develop_exploit
from cveforge.stages.verifier import (
    FlagCheckOutcome,
    VerifierScript,
    VerifierStageResult,
    check_flag,
    develop_verifier,
    run_verifier_stage,
    store_reproduced,
)

__all__ = [
    "BuilderResult",
    "ExploitReport",
    "FlagCheckOutcome",
    "KnowledgeBase",
    "PreReqPlan",
    "SetupReport",
    "VerifierScript",
    "VerifierStageResult",
    "build_knowledge_base",
    "check_flag",
    "develop_exploit",
    "develop_verifier",
    "plan_prerequisites",
    "run_setup",
    "run_verifier_stage",
    "store_reproduced",
]
