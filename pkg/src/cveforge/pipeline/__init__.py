"""Pipeline driver: stage state machine, cap enforcement, batch rounds."""

from cveforge.pipeline.state import (
    FAILURE_BUCKETS,
    STAGES,
    CapGuard,
    PipelineState,
    ReproductionArtifact,
)
from cveforge.pipeline.orchestrator import build_services, reproduce
from cveforge.pipeline.batch import BatchReport, batch_run
from cveforge.pipeline.reporting import (
    batch_records,
    render_batch,
    render_state,
    state_record,
)

__all__ = [
    "BatchReport",
    "CapGuard",
    "FAILURE_BUCKETS",
    "PipelineState",
    "ReproductionArtifact",
    "STAGES",
    "batch_records",
    "batch_run",
    "build_services",
    "render_batch",
    "render_state",
    "reproduce",
    "state_record",
]
