"""Benchmark construction: MCQ and open-ended QA generation, multi-stage
verification, quality scoring, quota sampling, and decontamination."""

from .mcq import (  # noqa: F401
    McqItem,
    Stage1Record,
    generate_mcqs,
    parse_mcq_output,
    verify_mcq_stage1,
    score_quality,
    threshold_filter,
)
from .openqa import (  # noqa: F401
    EvaluationPlanItem,
    OpenQaItem,
    VerifierRecord,
    ConsensusRecord,
    plan_openqa,
    generate_openqa,
    parse_openqa_reply,
    verify_openqa,
    parse_verifier_reply,
)
from .sampling import InsufficientSupplyError, leaf_quotas, quota_sample  # noqa: F401
from .decontam import DecontamConfig, DecontamReport, decontaminate  # noqa: F401
