from .motion import FlowField, FlowParams, MotionIndexSet, farneback_flow, flow_magnitude, motion_keystates
from .semantic import (
    AnnotationError,
    Annotator,
    AnnotatorFormatError,
    QuerySet,
    ScriptedAnnotator,
    SemanticIndexSet,
    SubgoalList,
    TemporalConsistencyError,
    annotate_semantic,
    decompose_task,
    sample_observations,
    validate_monotone,
)

__all__ = [
    "AnnotationError",
    "Annotator",
    "AnnotatorFormatError",
    "FlowField",
    "FlowParams",
    "MotionIndexSet",
    "QuerySet",
    "ScriptedAnnotator",
    "SemanticIndexSet",
    "SubgoalList",
    "TemporalConsistencyError",
    "annotate_semantic",
    "decompose_task",
    "farneback_flow",
    "flow_magnitude",
    "motion_keystates",
    "sample_observations",
    "validate_monotone",
]
