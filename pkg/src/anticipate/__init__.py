"""Long-term action anticipation toolkit.

Verb-noun vocabularies and annotations, co-occurrence based semantic
correction, structured-output rewards, GRPO on a tabular toy policy, and the
edit-distance and mAP evaluation protocols.
"""

from .cooccurrence import (
    CooccurrenceMatrix,
    SemanticCorrector,
    build_cooccurrence,
    corrected_joint,
    map_decode,
    normalize_conditionals,
)
from .exceptions import InputError
from .grpo import GrpoConfig, GRPOTrainer, compute_advantages, grpo_objective, kl_estimate, train
from .metrics import average_precision, edit_distance, ego4d_eval, make_freq_rare_split, map_eval
from .policy import ToyPolicy
from .rewards import RewardConfig, RewardScorer, reference_embedder, total_reward
from .structured import PromptTemplate, parse_structured, render_prompt
from .vocab import (
    ActionPair,
    AnnotationRecord,
    SyntheticTaskConfig,
    Vocabulary,
    generate_synthetic_task,
    load_vocabulary,
    parse_annotations,
)

__version__ = "0.1.0"

__all__ = [
    "ActionPair",
    "AnnotationRecord",
    "CooccurrenceMatrix",
    "GRPOTrainer",
    "GrpoConfig",
    "InputError",
    "PromptTemplate",
    "RewardConfig",
    "RewardScorer",
    "SemanticCorrector",
    "SyntheticTaskConfig",
    "ToyPolicy",
    "Vocabulary",
    "average_precision",
    "build_cooccurrence",
    "compute_advantages",
    "corrected_joint",
    "edit_distance",
    "ego4d_eval",
    "generate_synthetic_task",
    "grpo_objective",
    "kl_estimate",
    "load_vocabulary",
    "make_freq_rare_split",
    "map_decode",
    "map_eval",
    "normalize_conditionals",
    "parse_annotations",
    "parse_structured",
    "reference_embedder",
    "render_prompt",
    "total_reward",
    "train",
]
