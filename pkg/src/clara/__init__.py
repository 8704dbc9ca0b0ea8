"""Multi-turn intent pseudo-labeling and classification toolkit.

Pipeline in one line: retrieve single-turn demonstrations for a session,
prompt an LLM under three demonstration orderings, keep only sessions whose
resolved labels agree, and train a small hierarchical classifier on the
kept pseudo-labels plus the original single-turn data.  Label compression
turns verbose intent titles into short unique generation targets.
"""

from .corpus import LabeledExample, Session, TransitionModel
from .errors import ClaraError, EmptySession, ParseError
from .gestalt import gestalt_similarity
from .labeling import (
    ConsistencyVerdict,
    FilterStats,
    PseudoLabel,
    pseudo_label_corpus,
    pseudo_label_session,
    resolve_label,
)
from .taxonomy import Intent, Taxonomy, layer_classes, load_taxonomy, save_taxonomy, simplify

__version__ = "0.1.0"

__all__ = [
    "ClaraError",
    "ConsistencyVerdict",
    "EmptySession",
    "FilterStats",
    "Intent",
    "LabeledExample",
    "ParseError",
    "PseudoLabel",
    "Session",
    "Taxonomy",
    "TransitionModel",
    "__version__",
    "gestalt_similarity",
    "layer_classes",
    "load_taxonomy",
    "pseudo_label_corpus",
    "pseudo_label_session",
    "resolve_label",
    "save_taxonomy",
    "simplify",
]
