"""Entity-focused correction of ASR transcripts from multiple hypotheses."""

from .evaluation import (
    AlignmentCounts,
    EvaluationReport,
    aggregate_report,
    align_words,
    entity_prf,
    entity_scoped_counts,
    rwerr,
    wer,
)
from .fusion import FusionResult, FusionStrategy, align_global, count_entity_hits, fuse, fuse_rover
from .guardrails import GuardrailConfig, Rejection, apply_edits, verify_edit
from .proposer import (
    EditProposal,
    LookupBackend,
    MockBackend,
    Proposer,
    ProposerRequest,
    RemoteBackend,
    build_prompt,
    parse_response,
)
from .retrieval import CandidateSet, RetrievalWeights, levenshtein, normalized_similarity, retrieve_top_k
from .text import EntityLexicon, SegmentRecord, normalize_text, tag_entity_tokens, tokenize

__version__ = "0.1.0"
