"""Embedding-level discovery and mitigation of systematic classifier error
slices, driven by sentence retrieval and LLM-generated hypotheses."""

__version__ = "0.1.0"

from .corpus import (
    EmbeddingMatrix,
    SampleRecord,
    SliceDataset,
    TextCorpus,
    load_corpus,
    load_dataset,
    load_embeddings,
    save_embeddings,
)
from .errors import LadderError
from .hypothesis import (
    Hypothesis,
    HypothesisSet,
    build_metadata_prompt,
    build_prompt,
    generate_hypotheses,
    parse_llm_response,
)
from .metrics import (
    GroundTruthSlices,
    PredictedSlices,
    auroc,
    clip_score,
    mean_accuracy,
    precision_at_k,
    worst_group_accuracy,
)
from .mitigator import (
    Calibration,
    LinearHead,
    MitigationBundle,
    balance_groups,
    ensemble_predict,
    ensemble_predict_batch,
    fit_calibration,
    mitigate,
    pseudo_label,
    train_head,
)
from .projection import AffineProjector, fit_projection, project
from .providers import LlmRequest, LookupEmbedder, MockLlmClient, RemoteEmbedder
from .retrieval import (
    DeltaVector,
    RetrievedSentence,
    class_error_rate,
    mean_difference,
    retrieve_topk,
)
from .slicer import (
    HypothesisEmbedding,
    SliceReport,
    detect_error_slices,
    extract_slice,
    hypothesis_embedding,
    score_hypothesis,
)
from .synthbench import SynthBundle, SynthConfig, generate, oracle_report, write_bundle
