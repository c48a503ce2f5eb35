"""trtkit: translate-retrieve-translate knowledge fusion for multiple-choice reasoning."""

from .data import (
    CODAH,
    CSQA,
    EvalReport,
    Example,
    assemble_training_set,
    evaluate,
    load_dataset,
    predict_file,
    save_dataset,
)
from .encoder import (
    EQUATION,
    FULL,
    PROSE_STRICT,
    EncoderConfig,
    EncoderParams,
    FusedInput,
    Vocabulary,
    attention,
    build_input,
    build_visibility_mask,
    encode,
)
from .hardness import FrequencyScorer, MlmScorer, RandomScorer, WordScore, score_words, select_top_n
from .knowledge import (
    Bm25Index,
    DictionaryStore,
    KnowledgeSet,
    KnowledgeSnippet,
    TripletStore,
    bm25_build,
    bm25_search,
    generate_knowledge,
    lookup_definition,
    retrieve_triplets,
)
from .pipeline import TrtPipeline
from .text import Lemmatizer, PosLexicon, Token, content_words, tokenize
from .training import (
    FusedExample,
    Model,
    Prediction,
    ScoringHead,
    TrainConfig,
    cross_entropy,
    grad_check,
    init_model,
    load_model,
    predict,
    save_model,
    score_candidate,
    train,
)
from .translation import (
    LANGUAGES,
    HttpTranslator,
    MockTranslator,
    RetrievalConfig,
    RetrieverBundle,
    Translator,
    trt_retrieve,
)

__version__ = "0.1.0"
