"""End-to-end glue: retrieval, fusion, and prediction for whole examples."""

from __future__ import annotations

from dataclasses import dataclass

from .data import CSQA, Example
from .encoder import build_input, build_visibility_mask
from .knowledge import KnowledgeSet
from .text import tokenize
from .training import FusedExample, Model, Prediction, predict
from .translation import (
    RetrievalConfig,
    RetrieverBundle,
    Translator,
    trt_retrieve,
)


@dataclass
class TrtPipeline:
    """A trained (or fresh) model plus everything needed to feed it."""

    model: Model
    translator: Translator
    retrievers: RetrieverBundle
    config: RetrievalConfig

    def retrieve(self, query: str, lang: str, provided_words=()) -> KnowledgeSet:
        return trt_retrieve(
            query, lang, self.translator, self.retrievers, self.config, provided_words
        )

    def fuse_candidate(self, example: Example, index: int):
        """Fused input and visibility mask for one candidate of an example."""
        question_tokens = tokenize(example.question)
        candidate_tokens = tokenize(example.candidates[index])
        if self.config.sources:
            provided = ()
            if example.task == CSQA and example.question_concept:
                provided = (example.question_concept, example.candidates[index])
            snippets = self.retrieve(
                f"{example.question} {example.candidates[index]}",
                example.lang,
                provided,
            )
        else:
            snippets = KnowledgeSet([], self.config.capacity)
        fused = build_input(
            question_tokens,
            candidate_tokens,
            snippets,
            self.model.vocab,
            self.model.config.max_len,
        )
        return fused, build_visibility_mask(fused, self.model.mask_mode)

    def prepare(self, example: Example) -> FusedExample:
        """Retrieval and fusion for every candidate, done once per example."""
        inputs = [self.fuse_candidate(example, i) for i in range(len(example.candidates))]
        return FusedExample.from_inputs(inputs, example.label)

    def predict_example(self, example: Example) -> Prediction:
        return predict(self.model, self.prepare(example))
