"""Pick the content words whose definitions are worth retrieving.

A scorer assigns each candidate word the model probability of the original
token when it alone is masked; the lowest-probability ("hardest") words win.
Three scorers are provided: a unigram-frequency proxy, the real
masked-token probability from the fused encoder, and a seeded random
baseline for the no-sorting ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import (
    CLS_ID,
    MASK_ID,
    EncoderConfig,
    EncoderParams,
    SEP_ID,
    Vocabulary,
    encode_batch,
    softmax_rows,
)
from .text import Token


@dataclass(frozen=True)
class WordScore:
    token_index: int
    probability: float

    def __post_init__(self):
        if not np.isfinite(self.probability) or not 0.0 <= self.probability <= 1.0:
            raise ValueError(f"probability out of range: {self.probability}")


class FrequencyScorer:
    """Unigram relative frequency as a probability proxy.

    Words absent from the table get the smoothed value 1 / (total + V);
    ``vocab_size`` defaults to the table size.
    """

    def __init__(self, counts: dict[str, int], vocab_size: int | None = None):
        self.counts = dict(counts)
        self.total = sum(self.counts.values())
        self.vocab_size = len(self.counts) if vocab_size is None else vocab_size

    @classmethod
    def load(cls, path, vocab_size: int | None = None) -> "FrequencyScorer":
        """Read a ``word<TAB>count`` unigram table."""
        counts: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'")
                counts[parts[0].lower()] = int(parts[1])
        return cls(counts, vocab_size)

    def probability(self, tokens: list[Token], index: int) -> float:
        count = self.counts.get(tokens[index].surface)
        if count is None:
            return 1.0 / (self.total + self.vocab_size)
        return count / self.total


class MlmScorer:
    """Masked-token probability from the encoder's vocabulary projection.

    The token sequence is wrapped as ``[CLS] ... [SEP]`` with an all-visible
    mask, the scored position is replaced by [MASK], and the softmax over the
    vocabulary projection at that position is read at the original token's id.
    """

    def __init__(self, params: EncoderParams, config: EncoderConfig, vocab: Vocabulary):
        if params is None:
            raise ValueError("MLM scoring needs an initialized encoder")
        self.params = params
        self.config = config
        self.vocab = vocab

    def probability(self, tokens: list[Token], index: int) -> float:
        ids = [CLS_ID] + self.vocab.encode([t.surface for t in tokens]) + [SEP_ID]
        original_id = ids[1 + index]
        ids[1 + index] = MASK_ID
        ids_arr = np.asarray([ids], dtype=np.int64)
        mask = np.zeros((1, len(ids), len(ids)), dtype=np.float64)
        hidden = encode_batch(ids_arr, mask, self.params, self.config)
        logits = hidden[0, 1 + index] @ self.params.vocab_proj
        probs = softmax_rows(logits[None, :])[0]
        return float(probs[original_id])


class RandomScorer:
    """Seeded random baseline (the "without sorting" ablation).

    Stateless: the probability depends only on (seed, index, surface), so
    repeated scoring of the same sequence is reproducible.
    """

    def __init__(self, seed: int):
        self.seed = seed

    def probability(self, tokens: list[Token], index: int) -> float:
        key = [self.seed, index] + list(tokens[index].surface.encode("utf-8"))
        return float(np.random.default_rng(key).uniform())


def score_words(tokens: list[Token], candidate_indices, scorer) -> list[WordScore]:
    """Score each candidate position with ``scorer``; order follows the input."""
    return [WordScore(i, scorer.probability(tokens, i)) for i in candidate_indices]


def rank_by_hardness(scores: list[WordScore]) -> list[WordScore]:
    """Hardest first: ascending probability, ties to the smaller token index."""
    return sorted(scores, key=lambda ws: (ws.probability, ws.token_index))


def select_top_n(scores: list[WordScore], n: int) -> list[int]:
    """Indices of the ``n`` lowest-probability words, sorted ascending."""
    if n < 0:
        raise ValueError("n must be non-negative")
    picked = rank_by_hardness(scores)[:n]
    return sorted(ws.token_index for ws in picked)
