"""Pluggable machine translation and the translate-retrieve-translate step.

Two backends share one interface: an HTTP service client (responses cached
on disk) and an offline mock that maps tokens through a bilingual table,
passing unknown tokens through unchanged. ``trt_retrieve`` composes a
translation into English, retrieval from the configured English knowledge
sources, and translation of each snippet back into the query language.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import requests

from . import knowledge as ks
from .hardness import rank_by_hardness, score_words
from .knowledge import (
    DictionaryStore,
    KnowledgeSet,
    KnowledgeSnippet,
    TripletStore,
    bm25_search,
    generate_knowledge,
    lookup_definition,
    retrieve_triplets,
    with_span,
)
from .text import NOUN, PosLexicon, content_words, tokenize

EN = "en"

# the benchmark's 16 evaluation languages, reporting order
LANGUAGES = (
    "en", "de", "it", "es", "fr", "nl", "ru", "vi",
    "zh", "hi", "pl", "ar", "ja", "pt", "sw", "ur",
)

WIKTIONARY = "wiktionary"
CONCEPTNET = "conceptnet"
OMCS = "omcs"
GENERATIVE = "generative"
KNOWLEDGE_SOURCES = (WIKTIONARY, CONCEPTNET, OMCS, GENERATIVE)


class TranslationError(RuntimeError):
    """Translation service failure; carries the HTTP status when there is one."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class Translator:
    """Base translator; translate(x, l, l) is the identity for every backend."""

    backend = "NONE"
    aligns_tokens = False

    def __init__(self, languages=LANGUAGES):
        self.languages = tuple(languages)

    def check_lang(self, code: str) -> str:
        if code not in self.languages:
            raise ValueError(f"unknown language tag {code!r}")
        return code

    def translate(self, text: str, src: str, tgt: str) -> str:
        raise NotImplementedError


class MockTranslator(Translator):
    """Token-by-token translation through bilingual tables.

    Unknown tokens pass through unchanged and token order is preserved, so
    the source and target token sequences align position by position.
    """

    backend = "MOCK"
    aligns_tokens = True

    def __init__(self, tables: dict[tuple[str, str], dict[str, str]], languages=LANGUAGES):
        super().__init__(languages)
        self.tables = {pair: dict(tab) for pair, tab in tables.items()}

    @classmethod
    def from_dir(cls, directory, languages=LANGUAGES) -> "MockTranslator":
        """Load every ``<src>-<tgt>.tsv`` table file in ``directory``."""
        tables: dict[tuple[str, str], dict[str, str]] = {}
        for path in sorted(Path(directory).glob("*-*.tsv")):
            src, _, tgt = path.stem.partition("-")
            table: dict[str, str] = {}
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.rstrip("\n")
                    if not line or line.startswith("#"):
                        continue
                    parts = line.split("\t")
                    if len(parts) != 2:
                        raise ValueError(
                            f"{path}:{lineno}: expected 'src_word<TAB>tgt_word'"
                        )
                    table[parts[0].lower()] = parts[1].lower()
            tables[(src, tgt)] = table
        return cls(tables, languages)

    def translate(self, text: str, src: str, tgt: str) -> str:
        self.check_lang(src)
        self.check_lang(tgt)
        if src == tgt:
            return text
        table = self.tables.get((src, tgt))
        if table is None:
            raise ValueError(f"no mock table for {src}->{tgt}")
        return " ".join(table.get(t.surface, t.surface) for t in tokenize(text))


class HttpTranslator(Translator):
    """MT service client: POST {text, from, to} -> {translation}.

    Responses are cached under ``cache_dir/<src>-<tgt>/<sha256>.txt`` with an
    atomic write-then-rename, so repeated calls never hit the network twice
    and concurrent writers cannot corrupt an entry.
    """

    backend = "SERVICE"
    aligns_tokens = False

    def __init__(
        self,
        endpoint: str,
        api_key_env: str | None = None,
        timeout_ms: int = 10000,
        cache_dir=None,
        languages=LANGUAGES,
    ):
        super().__init__(languages)
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout_ms = timeout_ms
        self.cache_dir = Path(cache_dir) if cache_dir else None

    def _cache_path(self, text: str, src: str, tgt: str) -> Path | None:
        if self.cache_dir is None:
            return None
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{src}-{tgt}" / f"{digest}.txt"

    def translate(self, text: str, src: str, tgt: str) -> str:
        self.check_lang(src)
        self.check_lang(tgt)
        if src == tgt:
            return text
        cache_path = self._cache_path(text, src, tgt)
        if cache_path is not None and cache_path.exists():
            return cache_path.read_text(encoding="utf-8")

        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"text": text, "from": src, "to": tgt},
                headers=headers,
                timeout=self.timeout_ms / 1000.0,
            )
        except requests.Timeout as exc:
            raise TranslationError(f"translation service timed out: {exc}") from exc
        except requests.RequestException as exc:
            raise TranslationError(f"translation request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TranslationError(
                f"translation service returned HTTP {resp.status_code}",
                status=resp.status_code,
            )
        translation = resp.json()["translation"]

        if cache_path is not None:
            cache_path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=cache_path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(translation)
            os.replace(tmp, cache_path)
        return translation


# ---------------------------------------------------------------------------
# Retrieval over the English stores
# ---------------------------------------------------------------------------


@dataclass
class RetrieverBundle:
    """Everything the English-side retrievers need, built once and reused."""

    lexicon: PosLexicon
    dictionary: DictionaryStore | None = None
    triplets: TripletStore | None = None
    relation_surfaces: dict[str, str] = field(default_factory=dict)
    corpus: list[str] | None = None
    corpus_index: "ks.Bm25Index | None" = None
    generative_client: object | None = None
    prompt_examples: list[tuple[str, str]] = field(default_factory=list)
    word_scorer: object | None = None


@dataclass
class RetrievalConfig:
    """Which sources run and how many snippets they may contribute."""

    sources: tuple[str, ...] = (WIKTIONARY,)
    defs_n: int = 6
    bm25_top_k: int = 1
    capacity: int = 8

    def __post_init__(self):
        for source in self.sources:
            if source not in KNOWLEDGE_SOURCES:
                raise ValueError(f"unknown knowledge source {source!r}")


def _find_phrase_span(tokens, phrase: str) -> tuple[int, int] | None:
    want = [t.surface for t in tokenize(phrase)]
    if not want:
        return None
    surfaces = [t.surface for t in tokens]
    for start in range(len(surfaces) - len(want) + 1):
        if surfaces[start : start + len(want)] == want:
            return (start, start + len(want))
    return None


def retrieve_english(
    query: str,
    bundle: RetrieverBundle,
    config: RetrievalConfig,
    provided_words: tuple[str, ...] = (),
) -> list[KnowledgeSnippet]:
    """Run the configured retrievers on an English query-pair string.

    Snippet order is fixed: dictionary definitions (hardness rank), triples
    (pair enumeration order), corpus sentences (BM25 rank), then generated
    text.
    """
    tokens = tokenize(query)
    words = content_words(tokens, bundle.lexicon)
    lemmatizer = bundle.lexicon.lemmatizer
    snippets: list[KnowledgeSnippet] = []

    if WIKTIONARY in config.sources and bundle.dictionary is not None:
        if provided_words:
            for word in provided_words:
                snip = lookup_definition(bundle.dictionary, word.lower(), NOUN, lemmatizer)
                if snip is not None:
                    snippets.append(with_span(snip, _find_phrase_span(tokens, word)))
        elif bundle.word_scorer is not None:
            scores = score_words(tokens, [i for i, _, _ in words], bundle.word_scorer)
            pos_by_index = {i: (surface, pos) for i, surface, pos in words}
            for ws in rank_by_hardness(scores)[: config.defs_n]:
                surface, pos = pos_by_index[ws.token_index]
                snip = lookup_definition(bundle.dictionary, surface, pos, lemmatizer)
                if snip is not None:
                    snippets.append(with_span(snip, (ws.token_index, ws.token_index + 1)))

    if CONCEPTNET in config.sources and bundle.triplets is not None:
        lemmas: list[str] = []
        spans: dict[str, tuple[int, int]] = {}
        for index, surface, pos in words:
            lemma = lemmatizer.lemmatize(surface, pos)
            lemmas.append(lemma)
            spans.setdefault(lemma, (index, index + 1))
        # multi-word concepts: underscore-join token-adjacent content words
        for (i1, s1, p1), (i2, s2, p2) in zip(words, words[1:]):
            if i2 == i1 + 1:
                bigram = f"{lemmatizer.lemmatize(s1, p1)}_{lemmatizer.lemmatize(s2, p2)}"
                lemmas.append(bigram)
                spans.setdefault(bigram, (i1, i2 + 1))
        snippets.extend(
            retrieve_triplets(bundle.triplets, lemmas, bundle.relation_surfaces, spans)
        )

    if OMCS in config.sources and bundle.corpus_index is not None:
        hits = bm25_search(
            bundle.corpus_index, [t.surface for t in tokens], config.bm25_top_k
        )
        for doc_id, score in hits:
            snippets.append(
                KnowledgeSnippet(ks.CORPUS, bundle.corpus[doc_id], score=score)
            )

    if GENERATIVE in config.sources and bundle.generative_client is not None:
        snippets.append(
            generate_knowledge(bundle.generative_client, bundle.prompt_examples, query)
        )

    return snippets


def trt_retrieve(
    query: str,
    lang: str,
    translator: Translator,
    bundle: RetrieverBundle,
    config: RetrievalConfig,
    provided_words: tuple[str, ...] = (),
) -> KnowledgeSet:
    """Translate the query to English, retrieve, translate snippets back.

    With ``lang == "en"`` both translation steps are identities and the
    result equals direct English retrieval. Linked spans survive translation
    when the backend aligns tokens (the mock is 1:1 by construction);
    otherwise they are widened to the whole query.
    """
    translator.check_lang(lang)
    query_en = translator.translate(query, lang, EN)
    english = retrieve_english(query_en, bundle, config, provided_words)

    aligned = lang == EN or translator.aligns_tokens
    n_query_tokens = len(tokenize(query))
    out: list[KnowledgeSnippet] = []
    for snippet in english:
        text = translator.translate(snippet.text, EN, lang)
        if aligned:
            span = snippet.linked_span
        else:
            span = (0, n_query_tokens) if n_query_tokens else None
        out.append(KnowledgeSnippet(snippet.source, text, span, snippet.score))
    return KnowledgeSet(out[: config.capacity], config.capacity)
