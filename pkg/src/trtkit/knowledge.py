"""Four English knowledge retrievers behind one snippet abstraction.

Dictionary definitions, knowledge-graph triples, a BM25-ranked sentence
corpus, and a generative completion client all produce
:class:`KnowledgeSnippet` values so the fusion layer never cares where a
piece of text came from.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace

import requests

from .text import Lemmatizer, PosLexicon, content_words, tokenize

DICTIONARY = "DICTIONARY"
TRIPLET = "TRIPLET"
CORPUS = "CORPUS"
GENERATIVE = "GENERATIVE"

SOURCES = (DICTIONARY, TRIPLET, CORPUS, GENERATIVE)

NO_KNOWLEDGE = "no knowledge"


class GenerationError(RuntimeError):
    """Generative service failure; carries the HTTP status when there is one."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class KnowledgeSnippet:
    """One retrieved text unit.

    ``linked_span`` is a half-open ``(start, end)`` token range into the
    query-pair token sequence that this snippet was retrieved for, when the
    retriever knows it.
    """

    source: str
    text: str
    linked_span: tuple[int, int] | None = None
    score: float | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown snippet source {self.source!r}")
        if not self.text:
            raise ValueError("snippet text must be non-empty")


@dataclass
class KnowledgeSet:
    """Ordered snippets with a hard capacity."""

    snippets: list[KnowledgeSnippet] = field(default_factory=list)
    capacity: int = 8

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if len(self.snippets) > self.capacity:
            raise ValueError("more snippets than capacity")

    def __len__(self) -> int:
        return len(self.snippets)

    def __iter__(self):
        return iter(self.snippets)


class DictionaryStore:
    """word -> ordered definition senses; the first sense is the retrieval target."""

    def __init__(self, senses: dict[str, list[str]]):
        for word, defs in senses.items():
            if not defs:
                raise ValueError(f"empty definition list for {word!r}")
        self.senses = {w.lower(): list(d) for w, d in senses.items()}

    @classmethod
    def load(cls, path) -> "DictionaryStore":
        """Read ``word<TAB>definition`` lines; repeats keep sense priority order."""
        senses: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[1]:
                    raise ValueError(
                        f"{path}:{lineno}: expected 'word<TAB>definition', got {line!r}"
                    )
                senses.setdefault(parts[0].lower(), []).append(parts[1])
        return cls(senses)

    def first_definition(self, word: str) -> str | None:
        defs = self.senses.get(word)
        return defs[0] if defs else None


def lookup_definition(
    store: DictionaryStore,
    word: str,
    pos: str,
    lemmatizer: Lemmatizer,
) -> KnowledgeSnippet | None:
    """First definition of ``word``, falling back to its lemma; None if absent."""
    for key in (word, lemmatizer.lemmatize(word, pos)):
        definition = store.first_definition(key)
        if definition is not None:
            return KnowledgeSnippet(DICTIONARY, f"{key} : {definition}")
    return None


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class TripletStore:
    """(head, relation, tail) triples indexed by unordered endpoint pair."""

    def __init__(self, triples):
        self.triples: list[tuple[str, str, str]] = []
        self.by_pair: dict[tuple[str, str], list[tuple[str, str, str]]] = {}
        for h, r, t in triples:
            triple = (h.lower(), r, t.lower())
            self.triples.append(triple)
            self.by_pair.setdefault(_pair_key(triple[0], triple[2]), []).append(triple)

    @classmethod
    def load(cls, path) -> "TripletStore":
        """Read ``head<TAB>relation<TAB>tail`` lines."""
        triples = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(
                        f"{path}:{lineno}: expected 'head<TAB>relation<TAB>tail', got {line!r}"
                    )
                triples.append(tuple(parts))
        return cls(triples)

    def lookup_pair(self, a: str, b: str) -> list[tuple[str, str, str]]:
        return self.by_pair.get(_pair_key(a, b), [])


def load_relation_surfaces(path) -> dict[str, str]:
    """Read a ``relation<TAB>surface`` verbalization map."""
    surfaces: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 'relation<TAB>surface', got {line!r}"
                )
            surfaces[parts[0]] = parts[1]
    return surfaces


def retrieve_triplets(
    store: TripletStore,
    words: list[str],
    relation_surfaces: dict[str, str] | None = None,
    spans: dict[str, tuple[int, int]] | None = None,
) -> list[KnowledgeSnippet]:
    """Enumerate unordered word pairs (i < j) and verbalize every stored triple.

    ``spans`` optionally maps each word to its query-pair token span; a
    matching snippet is linked to the earlier-positioned endpoint.
    """
    relation_surfaces = relation_surfaces or {}
    seen: set[str] = set()
    uniq = [w for w in words if not (w in seen or seen.add(w))]
    out: list[KnowledgeSnippet] = []
    for i in range(len(uniq)):
        for j in range(i + 1, len(uniq)):
            for head, relation, tail in store.lookup_pair(uniq[i], uniq[j]):
                surface = relation_surfaces.get(relation, relation)
                span = None
                if spans:
                    candidates = [s for s in (spans.get(head), spans.get(tail)) if s]
                    if candidates:
                        span = min(candidates)
                out.append(
                    KnowledgeSnippet(TRIPLET, f"{head} {surface} {tail}", linked_span=span)
                )
    return out


@dataclass
class Bm25Index:
    """Tokenized corpus plus the statistics the BM25 formula needs."""

    documents: list[list[str]]
    df: dict[str, int]
    doc_lengths: list[int]
    avgdl: float
    k1: float = 1.2
    b: float = 0.75
    term_freqs: list[Counter] = field(default_factory=list, repr=False)


def bm25_build(corpus: list[str], k1: float = 1.2, b: float = 0.75) -> Bm25Index:
    """Tokenize ``corpus`` and precompute document frequencies and lengths."""
    if not corpus:
        raise ValueError("cannot build a BM25 index from an empty corpus")
    documents = [[t.surface for t in tokenize(sentence)] for sentence in corpus]
    term_freqs = [Counter(doc) for doc in documents]
    df: Counter = Counter()
    for freqs in term_freqs:
        for term in freqs:
            df[term] += 1
    doc_lengths = [len(doc) for doc in documents]
    avgdl = sum(doc_lengths) / len(documents)
    return Bm25Index(documents, dict(df), doc_lengths, avgdl, k1, b, term_freqs)


def bm25_search(
    index: Bm25Index,
    query: list[str],
    top_k: int,
) -> list[tuple[int, float]]:
    """Rank documents for ``query`` (list of token surfaces).

    Uses idf(t) = ln((N - df + 0.5) / (df + 0.5) + 1), which is never
    negative. Zero-scoring documents are omitted; ties break on lower doc id.
    """
    n_docs = len(index.documents)
    results: list[tuple[int, float]] = []
    for doc_id in range(n_docs):
        freqs = index.term_freqs[doc_id]
        norm = index.k1 * (1 - index.b + index.b * index.doc_lengths[doc_id] / index.avgdl)
        score = 0.0
        for term in query:
            tf = freqs.get(term, 0)
            if tf == 0:
                continue
            df = index.df[term]
            idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
            score += idf * tf * (index.k1 + 1) / (tf + norm)
        if score > 0.0:
            results.append((doc_id, score))
    results.sort(key=lambda r: (-r[1], r[0]))
    return results[:top_k]


def build_prompt(prompt_examples: list[tuple[str, str]], query: str) -> str:
    """Few-shot completion prompt: example Q/K blocks, then the open query."""
    blocks = [f"Q: {q}\nK: {k}\n" for q, k in prompt_examples]
    return "".join(blocks) + f"Q: {query}\nK:"


def generate_knowledge(client, prompt_examples, query: str) -> KnowledgeSnippet:
    """Ask ``client`` to complete a few-shot prompt; keep the first non-empty line."""
    if not prompt_examples:
        raise ValueError("need at least one prompt example")
    completion = client.complete(build_prompt(prompt_examples, query))
    for line in completion.splitlines():
        line = line.strip()
        if line:
            return KnowledgeSnippet(GENERATIVE, line)
    raise GenerationError("generative client returned an empty completion")


class HttpCompletionClient:
    """Text-completion HTTP client: POST {"prompt": ...} -> {"completion": ...}."""

    def __init__(self, endpoint: str, api_key_env: str | None = None, timeout_ms: int = 10000):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.timeout_ms = timeout_ms

    def complete(self, prompt: str) -> str:
        import os

        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if key:
                headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(
                self.endpoint,
                json={"prompt": prompt},
                headers=headers,
                timeout=self.timeout_ms / 1000.0,
            )
        except requests.Timeout as exc:
            raise GenerationError(f"generative service timed out: {exc}") from exc
        except requests.RequestException as exc:
            raise GenerationError(f"generative service request failed: {exc}") from exc
        if resp.status_code != 200:
            raise GenerationError(
                f"generative service returned HTTP {resp.status_code}",
                status=resp.status_code,
            )
        return resp.json()["completion"]


class OfflineGenerativeStub:
    """Deterministic offline client: define the first content word of the query.

    The query is recovered from the prompt's final ``Q:`` line; the reply is
    the dictionary definition of the first content word that has one, or
    ``"no knowledge"``.
    """

    def __init__(self, store: DictionaryStore, lexicon: PosLexicon):
        self.store = store
        self.lexicon = lexicon

    def complete(self, prompt: str) -> str:
        query = ""
        for line in prompt.splitlines():
            if line.startswith("Q: "):
                query = line[3:]
        tokens = tokenize(query)
        for _, surface, pos in content_words(tokens, self.lexicon):
            snippet = lookup_definition(self.store, surface, pos, self.lexicon.lemmatizer)
            if snippet is not None:
                return snippet.text
        return NO_KNOWLEDGE


def with_span(snippet: KnowledgeSnippet, span: tuple[int, int] | None) -> KnowledgeSnippet:
    """Copy of ``snippet`` with its linked span replaced."""
    return replace(snippet, linked_span=span)
