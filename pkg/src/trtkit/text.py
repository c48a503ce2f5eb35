"""Deterministic tokenization, content-word tagging, and rule-based lemmatization.

Every retriever keys its stores on the output of :func:`tokenize`, so the
rules here are intentionally rigid: lowercase everything, split on Unicode
whitespace, and peel the six ASCII punctuation marks ``. , ! ? ; :`` off the
edges of each chunk. Internal hyphens and apostrophes stay put ("est-il"
remains one token).
"""

from __future__ import annotations

from dataclasses import dataclass

NOUN = "NOUN"
VERB = "VERB"
ADJ = "ADJ"
OTHER = "OTHER"

POS_TAGS = (NOUN, VERB, ADJ, OTHER)
CONTENT_POS = (NOUN, VERB, ADJ)

_DETACH = ".,!?;:"
_NOUN_SUFFIXES = ("es", "s")
_VERB_SUFFIXES = ("ing", "ed", "d", "s")


@dataclass(frozen=True)
class Token:
    """One lowercased token and its 0-based position in the sequence."""

    surface: str
    index: int


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into lowercased tokens.

    Punctuation in ``. , ! ? ; :`` is detached from chunk edges as
    single-character tokens. Idempotent on its own output joined by single
    spaces, and never produces a token containing whitespace.
    """
    surfaces: list[str] = []
    for chunk in text.lower().split():
        lead: list[str] = []
        while chunk and chunk[0] in _DETACH:
            lead.append(chunk[0])
            chunk = chunk[1:]
        trail: list[str] = []
        while chunk and chunk[-1] in _DETACH:
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        surfaces.extend(lead)
        if chunk:
            surfaces.append(chunk)
        surfaces.extend(reversed(trail))
    return [Token(s, i) for i, s in enumerate(surfaces)]


class Lemmatizer:
    """Suffix-stripping lemmatizer validated against a known-word set.

    Candidates are tried in a fixed order (exception table, then suffix
    strips) and the first one found in the validation set wins; otherwise the
    word is returned unchanged.
    """

    def __init__(
        self,
        valid_words,
        exceptions: dict[tuple[str, str], str] | None = None,
    ):
        self.valid = set(valid_words)
        self.exceptions = dict(exceptions or {})

    def lemmatize(self, word: str, pos: str) -> str:
        exc = self.exceptions.get((pos, word))
        if exc is not None:
            return exc
        if pos == NOUN:
            suffixes = _NOUN_SUFFIXES
        elif pos == VERB:
            suffixes = _VERB_SUFFIXES
        else:
            suffixes = ()
        for suffix in suffixes:
            if len(word) > len(suffix) and word.endswith(suffix):
                stem = word[: -len(suffix)]
                if stem in self.valid:
                    return stem
                # drop-e verbs: mak+ing -> make, chas+ed -> chase
                if pos == VERB and stem + "e" in self.valid:
                    return stem + "e"
        return word


class PosLexicon:
    """Word-to-POS map whose lookup is total via a fallback chain.

    Resolution order: exact lexicon hit, lexicon hit on a lemmatized form,
    default NOUN for alphabetic non-stopwords, else OTHER.
    """

    def __init__(self, tags: dict[str, str], stopwords, lemmatizer: Lemmatizer):
        for word, tag in tags.items():
            if tag not in POS_TAGS:
                raise ValueError(f"unknown POS tag {tag!r} for word {word!r}")
        self.tags = {w.lower(): t for w, t in tags.items()}
        self.stopwords = set(stopwords)
        self.lemmatizer = lemmatizer

    @classmethod
    def from_files(
        cls,
        lexicon_path,
        stopwords_path,
        validation_path,
        exceptions_path=None,
    ) -> "PosLexicon":
        tags = load_pos_tags(lexicon_path)
        stopwords = load_word_list(stopwords_path)
        valid = load_word_list(validation_path)
        exceptions = load_exceptions(exceptions_path) if exceptions_path else None
        return cls(tags, stopwords, Lemmatizer(valid, exceptions))

    def pos_of(self, word: str) -> str:
        tag = self.tags.get(word)
        if tag is not None:
            return tag
        for pos in (NOUN, VERB):
            lemma = self.lemmatizer.lemmatize(word, pos)
            if lemma != word:
                tag = self.tags.get(lemma)
                if tag is not None:
                    return tag
        if word.isalpha() and word not in self.stopwords:
            return NOUN
        return OTHER


def content_words(tokens: list[Token], lex: PosLexicon) -> list[tuple[int, str, str]]:
    """Return ``(index, surface, pos)`` for tokens tagged NOUN, VERB, or ADJ."""
    out = []
    for tok in tokens:
        pos = lex.pos_of(tok.surface)
        if pos in CONTENT_POS:
            out.append((tok.index, tok.surface, pos))
    return out


def load_pos_tags(path) -> dict[str, str]:
    """Read a ``word<TAB>POS`` lexicon file."""
    tags: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>POS', got {line!r}")
            word, tag = parts
            if tag not in POS_TAGS:
                raise ValueError(f"{path}:{lineno}: unknown POS tag {tag!r}")
            tags[word.lower()] = tag
    return tags


def load_word_list(path) -> list[str]:
    """Read a one-word-per-line file (stopwords, validation sets)."""
    words = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word and not word.startswith("#"):
                words.append(word.lower())
    return words


def load_exceptions(path) -> dict[tuple[str, str], str]:
    """Read a ``word<TAB>POS<TAB>lemma`` exception table."""
    exceptions: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(
                    f"{path}:{lineno}: expected 'word<TAB>POS<TAB>lemma', got {line!r}"
                )
            word, pos, lemma = parts
            if pos not in POS_TAGS:
                raise ValueError(f"{path}:{lineno}: unknown POS tag {pos!r}")
            exceptions[(pos, word.lower())] = lemma.lower()
    return exceptions
