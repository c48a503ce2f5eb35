"""Shared fixture builders for the test suite."""

import pytest

from trtkit.knowledge import DictionaryStore, TripletStore
from trtkit.text import ADJ, NOUN, OTHER, VERB, Lemmatizer, PosLexicon

STOPWORDS = ["the", "a", "an", "of", "and", "or", "is", "are", "which", "with", "to", "in"]

VALID_WORDS = [
    "dog", "cat", "bird", "kennel", "bark", "chase", "sing", "run", "make",
    "chair", "table", "house", "tree", "animal", "tool", "fruit", "color",
]

POS_TAGS = {
    "dog": NOUN, "cat": NOUN, "bird": NOUN, "kennel": NOUN, "chair": NOUN,
    "table": NOUN, "house": NOUN, "tree": NOUN, "animal": NOUN,
    "bark": VERB, "chase": VERB, "sing": VERB, "run": VERB, "make": VERB,
    "big": ADJ, "small": ADJ,
    "the": OTHER, "a": OTHER, "of": OTHER,
}

DEFINITIONS = {
    "dog": ["a domesticated canine", "an unattractive person"],
    "cat": ["a small feline"],
    "kennel": ["a shelter for a dog"],
    "bark": ["the sound a dog makes"],
    "tree": ["a tall woody plant"],
}

TRIPLES = [
    ("dog", "AtLocation", "kennel"),
    ("dog", "IsA", "animal"),
    ("cat", "CapableOf", "sing"),
    ("ice_cream", "IsA", "food"),
]

RELATION_SURFACES = {
    "AtLocation": "is at location",
    "IsA": "is a",
    "CapableOf": "is capable of",
}

CORPUS = [
    "the dog barks",
    "cats chase the dog",
    "birds sing",
]


@pytest.fixture
def lemmatizer():
    return Lemmatizer(VALID_WORDS)


@pytest.fixture
def lexicon(lemmatizer):
    return PosLexicon(POS_TAGS, STOPWORDS, lemmatizer)


@pytest.fixture
def dictionary():
    return DictionaryStore(DEFINITIONS)


@pytest.fixture
def triplets():
    return TripletStore(TRIPLES)
