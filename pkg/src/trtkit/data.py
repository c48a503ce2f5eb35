"""Dataset model, training-set assembly, and the evaluation harness.

Datasets are UTF-8 JSON-lines files with the fields ``id``, ``lang``,
``question``, ``candidates``, and optionally ``label`` and
``question_concept``. Alternative field names can be mapped in via an alias
table instead of guessing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .translation import EN, LANGUAGES, Translator

CSQA = "csqa"
CODAH = "codah"
CANDIDATE_COUNTS = {CSQA: 5, CODAH: 4}

ZERO_SHOT = "zero-shot"
TRANSLATE_TRAIN = "translate-train"
REGIMES = (ZERO_SHOT, TRANSLATE_TRAIN)

# canonical field -> accepted aliases, tried in order
DEFAULT_FIELD_ALIASES = {
    "id": ("id", "_id", "example_id"),
    "lang": ("lang", "language"),
    "question": ("question", "stem", "text"),
    "candidates": ("candidates", "choices", "options"),
    "label": ("label", "answer"),
    "question_concept": ("question_concept", "concept"),
}


class DatasetError(ValueError):
    """Malformed dataset file; the message names the offending line."""


@dataclass
class Example:
    """One multiple-choice item."""

    id: str
    lang: str
    question: str
    candidates: list[str]
    label: int | None = None
    task: str = CODAH
    question_concept: str | None = None


@dataclass
class EvalReport:
    """Per-language accuracy and the macro average over present languages."""

    per_language: dict[str, float]
    average: float
    n_examples: int = 0


def _get_field(record: dict, canonical: str, aliases) -> object | None:
    for name in aliases.get(canonical, (canonical,)):
        if name in record:
            return record[name]
    return None


def load_dataset(path, task: str, aliases=None, languages=LANGUAGES) -> list[Example]:
    """Parse a JSON-lines dataset, validating the per-task candidate count."""
    if task not in CANDIDATE_COUNTS:
        raise ValueError(f"unknown task {task!r}")
    aliases = {**DEFAULT_FIELD_ALIASES, **(aliases or {})}
    want_n = CANDIDATE_COUNTS[task]
    examples: list[Example] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            ex_id = _get_field(record, "id", aliases)
            lang = _get_field(record, "lang", aliases)
            question = _get_field(record, "question", aliases)
            candidates = _get_field(record, "candidates", aliases)
            label = _get_field(record, "label", aliases)
            concept = _get_field(record, "question_concept", aliases)
            if ex_id is None or lang is None or question is None or candidates is None:
                raise DatasetError(
                    f"{path}:{lineno}: missing one of id/lang/question/candidates"
                )
            if lang not in languages:
                raise DatasetError(f"{path}:{lineno}: unknown language tag {lang!r}")
            if not isinstance(candidates, list) or len(candidates) != want_n:
                raise DatasetError(
                    f"{path}:{lineno}: {task} needs exactly {want_n} candidates, "
                    f"got {len(candidates) if isinstance(candidates, list) else candidates!r}"
                )
            if label is not None:
                label = int(label)
                if not 0 <= label < want_n:
                    raise DatasetError(f"{path}:{lineno}: label {label} out of range")
            examples.append(
                Example(str(ex_id), lang, question, [str(c) for c in candidates],
                        label, task, concept)
            )
    return examples


def save_dataset(path, examples: list[Example]) -> None:
    """Inverse of :func:`load_dataset` with canonical field names."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {
                "id": ex.id,
                "lang": ex.lang,
                "question": ex.question,
                "candidates": ex.candidates,
            }
            if ex.label is not None:
                record["label"] = ex.label
            if ex.question_concept is not None:
                record["question_concept"] = ex.question_concept
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def assemble_training_set(
    english_train: list[Example],
    regime: str,
    translator: Translator | None = None,
    languages=LANGUAGES,
) -> list[Example]:
    """Zero-shot keeps the English data; translate-train adds translated copies.

    Translated copies carry the original label, translate both the question
    and every candidate, and suffix the id with ``-<lang>``.
    """
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    for ex in english_train:
        if ex.lang != EN:
            raise ValueError(f"training set must be English, got {ex.lang!r} in {ex.id}")
    if regime == ZERO_SHOT:
        return list(english_train)
    if translator is None:
        raise ValueError("translate-train needs a translator")
    out = list(english_train)
    for lang in languages:
        if lang == EN:
            continue
        for ex in english_train:
            out.append(
                replace(
                    ex,
                    id=f"{ex.id}-{lang}",
                    lang=lang,
                    question=translator.translate(ex.question, EN, lang),
                    candidates=[translator.translate(c, EN, lang) for c in ex.candidates],
                )
            )
    return out


def evaluate(dataset: list[Example], pipeline) -> EvalReport:
    """Accuracy per language plus the macro average.

    ``pipeline`` must provide ``predict_example(example) -> Prediction``.
    Languages with no examples simply do not appear.
    """
    totals: dict[str, int] = {}
    hits: dict[str, int] = {}
    for ex in dataset:
        if ex.label is None:
            raise ValueError(f"example {ex.id} has no label; cannot evaluate")
        pred = pipeline.predict_example(ex)
        totals[ex.lang] = totals.get(ex.lang, 0) + 1
        hits[ex.lang] = hits.get(ex.lang, 0) + int(pred.argmax == ex.label)
    order = [l for l in LANGUAGES if l in totals] + sorted(set(totals) - set(LANGUAGES))
    per_language = {l: hits[l] / totals[l] for l in order}
    average = sum(per_language.values()) / len(per_language) if per_language else 0.0
    return EvalReport(per_language, average, n_examples=len(dataset))


def predict_file(dataset: list[Example], pipeline, out_path) -> None:
    """Write ``id<TAB>predicted_index`` lines in input order."""
    with open(out_path, "w", encoding="utf-8") as fh:
        for ex in dataset:
            pred = pipeline.predict_example(ex)
            fh.write(f"{ex.id}\t{pred.argmax}\n")
