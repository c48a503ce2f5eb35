"""Candidate scoring, cross-entropy training, and gradient verification.

Each candidate of an example is encoded independently with its own
knowledge; the scalar score is the scoring vector applied to the final-layer
[CLS] state, and the softmax runs over the example's candidates. Training is
plain mini-batch SGD in double precision with a fixed shuffle seed, so runs
are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import (
    EncoderConfig,
    EncoderParams,
    FusedInput,
    Vocabulary,
    encode_batch,
    encode_backward,
    load_params,
    pad_batch,
    save_params,
    softmax_rows,
)


@dataclass
class ScoringHead:
    """The linear scoring layer applied to the [CLS] state."""

    w_o: np.ndarray  # (d,)


@dataclass
class Prediction:
    raw_scores: np.ndarray
    probabilities: np.ndarray
    argmax: int


def score_candidate(z0: np.ndarray, head: ScoringHead) -> float:
    """Scalar candidate score: the scoring vector dotted with the [CLS] state."""
    if z0.shape != head.w_o.shape:
        raise ValueError(f"dimension mismatch: z0 {z0.shape} vs head {head.w_o.shape}")
    return float(head.w_o @ z0)


def cross_entropy(prediction: Prediction, label: int) -> float:
    """Negative log probability of the gold candidate."""
    n = prediction.probabilities.shape[0]
    if not 0 <= label < n:
        raise ValueError(f"label {label} out of range for {n} candidates")
    return float(-np.log(prediction.probabilities[label]))


@dataclass
class FusedExample:
    """One example ready for the encoder: (ids, mask) per candidate."""

    candidates: list[tuple[np.ndarray, np.ndarray]]
    label: int | None = None

    @classmethod
    def from_inputs(cls, inputs: list[tuple[FusedInput, np.ndarray]], label=None):
        return cls([(fi.token_ids, mask) for fi, mask in inputs], label)


@dataclass
class Model:
    """Encoder parameters, scoring head, vocabulary, and the mask mode."""

    config: EncoderConfig
    params: EncoderParams
    head: ScoringHead
    vocab: Vocabulary
    mask_mode: str = "EQUATION"


def init_model(
    vocab: Vocabulary,
    rng: np.random.Generator,
    d_model: int = 64,
    n_heads: int = 4,
    n_layers: int = 2,
    max_len: int = 128,
    mask_mode: str = "EQUATION",
    scale: float = 0.02,
) -> Model:
    from .encoder import init_params

    config = EncoderConfig(d_model, n_heads, n_layers, max_len, len(vocab))
    params = init_params(config, rng, scale)
    head = ScoringHead(rng.normal(0.0, scale, size=d_model))
    return Model(config, params, head, vocab, mask_mode)


def _cls_states(model: Model, example: FusedExample, return_cache: bool = False):
    ids, mask = pad_batch(example.candidates)
    if return_cache:
        hidden, cache = encode_batch(ids, mask, model.params, model.config, return_cache=True)
        return hidden[:, 0, :], hidden, cache
    return encode_batch(ids, mask, model.params, model.config)[:, 0, :]


def predict(model: Model, example: FusedExample) -> Prediction:
    """Encode every candidate, score, and softmax over the candidates."""
    if len(example.candidates) < 2:
        raise ValueError("need at least 2 candidates")
    z0 = _cls_states(model, example)
    raw = z0 @ model.head.w_o
    probs = softmax_rows(raw[None, :])[0]
    return Prediction(raw, probs, int(np.argmax(probs)))


@dataclass
class TrainConfig:
    lr: float = 1e-2
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0


def _example_loss_and_grads(model: Model, example: FusedExample, grads, head_grad):
    """CE loss for one example; accumulates parameter gradients in place."""
    z0, hidden, cache = _cls_states(model, example, return_cache=True)
    raw = z0 @ model.head.w_o
    probs = softmax_rows(raw[None, :])[0]
    loss = float(-np.log(probs[example.label]))

    dscores = probs.copy()
    dscores[example.label] -= 1.0
    head_grad += dscores @ z0
    dhidden = np.zeros_like(hidden)
    dhidden[:, 0, :] = dscores[:, None] * model.head.w_o[None, :]
    encode_backward(dhidden, cache, model.params, model.config, grads)
    return loss, int(np.argmax(probs))


def _sgd_step(model: Model, grads: EncoderParams, head_grad: np.ndarray, lr: float) -> None:
    for (_, param), (_, grad) in zip(model.params.named_arrays(), grads.named_arrays()):
        param -= lr * grad
    model.head.w_o -= lr * head_grad


def train(
    dataset: list[FusedExample],
    model: Model,
    config: TrainConfig,
    dev: list[FusedExample] | None = None,
) -> list[str]:
    """Mini-batch SGD on mean cross-entropy; returns the per-epoch log lines.

    Log format is ``epoch<TAB>split<TAB>loss<TAB>accuracy``. Deterministic
    given the seed: fixed shuffle, no dropout, single thread.
    """
    if not dataset:
        raise ValueError("empty training set")
    for example in dataset:
        if example.label is None:
            raise ValueError("training requires labeled examples")
    rng = np.random.default_rng(config.seed)
    log: list[str] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(dataset))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            grads = model.params.zeros_like()
            head_grad = np.zeros_like(model.head.w_o)
            batch_loss = 0.0
            for example in batch:
                loss, arg = _example_loss_and_grads(model, example, grads, head_grad)
                batch_loss += loss
                total_loss += loss
                correct += int(arg == example.label)
            if not np.isfinite(batch_loss):
                raise RuntimeError(
                    f"non-finite loss {batch_loss!r} at epoch {epoch}; "
                    "reduce the learning rate"
                )
            inv = 1.0 / len(batch)
            for _, grad in grads.named_arrays():
                grad *= inv
            head_grad *= inv
            _sgd_step(model, grads, head_grad, config.lr)
        epoch_loss = total_loss / len(dataset)
        accuracy = correct / len(dataset)
        log.append(f"{epoch}\ttrain\t{epoch_loss!r}\t{accuracy!r}")
        if dev is not None:
            dev_loss, dev_acc = evaluate_fused(model, dev)
            log.append(f"{epoch}\tdev\t{dev_loss!r}\t{dev_acc!r}")
    return log


def evaluate_fused(model: Model, dataset: list[FusedExample]) -> tuple[float, float]:
    """Mean CE loss and accuracy over already-fused labeled examples."""
    total = 0.0
    correct = 0
    for example in dataset:
        pred = predict(model, example)
        total += cross_entropy(pred, example.label)
        correct += int(pred.argmax == example.label)
    return total / len(dataset), correct / len(dataset)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def _loss_only(model: Model, example: FusedExample) -> float:
    z0 = _cls_states(model, example)
    raw = z0 @ model.head.w_o
    probs = softmax_rows(raw[None, :])[0]
    return float(-np.log(probs[example.label]))


def grad_check(
    model: Model,
    example: FusedExample,
    h: float = 1e-4,
    n_per_tensor: int = 100,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples up to ``n_per_tensor`` coordinates from every parameter tensor
    (all coordinates for small tensors), including the scoring head.
    Relative error is |a - n| / max(|a|, |n|, 1e-8).
    """
    grads = model.params.zeros_like()
    head_grad = np.zeros_like(model.head.w_o)
    _example_loss_and_grads(model, example, grads, head_grad)

    tensors = [
        (param, grad)
        for (_, param), (_, grad) in zip(model.params.named_arrays(), grads.named_arrays())
    ]
    tensors.append((model.head.w_o, head_grad))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for param, grad in tensors:
        flat_param = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        size = flat_param.shape[0]
        take = min(n_per_tensor, size)
        coords = rng.choice(size, size=take, replace=False)
        for c in coords:
            original = flat_param[c]
            flat_param[c] = original + h
            plus = _loss_only(model, example)
            flat_param[c] = original - h
            minus = _loss_only(model, example)
            flat_param[c] = original
            numeric = (plus - minus) / (2.0 * h)
            analytic = flat_grad[c]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def save_model(directory, model: Model) -> None:
    """Write ``params.npz`` (all tensors, byte-exact) and ``vocab.txt``."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mode_code = {"EQUATION": 0, "PROSE_STRICT": 1, "FULL": 2}[model.mask_mode]
    save_params(
        directory / "params.npz",
        model.params,
        model.config,
        extra={"w_o": model.head.w_o, "mask_mode": np.int64(mode_code)},
    )
    model.vocab.save(directory / "vocab.txt")


def load_model(directory) -> Model:
    from pathlib import Path

    directory = Path(directory)
    params, config, extra = load_params(directory / "params.npz")
    vocab = Vocabulary.load(directory / "vocab.txt")
    mode = ("EQUATION", "PROSE_STRICT", "FULL")[int(extra["mask_mode"])]
    return Model(config, params, ScoringHead(extra["w_o"]), vocab, mode)
