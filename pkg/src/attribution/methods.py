from dataclasses import dataclass
from logging import getLogger, basicConfig
from typing import List, Literal, Optional, Sequence

import numpy as np
import torch

from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_IG_STEPS
from src.errors import InputError, NumericalError
from src.lm.model import TinyLM, check_target, grad_wrt_embeddings, scalar_output
from src.schemas.lm_schema import TargetSpec

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)

Method = Literal["grad_norm", "grad_x_input", "integrated_gradients", "erasure"]
METHODS: List[str] = ["grad_norm", "grad_x_input", "integrated_gradients", "erasure"]
PATH_BATCH = 64


@dataclass(frozen=True)
class AttributionVector:
    """
    One score per input token. `vectors` keeps the signed per-coordinate
    attributions (T x d_model) for integrated gradients.
    """

    scores: np.ndarray
    method: str
    target: TargetSpec
    baseline_kind: str = "zero"
    steps_m: Optional[int] = None
    vectors: Optional[np.ndarray] = None


def output_at(model: TinyLM, embeddings: torch.Tensor, target: TargetSpec) -> float:
    """f evaluated on an explicit T x d_model embedding sequence."""
    with torch.no_grad():
        return float(scalar_output(model.trace(embeddings.unsqueeze(0)).logits, target)[0])


def resolve_baseline(embeddings: torch.Tensor, baseline: Optional[np.ndarray | torch.Tensor]) -> torch.Tensor:
    if baseline is None:
        return torch.zeros_like(embeddings)
    baseline = torch.as_tensor(baseline, dtype=embeddings.dtype)
    if tuple(baseline.shape) != tuple(embeddings.shape):
        raise InputError(
            f"Baseline shape {tuple(baseline.shape)} does not match embeddings {tuple(embeddings.shape)}"
        )
    return baseline


def path_points(inputs: torch.Tensor, baseline: torch.Tensor, alphas: torch.Tensor) -> torch.Tensor:
    """x' + alpha (x - x') for every alpha, stacked on a new leading axis."""
    return baseline.unsqueeze(0) + alphas.view(-1, 1, 1) * (inputs - baseline).unsqueeze(0)


def gradient_norm(model: TinyLM, token_ids: Sequence[int], target: TargetSpec) -> AttributionVector:
    """
    s(x_i) = L1 norm of the gradient of f with respect to token i's embedding.
    """
    grads = grad_wrt_embeddings(model, token_ids, target)
    return AttributionVector(np.abs(grads).sum(axis=1), "grad_norm", target)


def gradient_x_input(model: TinyLM, token_ids: Sequence[int], target: TargetSpec) -> AttributionVector:
    """
    s(x_i) = L2 norm of the elementwise product of gradient and embedding rows.
    """
    grads = grad_wrt_embeddings(model, token_ids, target)
    with torch.no_grad():
        embeddings = model.embed(token_ids).numpy()
    return AttributionVector(np.linalg.norm(grads * embeddings, axis=1), "grad_x_input", target)


def integrated_gradients(
    model: TinyLM,
    token_ids: Sequence[int],
    target: TargetSpec,
    steps_m: int = DEFAULT_IG_STEPS,
    baseline: Optional[np.ndarray] = None,
) -> AttributionVector:
    """
    Integrated gradients approximated by the left-endpoint Riemann sum over
    alpha = k/m, k = 0..m-1, from a baseline (zero embeddings by default) to
    the input embeddings. The per-token score is the L1 norm of its
    attribution vector.
    Args:
        model (TinyLM): Model to explain.
        token_ids (Sequence[int]): Input tokens.
        target (TargetSpec): Scalar output to attribute.
        steps_m (int): Number of interpolation steps.
        baseline (Optional[np.ndarray]): T x d_model baseline embeddings.
    Returns:
        AttributionVector: Scores plus the signed T x d_model attributions.
    Raises:
        InputError: If steps_m < 1 or the baseline has the wrong shape.
        NumericalError: If a gradient along the path is not finite.
    """
    if steps_m < 1:
        raise InputError(f"steps_m must be >= 1, got {steps_m}")
    check_target(model, target)
    with torch.no_grad():
        inputs = model.embed(token_ids)
    reference = resolve_baseline(inputs, baseline)
    alphas = torch.arange(0, steps_m, dtype=inputs.dtype) / steps_m

    total = torch.zeros_like(inputs)
    for start in range(0, steps_m, PATH_BATCH):
        chunk = alphas[start : start + PATH_BATCH]
        points = path_points(inputs, reference, chunk).requires_grad_(True)
        outputs = scalar_output(model.trace(points).logits, target)
        (grads,) = torch.autograd.grad(outputs.sum(), points)
        finite = torch.isfinite(grads).flatten(1).all(dim=1)
        if not bool(finite.all()):
            step = start + int((~finite).nonzero()[0])
            raise NumericalError("Non-finite gradient along the integration path", step=step)
        total += grads.sum(dim=0)

    vectors = ((inputs - reference) * total / steps_m).numpy()
    return AttributionVector(
        np.abs(vectors).sum(axis=1),
        "integrated_gradients",
        target,
        steps_m=steps_m,
        vectors=vectors,
    )


def _erased_output(
    model: TinyLM,
    token_ids: Sequence[int],
    positions: Sequence[int],
    target: TargetSpec,
    mode: str,
) -> float:
    if mode == "delete":
        erased = set(positions)
        kept = [t for i, t in enumerate(token_ids) if i not in erased]
        if not kept:
            raise InputError("Deleting every token leaves an empty sequence")
        with torch.no_grad():
            return output_at(model, model.embed(kept), target)
    with torch.no_grad():
        embeddings = model.embed(token_ids).clone()
        embeddings[list(positions)] = 0.0
        return output_at(model, embeddings, target)


def erasure(
    model: TinyLM,
    token_ids: Sequence[int],
    target: TargetSpec,
    mode: Literal["zero", "delete"] = "zero",
) -> AttributionVector:
    """
    s(x_i) = f(x) - f(x_-i). With mode="zero" token i's summed embedding is
    replaced by the zero baseline and the sequence length is kept; with
    mode="delete" the token is removed and later positions shift. Runs T + 1
    forward passes.
    """
    if mode not in ("zero", "delete"):
        raise InputError(f"Unknown erasure mode: {mode}")
    check_target(model, target)
    with torch.no_grad():
        full = output_at(model, model.embed(token_ids), target)
    scores = np.array(
        [full - _erased_output(model, token_ids, [i], target, mode) for i in range(len(token_ids))]
    )
    return AttributionVector(scores, "erasure", target, baseline_kind=mode)


def erasure_words(
    model: TinyLM,
    token_ids: Sequence[int],
    target: TargetSpec,
    token_word_map: Sequence[int],
    mode: Literal["zero", "delete"] = "zero",
) -> np.ndarray:
    """
    Word-granular erasure: every token of a word is erased at once. Returns one
    score per word, ordered by the word indices in token_word_map.
    """
    if len(token_word_map) != len(token_ids):
        raise InputError("token_word_map must have one entry per token")
    check_target(model, target)
    with torch.no_grad():
        full = output_at(model, model.embed(token_ids), target)
    words = sorted(set(token_word_map))
    return np.array(
        [
            full
            - _erased_output(
                model, token_ids, [i for i, w in enumerate(token_word_map) if w == word], target, mode
            )
            for word in words
        ]
    )


def attribute(
    model: TinyLM,
    token_ids: Sequence[int],
    target: TargetSpec,
    method: str,
    steps_m: int = DEFAULT_IG_STEPS,
) -> AttributionVector:
    """Dispatch to one of the four token attribution methods by name."""
    if method == "grad_norm":
        return gradient_norm(model, token_ids, target)
    if method == "grad_x_input":
        return gradient_x_input(model, token_ids, target)
    if method == "integrated_gradients":
        return integrated_gradients(model, token_ids, target, steps_m)
    if method == "erasure":
        return erasure(model, token_ids, target)
    raise InputError(f"Unknown attribution method: {method}")
