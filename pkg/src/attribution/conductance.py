from dataclasses import dataclass
from logging import getLogger, basicConfig
from typing import Literal, Optional, Sequence

import numpy as np
import torch

from src.attribution.methods import PATH_BATCH, path_points, resolve_baseline
from src.config import LOG_FORMAT, LOG_LEVEL, DEFAULT_IG_STEPS
from src.errors import InputError, NumericalError
from src.lm.model import TinyLM, check_target, scalar_output
from src.schemas.lm_schema import TargetSpec

logger = getLogger(__name__)
basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)


@dataclass(frozen=True)
class LayerConductanceMatrix:
    """
    scores[l, t]: conductance of token t through layer l, neurons summed.
    Row 0 is the embedding layer; rows 1..n_layers are the transformer blocks.
    """

    scores: np.ndarray
    steps_m: int

    @property
    def blocks(self) -> np.ndarray:
        """The n_layers x T block rows."""
        return self.scores[1:]

    @property
    def n_layers(self) -> int:
        return self.scores.shape[0] - 1


def layer_conductance(
    model: TinyLM,
    token_ids: Sequence[int],
    target: TargetSpec,
    steps_m: int = DEFAULT_IG_STEPS,
    baseline: Optional[np.ndarray] = None,
) -> LayerConductanceMatrix:
    """
    Discretized conductance of every layer along the straight path from the
    baseline embeddings to the input embeddings:

        cond_l[t] = sum_k sum_d  df/dy_l(a_{k-1})[t, d] * (y_l(a_k) - y_l(a_{k-1}))[t, d]

    with a_k = k/m, k = 1..m. The gradient is taken at the left end of every
    step, so row 0 is exactly the signed integrated gradients of each token.
    Raises:
        InputError: If steps_m < 1.
        NumericalError: If a gradient along the path is not finite.
    """
    if steps_m < 1:
        raise InputError(f"steps_m must be >= 1, got {steps_m}")
    check_target(model, target)
    with torch.no_grad():
        inputs = model.embed(token_ids)
    reference = resolve_baseline(inputs, baseline)
    alphas = torch.arange(0, steps_m + 1, dtype=inputs.dtype) / steps_m

    hidden_chunks, grad_chunks = [], []
    for start in range(0, steps_m + 1, PATH_BATCH):
        points = path_points(inputs, reference, alphas[start : start + PATH_BATCH]).requires_grad_(True)
        trace = model.trace(points)
        outputs = scalar_output(trace.logits, target)
        grads = torch.autograd.grad(outputs.sum(), trace.hidden_states)
        for offset, step_grads in enumerate(zip(*grads)):
            if not all(bool(torch.isfinite(g).all()) for g in step_grads):
                raise NumericalError("Non-finite layer gradient along the path", step=start + offset)
        hidden_chunks.append(torch.stack([h.detach() for h in trace.hidden_states]))
        grad_chunks.append(torch.stack(grads))

    # layers x (m + 1) x T x d_model
    hidden = torch.cat(hidden_chunks, dim=1)
    grads = torch.cat(grad_chunks, dim=1)
    steps = hidden[:, 1:] - hidden[:, :-1]
    scores = (grads[:, :-1] * steps).sum(dim=(1, 3))
    return LayerConductanceMatrix(scores.numpy(), steps_m)


def layer_importance(
    conductance: LayerConductanceMatrix | np.ndarray,
    reduction: Literal["mean", "sum"] = "mean",
    include_embedding: bool = False,
) -> np.ndarray:
    """
    One importance score per layer, reducing every element of the layer's
    conductance vector by mean (default) or sum.
    Args:
        conductance: A conductance matrix, a layers x elements array, or a
            1-D vector treated as a single layer.
        reduction (str): "mean" or "sum".
        include_embedding (bool): Keep row 0 of a LayerConductanceMatrix.
    Returns:
        np.ndarray: Importance per layer.
    """
    if isinstance(conductance, LayerConductanceMatrix):
        values = conductance.scores if include_embedding else conductance.blocks
    else:
        values = np.atleast_2d(np.asarray(conductance, dtype=np.float64))
    if values.size == 0:
        raise InputError("Conductance is empty")
    if reduction == "mean":
        return values.mean(axis=1)
    if reduction == "sum":
        return values.sum(axis=1)
    raise InputError(f"Unknown reduction: {reduction}")
