from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal


class ModelConfig(BaseModel):
    """
    Architecture of the toy decoder-only transformer.
    """

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "n_layers": 2,
                "n_heads": 2,
                "d_model": 16,
                "d_ff": 32,
                "vocab_size": 64,
                "max_seq_len": 16,
                "seed": 0,
                "final_norm": True,
                "norm_eps": 64.0,
            }
        },
    )

    n_layers: int = Field(gt=0)
    n_heads: int = Field(gt=0)
    d_model: int = Field(gt=0)
    d_ff: int = Field(gt=0)
    vocab_size: int = Field(gt=0)
    max_seq_len: int = Field(ge=11)
    seed: int = Field(default=0, ge=-(2**63), lt=2**63)
    final_norm: bool = True
    # Large next to the unit-scale embeddings, so every LayerNorm stays close to a
    # fixed rescaling on the straight path from the zero-embedding baseline.
    norm_eps: float = Field(default=64.0, gt=0)

    @model_validator(mode="after")
    def check_heads(self) -> "ModelConfig":
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        return self


class TargetSpec(BaseModel):
    """
    The scalar f(x) differentiated by every attribution method: the
    final-position logit or log-probability of target_token_id.
    """

    model_config = ConfigDict(frozen=True)

    target_token_id: int = Field(ge=0)
    kind: Literal["logit", "log_prob"] = "logit"


class TrainingConfig(BaseModel):
    """
    Plain SGD settings for the toy model.
    """

    model_config = ConfigDict(
        json_schema_extra={"example": {"steps": 500, "learning_rate": 0.05, "seed": 0}}
    )

    steps: int = Field(default=500, ge=0)
    learning_rate: float = Field(default=0.05, gt=0)
    seed: int = 0
    split_len: int = Field(default=8, ge=2)
