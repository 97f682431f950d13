from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Literal, Optional

from src.config import DEFAULT_ALPHAS, DEFAULT_DELAYS, DEFAULT_FOLDS, DEFAULT_PCA_COMPONENTS


class EncodingConfig(BaseModel):
    """
    Settings of the voxelwise encoding model.

    `delays` defaults to 0..6: the current TR plus six preceding ones. Use
    1..6 for the strict "six delays" reading.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "n_folds": 5,
                "delays": [0, 1, 2, 3, 4, 5, 6],
                "alphas": [0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0, 1000000.0],
                "pca_components": 20,
                "fold_scheme": "contiguous",
            }
        }
    )

    n_folds: int = Field(default=DEFAULT_FOLDS, ge=2)
    delays: List[int] = Field(default_factory=lambda: list(DEFAULT_DELAYS), min_length=1)
    alphas: List[float] = Field(default_factory=lambda: list(DEFAULT_ALPHAS), min_length=1)
    pca_components: Optional[int] = Field(default=DEFAULT_PCA_COMPONENTS, ge=1)
    fold_scheme: Literal["contiguous"] = "contiguous"

    @field_validator("delays")
    @classmethod
    def non_negative_delays(cls, delays: List[int]) -> List[int]:
        if any(d < 0 for d in delays):
            raise ValueError("delays must be non-negative")
        return delays

    @field_validator("alphas")
    @classmethod
    def positive_alphas(cls, alphas: List[float]) -> List[float]:
        if any(a <= 0 for a in alphas):
            raise ValueError("alphas must be strictly positive")
        return alphas
