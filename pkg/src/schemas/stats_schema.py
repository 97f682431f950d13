from pydantic import BaseModel, ConfigDict, Field

from src.config import CEILING_EPSILON, DEFAULT_FOLDS, DEFAULT_Q


class StatsConfig(BaseModel):
    """
    Significance settings. `layer_q` is the stricter level used to select
    voxels for the layer-preference analysis.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "example": {"q": 0.05, "layer_q": 0.01, "ceiling_epsilon": 0.05, "ceiling_folds": 5}
        }
    )

    q: float = Field(default=DEFAULT_Q, gt=0, lt=1)
    layer_q: float = Field(default=0.01, gt=0, lt=1)
    ceiling_epsilon: float = Field(default=CEILING_EPSILON, ge=0)
    ceiling_folds: int = Field(default=DEFAULT_FOLDS, ge=1)
