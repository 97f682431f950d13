from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Dict, List


class HrfParams(BaseModel):
    """
    Double-gamma HRF: response peak, undershoot delay and peak/undershoot ratio (seconds).
    """

    peak_s: float = Field(default=6.0, gt=0)
    undershoot_s: float = Field(default=16.0, gt=0)
    ratio: float = Field(default=6.0, gt=0)
    length_s: float = Field(default=32.0, gt=0)


class SyntheticSpec(BaseModel):
    """
    Parameters of the planted-signal BOLD generator.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "n_subjects": 20,
                "n_voxels": 1000,
                "n_trs": 282,
                "tr_s": 1.5,
                "signal_voxel_fraction": 0.1,
                "snr": 1.0,
                "shared_noise_fraction": 0.0,
                "seed": 0,
            }
        }
    )

    n_subjects: int = Field(gt=0)
    n_voxels: int = Field(gt=0)
    n_trs: int = Field(gt=0)
    tr_s: float = Field(default=1.5, gt=0)
    signal_voxel_fraction: float = Field(default=0.1, ge=0, le=1)
    snr: float = 1.0
    shared_noise_fraction: float = Field(default=0.0, ge=0, lt=1)
    hrf: HrfParams = Field(default_factory=HrfParams)
    seed: int = 0
    story_id: str = "synthetic"


class GroundTruthManifest(BaseModel):
    """
    What the generator planted: the signal voxels, each one's weight vector
    over the generating feature columns, and the feature space used.
    """

    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "signal_voxel_ids": [3, 17],
                "weights": {"3": [0.5, -1.2], "17": [0.1, 0.9]},
                "feature_label": "attribution:grad_norm",
                "n_voxels": 20,
            }
        }
    )

    signal_voxel_ids: List[int]
    weights: Dict[str, List[float]] = Field(default_factory=dict)
    feature_label: str
    n_voxels: int = Field(gt=0)
    planted_layers: Dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def ids_in_range(self) -> "GroundTruthManifest":
        if any(not 0 <= v < self.n_voxels for v in self.signal_voxel_ids):
            raise ValueError("signal_voxel_ids must lie in [0, n_voxels)")
        return self
