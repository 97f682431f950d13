from pydantic import BaseModel, ConfigDict, Field, field_validator
from typing import List, Literal, Optional

from src.attribution.methods import METHODS
from src.config import DEFAULT_IG_STEPS, DEFAULT_WINDOW_LEN
from src.schemas.encoder_schema import EncodingConfig
from src.schemas.lm_schema import TrainingConfig
from src.schemas.stats_schema import StatsConfig
from src.schemas.synthetic_schema import SyntheticSpec

FeatureKind = Literal["attribution", "conductance", "attention", "activation"]


class PathsConfig(BaseModel):
    """
    Input and output locations. Relative paths resolve against the config file.
    """

    transcripts: List[str] = Field(min_length=1)
    model: str
    bold_dir: str
    output_dir: str
    roi_labels: Optional[str] = None
    pos_tags: Optional[str] = None


class ModelSection(BaseModel):
    """ModelConfig without the vocabulary size, which comes from the transcripts."""

    n_layers: int = Field(default=2, gt=0)
    n_heads: int = Field(default=2, gt=0)
    d_model: int = Field(default=16, gt=0)
    d_ff: int = Field(default=32, gt=0)
    max_seq_len: int = Field(default=32, ge=11)
    final_norm: bool = True
    norm_eps: float = Field(default=64.0, gt=0)
    vocab_size: Optional[int] = Field(default=None, gt=0)


class FeatureSection(BaseModel):
    kinds: List[FeatureKind] = Field(
        default_factory=lambda: ["attribution", "conductance", "attention", "activation"], min_length=1
    )
    methods: List[str] = Field(default_factory=lambda: list(METHODS), min_length=1)
    window_len: int = Field(default=DEFAULT_WINDOW_LEN, ge=1)
    steps_m: int = Field(default=DEFAULT_IG_STEPS, ge=1)
    activation_layer: Optional[int] = Field(default=None, ge=0)

    @field_validator("methods")
    @classmethod
    def known_methods(cls, methods: List[str]) -> List[str]:
        unknown = sorted(set(methods) - set(METHODS))
        if unknown:
            raise ValueError(f"Unknown attribution methods: {unknown}")
        return methods


class SyntheticSection(BaseModel):
    """
    `source` picks what drives the planted signal: one attribution method's
    features, or one voxel group per transformer block's conductance.
    """

    spec: SyntheticSpec
    source: Literal["attribution", "layers"] = "attribution"
    method: str = "grad_norm"


class PipelineConfig(BaseModel):
    model_config = ConfigDict(
        json_schema_extra={
            "example": {
                "seed": 0,
                "paths": {
                    "transcripts": ["../data/toy_story.tsv"],
                    "model": "../runs/toy/model.bin",
                    "bold_dir": "../runs/toy/bold",
                    "output_dir": "../runs/toy",
                    "roi_labels": "../data/toy_rois.tsv",
                    "pos_tags": "../data/toy_pos.tsv",
                },
                "model": {"n_layers": 2, "n_heads": 2, "d_model": 16, "d_ff": 32, "max_seq_len": 32},
                "training": {"steps": 200, "learning_rate": 0.05},
                "features": {"kinds": ["attribution", "conductance"], "methods": ["grad_norm", "erasure"]},
                "synthetic": {"spec": {"n_subjects": 8, "n_voxels": 40, "n_trs": 60}},
                "encoder": {"n_folds": 5},
                "stats": {"q": 0.05},
            }
        }
    )

    seed: int = 0
    paths: PathsConfig
    model: ModelSection = Field(default_factory=ModelSection)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    features: FeatureSection = Field(default_factory=FeatureSection)
    synthetic: Optional[SyntheticSection] = None
    encoder: EncodingConfig = Field(default_factory=EncodingConfig)
    stats: StatsConfig = Field(default_factory=StatsConfig)
