# coding=utf-8
"""Validated run configuration read from YAML files.

Every section rejects unknown keys. Defaults are the training setup used for
leaf images: batch size 4, Adam with a learning rate of 1e-3 and a decay of
1e-3 over 30 epochs, and the stochastic augmentation probabilities
0.5 / 0.5 / 0.7 / 0.5 / 0.5 with a 25 degree rotation limit.
"""
import os
from typing import List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, \
    model_validator

from .architecture import ModelSpec
from .errors import ConfigError
from .scaling import ScalingCoefficients, ScaledDims


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', validate_assignment=True)


class TrainConfig(_Section):
    """Supervised training settings."""
    batch_size: int = Field(4, ge=1)
    optimizer: Literal['adam', 'sgd'] = 'adam'
    lr0: float = Field(1e-3, gt=0.0)
    lr_decay: float = Field(1e-3, ge=0.0)
    epochs: int = Field(30, ge=1)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    beta1: float = Field(0.9, gt=0.0, lt=1.0)
    beta2: float = Field(0.999, gt=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    seed: int = 0
    val_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    keep_best: bool = True


class AugmentConfig(_Section):
    """Parameters of the stochastic training pipeline and of normalization.

    shift_limit is a fraction of the image size, scale_limit a fraction of 1 and
    piecewise_sigma a fraction of the image size.
    """
    target_size: int = Field(545, ge=1)
    p_hflip: float = Field(0.5, ge=0.0, le=1.0)
    p_vflip: float = Field(0.5, ge=0.0, le=1.0)
    p_ssr: float = Field(0.7, ge=0.0, le=1.0)
    rotation_limit_deg: float = Field(25.0, ge=0.0)
    shift_limit: float = Field(0.0625, ge=0.0)
    scale_limit: float = Field(0.1, ge=0.0, lt=1.0)
    p_oneof_filter: float = Field(0.5, ge=0.0, le=1.0)
    p_piecewise: float = Field(0.5, ge=0.0, le=1.0)
    piecewise_grid: int = Field(4, ge=2)
    piecewise_sigma: float = Field(0.03, ge=0.0)
    channel_mean: Tuple[float, float, float] = (0.485, 0.456, 0.406)
    channel_std: Tuple[float, float, float] = (0.229, 0.224, 0.225)

    @field_validator('channel_std')
    @classmethod
    def _std_positive(cls, value):
        if any(s <= 0 for s in value):
            raise ValueError('channel_std components must be > 0. Got {}.'.format(value))
        return value

    @classmethod
    def no_augmentation(cls, **data):
        """Get a config with every stochastic stage disabled."""
        for key in ('p_hflip', 'p_vflip', 'p_ssr', 'p_oneof_filter', 'p_piecewise'):
            data[key] = 0.0
        return cls(**data)


class NoiseConfig(_Section):
    """Noise applied while training a student."""
    dropout_prob: float = Field(0.2, ge=0.0, lt=1.0)
    survival_prob: float = Field(0.8, ge=0.0, le=1.0)
    augment: bool = True


class GrowthConfig(_Section):
    """Multipliers by which a student grows relative to its teacher."""
    d: float = Field(1.0, ge=1.0)
    w: float = Field(1.0, ge=1.0)
    r: float = Field(1.0, ge=1.0)

    def dims(self):
        return ScaledDims(self.d, self.w, self.r)


class ScalingConfig(_Section):
    """Compound scaling coefficients and the grid search settings."""
    alpha: float = Field(1.2, ge=1.0)
    beta: float = Field(1.1, ge=1.0)
    gamma: float = Field(1.15, ge=1.0)
    phi: float = Field(0.0, ge=0.0)
    grid_step: float = Field(0.05, gt=0.0)
    tolerance: float = Field(0.1, gt=0.0)
    base_flops: float = Field(1.0, gt=0.0)

    def coefficients(self, phi=None):
        return ScalingCoefficients(self.alpha, self.beta, self.gamma,
                                   self.phi if phi is None else phi)


class SelfTrainConfig(_Section):
    """Teacher-student self-training settings.

    growth holds one rule per iteration or a single rule applied to every
    iteration. When phi_step is set, it replaces growth and every student is
    scaled by the compound coefficients of the scaling section raised to phi_step.
    """
    iterations: int = Field(2, ge=0)
    label_mode: Literal['soft', 'hard'] = 'soft'
    confidence_threshold: float = Field(0.0, ge=0.0, lt=1.0)
    growth: List[GrowthConfig] = Field(
        default_factory=lambda: [GrowthConfig(d=1.2, w=1.1, r=1.0)])
    phi_step: Optional[float] = Field(None, ge=0.0)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    train: Optional[TrainConfig] = None

    @model_validator(mode='after')
    def _growth_covers_iterations(self):
        if len(self.growth) > 1 and len(self.growth) < self.iterations:
            raise ValueError(
                'growth needs a single rule or at least one rule per iteration '
                '({} rules for {} iterations).'.format(len(self.growth), self.iterations))
        return self


class ModelConfig(_Section):
    """Base architecture before any scaling.

    stages is a list of (repeats, out_channels, stride) triples.
    """
    kind: Literal['efficient', 'baseline'] = 'efficient'
    stem_channels: int = Field(8, ge=1)
    stages: List[Tuple[int, int, int]] = Field(
        default_factory=lambda: [(1, 8, 1), (2, 16, 2)])
    expansion_ratio: float = Field(4.0, ge=1.0)
    se_ratio: float = Field(0.25, gt=0.0, le=1.0)
    survival_prob: float = Field(0.8, ge=0.0, le=1.0)
    dropout_prob: float = Field(0.2, ge=0.0, lt=1.0)
    num_classes: int = Field(4, ge=2)
    input_resolution: int = Field(32, ge=1)

    def to_spec(self):
        """Get the ModelSpec described by this section."""
        if self.kind == 'baseline':
            return ModelSpec(self.stem_channels, (), self.dropout_prob, self.num_classes,
                             self.input_resolution, kind='baseline')
        return ModelSpec.from_stages(
            self.stem_channels, self.stages, self.dropout_prob, self.num_classes,
            self.input_resolution, self.expansion_ratio, self.se_ratio,
            self.survival_prob)


class DataConfig(_Section):
    """Where the labeled and unlabeled images live and how they are split."""
    labels_csv: Optional[str] = None
    images_dir: Optional[str] = None
    unlabeled_dir: Optional[str] = None
    train_fraction: float = Field(0.8, gt=0.0, le=1.0)
    split_seed: int = 0
    hide_fraction: float = Field(0.0, ge=0.0, lt=1.0)


class SyntheticConfig(_Section):
    """Settings of the synthetic four-class leaf dataset."""
    count: int = Field(1000, ge=1)
    size: int = Field(32, ge=8)
    noise: float = Field(0.05, ge=0.0)


class RunConfig(_Section):
    """Top level configuration of a command line run."""
    seed: int = 0
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    augment: AugmentConfig = Field(default_factory=lambda: AugmentConfig(target_size=32))
    selftrain: SelfTrainConfig = Field(default_factory=SelfTrainConfig)
    scaling: ScalingConfig = Field(default_factory=ScalingConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig)

    def with_seed(self, seed):
        """Get a copy where the run seed also seeds training and data splitting."""
        data = self.model_dump()
        data['seed'] = seed
        data['train']['seed'] = seed
        data['data']['split_seed'] = seed
        if data['selftrain'].get('train') is not None:
            data['selftrain']['train']['seed'] = seed
        return RunConfig.model_validate(data)

    def selftrain_train(self):
        """Get the TrainConfig used by self-training."""
        return self.selftrain.train if self.selftrain.train is not None else self.train

    def augment_for(self, spec):
        """Get the augmentation config resized to the resolution of a ModelSpec."""
        return self.augment.model_copy(update={'target_size': spec.input_resolution})

    def to_yaml(self):
        """Get the fully resolved configuration as YAML text."""
        return yaml.safe_dump(self.model_dump(mode='json'), sort_keys=False)


def load_run_config(file_path):
    """Read and validate a YAML run configuration.

    Args:
        file_path: Path to a YAML file. An empty file gives every default.
    """
    if not os.path.isfile(file_path):
        raise ConfigError('Config file not found: {}'.format(file_path))
    with open(file_path) as fp:
        try:
            data = yaml.safe_load(fp)
        except yaml.YAMLError as e:
            raise ConfigError('Config file {} is not valid YAML:\n{}'.format(file_path, e))
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError('Config file {} must hold a mapping of keys.'.format(file_path))
    return parse_run_config(data, file_path)


def parse_run_config(data, source='<dict>'):
    """Validate a dictionary as a RunConfig, naming every offending key on failure."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        problems = ['{}: {}'.format('.'.join(str(p) for p in err['loc']), err['msg'])
                    for err in e.errors()]
        raise ConfigError('Invalid config {}:\n  {}'.format(source, '\n  '.join(problems)))
