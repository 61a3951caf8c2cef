# -*- coding: utf-8 -*-
"""
Training configuration.
"""

from dataclasses import dataclass, fields, replace

from core.defaults import TRAIN_DEFAULTS
from core.store import ConfigStore
from errors import ConfigError
from losses import LossWeights

OPTIMIZERS = ('adam', 'sgd')
SIMILARITIES = ('ncc', 'mse', 'lncc')
MODES = ('joint', 'staged')

_D = TRAIN_DEFAULTS


def coerce(kind, key, value):
    """Convert a raw config value to 'kind'."""
    try:
        if kind is tuple:
            if isinstance(value, str):
                return tuple(int(item) for item in value.split(',') if
                             item.strip())
            return tuple(int(item) for item in value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError('Bad value for {0}: {1!r}'.format(key, value))


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = _D['alpha']
    beta: float = _D['beta']
    gamma: float = _D['gamma']
    optimizer: str = _D['optimizer']
    lr: float = _D['lr']
    momentum: float = _D['momentum']
    beta1: float = _D['beta1']
    beta2: float = _D['beta2']
    epochs: int = _D['epochs']
    batch_size: int = _D['batch_size']
    seed: int = _D['seed']
    stages: int = _D['stages']
    dims: int = _D['dims']
    classes: int = _D['classes']
    rois: int = _D['rois']
    features: int = _D['features']
    num_classes: int = _D['num_classes']
    unet_depth: int = _D['unet_depth']
    unet_base: int = _D['unet_base']
    reg_channels: tuple = _D['reg_channels']
    roi_hidden: int = _D['roi_hidden']
    gcn_widths: tuple = _D['gcn_widths']
    similarity: str = _D['similarity']
    lncc_window: int = _D['lncc_window']
    mode: str = _D['mode']

    def __post_init__(self):
        for item in fields(self):
            object.__setattr__(self, item.name, coerce(
                item.type, item.name, getattr(self, item.name)))
        self.validate()

    def validate(self):
        def check(condition, message):
            if not condition:
                raise ConfigError(message)

        check(min(self.alpha, self.beta, self.gamma) >= 0,
              'Loss weights must be non-negative')
        check(self.optimizer in OPTIMIZERS,
              'optimizer must be one of {0}'.format(OPTIMIZERS))
        check(self.similarity in SIMILARITIES,
              'similarity must be one of {0}'.format(SIMILARITIES))
        check(self.mode in MODES, 'mode must be one of {0}'.format(MODES))
        check(self.lr > 0, 'lr must be positive')
        check(self.epochs >= 1 and self.batch_size >= 1,
              'epochs and batch_size must be >= 1')
        check(self.stages >= 1, 'stages must be >= 1')
        check(self.unet_depth >= 1, 'unet_depth must be >= 1')
        check(self.classes >= 2 and self.rois >= 2 and self.num_classes >= 2,
              'classes, rois and num_classes must be >= 2')
        check(self.features >= 1 and self.roi_hidden >= 1 and
              self.unet_base >= 1, 'layer widths must be >= 1')
        check(len(self.reg_channels) >= 1 and len(self.gcn_widths) >= 1,
              'reg_channels and gcn_widths need at least one entry')
        check(self.lncc_window % 2 == 1, 'lncc_window must be odd')
        for levels in (self.unet_depth, len(self.reg_channels)):
            check(self.dims % 2 ** levels == 0,
                  'dims {0} not divisible by 2^{1}'.format(self.dims, levels))

    @property
    def weights(self):
        return LossWeights(self.alpha, self.beta, self.gamma)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_store(self):
        store = ConfigStore(defaults=TRAIN_DEFAULTS)
        for item in fields(self):
            store[item.name] = getattr(self, item.name)
        return store

    def to_text(self):
        return self.to_store().to_text()

    def save(self, file_path):
        self.to_store().persist(file_path)

    @classmethod
    def from_store(cls, store):
        return cls(**dict(store.items()))

    @classmethod
    def from_text(cls, text):
        return cls.from_store(ConfigStore.from_text(text, TRAIN_DEFAULTS))

    @classmethod
    def load(cls, file_path):
        return cls.from_store(ConfigStore.load(file_path, TRAIN_DEFAULTS))
