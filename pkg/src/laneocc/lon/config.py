"""Model / training configuration and the two standard presets."""

from __future__ import annotations

from dataclasses import dataclass, asdict

from ..errors import ValidationError

ACTOR_FEATURE_DIM = 7
PATH_FEATURE_DIM = 15


@dataclass(frozen=True)
class LonConfig:
    """Raster geometry, network widths, and optimizer settings.

    The default values are the full-scale preset (0.2 m/px over a
    60 m x 60 m window with 10 m behind / 50 m ahead of the actor, FC
    head 2048/1024, 40 output cells, lr 1e-4 decayed by 0.9 every 11000
    of 50000 iterations). `desk()` shrinks the raster and network to
    something trainable in minutes on one machine.
    """

    raster_size: int = 300
    raster_resolution: float = 0.2
    extent_behind: float = 10.0
    extent_ahead: float = 50.0
    conv1_channels: tuple = (8, 16, 32, 32)
    conv2_channels: tuple = (32, 32)
    proj_channels: int = 16
    fc_widths: tuple = (2048, 1024)
    num_cells: int = 40
    cell_length: float = 4.8
    learning_rate: float = 1e-4
    lr_decay: float = 0.9
    decay_every: int = 11000
    iterations: int = 50000
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        numeric = (self.raster_size, self.raster_resolution, self.extent_behind,
                   self.extent_ahead, self.proj_channels, self.num_cells,
                   self.cell_length, self.learning_rate, self.lr_decay,
                   self.decay_every, self.iterations, self.batch_size)
        if any(v <= 0 for v in numeric):
            raise ValidationError("all LonConfig quantities must be positive")
        span = self.extent_behind + self.extent_ahead
        if abs(self.raster_size * self.raster_resolution - span) > 1e-6:
            raise ValidationError(
                "raster_size * raster_resolution must equal the fore-aft extent")
        object.__setattr__(self, "conv1_channels", tuple(self.conv1_channels))
        object.__setattr__(self, "conv2_channels", tuple(self.conv2_channels))
        object.__setattr__(self, "fc_widths", tuple(self.fc_widths))

    @property
    def raster_span(self) -> float:
        return self.extent_behind + self.extent_ahead

    @property
    def path_length(self) -> float:
        return self.num_cells * self.cell_length

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "LonConfig":
        return cls(**doc)


def paper_preset() -> LonConfig:
    return LonConfig()


def desk_preset(iterations: int = 3000, seed: int = 0,
                learning_rate: float = 0.05) -> LonConfig:
    """Small raster / small network preset for single-machine runs.

    Keeps the 40-cell output and the 60 m window but at 0.9375 m/px
    (64 px); the learning rate is raised since the full-scale 1e-4 barely
    moves this small network within a desk-scale iteration budget.
    """
    return LonConfig(
        raster_size=64,
        raster_resolution=0.9375,
        conv1_channels=(4, 8, 16, 16),
        conv2_channels=(16, 16),
        proj_channels=8,
        fc_widths=(128, 64),
        learning_rate=learning_rate,
        iterations=iterations,
        seed=seed,
    )
