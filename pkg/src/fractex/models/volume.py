"""Dense grid carrier used for images, masks, FD maps and probability maps."""

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from fractex.errors import StructureError


@dataclass
class Volume:
    """A channel-first dense grid with per-axis spacing.

    ``data`` has shape ``(channels, *spatial)``; a 1-D series is ``(1, n)``.
    """

    data: np.ndarray
    spacing: tuple[float, ...] = ()
    channel_names: list[str] = field(default_factory=list)
    attrs: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim < 2:
            raise StructureError(f"volume data needs a channel axis and >= 1 spatial axis, got shape {self.data.shape}")
        if not self.spacing:
            self.spacing = (1.0,) * self.ndim
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != self.ndim:
            raise StructureError(f"spacing {self.spacing} does not match {self.ndim} spatial axes")
        if not self.channel_names:
            self.channel_names = [f"c{i}" for i in range(self.channels)]
        if len(self.channel_names) != self.channels:
            raise StructureError(f"{len(self.channel_names)} channel names for {self.channels} channels")

    @classmethod
    def from_grid(cls, grid: np.ndarray, spacing: tuple[float, ...] = (), **kwargs: Any) -> "Volume":
        """Wrap a single-channel spatial grid."""
        grid = np.asarray(grid)
        return cls(grid[np.newaxis], spacing=spacing, **kwargs)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def ndim(self) -> int:
        """Number of spatial axes."""
        return self.data.ndim - 1

    @property
    def shape(self) -> tuple[int, ...]:
        """Spatial shape."""
        return tuple(self.data.shape[1:])

    @property
    def grid(self) -> np.ndarray:
        """The spatial grid of a single-channel volume."""
        if self.channels != 1:
            raise StructureError(f"expected a single-channel volume, got {self.channels} channels")
        return self.data[0]

    def with_data(self, data: np.ndarray, **changes: Any) -> "Volume":
        """Copy with new data, keeping spacing; channel names reset when the count changes."""
        data = np.asarray(data)
        names = self.channel_names if data.shape[0] == self.channels else []
        changes.setdefault("channel_names", names)
        changes.setdefault("attrs", dict(self.attrs))
        return replace(self, data=data, **changes)
