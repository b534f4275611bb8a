"""Container for sampled time-frequency MIMO channel responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ChannelTensor"]


@dataclass(frozen=True)
class ChannelTensor:
    """Channel frequency response sampled on a time and frequency grid.

    ``data`` has shape (n_times, n_freqs, n_rx, n_tx); ``freqs_hz`` are
    baseband offsets from the carrier.
    """

    data: np.ndarray
    times_s: np.ndarray
    freqs_hz: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        times = np.atleast_1d(np.asarray(self.times_s, dtype=float))
        freqs = np.atleast_1d(np.asarray(self.freqs_hz, dtype=float))
        if data.ndim != 4:
            raise ValueError("channel tensor must be 4-dimensional")
        if data.shape[0] != times.size or data.shape[1] != freqs.size:
            raise ValueError("tensor shape does not match time/frequency grids")
        if not np.all(np.isfinite(data)):
            raise ValueError("channel tensor contains non-finite entries")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "times_s", times)
        object.__setattr__(self, "freqs_hz", freqs)

    @property
    def n_rx(self) -> int:
        return self.data.shape[2]

    @property
    def n_tx(self) -> int:
        return self.data.shape[3]

    def at_time(self, index: int) -> np.ndarray:
        """Per-frequency channel matrices at one time sample, (F, R, S)."""
        return self.data[index]
