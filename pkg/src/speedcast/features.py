"""Calendar features, historical statistics, normalization, and samples.

A sample is one (link, anchor time) instance: the look-back window of
neighbor speeds for the encoder, time-of-day and weekday dummies, the
per-horizon-step decoder feature vectors built from historical statistics,
and the raw targets. Windows never cross a day boundary because the series
is daily-blocked.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import SpeedSeries, TimeGrid
from .graph import HopMask, RoadGraph

logger = logging.getLogger(__name__)

DECODER_FEATURES = 6  # N, avg, median, max, min, std


def time_of_day_index(slot: int, grid: TimeGrid) -> int:
    """Ordinal time-of-day: the slot starting at midnight has index 1."""
    if not 0 <= slot < grid.slots_per_day:
        raise ValueError(f"slot {slot} outside the daily horizon of {grid.slots_per_day} slots")
    return grid.day_start_slot + slot + 1


@dataclass(eq=False)
class HistoricalStats:
    """Average/median/max/min/std per (link, slot-of-day) over training days.

    ``std`` is the population standard deviation. Weekdays and weekends are
    pooled; the weekday dummy carries the day-type signal to the model.
    """

    avg: np.ndarray
    median: np.ndarray
    vmax: np.ndarray
    vmin: np.ndarray
    std: np.ndarray

    def vector(self, link: int, slot: int) -> np.ndarray:
        """The 5 statistics of one (link, slot) in km/h."""
        return np.array(
            [
                self.avg[link, slot],
                self.median[link, slot],
                self.vmax[link, slot],
                self.vmin[link, slot],
                self.std[link, slot],
            ]
        )


def compute_stats(train: SpeedSeries) -> HistoricalStats:
    """Per-(link, slot-of-day) statistics over all training days."""
    if not train.is_complete:
        raise ValueError("compute_stats needs an interpolated (fully observed) series")
    days, spd = train.grid.days, train.grid.slots_per_day
    cube = train.values.reshape(train.graph.link_count, days, spd)
    return HistoricalStats(
        avg=cube.mean(axis=1),
        median=np.median(cube, axis=1),
        vmax=cube.max(axis=1),
        vmin=cube.min(axis=1),
        std=cube.std(axis=1),
    )


@dataclass(eq=False)
class Normalizer:
    """Per-link z-scoring of speed channels, fitted on training data only.

    Speeds and the five historical-statistics channels are z-scored with
    the owning link's (mean, std); the time-of-day index is divided by the
    number of slots in a full day (288 at 5 minutes); the weekday dummy
    passes through unchanged. Links with zero training variance fall back
    to std = 1 so their z-scores are 0.
    """

    mean: np.ndarray
    std: np.ndarray
    full_day_slots: int

    @classmethod
    def fit(cls, train: SpeedSeries) -> "Normalizer":
        mean = train.values.mean(axis=1)
        std = train.values.std(axis=1)
        flat = std == 0.0
        if flat.any():
            ids = [train.graph.link_ids[i] for i in np.flatnonzero(flat)]
            logger.warning("zero training std for links %s; falling back to std=1", ids)
            std = np.where(flat, 1.0, std)
        return cls(mean=mean, std=std, full_day_slots=train.grid.full_day_slots)

    def normalize_speed(self, link: int, x: np.ndarray) -> np.ndarray:
        return (x - self.mean[link]) / self.std[link]

    def normalize_speeds(self, links: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Z-score columns of x (.., len(links)) with each column's own link."""
        return (x - self.mean[links]) / self.std[links]

    def denormalize(self, link: int, x: np.ndarray) -> np.ndarray:
        return x * self.std[link] + self.mean[link]

    def scale_tod(self, n: np.ndarray | float):
        return n / self.full_day_slots


@dataclass(eq=False)
class Sample:
    """One training/evaluation instance for a (link, anchor time) pair.

    ``enc_speeds`` holds the raw look-back window restricted to the link's
    hop-mask neighbors (own link included), chronological rows t-m..t;
    columns follow ``nbr_links``. ``dec_exog`` rows are the per-step
    [N, avg, median, max, min, std] vectors keyed by each target slot's
    time of day. All values are raw; normalization happens in the model.
    """

    link: int
    day: int
    anchor_slot: int
    nbr_links: np.ndarray
    own_pos: int
    enc_speeds: np.ndarray
    enc_tod: np.ndarray
    daytype: float
    dec_exog: np.ndarray
    targets: np.ndarray

    @property
    def lookback(self) -> int:
        return self.enc_speeds.shape[0] - 1

    @property
    def horizon(self) -> int:
        return self.targets.shape[0]

    @property
    def own_window(self) -> np.ndarray:
        """The link's own raw look-back speeds, oldest first."""
        return self.enc_speeds[:, self.own_pos]


def build_samples(
    series: SpeedSeries,
    stats: HistoricalStats,
    mask: HopMask,
    m: int = 11,
    n: int = 6,
) -> list[Sample]:
    """Every (link, anchor) sample whose window [t-m, t+n] fits in one day.

    Ordering is deterministic: link-major, then day, then anchor slot.
    """
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    if m < 0:
        raise ValueError(f"look-back must be >= 0, got {m}")
    if not series.is_complete:
        raise ValueError("build_samples needs an interpolated (fully observed) series")
    grid = series.grid
    spd = grid.slots_per_day
    if spd < m + 1 + n:
        raise ValueError(
            f"window of {m + 1} look-back plus {n} horizon steps does not fit "
            f"in a {spd}-slot day"
        )
    tod = np.array([time_of_day_index(s, grid) for s in range(spd)])
    samples: list[Sample] = []
    for link in range(series.graph.link_count):
        nbrs = mask.neighbors(link)
        own_pos = int(np.searchsorted(nbrs, link))
        for day in range(grid.days):
            block = series.values[:, day * spd : (day + 1) * spd]
            nbr_block = block[nbrs]
            daytype = grid.daytype_flag(day)
            for anchor in range(m, spd - n):
                target_slots = np.arange(anchor + 1, anchor + 1 + n)
                dec = np.empty((n, DECODER_FEATURES))
                dec[:, 0] = tod[target_slots]
                dec[:, 1] = stats.avg[link, target_slots]
                dec[:, 2] = stats.median[link, target_slots]
                dec[:, 3] = stats.vmax[link, target_slots]
                dec[:, 4] = stats.vmin[link, target_slots]
                dec[:, 5] = stats.std[link, target_slots]
                samples.append(
                    Sample(
                        link=link,
                        day=day,
                        anchor_slot=anchor,
                        nbr_links=nbrs,
                        own_pos=own_pos,
                        enc_speeds=nbr_block[:, anchor - m : anchor + 1].T.copy(),
                        enc_tod=tod[anchor - m : anchor + 1].copy(),
                        daytype=daytype,
                        dec_exog=dec,
                        targets=block[link, target_slots].copy(),
                    )
                )
    return samples
