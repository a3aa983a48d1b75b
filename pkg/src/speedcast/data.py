"""Speed time-series storage, synthetic traffic, CSV ingestion, and splits.

Speeds live on a fixed 5-minute grid restricted to a daily horizon
(06:00-22:00 by default, 192 slots per day). A series is an |L| x T matrix
over the canonical link order of its RoadGraph, with an observation mask;
column ``day * slots_per_day + slot`` holds the speed for that (day, slot).
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field, asdict
from typing import Iterator

import numpy as np

from .graph import RoadGraph

MINUTES_PER_DAY = 1440


@dataclass(eq=False)
class TimeGrid:
    """Daily slot grid plus the ordered calendar dates it spans.

    Slots are counted from midnight in ``slot_minutes`` units;
    ``day_start_slot``/``day_end_slot`` bound the daily horizon
    (72..264 is 06:00-22:00 at 5 minutes per slot).
    """

    day_dates: tuple[dt.date, ...]
    slot_minutes: int = 5
    day_start_slot: int = 72
    day_end_slot: int = 264

    def __post_init__(self):
        self.day_dates = tuple(self.day_dates)
        if self.slot_minutes <= 0 or MINUTES_PER_DAY % self.slot_minutes:
            raise ValueError(f"slot_minutes must divide {MINUTES_PER_DAY}, got {self.slot_minutes}")
        if not 0 <= self.day_start_slot < self.day_end_slot <= MINUTES_PER_DAY // self.slot_minutes:
            raise ValueError(
                f"bad daily horizon: slots [{self.day_start_slot}, {self.day_end_slot})"
            )

    @classmethod
    def for_days(cls, start: dt.date, days: int, **kwargs) -> "TimeGrid":
        if days < 1:
            raise ValueError(f"need at least 1 day, got {days}")
        dates = tuple(start + dt.timedelta(days=k) for k in range(days))
        return cls(day_dates=dates, **kwargs)

    @property
    def days(self) -> int:
        return len(self.day_dates)

    @property
    def slots_per_day(self) -> int:
        return self.day_end_slot - self.day_start_slot

    @property
    def full_day_slots(self) -> int:
        return MINUTES_PER_DAY // self.slot_minutes

    @property
    def total_slots(self) -> int:
        return self.days * self.slots_per_day

    def column(self, day: int, slot: int) -> int:
        return day * self.slots_per_day + slot

    def day_slot(self, column: int) -> tuple[int, int]:
        return divmod(column, self.slots_per_day)

    def is_weekend(self, day: int) -> bool:
        return self.day_dates[day].weekday() >= 5

    def daytype_flag(self, day: int) -> float:
        """Weekday/weekend dummy: 1.0 on weekdays, 0.0 on weekends."""
        return 0.0 if self.is_weekend(day) else 1.0

    def timestamp(self, day: int, slot: int) -> dt.datetime:
        minutes = (self.day_start_slot + slot) * self.slot_minutes
        return dt.datetime.combine(self.day_dates[day], dt.time(minutes // 60, minutes % 60))

    def locate(self, ts: dt.datetime) -> tuple[int, int]:
        """Map a timestamp to (day, slot); raises if off-grid or out of range."""
        minutes = ts.hour * 60 + ts.minute
        if ts.second or ts.microsecond or minutes % self.slot_minutes:
            raise ValueError(f"timestamp {ts.isoformat()} is off the {self.slot_minutes}-minute grid")
        slot = minutes // self.slot_minutes - self.day_start_slot
        if not 0 <= slot < self.slots_per_day:
            raise ValueError(f"timestamp {ts.isoformat()} is outside the daily horizon")
        try:
            day = self.day_dates.index(ts.date())
        except ValueError:
            raise ValueError(f"timestamp {ts.isoformat()} is outside the grid's date range") from None
        return day, slot

    def with_days(self, first: int, count: int) -> "TimeGrid":
        return TimeGrid(
            day_dates=self.day_dates[first : first + count],
            slot_minutes=self.slot_minutes,
            day_start_slot=self.day_start_slot,
            day_end_slot=self.day_end_slot,
        )


@dataclass(eq=False)
class SpeedSeries:
    """Per-link speeds in km/h on a TimeGrid, with an observed-cell mask."""

    grid: TimeGrid
    graph: RoadGraph
    values: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        expected = (self.graph.link_count, self.grid.total_slots)
        if self.values.shape != expected or self.observed.shape != expected:
            raise ValueError(
                f"series shape mismatch: values {self.values.shape}, "
                f"observed {self.observed.shape}, expected {expected}"
            )
        seen = self.values[self.observed]
        if seen.size and (not np.all(np.isfinite(seen)) or np.any(seen < 0)):
            raise ValueError("observed speeds must be finite and >= 0")

    @property
    def is_complete(self) -> bool:
        return bool(self.observed.all())

    def day_block(self, link: int, day: int) -> np.ndarray:
        spd = self.grid.slots_per_day
        return self.values[link, day * spd : (day + 1) * spd]

    def iter_cells(self) -> Iterator[tuple[int, int, int, float]]:
        """Yield (link, day, slot, value) for every observed cell."""
        spd = self.grid.slots_per_day
        for i in range(self.graph.link_count):
            for col in np.flatnonzero(self.observed[i]):
                day, slot = divmod(int(col), spd)
                yield i, day, slot, float(self.values[i, col])


@dataclass
class SynthParams:
    """Knobs for the synthetic traffic generator.

    The daily profile is free-flow speed minus two Gaussian peak dips
    (attenuated on weekends), with per-day random dip amplitude/timing and
    a smooth day-specific fluctuation process so that the realized day
    deviates from its historical average. All day-level structure travels
    along the driving direction as a congestion wave: each link sees the
    profile of its downstream neighbor delayed by ``wave_lag_slots``, which
    is what makes neighbor speeds genuinely predictive. Optional incidents
    inject sharp link-local speed drops. Observation noise is added last
    and speeds are clamped at ``floor_kmh``.
    """

    free_flow_kmh: float = 60.0
    dip_depth_kmh: float = 35.0
    dip_width_min: float = 60.0
    morning_peak_min: int = 480
    evening_peak_min: int = 1080
    weekend_dip_factor: float = 0.4
    wave_lag_slots: int = 1
    day_amplitude_sigma: float = 0.15
    day_shift_sigma_min: float = 10.0
    fluctuation_kmh: float = 6.0
    fluctuation_corr_slots: int = 4
    incident_rate: float = 0.0
    incident_depth_kmh: float = 25.0
    incident_duration_slots: int = 6
    noise_sigma_kmh: float = 2.0
    floor_kmh: float = 1.0

    def validate(self) -> None:
        positive = ["free_flow_kmh", "dip_width_min", "floor_kmh"]
        nonneg = [
            "dip_depth_kmh", "weekend_dip_factor", "wave_lag_slots",
            "day_amplitude_sigma", "day_shift_sigma_min", "fluctuation_kmh",
            "incident_depth_kmh", "noise_sigma_kmh",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.fluctuation_corr_slots < 1:
            raise ValueError("fluctuation_corr_slots must be >= 1")
        if self.incident_duration_slots < 1:
            raise ValueError("incident_duration_slots must be >= 1")
        if not 0.0 <= self.incident_rate <= 1.0:
            raise ValueError(f"incident_rate must be in [0, 1], got {self.incident_rate}")

    def to_dict(self) -> dict:
        return asdict(self)


def wave_phases(graph: RoadGraph, lag_slots: int) -> np.ndarray:
    """Per-link congestion-wave delay in slots.

    Walking upstream (against the driving direction) from each root adds
    ``lag_slots`` per hop, so a link lags its downstream neighbor by
    exactly ``lag_slots``. On a cycle the relation necessarily breaks on
    the root's own outgoing edge; every other pair is consistent.
    """
    n = graph.link_count
    phases = np.zeros(n, dtype=np.int64)
    assigned = np.zeros(n, dtype=bool)
    for root in range(n):
        if assigned[root]:
            continue
        assigned[root] = True
        queue = [root]
        while queue:
            node = queue.pop(0)
            for up in graph.predecessors(node):
                if not assigned[up]:
                    assigned[up] = True
                    phases[up] = phases[node] + lag_slots
                    queue.append(int(up))
    return phases


def _smooth_noise(rng: np.random.Generator, length: int, corr_slots: int) -> np.ndarray:
    """Zero-mean, roughly unit-variance noise with ~corr_slots correlation."""
    window = max(1, int(corr_slots))
    white = rng.normal(0.0, 1.0, length + window - 1)
    kernel = np.ones(window) / window
    smoothed = np.convolve(white, kernel, mode="valid")
    return smoothed * np.sqrt(window)


def generate_synthetic(
    graph: RoadGraph,
    days: int,
    seed: int,
    params: SynthParams | None = None,
    start_date: dt.date = dt.date(2016, 10, 1),
) -> SpeedSeries:
    """Deterministic synthetic speed series for a graph.

    Identical (graph, days, seed, params, start_date) reproduce the series
    bit for bit.
    """
    params = params or SynthParams()
    params.validate()
    if graph.link_count == 0:
        raise ValueError("graph has no links")
    if days < 2:
        raise ValueError(f"need at least 2 days, got {days}")

    grid = TimeGrid.for_days(start_date, days)
    spd = grid.slots_per_day
    n = graph.link_count
    rng = np.random.default_rng(seed)
    phases = wave_phases(graph, params.wave_lag_slots)
    max_phase = int(phases.max()) if n else 0
    # minute at the start of each daily slot, per link, shifted by the wave
    slot_minutes_axis = (grid.day_start_slot + np.arange(spd)) * grid.slot_minutes
    shifted_minutes = slot_minutes_axis[None, :] - (phases * grid.slot_minutes)[:, None]

    values = np.empty((n, grid.total_slots))
    sigma = params.dip_width_min
    for day in range(days):
        wk = params.weekend_dip_factor if grid.is_weekend(day) else 1.0
        amp = 1.0 + rng.normal(0.0, params.day_amplitude_sigma) if params.day_amplitude_sigma else 1.0
        shift = rng.normal(0.0, params.day_shift_sigma_min) if params.day_shift_sigma_min else 0.0
        depth = params.dip_depth_kmh * wk * amp
        dips = depth * (
            np.exp(-0.5 * ((shifted_minutes - (params.morning_peak_min + shift)) / sigma) ** 2)
            + np.exp(-0.5 * ((shifted_minutes - (params.evening_peak_min + shift)) / sigma) ** 2)
        )
        clean = params.free_flow_kmh - dips
        if params.fluctuation_kmh > 0:
            # one day-level process shared by all links, read at each
            # link's wave delay; index 0 corresponds to slot -max_phase
            fluct = _smooth_noise(rng, spd + max_phase, params.fluctuation_corr_slots)
            cols = np.arange(spd)[None, :] - phases[:, None] + max_phase
            clean = clean + params.fluctuation_kmh * fluct[cols]
        if params.incident_rate > 0:
            for link in range(n):
                if rng.random() >= params.incident_rate:
                    continue
                dur = min(params.incident_duration_slots, spd)
                start = int(rng.integers(0, spd - dur + 1))
                depth_kmh = params.incident_depth_kmh * rng.uniform(0.6, 1.0)
                clean[link, start : start + dur] -= depth_kmh
        if params.noise_sigma_kmh > 0:
            clean = clean + rng.normal(0.0, params.noise_sigma_kmh, (n, spd))
        values[:, day * spd : (day + 1) * spd] = np.maximum(params.floor_kmh, clean)

    observed = np.ones_like(values, dtype=bool)
    return SpeedSeries(grid=grid, graph=graph, values=values, observed=observed)


CSV_HEADER = ["timestamp", "link_id", "speed_kmh"]


def load_csv(path, graph: RoadGraph, grid: TimeGrid | None = None) -> tuple[SpeedSeries, int]:
    """Read a long-format speed CSV into a series.

    Returns the series plus the number of duplicate (timestamp, link) rows
    that were overwritten (last occurrence wins). Rows absent from the file
    stay missing. When ``grid`` is None the date range is inferred from the
    data (contiguous calendar days, min to max).
    """
    rows: list[tuple[dt.datetime, int, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path} row {lineno}: expected 3 fields, got {len(row)}")
            try:
                ts = dt.datetime.fromisoformat(row[0])
            except ValueError:
                raise ValueError(f"{path} row {lineno}: bad timestamp {row[0]!r}") from None
            link = graph.index(row[1])
            try:
                speed = float(row[2])
            except ValueError:
                raise ValueError(f"{path} row {lineno}: bad speed {row[2]!r}") from None
            if not np.isfinite(speed) or speed < 0:
                raise ValueError(f"{path} row {lineno}: speed must be finite and >= 0, got {speed}")
            rows.append((ts, link, speed))

    if grid is None:
        if not rows:
            raise ValueError(f"{path}: no data rows and no grid given")
        first = min(r[0] for r in rows).date()
        last = max(r[0] for r in rows).date()
        grid = TimeGrid.for_days(first, (last - first).days + 1)

    values = np.zeros((graph.link_count, grid.total_slots))
    observed = np.zeros_like(values, dtype=bool)
    duplicates = 0
    for lineno, (ts, link, speed) in enumerate(rows, start=2):
        try:
            day, slot = grid.locate(ts)
        except ValueError as exc:
            raise ValueError(f"{path} row {lineno}: {exc}") from None
        col = grid.column(day, slot)
        if observed[link, col]:
            duplicates += 1
        values[link, col] = speed
        observed[link, col] = True
    return SpeedSeries(grid=grid, graph=graph, values=values, observed=observed), duplicates


def write_csv(series: SpeedSeries, path) -> None:
    """Write the observed cells of a series in the long CSV format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for link, day, slot, value in series.iter_cells():
            ts = series.grid.timestamp(day, slot)
            writer.writerow([ts.strftime("%Y-%m-%dT%H:%M"), series.graph.link_ids[link], repr(value)])


def interpolate_missing(series: SpeedSeries) -> SpeedSeries:
    """Fill missing cells, returning a fully observed series.

    Per link and day: interior gaps are filled linearly between the
    nearest observed neighbors, and leading/trailing gaps extend the
    nearest observed value (both are what np.interp does). Days with no
    observations for a link fall back to that link's per-slot mean over
    the days where the slot was observed; slots never observed anywhere
    fall back to the link's overall observed mean.
    """
    spd = series.grid.slots_per_day
    values = series.values.copy()
    observed = series.observed
    for link in range(series.graph.link_count):
        if not observed[link].any():
            raise ValueError(
                f"link {series.graph.link_ids[link]!r} has no observations to interpolate from"
            )
    slot_axis = np.arange(spd)
    for link in range(series.graph.link_count):
        obs_link = observed[link]
        if obs_link.all():
            continue
        by_day_vals = series.values[link].reshape(series.grid.days, spd)
        by_day_obs = obs_link.reshape(series.grid.days, spd)
        counts = by_day_obs.sum(axis=0)
        link_mean = series.values[link][obs_link].mean()
        with np.errstate(invalid="ignore"):
            slot_means = np.where(
                counts > 0,
                (by_day_vals * by_day_obs).sum(axis=0) / np.maximum(counts, 1),
                link_mean,
            )
        for day in range(series.grid.days):
            sl = slice(day * spd, (day + 1) * spd)
            ob = observed[link, sl]
            if ob.all():
                continue
            if ob.any():
                idx = np.flatnonzero(ob)
                values[link, sl] = np.interp(slot_axis, idx, values[link, sl][idx])
            else:
                values[link, sl] = slot_means
    return SpeedSeries(
        grid=series.grid,
        graph=series.graph,
        values=values,
        observed=np.ones_like(observed),
    )


def split(series: SpeedSeries, train_days: int) -> tuple[SpeedSeries, SpeedSeries]:
    """Chronological split on day boundaries; test days follow train days."""
    days = series.grid.days
    if not 1 <= train_days < days:
        raise ValueError(f"train_days must be in [1, {days - 1}], got {train_days}")
    spd = series.grid.slots_per_day
    cut = train_days * spd
    train = SpeedSeries(
        grid=series.grid.with_days(0, train_days),
        graph=series.graph,
        values=series.values[:, :cut].copy(),
        observed=series.observed[:, :cut].copy(),
    )
    test = SpeedSeries(
        grid=series.grid.with_days(train_days, days - train_days),
        graph=series.graph,
        values=series.values[:, cut:].copy(),
        observed=series.observed[:, cut:].copy(),
    )
    return train, test
