"""Telemetry frames: CSV I/O, min-max scaling, windowing, splitting, synthesis."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigError, DataError, SchemaError

DEFAULT_WINDOW = 16
CLAMP_RANGE = (-0.5, 1.5)
META_PREFIX = "# meta: "

SYNTHETIC_FEATURES = ("speed_kmh", "accel_mps2", "force_n")
SYNTHETIC_TARGET = "power_kw"
SYNTHETIC_TRUTH = "power_true_kw"


@dataclass
class SeriesFrame:
    """Equal-length named columns sampled at a fixed period.

    ``rows`` records each sample's row number in the originating series, so
    windows cut from a split can be traced back to the source.
    """

    columns: dict[str, np.ndarray]
    target: str
    period: float = 1.0
    rows: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.target not in self.columns:
            raise SchemaError(f"target column {self.target!r} missing")
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) != 1:
            raise DataError("columns have unequal lengths")
        self.columns = {k: np.asarray(v, dtype=np.float64) for k, v in self.columns.items()}
        if not all(np.all(np.isfinite(v)) for v in self.columns.values()):
            raise DataError("frame contains non-finite values")
        if self.rows is None:
            self.rows = np.arange(len(self))

    def __len__(self) -> int:
        return len(next(iter(self.columns.values())))

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"column {name!r} missing") from None

    def slice(self, start: int, stop: int) -> "SeriesFrame":
        return SeriesFrame(
            {k: v[start:stop].copy() for k, v in self.columns.items()},
            self.target, self.period, self.rows[start:stop].copy(), dict(self.meta),
        )

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self[n] for n in names])


# ------------------------------------------------------------------ CSV I/O


def load_csv(path, features: Sequence[str], target: str) -> SeriesFrame:
    """Read selected columns; rows with a missing or unparsable value are dropped.

    Lines starting with ``#`` are skipped; a ``# meta: {json}`` line is parsed
    into ``frame.meta``. The number of dropped rows is stored under
    ``meta["dropped_rows"]`` and announced with a warning.
    """
    path = Path(path)
    meta: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        lines = []
        for line in fh:
            if line.startswith(META_PREFIX):
                meta = json.loads(line[len(META_PREFIX):])
            elif not line.startswith("#") and line.strip():
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise DataError(f"{path}: no header row")
    header = [h.strip() for h in header]
    wanted = list(dict.fromkeys([*features, target]))
    missing = [c for c in wanted if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    index = [header.index(c) for c in wanted]

    values: list[list[float]] = []
    dropped = 0
    for record in reader:
        try:
            row = [float(record[i]) for i in index]
        except (ValueError, IndexError):
            dropped += 1
            continue
        if not all(math.isfinite(v) for v in row):
            dropped += 1
            continue
        values.append(row)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} row(s) with missing or unparsable values", stacklevel=2)
    if not values:
        raise DataError(f"{path}: no usable rows")
    arr = np.array(values)
    meta["dropped_rows"] = dropped
    period = float(meta.get("period_s", 1.0))
    return SeriesFrame({c: arr[:, j] for j, c in enumerate(wanted)}, target, period, meta=meta)


def write_csv(frame: SeriesFrame, path, columns: Optional[Sequence[str]] = None) -> None:
    columns = list(columns or frame.columns)
    meta = {k: v for k, v in frame.meta.items() if k != "dropped_rows"}
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        if meta:
            fh.write(META_PREFIX + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for i in range(len(frame)):
            writer.writerow([repr(float(frame[c][i])) for c in columns])


# ------------------------------------------------------------ normalization


@dataclass(frozen=True)
class NormStats:
    mins: dict
    maxs: dict

    def span(self, name: str) -> float:
        return self.maxs[name] - self.mins[name]

    def normalize(self, name: str, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mins[name]) / self.span(name)

    def denormalize(self, name: str, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.span(name) + self.mins[name]

    def to_dict(self) -> dict:
        return {"mins": dict(self.mins), "maxs": dict(self.maxs)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls({k: float(v) for k, v in d["mins"].items()}, {k: float(v) for k, v in d["maxs"].items()})


def fit_normalize(
    frame: SeriesFrame, columns: Optional[Sequence[str]] = None, stats: Optional[NormStats] = None
) -> tuple[SeriesFrame, NormStats]:
    """Min-max scale ``columns`` (default: all) to [0, 1].

    With ``stats`` the given ranges are reused; values beyond
    :data:`CLAMP_RANGE` are then clamped with a warning.
    """
    columns = list(columns or frame.columns)
    if stats is None:
        mins = {c: float(frame[c].min()) for c in columns}
        maxs = {c: float(frame[c].max()) for c in columns}
        flat = [c for c in columns if not maxs[c] > mins[c]]
        if flat:
            raise DataError(f"cannot normalize constant column(s) {', '.join(flat)}")
        stats = NormStats(mins, maxs)
    out = dict(frame.columns)
    clamped = 0
    for c in columns:
        if c not in stats.mins:
            raise SchemaError(f"no normalization range stored for column {c!r}")
        scaled = stats.normalize(c, frame[c])
        outside = (scaled < CLAMP_RANGE[0]) | (scaled > CLAMP_RANGE[1])
        if outside.any():
            clamped += int(outside.sum())
            scaled = np.clip(scaled, *CLAMP_RANGE)
        out[c] = scaled
    if clamped:
        warnings.warn(f"clamped {clamped} normalized value(s) to {list(CLAMP_RANGE)}", stacklevel=2)
    meta = dict(frame.meta, clamped_values=clamped)
    return SeriesFrame(out, frame.target, frame.period, frame.rows.copy(), meta), stats


# ---------------------------------------------------------------- windowing


@dataclass(frozen=True)
class WindowedDataset:
    """``inputs[n]`` covers source rows ``rows[n]``; ``targets[n]`` is the target at the last one."""

    inputs: np.ndarray
    targets: np.ndarray
    rows: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def target_rows(self) -> np.ndarray:
        return self.rows[:, -1]


def make_windows(frame: SeriesFrame, features: Sequence[str], window_length: int = DEFAULT_WINDOW) -> WindowedDataset:
    """Stride-1 windows; a series of length L yields L - T + 1 windows."""
    n = len(frame)
    if n < window_length:
        raise DataError(f"series of length {n} is shorter than one window ({window_length})")
    X = frame.matrix(features)
    starts = np.arange(n - window_length + 1)
    offsets = starts[:, None] + np.arange(window_length)[None, :]
    return WindowedDataset(
        inputs=X[offsets],
        targets=frame[frame.target][offsets[:, -1]].copy(),
        rows=frame.rows[offsets],
    )


def split_70_30(frame: SeriesFrame, window_length: int = DEFAULT_WINDOW) -> tuple[SeriesFrame, SeriesFrame]:
    """Chronological split: first floor(0.7 L) rows train, the rest test."""
    n = len(frame)
    if n < 10 * window_length:
        raise DataError(f"series of length {n} is too short to split (need >= {10 * window_length})")
    cut = (7 * n) // 10
    return frame.slice(0, cut), frame.slice(cut, n)


# ---------------------------------------------------------------- synthesis

# (time s, speed km/h) knots joined by smoothstep ramps; cycle mean 76.1 km/h,
# distance 16.91 km over 800 s
HIGHWAY_KNOTS = (
    (0, 0), (35, 60), (70, 72), (120, 79), (160, 71), (210, 87), (250, 89),
    (300, 77), (350, 85), (400, 93), (440, 87), (490, 75), (540, 81), (590, 93),
    (640, 91), (690, 77), (730, 73), (765, 48), (799, 0),
)


@dataclass(frozen=True)
class CycleSpec:
    duration_s: int = 800
    knots: tuple = HIGHWAY_KNOTS

    def validate(self) -> None:
        if self.duration_s < 1:
            raise ConfigError("duration_s must be positive")
        times = [k[0] for k in self.knots]
        if len(times) < 2 or times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("knot times must start at 0 and increase strictly")
        if any(k[1] < 0 for k in self.knots):
            raise ConfigError("knot speeds must be non-negative")


@dataclass(frozen=True)
class VehicleSpec:
    mass_kg: float = 1800.0
    c0_n: float = 120.0
    c1_n_per_mps: float = 1.5
    c2_n_per_mps2: float = 0.35
    efficiency: float = 0.9
    regenerative: bool = False

    def validate(self) -> None:
        if self.mass_kg <= 0 or not 0 < self.efficiency <= 1:
            raise ConfigError("vehicle mass must be positive and efficiency in (0, 1]")


@dataclass(frozen=True)
class NoiseSpec:
    """Observed power = truth + (s0 + s1 |a|) * eps with eps ~ Student-t(nu)."""

    nu: float = 4.0
    s0_kw: float = 0.6
    s1_kw_per_mps2: float = 2.25

    def validate(self) -> None:
        if self.nu <= 0 or self.s0_kw < 0 or self.s1_kw_per_mps2 < 0:
            raise ConfigError("noise nu must be positive and scales non-negative")


def speed_profile(cycle: CycleSpec) -> np.ndarray:
    """Speed in km/h at 1 Hz; the knot pattern repeats for longer durations."""
    cycle.validate()
    period = cycle.knots[-1][0] + 1
    t = np.arange(cycle.duration_s) % period
    v = np.zeros(cycle.duration_s)
    for (t0, v0), (t1, v1) in zip(cycle.knots[:-1], cycle.knots[1:]):
        m = (t >= t0) & (t <= t1)
        u = (t[m] - t0) / (t1 - t0)
        v[m] = v0 + (v1 - v0) * u * u * (3.0 - 2.0 * u)
    return v


def generate_synthetic(
    cycle: CycleSpec = CycleSpec(),
    noise: NoiseSpec = NoiseSpec(),
    seed: int = 0,
    vehicle: VehicleSpec = VehicleSpec(),
) -> SeriesFrame:
    """Highway-style drive cycle with heteroscedastic, heavy-tailed power noise.

    The ground-truth power depends only on the cycle and vehicle; ``seed``
    only affects the noise.
    """
    noise.validate()
    vehicle.validate()
    speed_kmh = speed_profile(cycle)
    v = speed_kmh / 3.6
    a = np.gradient(v) if len(v) > 1 else np.zeros_like(v)
    force = vehicle.mass_kg * a + vehicle.c0_n + vehicle.c1_n_per_mps * v + vehicle.c2_n_per_mps2 * v * v
    force = np.where(v > 0, force, 0.0)
    wheel_kw = force * v / 1000.0
    if vehicle.regenerative:
        truth = np.where(wheel_kw >= 0, wheel_kw / vehicle.efficiency, wheel_kw * vehicle.efficiency)
    else:
        truth = np.maximum(wheel_kw, 0.0) / vehicle.efficiency
    scale = noise.s0_kw + noise.s1_kw_per_mps2 * np.abs(a)
    eps = np.random.default_rng(seed).standard_t(noise.nu, size=len(v))
    observed = truth + scale * eps
    meta = {
        "generator": "synthetic-highway",
        "seed": int(seed),
        "period_s": 1.0,
        "cycle": {"duration_s": cycle.duration_s, "knots": [list(k) for k in cycle.knots]},
        "vehicle": asdict(vehicle),
        "noise": asdict(noise),
    }
    columns = {
        "time_s": np.arange(len(v), dtype=np.float64),
        "speed_kmh": speed_kmh,
        "accel_mps2": a,
        "force_n": force,
        SYNTHETIC_TRUTH: truth,
        "noise_scale_kw": scale,
        SYNTHETIC_TARGET: observed,
    }
    return SeriesFrame(columns, SYNTHETIC_TARGET, 1.0, meta=meta)
