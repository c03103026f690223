"""Series containers, min-max normalization, segment windows and CSV IO.

Segment alignment, with ``t`` the last observed state index::

    x_past   = x[t-T+1 .. t]        u_past   = u[t-T .. t-1]
    x_future = x[t+1 .. t+M]        u_future = u[t .. t+M-1]

so the control stream ``concat(u_past, u_future)`` holds ``u[t-T .. t+M-1]``
and forecasting ``x[t+i]`` may use controls up to ``u[t+i-1]``.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, ParameterError


@dataclass
class Series:
    x: np.ndarray  # (n, length) states
    u: np.ndarray  # (n, length) controls
    series_id: int
    param: float  # alpha for NARMA, omega_r for the motor

    @property
    def length(self) -> int:
        return self.x.shape[1]


@dataclass
class SeriesSet:
    series: list[Series]
    state_names: tuple[str, ...]
    control_names: tuple[str, ...]
    param_name: str

    @property
    def n(self) -> int:
        return len(self.state_names)

    def __len__(self):
        return len(self.series)

    def __iter__(self):
        return iter(self.series)


@dataclass
class MinMaxStats:
    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    @classmethod
    def fit(cls, sset: SeriesSet) -> "MinMaxStats":
        x = np.concatenate([s.x for s in sset], axis=1)
        u = np.concatenate([s.u for s in sset], axis=1)
        return cls(x.min(axis=1), x.max(axis=1), u.min(axis=1), u.max(axis=1))

    @staticmethod
    def _scale(lo, hi):
        span = hi - lo
        return np.where(span > 0, span, 1.0)

    def norm_x(self, x: np.ndarray) -> np.ndarray:
        return (x - self.x_min[:, None]) / self._scale(self.x_min, self.x_max)[:, None]

    def norm_u(self, u: np.ndarray) -> np.ndarray:
        return (u - self.u_min[:, None]) / self._scale(self.u_min, self.u_max)[:, None]

    def denorm_x(self, x: np.ndarray) -> np.ndarray:
        return x * self._scale(self.x_min, self.x_max)[:, None] + self.x_min[:, None]

    def to_dict(self) -> dict:
        return {k: [float(v) for v in getattr(self, k)] for k in ("x_min", "x_max", "u_min", "u_max")}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxStats":
        return cls(*(np.asarray(d[k], dtype=float) for k in ("x_min", "x_max", "u_min", "u_max")))


@dataclass
class SegmentBatch:
    x_past: np.ndarray  # (count, n, T)
    u_past: np.ndarray  # (count, n, T)
    u_future: np.ndarray  # (count, n, M)
    x_future: np.ndarray  # (count, n, M)
    series_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def T(self) -> int:
        return self.x_past.shape[2]

    @property
    def M(self) -> int:
        return self.x_future.shape[2]

    def __len__(self):
        return self.x_past.shape[0]

    def subset(self, idx) -> "SegmentBatch":
        return SegmentBatch(
            self.x_past[idx],
            self.u_past[idx],
            self.u_future[idx],
            self.x_future[idx],
            self.series_index[idx] if self.series_index.size else self.series_index,
            self.anchor[idx] if self.anchor.size else self.anchor,
        )

    def truncate(self, horizon: int) -> "SegmentBatch":
        if horizon > self.M:
            raise ParameterError(f"segments carry {self.M} future steps, {horizon} requested")
        return SegmentBatch(
            self.x_past,
            self.u_past,
            self.u_future[:, :, :horizon],
            self.x_future[:, :, :horizon],
            self.series_index,
            self.anchor,
        )


def make_segments(
    sset: SeriesSet | Series,
    T: int,
    M: int,
    count: int,
    seed,
    stats: MinMaxStats | None = None,
    strided: bool = False,
) -> SegmentBatch:
    """Cut ``count`` windows of T past and M future steps out of ``sset``.

    Window anchors are drawn uniformly without replacement over all valid
    (series, t) pairs, or evenly spaced when ``strided``.  Values are
    normalized with ``stats`` when given.
    """
    if isinstance(sset, Series):
        series = [sset]
    else:
        series = list(sset)
    if T < 1 or M < 1 or count < 1:
        raise ParameterError(f"need T, M, count >= 1 (got {T}, {M}, {count})")
    # valid anchors t: T <= t <= length - 1 - M
    per_series = np.array([max(s.length - T - M, 0) for s in series])
    total = int(per_series.sum())
    if total < count:
        raise ParameterError(
            f"series too short: {total} windows of extent {T + M + 1} available, {count} requested"
        )
    if strided:
        flat = np.linspace(0, total - 1, count).round().astype(int)
    else:
        rng = np.random.default_rng(seed)
        flat = np.sort(rng.choice(total, size=count, replace=False))
    offsets = np.concatenate([[0], np.cumsum(per_series)])
    sidx = np.searchsorted(offsets, flat, side="right") - 1
    anchors = flat - offsets[sidx] + T

    n = series[0].x.shape[0]
    xp = np.empty((count, n, T))
    up = np.empty((count, n, T))
    uf = np.empty((count, n, M))
    xf = np.empty((count, n, M))
    normed = {}
    for k, (si, t) in enumerate(zip(sidx, anchors)):
        if si not in normed:
            s = series[si]
            normed[si] = (stats.norm_x(s.x), stats.norm_u(s.u)) if stats else (s.x, s.u)
        x, u = normed[si]
        xp[k] = x[:, t - T + 1 : t + 1]
        up[k] = u[:, t - T : t]
        uf[k] = u[:, t : t + M]
        xf[k] = x[:, t + 1 : t + M + 1]
    return SegmentBatch(xp, up, uf, xf, sidx.astype(int), anchors.astype(int))


# ----------------------------------------------------------------------------
# CSV


def write_series_csv(path, sset: SeriesSet) -> None:
    """Write one row per time step; floats use repr so values round-trip exactly."""
    header = ["t", *sset.state_names, *sset.control_names, "series_id", sset.param_name]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in sset:
            for t in range(s.length):
                w.writerow(
                    [t, *map(repr, map(float, s.x[:, t])), *map(repr, map(float, s.u[:, t])), s.series_id, repr(float(s.param))]
                )


def read_series_csv(
    path,
    state_cols: Sequence[str],
    control_cols: Sequence[str],
    param_col: str,
    t_col: str = "t",
    id_col: str = "series_id",
    column_map: dict[str, str] | None = None,
) -> SeriesSet:
    """Parse a series CSV; ``column_map`` maps logical names to file headers."""
    column_map = column_map or {}
    logical = [t_col, *state_cols, *control_cols, id_col, param_col]
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FormatError(f"{path}: cannot open ({exc})") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        index = {}
        missing = []
        for name in logical:
            col = column_map.get(name, name)
            if col in header:
                index[name] = header.index(col)
            else:
                missing.append(name)
        if missing:
            raise FormatError(f"{path}: missing column(s) {', '.join(missing)}")
        rows: dict[int, list] = {}
        order: list[int] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            vals = {}
            for name in logical:
                cell = row[index[name]] if index[name] < len(row) else ""
                try:
                    vals[name] = float(cell)
                except ValueError:
                    raise FormatError(
                        f"{path}: row {lineno}, column {column_map.get(name, name)!r}: non-numeric value {cell!r}"
                    ) from None
                if not np.isfinite(vals[name]):
                    raise FormatError(
                        f"{path}: row {lineno}, column {column_map.get(name, name)!r}: non-finite value {cell!r}"
                    )
            sid = int(vals[id_col])
            bucket = rows.get(sid)
            if bucket is None:
                bucket = rows[sid] = []
                order.append(sid)
            elif vals[t_col] <= bucket[-1][0][t_col]:
                raise FormatError(
                    f"{path}: row {lineno}, column {column_map.get(t_col, t_col)!r}: "
                    f"time not increasing within series {sid}"
                )
            bucket.append((vals, lineno))
    series = []
    for sid in order:
        recs = [v for v, _ in rows[sid]]
        x = np.array([[r[c] for r in recs] for c in state_cols])
        u = np.array([[r[c] for r in recs] for c in control_cols])
        series.append(Series(x, u, sid, recs[0][param_col]))
    return SeriesSet(series, tuple(state_cols), tuple(control_cols), param_col)


# ----------------------------------------------------------------------------
# manifests


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_hash(obj) -> str:
    """sha256 of the canonical JSON encoding of ``obj``."""
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
