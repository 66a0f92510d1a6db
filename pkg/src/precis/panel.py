"""Monthly return panels: CSV parsing, missing-value handling, descriptive stats.

Input files are pre-trimmed Ken-French-style CSVs: a header line, a first
column of YYYYMM stamps, and one numeric column per asset. Returns are kept
in percent units throughout. Missing observations are marked in the source
files by the sentinels -99.99 and -999 and are matched by exact equality on
the parsed value, never by a magnitude threshold.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateColumnError,
    EmptyPanelError,
    InsufficientDataError,
    ParseError,
    UnfillableLeadingGapError,
)
from .linalg import sample_covariance

MISSING_SENTINELS = (-99.99, -999.0)


def _to_yyyymm(value) -> int:
    """Normalize a date spec (int 197307, '197307', or '1973-07') to YYYYMM."""
    if isinstance(value, int):
        stamp = value
    else:
        text = str(value).strip().replace("-", "")
        if not text.isdigit() or len(text) != 6:
            raise ParseError(f"cannot interpret {value!r} as a YYYYMM month")
        stamp = int(text)
    month = stamp % 100
    if not 1 <= month <= 12:
        raise ParseError(f"month out of range in date stamp {stamp}")
    return stamp


def _month_index(stamp: int) -> int:
    return (stamp // 100) * 12 + (stamp % 100 - 1)


@dataclass(frozen=True)
class ReturnsPanel:
    """Dated n x p block of monthly percent returns.

    missing_mask marks cells that were missing in the source file; after
    forward_fill the mask is preserved for audit while the values are filled.
    """

    dates: np.ndarray          # int64 YYYYMM stamps, strictly increasing monthly
    assets: list[str]
    returns: np.ndarray        # n x p, percent units
    missing_mask: np.ndarray   # n x p bool, True where the source was missing

    def __post_init__(self):
        n, p = self.returns.shape
        if n < 2 or p < 2:
            raise InsufficientDataError(f"panel must be at least 2 x 2, got {n} x {p}")
        if len(self.dates) != n or len(self.assets) != p or self.missing_mask.shape != (n, p):
            raise ParseError("inconsistent panel dimensions")
        idx = np.array([_month_index(int(d)) for d in self.dates])
        if np.any(np.diff(idx) != 1):
            raise ParseError("dates must be strictly increasing with monthly cadence")
        if not np.all(np.isfinite(self.returns[~self.missing_mask])):
            raise ParseError("non-missing cells must be finite")

    @property
    def n(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]

    @property
    def n_missing(self) -> int:
        return int(self.missing_mask.sum())

    @property
    def is_sanitized(self) -> bool:
        return bool(np.all(np.isfinite(self.returns)))


@dataclass(frozen=True)
class DescriptiveStats:
    """Full-sample summary: dimensionality, correlation extremes, per-asset stats."""

    p: int
    n: int
    dim_ratio: float
    max_corr: float
    mean_abs_corr: float
    per_asset: list[tuple[float, float, float]]  # (mean, variance, sharpe)
    assets: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "p": self.p,
            "n": self.n,
            "dim_ratio": self.dim_ratio,
            "max_corr": self.max_corr,
            "mean_abs_corr": self.mean_abs_corr,
            "per_asset": [
                {"asset": name, "mean": m, "variance": v, "sharpe": s}
                for name, (m, v, s) in zip(self.assets, self.per_asset)
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def parse_panel(source, date_range=None) -> ReturnsPanel:
    """Parse a header-bearing returns CSV into a panel.

    source may be a byte stream, text stream, bytes, or str content. The
    first column must hold YYYYMM integers; every other column is a numeric
    asset return. Cells equal to -99.99 or -999 (exact match after parse)
    are flagged missing and stored as NaN. date_range, when given, is an
    inclusive (start, end) pair of YYYYMM-like specs; rows outside it are
    dropped.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    elif hasattr(source, "read"):
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    else:
        raise ParseError(f"unsupported source type {type(source).__name__}")

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyPanelError("source is empty") from None
    header = [h.strip() for h in header]
    if len(header) < 3:
        raise ParseError("need a date column plus at least 2 asset columns", row=1)
    assets = header[1:]
    width = len(header)

    lo = hi = None
    if date_range is not None:
        start, end = date_range
        lo = _to_yyyymm(start) if start is not None else None
        hi = _to_yyyymm(end) if end is not None else None

    dates: list[int] = []
    rows: list[list[float]] = []
    mask_rows: list[list[bool]] = []
    for lineno, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, got {len(fields)}", row=lineno)
        stamp_text = fields[0].strip()
        if not stamp_text.lstrip("-").isdigit() or len(stamp_text) != 6:
            raise ParseError(f"date column must hold YYYYMM integers, got {stamp_text!r}", row=lineno)
        stamp = _to_yyyymm(int(stamp_text))
        if (lo is not None and stamp < lo) or (hi is not None and stamp > hi):
            continue
        values: list[float] = []
        missing: list[bool] = []
        for col, cell in enumerate(fields[1:], start=2):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"unparseable numeric {cell!r} in column {col}", row=lineno) from None
            if value in MISSING_SENTINELS:
                values.append(math.nan)
                missing.append(True)
            else:
                if not math.isfinite(value):
                    raise ParseError(f"non-finite value {cell!r} in column {col}", row=lineno)
                values.append(value)
                missing.append(False)
        dates.append(stamp)
        rows.append(values)
        mask_rows.append(missing)

    if not rows:
        raise EmptyPanelError("no rows within the requested date range")
    return ReturnsPanel(
        dates=np.asarray(dates, dtype=np.int64),
        assets=assets,
        returns=np.asarray(rows, dtype=float),
        missing_mask=np.asarray(mask_rows, dtype=bool),
    )


def forward_fill(panel: ReturnsPanel) -> ReturnsPanel:
    """Replace each missing cell with the last preceding value in its column.

    The original missing mask is preserved for audit. A missing value with
    no predecessor cannot be filled and raises, naming the column.
    """
    if not panel.missing_mask.any():
        return panel
    leading = panel.missing_mask[0]
    if leading.any():
        raise UnfillableLeadingGapError(panel.assets[int(np.argmax(leading))])
    filled = panel.returns.copy()
    for j in np.flatnonzero(panel.missing_mask.any(axis=0)):
        col = filled[:, j]
        for i in np.flatnonzero(panel.missing_mask[:, j]):
            col[i] = col[i - 1]
    return ReturnsPanel(
        dates=panel.dates,
        assets=panel.assets,
        returns=filled,
        missing_mask=panel.missing_mask,
    )


def describe(panel: ReturnsPanel) -> DescriptiveStats:
    """Full-sample descriptive statistics of a sanitized panel.

    Correlations come from the n-1 sample covariance; the diagonal is
    excluded from the max / mean-absolute summaries. Per-asset Sharpe is
    mean over standard deviation with the risk-free rate taken as zero.
    """
    if not panel.is_sanitized:
        raise InsufficientDataError("panel still has missing cells; forward_fill first")
    cov = sample_covariance(panel.returns)
    variances = np.diag(cov)
    if np.any(variances <= 0):
        raise DegenerateColumnError(
            f"zero-variance column {panel.assets[int(np.argmin(variances))]!r}"
        )
    std = np.sqrt(variances)
    corr = cov / np.outer(std, std)
    off = corr[~np.eye(panel.p, dtype=bool)]
    means = panel.returns.mean(axis=0)
    per_asset = [
        (float(m), float(v), float(m / s)) for m, v, s in zip(means, variances, std)
    ]
    return DescriptiveStats(
        p=panel.p,
        n=panel.n,
        dim_ratio=panel.p / panel.n,
        max_corr=float(off.max()),
        mean_abs_corr=float(np.abs(off).mean()),
        per_asset=per_asset,
        assets=list(panel.assets),
    )
