"""Parsing and normalization of SPC-style tornado records.

Input files are comma-separated with a header row naming at least
``yr, loss, slat, slon, elat, elon, len, wid`` (the post-2016 numeric-dollar
convention for ``loss``). Losses are normalized per unit of affected area,
``y = loss / (len * wid)``, in the file's native units; the covariates are
the mean latitude and mean longitude of the track. Malformed rows are
collected into a rejects report rather than silently dropped.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dists import LossSample
from .errors import DataError

REQUIRED_COLUMNS = ("yr", "loss", "slat", "slon", "elat", "elon", "len", "wid")

LAT_RANGE = (15.0, 75.0)
LON_RANGE = (-180.0, 0.0)


@dataclass(frozen=True)
class TornadoRecord:
    year: int
    loss: float
    slat: float
    slon: float
    elat: float
    elon: float
    len: float
    wid: float
    raw_id: str


@dataclass(frozen=True)
class ParseReport:
    records: Tuple[TornadoRecord, ...]
    rejects: Tuple[Tuple[str, str], ...]  # (raw row, reason)


def _check_record_fields(row: dict) -> Optional[str]:
    """Reason the row is invalid, or None if it is acceptable."""
    for key in ("slat", "elat"):
        if not LAT_RANGE[0] <= row[key] <= LAT_RANGE[1]:
            return f"{key} out of range"
    for key in ("slon", "elon"):
        if not LON_RANGE[0] <= row[key] <= LON_RANGE[1]:
            return f"{key} out of range"
    if row["len"] < 0 or row["wid"] < 0:
        return "negative track geometry"
    if row["loss"] < 0:
        return "negative loss"
    return None


def parse_tornado_csv(path) -> ParseReport:
    """Parse an SPC-style file into records plus a rejects report.

    A missing required column is a hard error; a row that fails to parse
    (or carries out-of-range coordinates) becomes a reject with a reason.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    records: List[TornadoRecord] = []
    rejects: List[Tuple[str, str]] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("input file is empty (no header row)")
        columns = {name.strip(): i for i, name in enumerate(header)}
        for required in REQUIRED_COLUMNS:
            if required not in columns:
                raise DataError(f"required column {required!r} missing from header")
        id_col = columns.get("om")

        for line_no, raw in enumerate(reader, start=1):
            if not raw or all(not cell.strip() for cell in raw):
                continue
            raw_text = ",".join(raw)
            if len(raw) < len(header):
                rejects.append((raw_text, "short row"))
                continue
            parsed = {}
            reason = None
            for key in REQUIRED_COLUMNS:
                cell = raw[columns[key]].strip()
                if not cell:
                    reason = f"missing {key}"
                    break
                try:
                    parsed[key] = float(cell)
                except ValueError:
                    reason = f"unparseable {key}"
                    break
            if reason is None:
                reason = _check_record_fields(parsed)
            if reason is not None:
                rejects.append((raw_text, reason))
                continue
            raw_id = raw[id_col].strip() if id_col is not None else str(line_no)
            records.append(
                TornadoRecord(
                    year=int(parsed["yr"]),
                    loss=parsed["loss"],
                    slat=parsed["slat"],
                    slon=parsed["slon"],
                    elat=parsed["elat"],
                    elon=parsed["elon"],
                    len=parsed["len"],
                    wid=parsed["wid"],
                    raw_id=raw_id,
                )
            )
    return ParseReport(tuple(records), tuple(rejects))


def write_records_csv(records: Sequence[TornadoRecord], path) -> None:
    """Serialize records back to the SPC-style column set (round-trippable)."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["om", "yr", "loss", "slat", "slon", "elat", "elon", "len", "wid"])
        for rec in records:
            writer.writerow(
                [
                    rec.raw_id,
                    rec.year,
                    repr(rec.loss),
                    repr(rec.slat),
                    repr(rec.slon),
                    repr(rec.elat),
                    repr(rec.elon),
                    repr(rec.len),
                    repr(rec.wid),
                ]
            )


@dataclass(frozen=True)
class BuildResult:
    """Normalized sample plus per-filter removal counts."""

    sample: LossSample
    years: np.ndarray
    n_input: int
    n_outside_years: int
    n_nonpositive_loss: int
    n_zero_area: int

    @property
    def n_kept(self) -> int:
        return len(self.sample)


def build_sample(records: Sequence[TornadoRecord], year_min: int, year_max: int) -> BuildResult:
    """Normalize records into ``(y, w)`` rows, order-preserving.

    Keeps rows with ``year_min <= year <= year_max``, positive loss and
    positive affected area; ``y = loss / (len * wid)`` and
    ``w = ((slat + elat)/2, (slon + elon)/2)``.
    """
    if year_min > year_max:
        raise DataError("year_min must be <= year_max")
    n_outside = n_nonpos = n_zero_area = 0
    ys: List[float] = []
    ws: List[Tuple[float, float]] = []
    years: List[int] = []
    for rec in records:
        if not year_min <= rec.year <= year_max:
            n_outside += 1
            continue
        if rec.loss <= 0:
            n_nonpos += 1
            continue
        area = rec.len * rec.wid
        if area <= 0:
            n_zero_area += 1
            continue
        ys.append(rec.loss / area)
        ws.append(((rec.slat + rec.elat) / 2.0, (rec.slon + rec.elon) / 2.0))
        years.append(rec.year)
    if not ys:
        raise DataError(
            f"no usable rows in {year_min}-{year_max} "
            f"(outside years: {n_outside}, non-positive loss: {n_nonpos}, zero area: {n_zero_area})"
        )
    sample = LossSample(np.array(ys), np.array(ws))
    return BuildResult(
        sample=sample,
        years=np.array(years, dtype=int),
        n_input=len(records),
        n_outside_years=n_outside,
        n_nonpositive_loss=n_nonpos,
        n_zero_area=n_zero_area,
    )
