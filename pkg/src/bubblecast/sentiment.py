"""Headline sentiment: scored records, polarity scores, per-period aggregates.

The transformer scorer lives outside this package. Records arrive already
carrying class probabilities, either from a scored-records CSV or from any
object implementing :class:`SentimentScorer`.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Literal, Protocol, Sequence, Union

import numpy as np

from .errors import IngestError, ValidationError
from .timeseries import Grid, parse_date, write_csv

log = logging.getLogger(__name__)

PROB_TOL = 1e-6


@dataclass(frozen=True)
class SentimentRecord:
    timestamp: np.datetime64
    headline: str
    p_neg: float
    p_pos: float
    p_neu: float

    def __post_init__(self):
        object.__setattr__(self, "timestamp", parse_date(self.timestamp))
        probs = (self.p_neg, self.p_pos, self.p_neu)
        if not all(math.isfinite(p) and 0.0 <= p <= 1.0 for p in probs):
            raise ValidationError(f"probabilities must lie in [0, 1]: {probs}")
        if abs(sum(probs) - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities must sum to 1: {probs}")


@dataclass(frozen=True)
class PolarityAggregate:
    period: np.datetime64
    total: float
    average: float
    count: int


class Buckets(list):
    """Per-period aggregates; ``dropped`` counts records before the first period."""

    dropped: int = 0


class SentimentScorer(Protocol):
    """Maps a headline to ``(p_neg, p_pos, p_neu)``."""

    def __call__(self, headline: str) -> tuple[float, float, float]: ...


def polarity_score(record: SentimentRecord) -> float:
    """Expected class value with Negative = -1, Positive = 1, Neutral = 0."""
    return record.p_pos - record.p_neg


def total_polarity(records: Iterable[SentimentRecord]) -> float:
    return math.fsum(polarity_score(r) for r in records)


def average_polarity(records: Sequence[SentimentRecord]) -> float:
    """Total divided by the number of records; 0 for an empty list."""
    records = list(records)
    if not records:
        return 0.0
    return total_polarity(records) / len(records)


def bucket_by_period(
    records: Iterable[SentimentRecord],
    grid: Grid,
    mode: Literal["total", "average"] = "average",
) -> Buckets:
    """Assign each record to the latest grid period starting on or before its date.

    Records dated before the first period are dropped (logged with a count).
    ``mode`` only selects which aggregate :func:`aggregate_values` reports; both
    are always filled in.
    """
    if mode not in ("total", "average"):
        raise ValueError(f"mode must be 'total' or 'average', got {mode!r}")
    records = list(records)
    ts = grid.timestamps
    buckets: list[list[float]] = [[] for _ in range(len(ts))]
    dropped = 0
    if records:
        dates = np.array([r.timestamp for r in records], dtype="datetime64[D]")
        idx = np.searchsorted(ts, dates, side="right") - 1
        for r, i in zip(records, idx):
            if i < 0:
                dropped += 1
            else:
                buckets[i].append(polarity_score(r))
    if dropped:
        log.warning("dropped %d sentiment records dated before %s", dropped, ts[0])
    out = Buckets()
    out.dropped = dropped
    for period, scores in zip(ts, buckets):
        total = math.fsum(scores)
        n = len(scores)
        out.append(PolarityAggregate(period, total, total / n if n else 0.0, n))
    return out


def aggregate_values(aggs: Sequence[PolarityAggregate], mode: str = "average") -> np.ndarray:
    return np.array([a.average if mode == "average" else a.total for a in aggs])


_HASH_RE = re.compile(r"[0-9a-f]{16}")


def headline_hash(headline: str) -> str:
    """Stable 16-hex-digit key; records loaded from a scored file already hold one."""
    if _HASH_RE.fullmatch(headline):
        return headline
    return hashlib.sha1(headline.encode("utf-8")).hexdigest()[:16]


def score_headlines(items: Iterable[tuple], scorer: SentimentScorer) -> list[SentimentRecord]:
    """Run ``scorer`` over ``(timestamp, headline)`` pairs."""
    out = []
    for ts, headline in items:
        p_neg, p_pos, p_neu = scorer(headline)
        out.append(SentimentRecord(ts, headline, float(p_neg), float(p_pos), float(p_neu)))
    return out


def _dig(obj, path: str):
    for part in path.split("."):
        if not isinstance(obj, dict) or part not in obj:
            raise KeyError(path)
        obj = obj[part]
    return obj


@dataclass
class ArchiveParse:
    items: list
    skipped: int

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)


def parse_news_archive(
    source: Union[bytes, str, BinaryIO, Path],
    docs_path: str = "response.docs",
    date_field: str = "pub_date",
    headline_field: str = "headline.main",
) -> ArchiveParse:
    """Extract ``(date, headline)`` pairs from an archive/search JSON response.

    Field paths are dotted; the defaults match the NYT archive response.
    Documents missing either field, or with an unparseable date or empty
    headline, are skipped and counted.
    """
    if isinstance(source, Path):
        raw = source.read_bytes()
    elif isinstance(source, (bytes, bytearray, str)):
        raw = source
    else:
        raw = source.read()
    try:
        payload = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IngestError(f"news archive is not valid JSON: {exc}") from None
    try:
        docs = _dig(payload, docs_path)
    except KeyError:
        raise IngestError(f"no document array at {docs_path!r}") from None
    if not isinstance(docs, list):
        raise IngestError(f"{docs_path!r} is not an array")
    items, skipped = [], 0
    for doc in docs:
        try:
            d = parse_date(_dig(doc, date_field))
            h = _dig(doc, headline_field)
            if not isinstance(h, str) or not h.strip():
                raise KeyError(headline_field)
        except (KeyError, ValueError, TypeError):
            skipped += 1
            continue
        items.append((d, h.strip()))
    if skipped:
        log.info("skipped %d malformed news documents", skipped)
    return ArchiveParse(items, skipped)


SCORED_COLUMNS = ("date", "headline_hash", "p_neg", "p_pos", "p_neu")


def read_scored_records(source: Union[str, Path, bytes]) -> list[SentimentRecord]:
    """Load a ``date,headline_hash,p_neg,p_pos,p_neu`` file."""
    raw = Path(source).read_bytes() if isinstance(source, (str, Path)) else source
    reader = csv.DictReader(io.StringIO(raw.decode("utf-8-sig")))
    missing = set(SCORED_COLUMNS) - set(reader.fieldnames or [])
    if missing:
        raise IngestError(f"scored-records file lacks columns {sorted(missing)}")
    out = []
    for i, row in enumerate(reader, start=1):
        try:
            out.append(SentimentRecord(row["date"], row["headline_hash"],
                                       float(row["p_neg"]), float(row["p_pos"]), float(row["p_neu"])))
        except (ValueError, ValidationError) as exc:
            raise IngestError(str(exc), row=i) from None
    return out


def write_scored_records(path: Union[str, Path], records: Sequence[SentimentRecord]) -> None:
    write_csv(path, {
        "date": [str(r.timestamp) for r in records],
        "headline_hash": [headline_hash(r.headline) for r in records],
        "p_neg": [r.p_neg for r in records],
        "p_pos": [r.p_pos for r in records],
        "p_neu": [r.p_neu for r in records],
    }, float_fmt="{:.12g}")
