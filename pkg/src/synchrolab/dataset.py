"""Recording ingestion, cohort assembly, segment slicing, and screening.

Input recordings are CSV files (`timestamp_ms,value`). After ingestion a
recording is a uniform grid: sample index plus rate; timestamps are only
used to detect rate mismatches and to carry the session-start offset.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    EmptyCohort,
    EmptyFile,
    MalformedRow,
    ManifestError,
    OutOfRange,
    RateMismatch,
)

#: variance below this is treated as a flat-line recording (screening heuristic)
FLATLINE_EPSILON = 1e-9

#: tolerated relative deviation of the median inter-sample interval
RATE_TOLERANCE = 0.05

#: tolerated relative deviation of recording length vs the cohort duration
LENGTH_TOLERANCE = 0.01

MANIFEST_SCHEMA_VERSION = 1


class ChannelKind(str, Enum):
    """Sensor channel; nominal rates are manifest-overridable."""

    EDA = "EDA"
    BVP = "BVP"

    @property
    def nominal_rate_hz(self) -> float:
        return {ChannelKind.EDA: 10.0, ChannelKind.BVP: 200.0}[self]


@dataclass(frozen=True)
class Recording:
    """One subject's single-channel signal on a uniform sample grid.

    `samples` is a float64 array (EDA in microsiemens, BVP in raw sensor
    units); `t0_offset_s` is the offset of the first sample from the
    cohort clock zero. Treat instances as immutable.
    """

    subject_id: str
    channel: ChannelKind
    sample_rate_hz: float
    samples: np.ndarray
    t0_offset_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.size == 0:
            raise EmptyFile(f"recording {self.subject_id}: no samples")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        """Nominal covered time: one sample period per sample."""
        return self.n_samples / self.sample_rate_hz

    def replace_samples(self, samples: np.ndarray) -> "Recording":
        return Recording(self.subject_id, self.channel, self.sample_rate_hz,
                         np.asarray(samples, dtype=np.float64), self.t0_offset_s)


@dataclass(frozen=True)
class SegmentSpec:
    """Ordered, non-overlapping (label, start_s, end_s) windows."""

    segments: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        prev_end = 0.0
        for label, start, end in self.segments:
            if not (start < end):
                raise ValueError(f"segment {label}: start {start} >= end {end}")
            if start < prev_end - 1e-12:
                raise ValueError(f"segment {label}: overlaps previous segment")
            if start < 0:
                raise ValueError(f"segment {label}: negative start")
            prev_end = end

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(seg[0] for seg in self.segments)

    def with_overall(self, duration_s: float) -> tuple[tuple[str, float, float], ...]:
        """Segments plus the implicit full-duration window."""
        return self.segments + (("overall", 0.0, float(duration_s)),)

    @classmethod
    def default(cls) -> "SegmentSpec":
        return cls((("0-100s", 0.0, 100.0),
                    ("100-160s", 100.0, 160.0),
                    ("160-260s", 160.0, 260.0)))


@dataclass(frozen=True)
class Cohort:
    """A labeled set of same-channel recordings sharing one event timeline."""

    label: str
    recordings: tuple[Recording, ...]
    duration_s: float
    segments: SegmentSpec = field(default_factory=SegmentSpec.default)

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        kinds = {rec.channel for rec in self.recordings}
        if len(kinds) > 1:
            raise ValueError(f"cohort {self.label}: mixed channel kinds {kinds}")

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(rec.subject_id for rec in self.recordings)

    def __len__(self):
        return len(self.recordings)


# --- ingestion ---------------------------------------------------------------

def parse_recording(stream, channel: ChannelKind, expected_rate_hz: float,
                    subject_id: str = "") -> Recording:
    """Parse a `timestamp_ms,value` CSV stream into a Recording.

    Deterministic: identical bytes yield identical recordings. Raises
    EmptyFile for no data rows, MalformedRow(index) for an unparseable
    row (0-based data row index), and RateMismatch when the median
    inter-sample interval deviates more than 5% from 1/expected_rate_hz.
    """
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    raw = stream.read()
    if isinstance(raw, bytes):
        text = raw.decode("utf-8")
    else:
        text = raw
    lines = text.split("\n")
    times_ms: list[float] = []
    values: list[float] = []
    row_index = 0
    for lineno, line in enumerate(lines):
        line = line.strip("\r").strip()
        if not line:
            continue
        if lineno == 0 and line.lower().replace(" ", "") == "timestamp_ms,value":
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedRow(row_index, f"expected 2 fields, got {len(parts)}")
        try:
            t = float(parts[0])
            v = float(parts[1])
        except ValueError:
            raise MalformedRow(row_index, line) from None
        if not (math.isfinite(t) and math.isfinite(v)):
            raise MalformedRow(row_index, "non-finite value")
        times_ms.append(t)
        values.append(v)
        row_index += 1
    if not values:
        raise EmptyFile("no data rows")
    if len(times_ms) >= 2:
        intervals = np.diff(np.asarray(times_ms)) / 1000.0
        median_dt = float(np.median(intervals))
        expected_dt = 1.0 / expected_rate_hz
        if median_dt <= 0 or abs(median_dt - expected_dt) > RATE_TOLERANCE * expected_dt:
            raise RateMismatch(
                f"median interval {median_dt:.6g} s vs expected {expected_dt:.6g} s")
    return Recording(subject_id=subject_id, channel=channel,
                     sample_rate_hz=expected_rate_hz,
                     samples=np.asarray(values, dtype=np.float64),
                     t0_offset_s=times_ms[0] / 1000.0)


def load_recording(path: str | Path, channel: ChannelKind,
                   expected_rate_hz: float, subject_id: str | None = None) -> Recording:
    path = Path(path)
    if subject_id is None:
        subject_id = path.stem
    with open(path, "rb") as fh:
        return parse_recording(fh, channel, expected_rate_hz, subject_id=subject_id)


def write_recording_csv(rec: Recording, path: str | Path) -> None:
    """Write the standard `timestamp_ms,value` CSV (UTF-8, LF)."""
    path = Path(path)
    dt_ms = 1000.0 / rec.sample_rate_hz
    lines = ["timestamp_ms,value"]
    for i, v in enumerate(rec.samples):
        t = rec.t0_offset_s * 1000.0 + i * dt_ms
        t_txt = str(int(round(t))) if abs(t - round(t)) < 1e-9 else repr(t)
        lines.append(f"{t_txt},{v!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


# --- slicing -----------------------------------------------------------------

def segment_indices(start_s: float, end_s: float, rate_hz: float) -> tuple[int, int]:
    """First sample index and sample count for a [start, end) window."""
    i0 = int(math.ceil(start_s * rate_hz - 1e-9))
    count = int(math.floor((end_s - start_s) * rate_hz + 1e-9))
    return i0, count


def slice_segment(rec: Recording, seg: tuple[float, float]) -> Recording:
    """Samples with time in [start_s, end_s); length floor((end-start)*rate)."""
    start_s, end_s = seg
    if start_s < 0 or not (start_s < end_s):
        raise OutOfRange(f"invalid segment ({start_s}, {end_s})")
    if end_s > rec.duration_s + 1e-9:
        raise OutOfRange(
            f"segment ({start_s}, {end_s}) exceeds recording duration {rec.duration_s:.6g} s")
    i0, count = segment_indices(start_s, end_s, rec.sample_rate_hz)
    if i0 + count > rec.n_samples:
        raise OutOfRange(
            f"segment ({start_s}, {end_s}) needs {i0 + count} samples, "
            f"recording has {rec.n_samples}")
    return Recording(rec.subject_id, rec.channel, rec.sample_rate_hz,
                     rec.samples[i0:i0 + count],
                     t0_offset_s=rec.t0_offset_s + start_s)


# --- screening ---------------------------------------------------------------

@dataclass(frozen=True)
class RecordingFlags:
    subject_id: str
    flags: tuple[str, ...]

    @property
    def clean(self) -> bool:
        return not self.flags


@dataclass(frozen=True)
class ValidationReport:
    cohort_label: str
    entries: tuple[RecordingFlags, ...]

    @property
    def n_flagged(self) -> int:
        return sum(1 for e in self.entries if e.flags)

    def kept_mask(self, keep_flagged: bool = False) -> np.ndarray:
        if keep_flagged:
            return np.ones(len(self.entries), dtype=bool)
        return np.array([e.clean for e in self.entries], dtype=bool)

    def to_dict(self) -> dict:
        return {
            "cohort": self.cohort_label,
            "n_recordings": len(self.entries),
            "n_flagged": self.n_flagged,
            "entries": [{"subject": e.subject_id, "flags": list(e.flags)}
                        for e in self.entries],
        }


def validate_cohort(cohort: Cohort) -> ValidationReport:
    """Screen recordings: length vs cohort duration (1%), flat-line, NaN.

    Report-only; flagged recordings are excluded from downstream group
    averages unless the caller keeps them.
    """
    if not cohort.recordings:
        raise EmptyCohort(f"cohort {cohort.label} has no recordings")
    entries = []
    for rec in cohort.recordings:
        flags = []
        if abs(rec.duration_s - cohort.duration_s) > LENGTH_TOLERANCE * cohort.duration_s:
            flags.append("length")
        if np.any(~np.isfinite(rec.samples)):
            flags.append("nan")
        else:
            if float(np.var(rec.samples)) < FLATLINE_EPSILON:
                flags.append("flatline")
        entries.append(RecordingFlags(rec.subject_id, tuple(flags)))
    return ValidationReport(cohort.label, tuple(entries))


# --- study manifest ----------------------------------------------------------

@dataclass(frozen=True)
class CohortSource:
    """Where one cohort's files live and how to read them."""

    label: str
    channel: ChannelKind
    rate_hz: float
    files: tuple[Path, ...]

    def load(self, duration_s: float, segments: SegmentSpec) -> Cohort:
        recs = tuple(load_recording(p, self.channel, self.rate_hz) for p in self.files)
        return Cohort(self.label, recs, duration_s, segments)


@dataclass(frozen=True)
class StudyManifest:
    """Parsed study manifest; analysis configs stay as validated mappings.

    The typed config objects (PreprocessConfig, DtwConfig, ...) are built
    by their owning modules via `from_mapping`, keeping this module a leaf.
    """

    schema_version: int
    reference: CohortSource
    probes: tuple[CohortSource, ...]
    duration_s: float
    segments: SegmentSpec
    preprocess: dict
    dtw: dict
    stats: dict
    stages: dict
    seed: int | None
    base_dir: Path
    raw: dict

    def config_hash(self) -> str:
        import hashlib
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _cohort_source(entry: dict, base_dir: Path, role: str) -> CohortSource:
    for key in ("label", "files"):
        if key not in entry:
            raise ManifestError(f"{role} cohort missing '{key}'")
    channel = ChannelKind(entry.get("channel", "EDA"))
    rate = float(entry.get("rate_hz", channel.nominal_rate_hz))
    files = []
    for f in entry["files"]:
        p = (base_dir / f).resolve() if not Path(f).is_absolute() else Path(f)
        if not p.is_file():
            raise ManifestError(f"{role} cohort '{entry['label']}': file not found: {p}")
        files.append(p)
    if not files:
        raise ManifestError(f"{role} cohort '{entry['label']}' lists no files")
    return CohortSource(entry["label"], channel, rate, tuple(files))


def load_manifest(path: str | Path) -> StudyManifest:
    """Load and validate a study manifest JSON document."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    version = raw.get("schema_version", MANIFEST_SCHEMA_VERSION)
    if version != MANIFEST_SCHEMA_VERSION:
        raise ManifestError(f"unsupported schema_version {version}")
    if "reference" not in raw:
        raise ManifestError("manifest missing 'reference'")
    if not raw.get("probes"):
        raise ManifestError("manifest needs at least one probe cohort")
    base_dir = path.parent
    reference = _cohort_source(raw["reference"], base_dir, "reference")
    probes = tuple(_cohort_source(p, base_dir, "probe") for p in raw["probes"])
    duration_s = float(raw.get("duration_s", 260.0))
    if "segments" in raw:
        segs = tuple((s["label"], float(s["start_s"]), float(s["end_s"]))
                     for s in raw["segments"])
        segments = SegmentSpec(segs)
    else:
        segments = SegmentSpec.default()
    return StudyManifest(
        schema_version=version,
        reference=reference,
        probes=probes,
        duration_s=duration_s,
        segments=segments,
        preprocess=dict(raw.get("preprocess", {})),
        dtw=dict(raw.get("dtw", {})),
        stats=dict(raw.get("stats", {})),
        stages=dict(raw.get("stages", {})),
        seed=raw.get("seed"),
        base_dir=base_dir,
        raw=raw,
    )
