"""From parsed MIDI pieces to four-measure source/target segment pairs.

Pipeline per piece: monophonize each track (or reject it), pair every two
surviving tracks, cut each pair into measure-aligned windows, drop windows
where either part has fewer than 10 notes. Across the collection: split by
track pair into train/validation, then transpose the training side into all
twelve keys.
"""

from __future__ import annotations

import csv
import itertools
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyResult
from .midi_io import REST, MidiPiece, NoteEvent, RawTrack, from_milli, to_milli, track_to_notes

SHIFTS = tuple(range(-5, 7))

Meter = tuple[int, int]
MeterMap = list[tuple[float, int, int]]


@dataclass
class CorpusConfig:
    val_fraction: float = 0.25
    polyphony_threshold: float = 0.2
    both_directions: bool = False
    seed: int = 0
    bars: int = 4
    min_notes: int = 10


@dataclass(frozen=True)
class Rejected:
    """A track too polyphonic to reduce to one line."""

    ratio: float
    threshold: float


@dataclass
class TrackPair:
    piece_id: str
    source: list[NoteEvent]
    target: list[NoteEvent]
    meter_map: MeterMap = field(default_factory=lambda: [(0.0, 4, 4)])
    source_index: int = 0
    target_index: int = 1

    @property
    def pair_id(self) -> str:
        return f"{self.piece_id}:{self.source_index}-{self.target_index}"


@dataclass
class SegmentPair:
    pair_id: str
    segment_index: int
    source: list[NoteEvent]
    target: list[NoteEvent]
    bars: int = 4
    meter: Meter = (4, 4)
    transposition: int = 0
    piece_id: str = ""
    # (onset_beats, numerator, denominator) of meter changes inside the window
    meter_changes: tuple[tuple[float, int, int], ...] = ()

    @property
    def key(self) -> str:
        return f"{self.pair_id}#{self.segment_index}@{self.transposition:+d}"


def note_count(notes: Iterable[NoteEvent]) -> int:
    return sum(1 for n in notes if not n.is_rest)


# ---------------------------------------------------------------------------
# monophonization


def polyphony_ratio(track: RawTrack) -> float:
    """Fraction of distinct onset times that start a chord other than octaves."""
    groups: dict[int, set[int]] = defaultdict(set)
    for on, _off, pitch, _v in track.events:
        groups[on].add(pitch)
    if not groups:
        return 0.0
    chords = sum(1 for ps in groups.values() if len({p % 12 for p in ps}) > 1)
    return chords / len(groups)


def monophonize(track: RawTrack, ppq: int, threshold: float = 0.2) -> list[NoteEvent] | Rejected:
    """Reduce a track to a single line, keeping the top voice.

    Notes starting together collapse to the highest. A higher note entering
    over a sounding lower one cuts it short; a lower note entering under a
    sounding higher one is dropped.
    """
    ratio = polyphony_ratio(track)
    if ratio > threshold:
        return Rejected(ratio, threshold)
    line: list[tuple[int, int, int, int]] = []
    for on, off, pitch, vel in track.events:  # sorted by onset, then descending pitch
        if line and line[-1][0] == on:
            continue
        if line and on < line[-1][1]:
            if pitch < line[-1][2]:
                continue
            p_on, _p_off, p_pitch, p_vel = line[-1]
            line[-1] = (p_on, on, p_pitch, p_vel)
        line.append((on, off, pitch, vel))
    return track_to_notes(line, ppq)


# ---------------------------------------------------------------------------
# pairing and segmentation


def enumerate_pairs(tracks: Sequence[list[NoteEvent]], piece_id: str = "",
                    meter_map: MeterMap | None = None,
                    both_directions: bool = False) -> list[TrackPair]:
    """All C(k, 2) track pairs, lower index as source, in lexicographic order."""
    if len(tracks) < 2:
        raise EmptyResult(f"{piece_id or 'piece'}: need at least 2 tracks, got {len(tracks)}")
    mm = list(meter_map) if meter_map else [(0.0, 4, 4)]
    pairs = []
    for i, j in itertools.combinations(range(len(tracks)), 2):
        pairs.append(TrackPair(piece_id, list(tracks[i]), list(tracks[j]), mm, i, j))
        if both_directions:
            pairs.append(TrackPair(piece_id, list(tracks[j]), list(tracks[i]), mm, j, i))
    return pairs


def measure_length(meter: Meter) -> float:
    num, den = meter
    return num * 4 / den


def measure_starts(meter_map: MeterMap, end: float) -> list[tuple[int, Meter]]:
    """Start (milli-beats) and meter of every complete measure before ``end``.

    The grid is anchored at beat 0. A meter change restarts the grid at its
    own onset, cutting any measure in progress short.
    """
    end_m = to_milli(end)
    changes = sorted((to_milli(b), (n, d)) for b, n, d in meter_map)
    if not changes or changes[0][0] != 0:
        changes.insert(0, (0, (4, 4)))
    out = []
    for k, (start, meter) in enumerate(changes):
        region_end = changes[k + 1][0] if k + 1 < len(changes) else None
        length = to_milli(measure_length(meter))
        pos = start
        while pos < end_m and (region_end is None or pos < region_end):
            stop = pos + length if region_end is None else min(pos + length, region_end)
            if stop > end_m:
                break
            out.append((pos, meter))
            pos = stop
    return out


def _window(notes: Sequence[NoteEvent], start: int, stop: int) -> list[NoteEvent]:
    """Notes clipped to ``[start, stop)`` milli-beats, rebased, with rests filling gaps."""
    out: list[NoteEvent] = []
    cursor = start

    def emit(pitch: int, a: int, b: int) -> None:
        if out and pitch == REST and out[-1].is_rest:
            prev = out.pop()
            a = to_milli(prev.onset) + start
        out.append(NoteEvent(pitch, from_milli(b - a), from_milli(a - start)))

    for n in notes:
        a = to_milli(n.onset)
        b = a + to_milli(n.duration)
        if b <= start or a >= stop:
            continue
        a, b = max(a, start), min(b, stop)
        if a > cursor:
            emit(REST, cursor, a)
        emit(n.pitch, a, b)
        cursor = b
    if cursor < stop:
        emit(REST, cursor, stop)
    return out


def _end(notes: Sequence[NoteEvent]) -> float:
    return max((n.onset + n.duration for n in notes), default=0.0)


def segment(pair: TrackPair, bars: int = 4) -> list[SegmentPair]:
    """Cut a track pair into consecutive, non-overlapping ``bars``-measure windows.

    A note held across a window boundary is truncated there; the remainder
    opens the next window as a note of the same pitch. A trailing window with
    fewer than ``bars`` complete measures is dropped.
    """
    end = max(_end(pair.source), _end(pair.target))
    measures = measure_starts(pair.meter_map, end)
    changes = [(to_milli(b), n, d) for b, n, d in pair.meter_map]
    out = []
    for idx in range(len(measures) // bars):
        first = measures[idx * bars]
        last_start, last_meter = measures[idx * bars + bars - 1]
        start = first[0]
        stop = last_start + to_milli(measure_length(last_meter))
        inner = tuple((from_milli(m - start), n, d) for m, n, d in changes if start < m < stop)
        out.append(SegmentPair(
            pair_id=pair.pair_id,
            segment_index=idx,
            source=_window(pair.source, start, stop),
            target=_window(pair.target, start, stop),
            bars=bars,
            meter=first[1],
            piece_id=pair.piece_id,
            meter_changes=inner,
        ))
    return out


def filter_segments(segments: Iterable[SegmentPair], min_notes: int = 10) -> list[SegmentPair]:
    """Keep segments where both parts have at least ``min_notes`` sounding notes."""
    return [s for s in segments
            if note_count(s.source) >= min_notes and note_count(s.target) >= min_notes]


# ---------------------------------------------------------------------------
# augmentation and splitting


def _fit_shift(pitches: list[int], shift: int) -> int:
    if not pitches:
        return shift
    lo, hi = min(pitches), max(pitches)
    while hi + shift > 127 and lo + shift - 12 >= 0:
        shift -= 12
    while lo + shift < 0 and hi + shift + 12 <= 127:
        shift += 12
    if lo + shift < 0 or hi + shift > 127:
        return 0  # range too wide for any octave placement
    return shift


def transpose(seg: SegmentPair, semitones: int) -> SegmentPair:
    """Shift both parts by ``semitones``, moving by octaves to stay within 0-127."""
    pitches = [n.pitch for n in itertools.chain(seg.source, seg.target) if not n.is_rest]
    actual = _fit_shift(pitches, semitones)
    return replace(
        seg,
        source=[n.transposed(actual) for n in seg.source],
        target=[n.transposed(actual) for n in seg.target],
        transposition=seg.transposition + semitones,
    )


def transpose_augment(segments: Iterable[SegmentPair],
                      shifts: Sequence[int] = SHIFTS) -> list[SegmentPair]:
    """Every segment in all twelve keys (-5..+6 semitones), in input order."""
    return [transpose(s, t) for s in segments for t in shifts]


def split(segments: Sequence[SegmentPair], val_fraction: float,
          seed: int) -> tuple[list[SegmentPair], list[SegmentPair]]:
    """Partition by ``pair_id`` so no track pair straddles train and validation."""
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    ids = sorted({s.pair_id for s in segments})
    random.Random(seed).shuffle(ids)
    n_val = round(val_fraction * len(ids))
    if len(ids) >= 2:
        n_val = min(max(n_val, 1), len(ids) - 1)
    val_ids = set(ids[:n_val])
    train = [s for s in segments if s.pair_id not in val_ids]
    valid = [s for s in segments if s.pair_id in val_ids]
    return train, valid


# ---------------------------------------------------------------------------
# whole-collection driver


@dataclass
class CorpusStats:
    pieces: int = 0
    tracks_rejected: int = 0
    pairs: int = 0
    segments: int = 0
    filtered: int = 0
    train: int = 0
    validation: int = 0

    def lines(self) -> list[str]:
        return [
            f"pieces:              {self.pieces}",
            f"tracks rejected:     {self.tracks_rejected}",
            f"track pairs:         {self.pairs}",
            f"segments:            {self.segments}",
            f"segments kept:       {self.filtered}",
            f"training segments:   {self.train}",
            f"validation segments: {self.validation}",
        ]


def piece_pairs(piece: MidiPiece, piece_id: str, config: CorpusConfig,
                stats: CorpusStats | None = None) -> list[TrackPair]:
    lines = []
    for track in piece.tracks:
        mono = monophonize(track, piece.ppq, config.polyphony_threshold)
        if isinstance(mono, Rejected):
            if stats is not None:
                stats.tracks_rejected += 1
            continue
        if note_count(mono):
            lines.append(mono)
    if len(lines) < 2:
        return []
    return enumerate_pairs(lines, piece_id, piece.meter_map(), config.both_directions)


def build_corpus(pieces: Iterable[tuple[str, MidiPiece]],
                 config: CorpusConfig) -> tuple[list[SegmentPair], list[SegmentPair], CorpusStats]:
    """Run the full pipeline. Returns (augmented train, validation, stats).

    With ``val_fraction == 0`` everything goes to training.
    """
    stats = CorpusStats()
    kept: list[SegmentPair] = []
    for piece_id, piece in pieces:
        stats.pieces += 1
        for pair in piece_pairs(piece, piece_id, config, stats):
            stats.pairs += 1
            segs = segment(pair, config.bars)
            stats.segments += len(segs)
            kept.extend(filter_segments(segs, config.min_notes))
    stats.filtered = len(kept)
    if config.val_fraction > 0:
        train, valid = split(kept, config.val_fraction, config.seed)
    else:
        train, valid = kept, []
    train = transpose_augment(train)
    stats.train, stats.validation = len(train), len(valid)
    return train, valid, stats


# ---------------------------------------------------------------------------
# manifest

MANIFEST_COLUMNS = ("piece_id", "pair_id", "segment_index", "transposition", "split",
                    "source_token_file", "target_token_file", "variant", "meter")


@dataclass(frozen=True)
class ManifestRow:
    piece_id: str
    pair_id: str
    segment_index: int
    transposition: int
    split: str
    source_token_file: str
    target_token_file: str
    variant: str
    meter: Meter


def write_manifest(path: str | Path, rows: Iterable[ManifestRow]) -> None:
    """TSV, one row per segment. Within a split, row order equals line order in the token files."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in rows:
            w.writerow([r.piece_id, r.pair_id, r.segment_index, r.transposition, r.split,
                        r.source_token_file, r.target_token_file, r.variant,
                        f"{r.meter[0]}/{r.meter[1]}"])


def read_manifest(path: str | Path) -> list[ManifestRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest lacks columns {sorted(missing)}")
        rows = []
        for rec in reader:
            num, den = rec["meter"].split("/")
            rows.append(ManifestRow(
                rec["piece_id"], rec["pair_id"], int(rec["segment_index"]),
                int(rec["transposition"]), rec["split"], rec["source_token_file"],
                rec["target_token_file"], rec["variant"], (int(num), int(den))))
    return rows
