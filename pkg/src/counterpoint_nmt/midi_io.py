"""Standard MIDI File reading and writing, with all timing in beats.

Only what the corpus pipeline needs is interpreted: note on/off pairs, time
signatures and track names. Tempo is ignored on purpose, since notes are
described by beat counts and never by wall-clock time.

Beat values are kept on a 1/1000-beat grid. Internally that grid is handled as
integer "milli-beats" so that sums of durations never accumulate float error;
the public :class:`NoteEvent` exposes plain floats rounded to 3 decimals.
"""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EventError, HeaderError, QuantizationError, TruncationError

REST = -1
OUTPUT_PPQ = 480
OUTPUT_VELOCITY = 80


def round_half_away(value: Fraction | int | float) -> int:
    """Round to the nearest integer, ties away from zero."""
    if not isinstance(value, Fraction):
        value = Fraction(value)
    if value >= 0:
        return int(value + Fraction(1, 2))  # int() floors positive fractions
    return -int(-value + Fraction(1, 2))


def to_milli(beats: float | Fraction) -> int:
    """Beats -> integer milli-beats, rounding half away from zero.

    Floats go through their shortest repr so that 0.0005 means 0.0005 and not
    the binary neighbour below it.
    """
    if isinstance(beats, float):
        beats = Fraction(repr(beats))
    return round_half_away(Fraction(beats) * 1000)


def from_milli(milli: int) -> float:
    return milli / 1000


def round3(beats: float | Fraction) -> float:
    """Round a beat value to 3 decimals, half away from zero."""
    return from_milli(to_milli(beats))


def ticks_to_beats(tick: int, ppq: int) -> float:
    """Convert an absolute tick to beats (quarter note = 1.0), 3 decimals."""
    if ppq <= 0:
        raise ValueError(f"ppq must be positive, got {ppq}")
    return from_milli(round_half_away(Fraction(tick * 1000, ppq)))


def _tick_to_milli(tick: int, ppq: int) -> int:
    return round_half_away(Fraction(tick * 1000, ppq))


@dataclass(frozen=True)
class NoteEvent:
    """One note or rest of a monophonic line.

    ``pitch`` is a MIDI number or :data:`REST`; ``duration`` and ``onset`` are
    in beats.
    """

    pitch: int
    duration: float
    onset: float

    @property
    def is_rest(self) -> bool:
        return self.pitch == REST

    def transposed(self, semitones: int) -> NoteEvent:
        if self.is_rest:
            return self
        return NoteEvent(self.pitch + semitones, self.duration, self.onset)


def check_notes(notes: Sequence[NoteEvent]) -> None:
    """Raise ``ValueError`` unless ``notes`` form a valid monophonic line."""
    prev = None
    for i, n in enumerate(notes):
        if n.pitch != REST and not 0 <= n.pitch <= 127:
            raise ValueError(f"note {i}: pitch {n.pitch} out of range")
        if n.duration <= 0:
            raise ValueError(f"note {i}: duration must be positive")
        if prev is not None:
            if to_milli(n.onset) <= to_milli(prev.onset):
                raise ValueError(f"note {i}: onsets must strictly increase")
            if to_milli(n.onset) < to_milli(prev.onset) + to_milli(prev.duration) - 1:
                raise ValueError(f"note {i}: overlaps the previous note")
        prev = n


@dataclass
class RawTrack:
    """Notes of one (track, channel) as ``(onset_tick, off_tick, pitch, velocity)``."""

    events: list[tuple[int, int, int, int]]
    channel: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        self.events.sort(key=lambda e: (e[0], -e[2]))


@dataclass
class MidiPiece:
    tracks: list[RawTrack]
    ppq: int
    time_signatures: list[tuple[int, int, int]] = field(default_factory=lambda: [(0, 4, 4)])
    name: str = ""

    def meter_map(self) -> list[tuple[float, int, int]]:
        """Time signatures as ``(onset_beats, numerator, denominator)``."""
        return [(ticks_to_beats(t, self.ppq), n, d) for t, n, d in self.time_signatures]


# ---------------------------------------------------------------------------
# reading


class _Reader:
    def __init__(self, data: bytes, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > self.end:
            raise TruncationError(f"unexpected end of data reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def byte(self, what: str) -> int:
        return self.take(1, what)[0]

    def varlen(self) -> int:
        start = self.pos
        value = 0
        for _ in range(4):
            b = self.byte("variable-length quantity")
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise EventError("variable-length quantity longer than 4 bytes", start)


def parse_midi(data: bytes, name: str = "") -> MidiPiece:
    """Parse an SMF (format 0 or 1) into note tracks measured in ticks.

    Each MTrk chunk is split by channel, so a format-0 file with two voices on
    two channels yields two :class:`RawTrack` objects. Tracks without notes are
    omitted. Note-ons left open at the end of a track are closed there, and
    overlapping notes of the same pitch and channel are merged.
    """
    data = bytes(data)
    if len(data) < 8 or data[:4] != b"MThd":
        raise HeaderError("missing MThd header chunk", 0)
    (hlen,) = struct.unpack(">I", data[4:8])
    if hlen < 6:
        raise HeaderError(f"header chunk length {hlen} < 6", 4)
    if 8 + hlen > len(data):
        raise TruncationError("header chunk runs past end of file", 8)
    fmt, ntracks, division = struct.unpack(">HHh", data[8:14])
    if fmt not in (0, 1):
        raise HeaderError(f"unsupported SMF format {fmt}", 8)
    if division <= 0:
        raise HeaderError("SMPTE or zero time division is not supported", 12)
    ppq = division

    tracks: list[RawTrack] = []
    time_sigs: dict[int, tuple[int, int]] = {}
    piece_name = name
    pos = 8 + hlen
    seen = 0
    while seen < ntracks and pos < len(data):
        if pos + 8 > len(data):
            raise TruncationError("truncated chunk header", pos)
        ctype = data[pos:pos + 4]
        (clen,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + clen > len(data):
            raise TruncationError(f"chunk length {clen} exceeds remaining bytes", pos + 4)
        if ctype == b"MTrk":
            track_name, found = _parse_track(data, body, body + clen, time_sigs)
            if seen == 0 and track_name and not piece_name:
                piece_name = track_name
            for tr in found:
                tr.name = tr.name or track_name
            tracks.extend(found)
            seen += 1
        pos = body + clen

    if seen < ntracks:
        raise TruncationError(f"expected {ntracks} tracks, found {seen}", pos)

    sigs = sorted((t, n, d) for t, (n, d) in time_sigs.items())
    if not sigs or sigs[0][0] != 0:
        sigs.insert(0, (0, 4, 4))
    return MidiPiece(tracks=tracks, ppq=ppq, time_signatures=sigs, name=piece_name)


def _parse_track(data: bytes, start: int, end: int,
                 time_sigs: dict[int, tuple[int, int]]) -> tuple[str, list[RawTrack]]:
    r = _Reader(data, start, end)
    tick = 0
    status = None
    track_name = ""
    # (channel, pitch) -> [onset, velocity, depth]
    sounding: dict[tuple[int, int], list[int]] = {}
    notes: dict[int, list[tuple[int, int, int, int]]] = defaultdict(list)

    def close(key: tuple[int, int], at: int) -> None:
        onset, vel, _ = sounding.pop(key)
        if at > onset:
            notes[key[0]].append((onset, at, key[1], vel))

    while r.pos < r.end:
        tick += r.varlen()
        ev_pos = r.pos
        first = r.byte("event status")
        if first & 0x80:
            if first == 0xFF:
                mtype = r.byte("meta type")
                payload = r.take(r.varlen(), "meta payload")
                if mtype == 0x2F:
                    break
                if mtype == 0x03 and not track_name:
                    track_name = payload.decode("latin-1").strip()
                elif mtype == 0x58:
                    if len(payload) < 2:
                        raise EventError("short time-signature event", ev_pos)
                    time_sigs[tick] = (payload[0], 2 ** payload[1])
                status = None
                continue
            if first in (0xF0, 0xF7):
                r.take(r.varlen(), "sysex payload")
                status = None
                continue
            if first >= 0xF0:
                raise EventError(f"system message 0x{first:02X} inside a track", ev_pos)
            status = first
            d1 = r.byte("event data")
        else:
            if status is None:
                raise EventError("running status used without a prior channel status", ev_pos)
            d1 = first
        kind, channel = status & 0xF0, status & 0x0F
        if kind in (0xC0, 0xD0):
            _check_data(d1, ev_pos)
            continue
        d2 = r.byte("event data")
        _check_data(d1, ev_pos)
        _check_data(d2, ev_pos)
        key = (channel, d1)
        if kind == 0x90 and d2 > 0:
            if key in sounding:
                sounding[key][2] += 1
            else:
                sounding[key] = [tick, d2, 1]
        elif kind == 0x80 or kind == 0x90:
            if key in sounding:
                sounding[key][2] -= 1
                if sounding[key][2] == 0:
                    close(key, tick)

    for key in list(sounding):
        close(key, tick)

    tracks = [RawTrack(events=_merge_same_pitch(ev), channel=ch)
              for ch, ev in sorted(notes.items())]
    return track_name, tracks


def _check_data(b: int, pos: int) -> None:
    if b & 0x80:
        raise EventError(f"status byte 0x{b:02X} where data byte expected", pos)


def _merge_same_pitch(events: list[tuple[int, int, int, int]]) -> list[tuple[int, int, int, int]]:
    by_pitch: dict[int, list[tuple[int, int, int, int]]] = defaultdict(list)
    for e in sorted(events):
        run = by_pitch[e[2]]
        if run and e[0] < run[-1][1]:
            on, off, p, v = run[-1]
            run[-1] = (on, max(off, e[1]), p, v)
        else:
            run.append(e)
    return [e for run in by_pitch.values() for e in run]


def read_midi(path: str | Path) -> MidiPiece:
    path = Path(path)
    return parse_midi(path.read_bytes(), name=path.stem)


def track_to_notes(events: Iterable[tuple[int, int, int, int]], ppq: int) -> list[NoteEvent]:
    """Turn already-monophonic tick events into a contiguous NoteEvent line.

    Gaps become rests (including a leading rest from beat 0). A note that is
    still sounding when the next one starts is cut at the new onset. Durations
    are differences of rounded boundaries, so every onset equals the sum of
    the preceding durations exactly.
    """
    out: list[NoteEvent] = []
    cursor = 0
    events = sorted(events, key=lambda e: (e[0], -e[2]))
    for i, (on, off, pitch, _vel) in enumerate(events):
        start = _tick_to_milli(on, ppq)
        stop = _tick_to_milli(off, ppq)
        if i + 1 < len(events):
            stop = min(stop, _tick_to_milli(events[i + 1][0], ppq))
        if stop <= start or start < cursor:
            continue
        if start > cursor:
            out.append(NoteEvent(REST, from_milli(start - cursor), from_milli(cursor)))
        out.append(NoteEvent(pitch, from_milli(stop - start), from_milli(start)))
        cursor = stop
    return out


# ---------------------------------------------------------------------------
# writing


def _varlen(value: int) -> bytes:
    buf = [value & 0x7F]
    value >>= 7
    while value:
        buf.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(buf))


def _beats_to_ticks(milli: int, ppq: int) -> int:
    ticks = round_half_away(Fraction(milli * ppq, 1000))
    if _tick_to_milli(ticks, ppq) != milli:
        raise QuantizationError(f"{from_milli(milli)} beats is not representable at ppq {ppq}")
    return ticks


def _track_chunk(notes: Sequence[NoteEvent], ppq: int, channel: int,
                 meter: tuple[int, int] | None, name: str) -> bytes:
    timed: list[tuple[int, int, bytes]] = []
    if meter is not None:
        num, den = meter
        timed.append((0, 0, b"\xFF\x58\x04" + bytes([num, den.bit_length() - 1, 24, 8])))
    if name:
        raw = name.encode("latin-1", "replace")
        timed.append((0, 0, b"\xFF\x03" + _varlen(len(raw)) + raw))
    for n in notes:
        if n.is_rest:
            continue
        start = to_milli(n.onset)
        on = _beats_to_ticks(start, ppq)
        off = _beats_to_ticks(start + to_milli(n.duration), ppq)
        # at equal ticks note-offs sort before note-ons
        timed.append((on, 2, bytes([0x90 | channel, n.pitch, OUTPUT_VELOCITY])))
        timed.append((off, 1, bytes([0x80 | channel, n.pitch, 0])))
    timed.sort(key=lambda t: (t[0], t[1]))
    body = bytearray()
    last = 0
    for tick, _, msg in timed:
        body += _varlen(tick - last) + msg
        last = tick
    body += b"\x00\xFF\x2F\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def write_midi(source: Sequence[NoteEvent], target: Sequence[NoteEvent], ppq: int = OUTPUT_PPQ,
               meter: tuple[int, int] = (4, 4)) -> bytes:
    """Render a source/target pair as a two-track format-1 SMF.

    Rests produce no events; velocity is fixed. Raises
    :class:`~counterpoint_nmt.errors.QuantizationError` if a note boundary
    falls between ticks.
    """
    check_notes(source)
    check_notes(target)
    header = b"MThd" + struct.pack(">IHHH", 6, 1, 2, ppq)
    return (header
            + _track_chunk(source, ppq, 0, meter, "source")
            + _track_chunk(target, ppq, 1, None, "target"))
