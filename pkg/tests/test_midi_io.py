import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counterpoint_nmt.errors import EventError, HeaderError, MidiError, QuantizationError, TruncationError
from counterpoint_nmt.midi_io import (REST, NoteEvent, parse_midi, read_midi, round3, ticks_to_beats,
                                      to_milli, track_to_notes, write_midi)

from conftest import FIXTURES, smf, vlq


def note_on(delta, pitch, vel=64, ch=0):
    return vlq(delta) + bytes([0x90 | ch, pitch, vel])


def note_off(delta, pitch, ch=0):
    return vlq(delta) + bytes([0x80 | ch, pitch, 0])


def test_minimal_format0():
    data = smf([note_on(0, 60, 90) + note_off(480, 60)], fmt=0)
    piece = parse_midi(data)
    assert piece.ppq == 480
    assert len(piece.tracks) == 1
    assert piece.tracks[0].events == [(0, 480, 60, 90)]


def test_default_time_signature():
    piece = parse_midi(smf([note_on(0, 60) + note_off(480, 60)]))
    assert piece.time_signatures == [(0, 4, 4)]


def test_time_signature_read():
    ts = b"\x00\xFF\x58\x04\x03\x02\x18\x08"  # 3/4
    piece = parse_midi(smf([ts + note_on(0, 60) + note_off(480, 60)]))
    assert piece.time_signatures == [(0, 3, 4)]
    late = vlq(480) + b"\xFF\x58\x04\x06\x03\x18\x08"  # 6/8 at tick 480 + 480
    piece = parse_midi(smf([note_on(0, 60) + note_off(480, 60) + late]))
    assert piece.time_signatures == [(0, 4, 4), (960, 6, 8)]


def test_running_status_and_velocity_zero_off():
    body = (vlq(0) + b"\x90\x3C\x50"      # note on C4
            + vlq(240) + b"\x3C\x00"      # running status, velocity 0 = off
            + vlq(0) + b"\x3E\x50"        # D4 on
            + vlq(240) + b"\x3E\x00")
    piece = parse_midi(smf([body]))
    assert piece.tracks[0].events == [(0, 240, 60, 80), (240, 480, 62, 80)]


def test_unmatched_note_closed_at_track_end():
    body = note_on(0, 60) + note_on(100, 64) + note_off(100, 64) + vlq(300) + b"\xFF\x01\x00"
    piece = parse_midi(smf([body]))
    assert (0, 500, 60, 64) in piece.tracks[0].events


def test_overlapping_same_pitch_merged():
    body = note_on(0, 60) + note_on(100, 60) + note_off(200, 60) + note_off(300, 60)
    piece = parse_midi(smf([body]))
    assert piece.tracks[0].events == [(0, 600, 60, 64)]


def test_channels_split_into_tracks():
    body = note_on(0, 72, ch=0) + note_on(0, 48, ch=1) + note_off(480, 72, ch=0) + note_off(0, 48, ch=1)
    piece = parse_midi(smf([body], fmt=0))
    assert [t.channel for t in piece.tracks] == [0, 1]
    assert [t.events[0][2] for t in piece.tracks] == [72, 48]


def test_events_sorted_with_pitch_tiebreak():
    body = note_on(0, 60) + note_on(0, 72) + note_off(480, 60) + note_off(0, 72)
    piece = parse_midi(smf([body]))
    assert [e[2] for e in piece.tracks[0].events] == [72, 60]


def test_tempo_and_sysex_ignored():
    tempo = b"\x00\xFF\x51\x03\x07\xA1\x20"
    sysex = b"\x00\xF0\x03\x7E\x7F\xF7"
    piece = parse_midi(smf([tempo + sysex + note_on(0, 60) + note_off(480, 60)]))
    assert piece.tracks[0].events == [(0, 480, 60, 64)]


@pytest.mark.parametrize("data, error", [
    (b"", HeaderError),
    (b"RIFF" + b"\x00" * 20, HeaderError),
    (b"MThd" + struct.pack(">IHHH", 6, 2, 1, 480), HeaderError),   # format 2
    (b"MThd" + struct.pack(">IHHh", 6, 1, 1, -6000), HeaderError),  # SMPTE
    (b"MThd" + struct.pack(">I", 6) + b"\x00\x01", TruncationError),
])
def test_header_errors(data, error):
    with pytest.raises(error):
        parse_midi(data)


def test_track_length_exceeds_file():
    data = smf([note_on(0, 60) + note_off(480, 60)])
    bad = data[:18] + struct.pack(">I", 9999) + data[22:]
    with pytest.raises(TruncationError) as err:
        parse_midi(bad)
    assert err.value.offset == 18


def test_truncated_event_inside_chunk():
    body = vlq(0) + b"\x90\x3C"  # data byte missing
    data = b"MThd" + struct.pack(">IHHH", 6, 1, 1, 480) + b"MTrk" + struct.pack(">I", len(body)) + body
    with pytest.raises(TruncationError):
        parse_midi(data)


def test_running_status_without_status():
    data = smf([vlq(0) + b"\x3C\x40"])
    with pytest.raises(EventError) as err:
        parse_midi(data)
    assert err.value.offset == 23


def test_errors_carry_offsets():
    with pytest.raises(MidiError) as err:
        parse_midi(b"MThd\x00\x00")
    assert isinstance(err.value.offset, int)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_arbitrary_bytes_never_crash(data):
    try:
        parse_midi(data)
    except MidiError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=120))
def test_garbage_track_body_never_crashes(body):
    try:
        parse_midi(smf([body]))
    except MidiError:
        pass


def test_ticks_to_beats():
    assert ticks_to_beats(480, 480) == 1.0
    assert ticks_to_beats(240, 480) == 0.5
    # 1/3 = 0.3333.. -> 0.333
    assert ticks_to_beats(160, 480) == 0.333
    # exact half rounds away from zero: 1/2000 beat -> 0.001
    assert ticks_to_beats(1, 2000) == 0.001
    with pytest.raises(ValueError):
        ticks_to_beats(1, 0)


@given(st.integers(1, 2000), st.integers(0, 10**6), st.integers(0, 10**6))
def test_ticks_to_beats_monotone(ppq, a, b):
    lo, hi = sorted((a, b))
    assert ticks_to_beats(lo, ppq) <= ticks_to_beats(hi, ppq)


def test_round3_half_away():
    assert round3(0.0005) == 0.001
    assert round3(-0.0005) == -0.001
    assert round3(2.5e-4) == 0.0
    assert round3(1.2345) == 1.235


def roundtrip(notes, target=()):
    piece = parse_midi(write_midi(notes, list(target)))
    tracks = {t.channel: track_to_notes(t.events, piece.ppq) for t in piece.tracks}
    return tracks.get(0, []), tracks.get(1, [])


def test_single_note_roundtrip():
    notes = [NoteEvent(60, 1.0, 0.0)]
    assert roundtrip(notes) == (notes, [])


def test_rest_shifts_following_onset():
    notes = [NoteEvent(60, 1.0, 0.0), NoteEvent(REST, 1.0, 1.0), NoteEvent(62, 1.0, 2.0)]
    piece = parse_midi(write_midi(notes, []))
    assert [e[0] for e in piece.tracks[0].events] == [0, 960]
    assert roundtrip(notes)[0] == notes


def test_third_beat_quantization():
    # round(0.333 * 480) = 160 and 160 / 480 -> 0.333
    assert round(0.333 * 480) == 160
    notes = [NoteEvent(60, 0.333, 0.0), NoteEvent(62, 0.334, 0.333), NoteEvent(64, 0.333, 0.667)]
    assert roundtrip(notes)[0] == notes


def test_unrepresentable_beat_raises():
    with pytest.raises(QuantizationError):
        write_midi([NoteEvent(60, 0.001, 0.0)], [])


def test_written_file_layout():
    data = write_midi([NoteEvent(60, 1.0, 0.0)], [NoteEvent(48, 1.0, 0.0)])
    assert data[:4] == b"MThd"
    fmt, ntracks, ppq = struct.unpack(">HHH", data[8:14])
    assert (fmt, ntracks, ppq) == (1, 2, 480)
    assert data.count(b"MTrk") == 2
    assert bytes([0x90, 60, 80]) in data


def random_tick_line(rng, ppq=480):
    """Canonical line: boundaries on the tick grid, no adjacent or trailing rests."""
    ticks = [0]
    for _ in range(rng.randint(1, 30)):
        ticks.append(ticks[-1] + rng.choice([60, 120, 160, 240, 320, 480, 720, 960]))
    notes = []
    prev_rest = True  # no leading rest needed: first note starts at 0
    for i, (a, b) in enumerate(zip(ticks, ticks[1:])):
        last = i == len(ticks) - 2
        rest = not prev_rest and not last and rng.random() < 0.2
        pitch = REST if rest else rng.randint(0, 127)
        onset = ticks_to_beats(a, ppq)
        notes.append(NoteEvent(pitch, round3((to_milli(ticks_to_beats(b, ppq)) - to_milli(onset)) / 1000), onset))
        prev_rest = rest
    return notes


def test_roundtrip_random_lines():
    rng = random.Random(5)
    for _ in range(300):
        src, tgt = random_tick_line(rng), random_tick_line(rng)
        assert roundtrip(src, tgt) == (src, tgt)


def test_external_writer_file_parses():
    files = sorted((FIXTURES / "external").glob("*.mid"))
    assert files
    for path in files:
        piece = read_midi(path)
        assert len(piece.tracks) == 4
        assert piece.time_signatures[0] == (0, 4, 4)
        for track in piece.tracks:
            assert all(off > on for on, off, _, _ in track.events)


def test_fixture_chorales_are_two_track():
    for path in sorted((FIXTURES / "chorales").glob("*.mid")):
        piece = read_midi(path)
        assert len(piece.tracks) == 2
        assert piece.ppq == 480
