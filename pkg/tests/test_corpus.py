import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counterpoint_nmt import corpus as cp
from counterpoint_nmt.errors import EmptyResult
from counterpoint_nmt.midi_io import REST, NoteEvent, RawTrack, read_midi, to_milli
from counterpoint_nmt.tokenizer import encode


def quarters(n, start_pitch=60, dur=1.0):
    return [NoteEvent(start_pitch + (i % 12), dur, i * dur) for i in range(n)]


def seg(n_src, n_tgt, pair_id="p:0-1", idx=0):
    return cp.SegmentPair(pair_id, idx, quarters(n_src), quarters(n_tgt, 48))


# --- monophonize ----------------------------------------------------------

def test_octave_doubling_keeps_upper():
    track = RawTrack([(0, 480, 60, 64), (0, 480, 72, 64), (480, 960, 62, 64)])
    line = cp.monophonize(track, 480)
    assert [n.pitch for n in line] == [72, 62]


def test_monophonic_track_identity_with_rests():
    track = RawTrack([(0, 480, 60, 64), (960, 1440, 62, 64)])
    assert cp.monophonize(track, 480) == [
        NoteEvent(60, 1.0, 0.0), NoteEvent(REST, 1.0, 1.0), NoteEvent(62, 1.0, 2.0)]


def test_leading_gap_becomes_rest():
    line = cp.monophonize(RawTrack([(240, 480, 60, 64)]), 480)
    assert line == [NoteEvent(REST, 0.5, 0.0), NoteEvent(60, 0.5, 0.5)]


def test_chord_heavy_track_rejected():
    # 10 onsets, 3 of them three-note chords -> 30% > 20%
    events = []
    for i in range(10):
        on = i * 480
        events.append((on, on + 480, 72, 64))
        if i in (2, 5, 8):
            events += [(on, on + 480, 67, 64), (on, on + 480, 64, 64)]
    result = cp.monophonize(RawTrack(events), 480)
    assert isinstance(result, cp.Rejected)
    assert result.ratio == pytest.approx(0.3)


def test_chords_at_threshold_kept():
    # 2 of 10 onsets chordal -> exactly 20%, not above
    events = [(i * 480, i * 480 + 480, 72, 64) for i in range(10)]
    events += [(0, 480, 64, 64), (480, 960, 64, 64)]
    line = cp.monophonize(RawTrack(events), 480)
    assert not isinstance(line, cp.Rejected)
    assert all(n.pitch == 72 for n in line)


def test_higher_entry_truncates_lower():
    track = RawTrack([(0, 960, 60, 64), (480, 960, 67, 64)])
    assert cp.monophonize(track, 480) == [NoteEvent(60, 1.0, 0.0), NoteEvent(67, 1.0, 1.0)]


def test_lower_entry_under_higher_dropped():
    track = RawTrack([(0, 960, 67, 64), (480, 1440, 60, 64), (1440, 1920, 62, 64)])
    line = cp.monophonize(track, 480)
    assert [n.pitch for n in line] == [67, REST, 62]


# --- pairing ----------------------------------------------------------------

@pytest.mark.parametrize("k, expected", [(2, 1), (3, 3), (4, 6)])
def test_pair_counts(k, expected):
    assert len(cp.enumerate_pairs([quarters(4)] * k, "x")) == expected


def test_pair_order():
    pairs = cp.enumerate_pairs([quarters(4)] * 4, "x")
    assert [(p.source_index, p.target_index) for p in pairs] == [
        (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


@given(st.integers(2, 10))
def test_pair_count_property(k):
    assert len(cp.enumerate_pairs([[]] * k)) == k * (k - 1) // 2


def test_too_few_tracks():
    with pytest.raises(EmptyResult):
        cp.enumerate_pairs([quarters(4)])


def test_both_directions():
    pairs = cp.enumerate_pairs([quarters(4)] * 3, "x", both_directions=True)
    assert len(pairs) == 6
    assert {p.pair_id for p in pairs} == {"x:0-1", "x:1-0", "x:0-2", "x:2-0", "x:1-2", "x:2-1"}


# --- segmentation -----------------------------------------------------------

def make_pair(bars, beats_per_bar=4, meter_map=None):
    n = bars * beats_per_bar
    return cp.TrackPair("piece", quarters(n), quarters(n, 48), meter_map or [(0.0, 4, 4)])


def test_sixteen_bars_four_segments():
    segs = cp.segment(make_pair(16))
    assert len(segs) == 4
    for i, s in enumerate(segs):
        assert s.segment_index == i
        assert s.source[0].onset == 0.0
        assert sum(n.duration for n in s.source) == 16.0
        # window i holds notes from [16 i, 16 i + 16)
        assert s.source[0].pitch == 60 + (16 * i) % 12


def test_eighteen_bars_drop_tail():
    assert len(cp.segment(make_pair(18))) == 4  # floor(18 / 4)


def test_boundary_note_truncated():
    src = quarters(15) + [NoteEvent(70, 2.0, 15.0)] + quarters(17)[16:]
    pair = cp.TrackPair("piece", src, quarters(32, 48))
    first = cp.segment(pair)[0]
    assert first.source[-1] == NoteEvent(70, 1.0, 15.0)


def test_window_onsets_in_range():
    rng = random.Random(3)
    for _ in range(50):
        line, t = [], 0
        while t < 40_000:
            d = rng.choice([250, 500, 1000, 1500, 2000])
            line.append(NoteEvent(rng.choice([REST, 60, 64, 67]), d / 1000, t / 1000))
            t += d
        for s in cp.segment(cp.TrackPair("r", line, line)):
            for part in (s.source, s.target):
                assert all(0 <= n.onset < 16 for n in part)
                assert to_milli(sum(n.duration for n in part)) == 16000


def test_windows_tile_piece():
    segs = cp.segment(make_pair(13))
    starts = [s.segment_index * 16 for s in segs]
    assert starts == [0, 16, 32]
    covered = sum(sum(n.duration for n in s.source) for s in segs)
    assert covered == 16 * len(segs)


def test_three_four_meter():
    pair = make_pair(8, beats_per_bar=3, meter_map=[(0.0, 3, 4)])
    segs = cp.segment(pair)
    assert len(segs) == 2
    assert segs[0].meter == (3, 4)
    assert sum(n.duration for n in segs[0].source) == 12.0


def test_meter_change_restarts_grid():
    # 4 bars of 4/4 then 3/4
    mm = [(0.0, 4, 4), (16.0, 3, 4)]
    starts = cp.measure_starts(mm, 16 + 12)
    assert [s for s, _ in starts] == [0, 4000, 8000, 12000, 16000, 19000, 22000, 25000]
    assert starts[-1][1] == (3, 4)


# --- filtering ---------------------------------------------------------------

def test_filter_threshold():
    assert cp.filter_segments([seg(9, 30)]) == []
    kept = cp.filter_segments([seg(10, 10)])
    assert len(kept) == 1
    assert cp.filter_segments([]) == []


def test_filter_ignores_rests():
    s = seg(10, 10)
    s.source[3] = NoteEvent(REST, 1.0, 3.0)
    assert cp.filter_segments([s]) == []


# --- augmentation --------------------------------------------------------------

def test_augment_count_and_identity():
    segs = [seg(10, 10, idx=i) for i in range(7)]
    out = cp.transpose_augment(segs)
    assert len(out) == 12 * len(segs)
    zero = [s for s in out if s.transposition == 0]
    for a, b in zip(zero, segs):
        assert a.source == b.source and a.target == b.target
    assert sorted({s.transposition for s in out}) == list(range(-5, 7))


def test_transpose_pitch():
    s = cp.SegmentPair("p", 0, [NoteEvent(60, 1.0, 0.0), NoteEvent(REST, 1.0, 1.0)], [])
    t = cp.transpose(s, 3)
    assert t.source == [NoteEvent(63, 1.0, 0.0), NoteEvent(REST, 1.0, 1.0)]


def test_transpose_out_of_range_shifts_octave():
    s = cp.SegmentPair("p", 0, [NoteEvent(125, 1.0, 0.0)], [NoteEvent(100, 1.0, 0.0)])
    t = cp.transpose(s, 6)
    assert t.source[0].pitch == 125 + 6 - 12
    assert t.target[0].pitch == 100 + 6 - 12
    low = cp.transpose(cp.SegmentPair("p", 0, [NoteEvent(2, 1.0, 0.0)], []), -5)
    assert low.source[0].pitch == 2 - 5 + 12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 127), min_size=2, max_size=20))
def test_transposition_preserves_intervals(pitches):
    notes = [NoteEvent(p, 1.0, float(i)) for i, p in enumerate(pitches)]
    s = cp.SegmentPair("p", 0, notes, list(notes))
    for t in cp.transpose_augment([s]):
        got = [n.pitch for n in t.source]
        assert all(0 <= p <= 127 for p in got)
        assert [g - p for g, p in zip(got, pitches)] == [got[0] - pitches[0]] * len(pitches)


def test_augmentation_count_scales():
    base = cp.SegmentPair("p", 0, quarters(10), quarters(10, 48))
    out = cp.transpose_augment([base] * 314)
    assert len(out) == 3768


def test_augmented_zero_shift_tokens_identical():
    s = seg(12, 12)
    aug = [a for a in cp.transpose_augment([s]) if a.transposition == 0][0]
    assert encode(aug.source).text() == encode(s.source).text()


# --- split ------------------------------------------------------------------

def ten_pair_segments():
    return [seg(10, 10, pair_id=f"piece{p}:0-1", idx=i) for p in range(10) for i in range(10)]


def test_split_disjoint_and_complete():
    segs = ten_pair_segments()
    train, valid = cp.split(segs, 0.2, seed=7)
    assert len(valid) == 20
    assert {s.pair_id for s in train}.isdisjoint({s.pair_id for s in valid})
    assert sorted(map(id, train + valid)) == sorted(map(id, segs))


def test_split_deterministic():
    segs = ten_pair_segments()
    a = cp.split(segs, 0.2, seed=7)
    b = cp.split(segs, 0.2, seed=7)
    assert [s.pair_id for s in a[1]] == [s.pair_id for s in b[1]]


@pytest.mark.parametrize("vf", [0.0, 1.0, -0.1])
def test_split_rejects_bad_fraction(vf):
    with pytest.raises(ValueError):
        cp.split(ten_pair_segments(), vf, 0)


# --- whole pipeline -------------------------------------------------------------

def test_build_corpus_on_fixtures(chorale_dir):
    pieces = [(p.stem, read_midi(p)) for p in sorted(chorale_dir.glob("*.mid"))[:8]]
    train, valid, stats = cp.build_corpus(pieces, cp.CorpusConfig(val_fraction=0.25, seed=1))
    assert stats.pieces == 8 and stats.pairs == 8
    assert stats.train == 12 * (stats.filtered - stats.validation)
    assert {s.pair_id for s in train}.isdisjoint({s.pair_id for s in valid})
    for s in train + valid:
        assert cp.note_count(s.source) >= 10 and cp.note_count(s.target) >= 10
    assert all(s.transposition == 0 for s in valid)


def test_manifest_roundtrip(tmp_path):
    rows = [cp.ManifestRow("a", "a:0-1", 0, -5, "train", "tokens/train.src.txt",
                           "tokens/train.tgt.txt", "beat-position", (3, 4))]
    cp.write_manifest(tmp_path / "m.tsv", rows)
    assert cp.read_manifest(tmp_path / "m.tsv") == rows
    header = (tmp_path / "m.tsv").read_text().splitlines()[0].split("\t")
    assert header[:7] == ["piece_id", "pair_id", "segment_index", "transposition", "split",
                          "source_token_file", "target_token_file"]
