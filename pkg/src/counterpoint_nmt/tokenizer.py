"""Word-level encoding of note lines.

Every note or rest becomes a pitch word and a duration word, optionally
followed by a beat word giving its onset::

    <s> P67 D0.500 B0.000 P69 D0.500 B0.500 PR D1.000 B1.000 ... </s>

Three encodings exist: ``beat-position`` (onset counted from the segment
start), ``mod-beat-position`` (onset within the current measure) and ``none``
(no beat word at all). Beat words carry no information that the durations do
not already imply; their purpose is to make the model state where it is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import EncodingError, GrammarError
from .midi_io import REST, NoteEvent, from_milli, to_milli

BOS, EOS, UNK, PAD = "<s>", "</s>", "<unk>", "<pad>"
SPECIALS = (BOS, EOS, UNK, PAD)

BEAT = "beat-position"
MOD_BEAT = "mod-beat-position"
NO_BEAT = "none"
VARIANTS = (BEAT, MOD_BEAT, NO_BEAT)

# CLI spellings
VARIANT_ALIASES = {"beat": BEAT, "mod-beat": MOD_BEAT, "none": NO_BEAT,
                   BEAT: BEAT, MOD_BEAT: MOD_BEAT}

Meter = tuple[int, int]


def fmt_milli(milli: int) -> str:
    sign = "-" if milli < 0 else ""
    milli = abs(milli)
    return f"{sign}{milli // 1000}.{milli % 1000:03d}"


def pitch_word(pitch: int) -> str:
    return "PR" if pitch == REST else f"P{pitch}"


def duration_word(milli: int) -> str:
    return "D" + fmt_milli(milli)


def beat_word(milli: int) -> str:
    return "B" + fmt_milli(milli)


def word_class(word: str) -> str:
    """``"P"``, ``"D"``, ``"B"`` or ``"S"`` (special / unknown)."""
    if word in SPECIALS:
        return "S"
    head = word[:1]
    if head in ("P", "D", "B") and len(word) > 1:
        return head
    return "S"


def word_value(word: str) -> int:
    """Numeric payload: MIDI pitch (``REST`` for PR) or milli-beats for D/B words."""
    if word == "PR":
        return REST
    if word[0] == "P":
        return int(word[1:])
    return to_milli(float(word[1:]))


def measure_milli(meter: Meter) -> int:
    num, den = meter
    return to_milli(num * 4 / den)


def measure_position(onset: int, meter: Meter,
                     changes: Sequence[tuple[float, int, int]] = ()) -> int:
    """Onset (milli-beats) relative to the last downbeat at or before it.

    ``changes`` lists meter changes inside the segment as
    ``(onset_beats, numerator, denominator)``; each one restarts the grid.
    """
    anchor, current = 0, meter
    for beats, num, den in changes:
        at = to_milli(beats)
        if at <= onset:
            anchor, current = at, (num, den)
    return (onset - anchor) % measure_milli(current)


@dataclass
class TokenSequence:
    words: list[str]
    variant: str = BEAT
    meter: Meter = (4, 4)
    meter_changes: tuple[tuple[float, int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def __len__(self) -> int:
        return len(self.words)

    def text(self) -> str:
        return " ".join(self.words)

    @classmethod
    def from_text(cls, text: str, variant: str = BEAT, meter: Meter = (4, 4)) -> TokenSequence:
        return cls(text.split(), variant, meter)


def _normalized(notes: Sequence[NoteEvent]) -> list[tuple[int, int, int]]:
    """(pitch, onset, duration) in milli-beats, contiguous from beat 0."""
    out: list[tuple[int, int, int]] = []
    cursor = 0
    for i, n in enumerate(notes):
        onset, dur = to_milli(n.onset), to_milli(n.duration)
        if onset < 0 or dur < 0:
            raise EncodingError(f"note {i}: negative onset or duration")
        if dur == 0:
            raise EncodingError(f"note {i}: zero duration")
        if onset > cursor:
            out.append((REST, cursor, onset - cursor))
        elif onset < cursor:
            # rounding slack: the previous note yields
            p, o, d = out[-1]
            if onset <= o:
                raise EncodingError(f"note {i}: onset does not advance")
            out[-1] = (p, o, onset - o)
        out.append((n.pitch, onset, dur))
        cursor = onset + dur
    return out


def encode(notes: Sequence[NoteEvent], variant: str = BEAT, meter: Meter = (4, 4),
           meter_changes: Sequence[tuple[float, int, int]] = ()) -> TokenSequence:
    """Encode a segment whose onsets are relative to the segment start.

    Gaps are filled with rests so that every onset equals the sum of the
    preceding durations.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    words = [BOS]
    for pitch, onset, dur in _normalized(notes):
        words.append(pitch_word(pitch))
        words.append(duration_word(dur))
        if variant == BEAT:
            words.append(beat_word(onset))
        elif variant == MOD_BEAT:
            words.append(beat_word(measure_position(onset, meter, meter_changes)))
    words.append(EOS)
    return TokenSequence(words, variant, meter, tuple(meter_changes))


def _groups(tokens: TokenSequence, strict: bool) -> tuple[list[tuple[int, list[str]]], int]:
    """Split the body into per-note word groups. Returns (groups, skipped)."""
    words = tokens.words
    pattern = "PDB" if tokens.variant != NO_BEAT else "PD"
    body_start, body_end = 0, len(words)
    if strict:
        if not words or words[0] != BOS:
            raise GrammarError("sequence must start with <s>", 0)
        if words[-1] != EOS or len(words) < 2:
            raise GrammarError("sequence must end with </s>", len(words))
    if words and words[0] == BOS:
        body_start = 1
    if body_end > body_start and words[body_end - 1] == EOS:
        body_end -= 1

    groups: list[tuple[int, list[str]]] = []
    current: list[str] = []
    start_idx = body_start
    skipped = 0
    for idx in range(body_start, body_end):
        w = words[idx]
        expected = pattern[len(current)]
        if word_class(w) != expected:
            if strict:
                raise GrammarError(f"expected a {expected}-word, got {w!r}", idx)
            skipped += 1
            continue
        if not current:
            start_idx = idx
        current.append(w)
        if len(current) == len(pattern):
            groups.append((start_idx, current))
            current = []
    if current:
        if strict:
            raise GrammarError("incomplete note at end of sequence", body_end)
        skipped += len(current)
    return groups, skipped


def _notes_from_groups(groups: list[tuple[int, list[str]]]) -> list[NoteEvent]:
    notes = []
    cursor = 0
    for _, g in groups:
        pitch, dur = word_value(g[0]), word_value(g[1])
        notes.append(NoteEvent(pitch, from_milli(dur), from_milli(cursor)))
        cursor += dur
    return notes


def decode(tokens: TokenSequence, strict: bool = True) -> list[NoteEvent]:
    """Rebuild notes from pitch and duration words; onsets are running sums.

    Beat words are required by the grammar but otherwise ignored. In strict
    mode any deviation from the grammar raises :class:`GrammarError`; use
    :func:`decode_lenient` to skip stray words instead.
    """
    groups, _ = _groups(tokens, strict)
    return _notes_from_groups(groups)


def decode_lenient(tokens: TokenSequence) -> tuple[list[NoteEvent], int]:
    """Best-effort decode. Returns the notes and the number of skipped words."""
    groups, skipped = _groups(tokens, strict=False)
    return _notes_from_groups(groups), skipped


@dataclass
class BeatReport:
    violations: list[tuple[int, float, float]] = field(default_factory=list)
    notes: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_beats(tokens: TokenSequence, strict: bool = True) -> BeatReport:
    """Compare each beat word with the onset implied by the durations before it.

    Violations are ``(note_index, expected, found)`` with values in beats.
    """
    if tokens.variant == NO_BEAT:
        raise ValueError("validate_beats needs a variant with beat words")
    groups, _ = _groups(tokens, strict)
    report = BeatReport(notes=len(groups))
    cursor = 0
    for i, (_, g) in enumerate(groups):
        expected = cursor
        if tokens.variant == MOD_BEAT:
            expected = measure_position(cursor, tokens.meter, tokens.meter_changes)
        found = word_value(g[2])
        if found != expected:
            report.violations.append((i, from_milli(expected), from_milli(found)))
        cursor += word_value(g[1])
    return report


# ---------------------------------------------------------------------------
# vocabulary


def _sort_key(word: str) -> tuple[int, float]:
    cls = word_class(word)
    rank = {"P": 1, "D": 2, "B": 3}[cls]
    return rank, word_value(word)


class Vocabulary:
    """Bijection between words and integer ids; specials take ids 0-3."""

    def __init__(self, words: Iterable[str]):
        self.words: list[str] = list(words)
        self.index: dict[str, int] = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        if tuple(self.words[:4]) != SPECIALS:
            raise ValueError("vocabulary must start with the four special words")

    @classmethod
    def from_words(cls, observed: Iterable[str]) -> Vocabulary:
        body = {w for w in observed if w not in SPECIALS}
        bad = [w for w in body if word_class(w) == "S"]
        if bad:
            raise ValueError(f"not a P/D/B word: {sorted(bad)[:5]}")
        return cls([*SPECIALS, *sorted(body, key=_sort_key)])

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.words == other.words

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} words)"

    def id(self, word: str) -> int:
        return self.index.get(word, self.index[UNK])

    def ids(self, words: Iterable[str]) -> list[int]:
        return [self.id(w) for w in words]

    def unknown_count(self, words: Iterable[str]) -> int:
        return sum(1 for w in words if w not in self.index)

    def lookup(self, ids: Iterable[int]) -> list[str]:
        return [self.words[i] for i in ids]

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def bos_id(self) -> int:
        return self.index[BOS]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        return cls(Path(path).read_text(encoding="utf-8").split("\n")[:-1])


def build_vocabulary(corpus: Iterable[TokenSequence]) -> Vocabulary:
    seen: set[str] = set()
    for seq in corpus:
        seen.update(seq.words)
    return Vocabulary.from_words(seen)


# ---------------------------------------------------------------------------
# token files


def write_token_file(path: str | Path, sequences: Iterable[TokenSequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for seq in sequences:
            fh.write(seq.text() + "\n")


def read_token_file(path: str | Path) -> Iterator[list[str]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            yield line.split()
