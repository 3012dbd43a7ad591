"""Export public-domain Bach chorales from the music21 corpus as two-part MIDI.

Soprano and bass of each chorale become the two tracks of one file. Pickup
measures are padded with a rest so the measure grid starts at tick 0, and
chorales whose soprano tune already appeared are skipped (many tunes are
harmonized more than once). A few files are additionally written with
music21's own MIDI writer, to test the parser against a foreign encoder.

    python scripts/make_fixtures.py tests/fixtures --count 40
    python scripts/make_fixtures.py tests/fixtures --count 400 --external 0 --name chorales_large
"""

from __future__ import annotations

import argparse
from pathlib import Path

from music21 import corpus, meter as m21meter

from counterpoint_nmt.midi_io import NoteEvent, round3, write_midi


def part_notes(part, shift: float) -> list[NoteEvent]:
    out = []
    for n in part.stripTies().flatten().notes:
        dur = round3(float(n.quarterLength))
        if dur <= 0:
            continue
        pitch = max(p.midi for p in n.pitches)
        out.append(NoteEvent(pitch, dur, round3(float(n.offset) + shift)))
    return out


def chorale_pair(score):
    parts = list(score.parts)
    if len(parts) != 4:
        return None
    sigs = score.recurse().getElementsByClass(m21meter.TimeSignature)
    ratios = {ts.ratioString for ts in sigs}
    if ratios != {"4/4"}:
        return None
    first = parts[0].getElementsByClass("Measure")[0]
    shift = 4.0 - float(first.duration.quarterLength) if first.duration.quarterLength < 4 else 0.0
    return part_notes(parts[0], shift), part_notes(parts[-1], shift)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--count", type=int, default=40)
    ap.add_argument("--external", type=int, default=2)
    ap.add_argument("--name", default="chorales", help="subdirectory for the chorale files")
    args = ap.parse_args()
    out = Path(args.out_dir)
    (out / args.name).mkdir(parents=True, exist_ok=True)
    (out / "external").mkdir(parents=True, exist_ok=True)

    tunes: set[tuple[int, ...]] = set()
    written = external = 0
    for path in sorted(corpus.getComposer("bach"), key=str):
        if written >= args.count:
            break
        if path.suffix != ".mxl":
            continue
        try:
            score = corpus.parse(path)
            pair = chorale_pair(score)
        except Exception:  # unparsable corpus entries are simply skipped
            continue
        if pair is None:
            continue
        soprano, bass = pair
        tune = tuple(n.pitch % 12 for n in soprano[:12])
        if tune in tunes or len(soprano) < 24:
            continue
        try:
            data = write_midi(soprano, bass, meter=(4, 4))
        except Exception:
            continue
        tunes.add(tune)
        (out / args.name / f"{path.stem.replace('.', '_')}.mid").write_bytes(data)
        written += 1
        if external < args.external:
            score.write("midi", fp=str(out / "external" / f"{path.stem.replace('.', '_')}_m21.mid"))
            external += 1
    print(f"wrote {written} chorales, {external} external files")


if __name__ == "__main__":
    main()
