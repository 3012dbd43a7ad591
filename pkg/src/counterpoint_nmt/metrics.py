"""BLEU over extracted note streams, note-level edit distance, memorization scan."""

from __future__ import annotations

import csv
import math
import statistics
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Sequence

from .errors import AlignmentError, MetricError
from .tokenizer import BEAT, MOD_BEAT, NO_BEAT, TokenSequence, decode, word_class

VARIANT_LABELS = {NO_BEAT: "No beat-position token", BEAT: "beat-position",
                  MOD_BEAT: "mod-beat-position"}


def ngram_counts(words: Sequence[Hashable], n: int) -> Counter:
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


@dataclass
class BleuDetail:
    score: float
    precisions: list[float]
    brevity_penalty: float
    empty_candidate: bool = False


def bleu_detail(candidate: Sequence[Hashable], reference: Sequence[Hashable], max_n: int = 4,
                smoothing: bool = True) -> BleuDetail:
    """Sentence BLEU against a single reference, scaled to [0, 100].

    With ``smoothing`` (the usual "method 2"), orders n >= 2 use
    (matches + 1) / (total + 1); unigram precision is never smoothed.
    """
    if max_n < 1:
        raise MetricError("max_n must be at least 1")
    if not reference:
        raise MetricError("empty reference")
    if not candidate:
        return BleuDetail(0.0, [0.0] * max_n, 0.0, empty_candidate=True)
    precisions = []
    for n in range(1, max_n + 1):
        cand = ngram_counts(candidate, n)
        ref = ngram_counts(reference, n)
        matches = sum(min(c, ref[g]) for g, c in cand.items())
        total = sum(cand.values())
        if smoothing and n >= 2:
            matches, total = matches + 1, total + 1
        precisions.append(matches / total if total else 1.0)
    bp = min(1.0, math.exp(1 - len(reference) / len(candidate)))
    if min(precisions) == 0:
        return BleuDetail(0.0, precisions, bp)
    log_mean = math.fsum(math.log(p) for p in precisions) / max_n
    return BleuDetail(100 * bp * math.exp(log_mean), precisions, bp)


def bleu(candidate: Sequence[Hashable], reference: Sequence[Hashable], max_n: int = 4,
         smoothing: bool = True) -> float:
    return bleu_detail(candidate, reference, max_n, smoothing).score


def extract_streams(tokens: TokenSequence, strict: bool = True) -> tuple[list[str], list[str], list[str]]:
    """Pitch words, duration words, and both interleaved; beat words dropped."""
    if strict:
        decode(tokens, strict=True)  # grammar check only
    body = [w for w in tokens.words if word_class(w) in ("P", "D")]
    pitch = [w for w in body if w[0] == "P"]
    dur = [w for w in body if w[0] == "D"]
    return pitch, dur, body


@dataclass
class BleuReport:
    variant: str
    per_segment: list[tuple[str, float, float, float]] = field(default_factory=list)

    def column(self, i: int) -> list[float]:
        return [row[i] for row in self.per_segment]

    def aggregate(self) -> dict[str, tuple[float, float]]:
        """Mean and population std of each column."""
        out = {}
        for name, i in (("pitch", 1), ("duration", 2), ("combined", 3)):
            col = self.column(i)
            out[name] = (statistics.fmean(col), statistics.pstdev(col)) if col else (0.0, 0.0)
        return out

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["segment_id", "pitch_bleu", "duration_bleu", "combined_bleu"])
            for sid, p, d, c in self.per_segment:
                w.writerow([sid, f"{p:.4f}", f"{d:.4f}", f"{c:.4f}"])


def evaluate(candidates: Mapping[str, TokenSequence], references: Mapping[str, TokenSequence],
             variant: str) -> BleuReport:
    """Per-segment pitch (n<=4), duration (n<=4) and combined (n<=8) BLEU."""
    if set(candidates) != set(references):
        missing = sorted(set(candidates) ^ set(references))
        raise AlignmentError(f"segment ids differ between candidates and references: {missing[:5]}")
    report = BleuReport(variant)
    for sid in references:
        cp, cd, cc = extract_streams(candidates[sid], strict=False)
        rp, rd, rc = extract_streams(references[sid])
        report.per_segment.append((sid, bleu(cp, rp, 4), bleu(cd, rd, 4), bleu(cc, rc, 8)))
    return report


def format_table(reports: Sequence[BleuReport]) -> str:
    """Plain-text table: one row per encoding, Mean±Std per metric."""
    head = ("Encoding", "Pitch (Mean±Std)", "Duration (Mean±Std)", "Combined (Mean±Std)")
    rows = [head]
    for r in reports:
        agg = r.aggregate()
        rows.append((VARIANT_LABELS.get(r.variant, r.variant),
                     *(f"{agg[k][0]:.1f}±{agg[k][1]:.1f}" for k in ("pitch", "duration", "combined"))))
    widths = [max(len(row[i]) for row in rows) for i in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# edit distance


def edit_distance(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Levenshtein distance with unit costs; elements match only if equal."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def note_tuples(tokens: TokenSequence) -> list[tuple[int, float]]:
    """(pitch, duration) per note, the unit compared by the memorization scan."""
    return [(n.pitch, n.duration) for n in decode(tokens, strict=False)]


@dataclass
class MemorizationReport:
    per_response: list[tuple[str, int, str]]
    mean: float
    std: float
    exact_copy_count: int

    def min_mean_std(self) -> tuple[float, float]:
        mins = [d for _, d, _ in self.per_response]
        return statistics.fmean(mins), statistics.pstdev(mins)

    def write_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["response_id", "min_edit_distance", "nearest_target_id"])
            for row in self.per_response:
                w.writerow(row)

    def summary(self) -> str:
        mmean, mstd = self.min_mean_std()
        return (f"edit distance over all pairs: {self.mean:.2f} ± {self.std:.2f}\n"
                f"nearest-target distance:      {mmean:.2f} ± {mstd:.2f}\n"
                f"exact copies:                 {self.exact_copy_count}\n")


def memorization_scan(responses: Mapping[str, Sequence[Hashable]],
                      training_targets: Mapping[str, Sequence[Hashable]]) -> MemorizationReport:
    """Edit distance between every response and every training target.

    The aggregate runs over all pairs; per response the nearest target is kept,
    and a response at distance 0 from any target counts as an exact copy.
    """
    if not responses or not training_targets:
        raise MetricError("memorization scan needs responses and training targets")
    all_d: list[int] = []
    per = []
    for rid, resp in responses.items():
        best, best_id = None, ""
        for tid, tgt in training_targets.items():
            d = edit_distance(resp, tgt)
            all_d.append(d)
            if best is None or d < best:
                best, best_id = d, tid
        per.append((rid, int(best), best_id))
    copies = sum(1 for _, d, _ in per if d == 0)
    return MemorizationReport(per, statistics.fmean(all_d), statistics.pstdev(all_d), copies)
