"""Beam search with an optional note-grammar constraint.

With the grammar on, the decoder may only emit words that continue a
well-formed note stream (pitch, duration, beat, pitch, ...), and the beat word
is forced to the onset implied by the durations already generated. Every
constrained output therefore decodes strictly and has no beat violations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import StateError
from .model import Transformer
from .tokenizer import (BOS, EOS, NO_BEAT, MOD_BEAT, TokenSequence, Vocabulary, measure_position,
                        word_class, word_value)

# prefixes (all the same length) -> (len(prefixes), vocab) next-token log-probabilities
Scorer = Callable[[list[list[int]]], np.ndarray]


class Grammar:
    """Allowed next words for a target prefix under one encoding variant."""

    def __init__(self, vocab: Vocabulary, variant: str, meter: tuple[int, int] = (4, 4),
                 meter_changes: Sequence[tuple[float, int, int]] = ()):
        self.vocab = vocab
        self.variant = variant
        self.meter = meter
        self.meter_changes = tuple(meter_changes)
        self.eos = vocab.eos_id
        self.bos = vocab.bos_id
        self.kind = [word_class(w) for w in vocab.words]
        self.value = [word_value(w) if k != "S" else 0 for w, k in zip(vocab.words, self.kind)]
        self.pitch_ids = [i for i, k in enumerate(self.kind) if k == "P"]
        self.duration_ids = [i for i, k in enumerate(self.kind) if k == "D"]
        self.beat_id = {self.value[i]: i for i, k in enumerate(self.kind) if k == "B"}

    def _state(self, prefix: Sequence[int]) -> tuple[str, int]:
        """(class of the last word, running onset in milli-beats)."""
        if not prefix or prefix[0] != self.bos:
            raise StateError("prefix must start with <s>")
        if prefix[-1] == self.eos:
            raise StateError("prefix is already finished")
        last, onset, pending = "S", 0, 0
        for tok in prefix[1:]:
            k = self.kind[tok]
            if k == "D":
                pending = self.value[tok]
                if self.variant == NO_BEAT:
                    onset += pending
            elif k == "B":
                # a beat word names the onset of its own note; advance past it
                onset += pending
            last = k
        return last, onset

    def onset_word(self, onset: int) -> int | None:
        if self.variant == MOD_BEAT:
            onset = measure_position(onset, self.meter, self.meter_changes)
        return self.beat_id.get(onset)

    def allowed(self, prefix: Sequence[int]) -> list[int]:
        last, onset = self._state(prefix)
        if last == "P":
            return list(self.duration_ids)
        if last == "D" and self.variant != NO_BEAT:
            beat = self.onset_word(onset)
            return [] if beat is None else [beat]
        # note boundary: start a new note or stop
        if self.variant != NO_BEAT and self.onset_word(onset) is None:
            return [self.eos]
        return [*self.pitch_ids, self.eos]


def grammar_mask(prefix: Sequence[str] | Sequence[int], vocab: Vocabulary, variant: str,
                 meter: tuple[int, int] = (4, 4)) -> set[int]:
    """Set of word ids allowed after ``prefix`` (words or ids)."""
    ids = [vocab.id(w) for w in prefix] if prefix and isinstance(prefix[0], str) else list(prefix)
    return set(Grammar(vocab, variant, meter).allowed(ids))


@dataclass
class Hypothesis:
    ids: list[int]
    logprob: float
    score: float = 0.0


@dataclass
class BeamResult:
    ids: list[int]
    score: float
    logprob: float
    truncated: bool
    finished: list[Hypothesis] = field(default_factory=list)


def length_penalty(length: int, alpha: float) -> float:
    return max(length, 1) ** alpha


def beam_search(scorer: Scorer, bos_id: int, eos_id: int, width: int = 4, max_steps: int = 64,
                grammar: Grammar | None = None, alpha: float = 0.6,
                max_len: int | None = None) -> BeamResult:
    """Length-normalized beam search over a next-token scorer.

    Scores are ``logprob / length ** alpha`` with length counting generated
    words including ``</s>``. Search stops once ``width`` hypotheses have
    finished, nothing is left alive, or ``max_steps`` is reached; in the last
    case the best unfinished hypothesis is returned with ``truncated`` set.
    """
    if width < 1:
        raise ValueError("beam width must be at least 1")
    alive = [Hypothesis([bos_id], 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_steps):
        if max_len is not None and len(alive[0].ids) >= max_len:
            break
        rows = scorer([h.ids for h in alive])
        candidates: list[tuple[float, list[int]]] = []
        for h, row in zip(alive, rows):
            if grammar is not None:
                allowed = np.asarray(grammar.allowed(h.ids), dtype=np.int64)
                if allowed.size == 0:
                    continue
            else:
                allowed = np.arange(row.shape[0])
            vals = row[allowed]
            # stable sort keeps lower ids first among ties, matching argmax
            order = np.argsort(-vals, kind="stable")[:width]
            for j in order:
                candidates.append((h.logprob + float(vals[j]), h.ids + [int(allowed[j])]))
        if not candidates:
            break
        candidates.sort(key=lambda c: -c[0])
        alive = []
        for logprob, ids in candidates[:width]:
            hyp = Hypothesis(ids, logprob, logprob / length_penalty(len(ids) - 1, alpha))
            (finished if ids[-1] == eos_id else alive).append(hyp)
        if len(finished) >= width or not alive:
            break
    if finished:
        best = max(finished, key=lambda h: h.score)
        return BeamResult(best.ids, best.score, best.logprob, False, finished)
    for h in alive:
        h.score = h.logprob / length_penalty(len(h.ids) - 1, alpha)
    best = max(alive, key=lambda h: h.score)
    return BeamResult(best.ids, best.score, best.logprob, True, finished)


def greedy_search(scorer: Scorer, bos_id: int, eos_id: int, max_steps: int = 64,
                  grammar: Grammar | None = None) -> list[int]:
    """Step-wise argmax decoding, the reference for width-1 beam search."""
    ids = [bos_id]
    for _ in range(max_steps):
        row = scorer([ids])[0]
        if grammar is not None:
            allowed = grammar.allowed(ids)
            if not allowed:
                break
            tok = allowed[int(np.argmax(row[allowed]))]
        else:
            tok = int(np.argmax(row))
        ids.append(tok)
        if tok == eos_id:
            break
    return ids


def model_scorer(model: Transformer, source_ids: Sequence[int]) -> Scorer:
    """Encode the source once and score target prefixes against it."""
    model.eval()
    src = torch.tensor([list(source_ids)], dtype=torch.long)
    with torch.no_grad():
        memory, src_mask = model.encode(src)

    def score(prefixes: list[list[int]]) -> np.ndarray:
        tgt = torch.tensor(prefixes, dtype=torch.long)
        n = tgt.shape[0]
        with torch.no_grad():
            logits = model.decode(tgt, memory.expand(n, -1, -1), src_mask.expand(n, -1, -1, -1))
            return torch.log_softmax(logits[:, -1].double(), dim=-1).numpy()

    return score


def default_max_steps(source_len: int) -> int:
    return 3 * source_len + 8


@dataclass
class Translation:
    tokens: TokenSequence
    truncated: bool
    unknown_words: int
    score: float


def translate(model: Transformer, source: TokenSequence, src_vocab: Vocabulary,
              tgt_vocab: Vocabulary, width: int = 4, alpha: float = 0.6,
              max_steps: int | None = None, use_grammar: bool = True) -> Translation:
    """Generate the target part for one encoded source segment."""
    src_ids = src_vocab.ids(source.words)[: model.cfg.max_len]
    unknown = src_vocab.unknown_count(source.words)
    grammar = Grammar(tgt_vocab, source.variant, source.meter, source.meter_changes) if use_grammar else None
    result = beam_search(model_scorer(model, src_ids), tgt_vocab.bos_id, tgt_vocab.eos_id, width,
                         max_steps or default_max_steps(len(src_ids)), grammar, alpha,
                         max_len=model.cfg.max_len)
    words = tgt_vocab.lookup(result.ids)
    if result.truncated and words[-1] != EOS:
        # close the stream on a note boundary so it still parses
        pattern = 2 if source.variant == NO_BEAT else 3
        body = words[1:]
        words = [BOS, *body[: len(body) - len(body) % pattern], EOS]
    tokens = TokenSequence(words, source.variant, source.meter, source.meter_changes)
    return Translation(tokens, result.truncated, unknown, result.score)

