"""Command line: ``ingest``, ``train``, ``generate``, ``evaluate``.

Exit codes: 0 success, 1 usage error, 2 empty result, 3 data error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import torch

from . import corpus as cp
from .config import load_into, read_config
from .decoding import translate
from .errors import (AlignmentError, CounterpointError, DivergenceError, EmptyResult, GrammarError,
                     MidiError)
from .metrics import (BleuReport, MemorizationReport, evaluate, format_table, memorization_scan,
                      note_tuples)
from .midi_io import NoteEvent, read_midi, write_midi
from .model import ModelConfig, TrainConfig, Trainer, build_model, load_checkpoint, save_checkpoint
from .tokenizer import (BEAT, VARIANT_ALIASES, TokenSequence, Vocabulary, build_vocabulary, decode,
                        encode, read_token_file, write_token_file)

log = logging.getLogger("counterpoint_nmt")

EXIT_OK, EXIT_USAGE, EXIT_EMPTY, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4
SPLIT_FILES = {"train": "train", "validation": "valid"}


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class DecodeConfig:
    beam_width: int = 4
    alpha: float = 0.6
    max_steps: int = 0  # 0: 3 x source length + 8
    grammar: bool = True


@dataclass
class RunConfig:
    variant: str = BEAT
    corpus: cp.CorpusConfig = None  # type: ignore[assignment]
    model: ModelConfig = None  # type: ignore[assignment]
    train: TrainConfig = None  # type: ignore[assignment]
    decode: DecodeConfig = None  # type: ignore[assignment]

    @classmethod
    def load(cls, path: str | Path | None, seed: int | None = None,
             variant: str | None = None) -> RunConfig:
        values = read_config(path) if path else {}
        if seed is not None:
            values["seed"] = str(seed)
        var = variant or values.get("variant", BEAT)
        if var not in VARIANT_ALIASES:
            raise CommandError(f"unknown variant {var!r}", EXIT_USAGE)
        return cls(
            variant=VARIANT_ALIASES[var],
            corpus=load_into(cp.CorpusConfig, values),
            model=load_into(ModelConfig, values),
            train=load_into(TrainConfig, values),
            decode=load_into(DecodeConfig, values),
        )


# ---------------------------------------------------------------------------
# corpus directory layout


def token_paths(split: str) -> tuple[str, str]:
    stem = SPLIT_FILES[split]
    return f"tokens/{stem}.src.txt", f"tokens/{stem}.tgt.txt"


@dataclass
class SplitData:
    rows: list[cp.ManifestRow]
    sources: list[TokenSequence]
    targets: list[TokenSequence]

    def ids(self) -> list[str]:
        return [f"{r.pair_id}#{r.segment_index}@{r.transposition:+d}" for r in self.rows]


def load_split(corpus_dir: Path, split: str, variant: str | None = None) -> SplitData:
    rows = [r for r in cp.read_manifest(corpus_dir / "manifest.tsv") if r.split == split]
    if not rows:
        return SplitData([], [], [])
    if variant is not None and rows[0].variant != variant:
        raise CommandError(f"corpus was encoded with {rows[0].variant!r}, requested {variant!r}", EXIT_DATA)
    src_file, tgt_file = rows[0].source_token_file, rows[0].target_token_file
    src_lines = list(read_token_file(corpus_dir / src_file))
    tgt_lines = list(read_token_file(corpus_dir / tgt_file))
    if not (len(src_lines) == len(tgt_lines) == len(rows)):
        raise AlignmentError(f"{split}: manifest has {len(rows)} rows but token files have "
                             f"{len(src_lines)}/{len(tgt_lines)} lines")
    srcs = [TokenSequence(w, r.variant, r.meter) for w, r in zip(src_lines, rows)]
    tgts = [TokenSequence(w, r.variant, r.meter) for w, r in zip(tgt_lines, rows)]
    return SplitData(rows, srcs, tgts)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(midi_dir: str | Path, out_dir: str | Path, run: RunConfig) -> cp.CorpusStats:
    midi_dir, out_dir = Path(midi_dir), Path(out_dir)
    files = sorted(p for p in midi_dir.iterdir() if p.suffix.lower() in (".mid", ".midi"))
    if not files:
        raise CommandError(f"no MIDI files in {midi_dir}", EXIT_EMPTY)
    pieces = []
    for path in files:
        try:
            pieces.append((path.stem, read_midi(path)))
        except MidiError as exc:
            log.warning("skipping %s: %s", path.name, exc)
    train, valid, stats = cp.build_corpus(pieces, run.corpus)
    for line in stats.lines():
        print(line)
    if not train:
        raise CommandError("no segments survived the pipeline", EXIT_EMPTY)

    (out_dir / "tokens").mkdir(parents=True, exist_ok=True)
    rows = []
    for split, segs in (("train", train), ("validation", valid)):
        src_file, tgt_file = token_paths(split)
        srcs = [encode(s.source, run.variant, s.meter, s.meter_changes) for s in segs]
        tgts = [encode(s.target, run.variant, s.meter, s.meter_changes) for s in segs]
        write_token_file(out_dir / src_file, srcs)
        write_token_file(out_dir / tgt_file, tgts)
        if split == "train":
            build_vocabulary(srcs).save(out_dir / "vocab.src.txt")
            build_vocabulary(tgts).save(out_dir / "vocab.tgt.txt")
        rows += [cp.ManifestRow(s.piece_id, s.pair_id, s.segment_index, s.transposition, split,
                                src_file, tgt_file, run.variant, s.meter) for s in segs]
    cp.write_manifest(out_dir / "manifest.tsv", rows)
    return stats


def _id_pairs(data: SplitData, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
              max_len: int) -> list[tuple[list[int], list[int]]]:
    out = []
    for s, t in zip(data.sources, data.targets):
        if len(s) <= max_len and len(t) <= max_len + 1:
            out.append((src_vocab.ids(s.words), tgt_vocab.ids(t.words)))
    return out


def cmd_train(corpus_dir: str | Path, checkpoint: str | Path, run: RunConfig,
              resume: str | Path | None = None, steps: int | None = None) -> list[float]:
    corpus_dir, checkpoint = Path(corpus_dir), Path(checkpoint)
    data = load_split(corpus_dir, "train", run.variant)
    if not data.rows:
        raise CommandError("manifest has no training segments", EXIT_EMPTY)
    src_vocab = Vocabulary.load(corpus_dir / "vocab.src.txt")
    tgt_vocab = Vocabulary.load(corpus_dir / "vocab.tgt.txt")
    dtype = torch.float64 if run.train.precision == "float64" else torch.float32
    if resume:
        ck = load_checkpoint(resume, dtype)
        _check_variant(ck.meta, run.variant)
        model = ck.model
    else:
        cfg = ModelConfig(**{**asdict(run.model), "vocab_size_src": len(src_vocab),
                             "vocab_size_tgt": len(tgt_vocab)})
        model = build_model(cfg, seed=run.train.seed, dtype=dtype, pad_id=tgt_vocab.pad_id)
    pairs = _id_pairs(data, src_vocab, tgt_vocab, model.cfg.max_len)
    if not pairs:
        raise CommandError("every training segment exceeds max_len", EXIT_EMPTY)
    if len(pairs) < len(data.rows):
        log.warning("dropped %d segments longer than max_len", len(data.rows) - len(pairs))

    trainer = Trainer(model, run.train, checkpoint.with_suffix(".log.tsv"))
    if resume:
        ck.restore_optimizer(trainer.optimizer)
        trainer.step = ck.step
    meta = {"variant": run.variant, "src_vocab": " ".join(src_vocab.words),
            "tgt_vocab": " ".join(tgt_vocab.words)}

    def save(t: Trainer) -> None:
        save_checkpoint(checkpoint, t.model, meta, t.optimizer, t.step)

    try:
        losses = trainer.fit(pairs, steps if steps is not None else run.train.steps, on_checkpoint=save)
    except DivergenceError as exc:
        last = checkpoint if checkpoint.exists() else None
        raise CommandError(f"{exc}; last good checkpoint: {last}", EXIT_DIVERGED) from exc
    save(trainer)
    if losses:
        print(f"step {trainer.step}: loss {losses[-1]:.4f}")
    return losses


def _check_variant(meta: dict[str, str], variant: str) -> None:
    if meta.get("variant") != variant:
        raise CommandError(f"checkpoint was trained with {meta.get('variant')!r}, requested {variant!r}",
                           EXIT_DATA)


def _vocabs(meta: dict[str, str]) -> tuple[Vocabulary, Vocabulary]:
    return Vocabulary(meta["src_vocab"].split(" ")), Vocabulary(meta["tgt_vocab"].split(" "))


def _source_segments(path: Path, run: RunConfig, meter: tuple[int, int]) -> list[TokenSequence]:
    if path.suffix.lower() in (".mid", ".midi"):
        piece = read_midi(path)
        for track in piece.tracks:
            line = cp.monophonize(track, piece.ppq, run.corpus.polyphony_threshold)
            if not isinstance(line, cp.Rejected) and cp.note_count(line):
                break
        else:
            raise CommandError(f"{path}: no usable track", EXIT_DATA)
        pair = cp.TrackPair(path.stem, line, [], piece.meter_map())
        return [encode(s.source, run.variant, s.meter, s.meter_changes) for s in cp.segment(pair, run.corpus.bars)]
    return [TokenSequence(words, run.variant, meter) for words in read_token_file(path) if words]


def cmd_generate(checkpoint: str | Path, source: str | Path, out_dir: str | Path, run: RunConfig,
                 meter: tuple[int, int] = (4, 4)) -> list[TokenSequence]:
    out_dir = Path(out_dir)
    ck = load_checkpoint(checkpoint, torch.float64)
    _check_variant(ck.meta, run.variant)
    src_vocab, tgt_vocab = _vocabs(ck.meta)
    sources = _source_segments(Path(source), run, meter)
    if not sources:
        raise CommandError(f"{source}: nothing to translate", EXIT_EMPTY)
    dc = run.decode
    outputs, src_notes, tgt_notes = [], [], []
    offset = 0.0
    unknown = truncated = 0
    for seq in sources:
        tr = translate(ck.model, seq, src_vocab, tgt_vocab, dc.beam_width, dc.alpha,
                       dc.max_steps or None, dc.grammar)
        unknown += tr.unknown_words
        truncated += tr.truncated
        outputs.append(tr.tokens)
        s_notes = decode(seq, strict=False)
        t_notes = decode(tr.tokens, strict=False)
        span = max(_span(s_notes), _span(t_notes))
        src_notes += _shift(s_notes, offset)
        tgt_notes += _shift(t_notes, offset)
        offset = round(offset + span, 3)
    if unknown:
        log.warning("%d source words not in the vocabulary were mapped to <unk>", unknown)
    if truncated:
        log.warning("%d segments hit max_steps before </s>", truncated)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(source).stem
    write_token_file(out_dir / f"{stem}.generated.txt", outputs)
    (out_dir / f"{stem}.generated.mid").write_bytes(write_midi(src_notes, tgt_notes, meter=sources[0].meter))
    return outputs


def _span(notes: Sequence[NoteEvent]) -> float:
    return max((n.onset + n.duration for n in notes), default=0.0)


def _shift(notes: Sequence[NoteEvent], by: float) -> list[NoteEvent]:
    return [NoteEvent(n.pitch, n.duration, round(n.onset + by, 3)) for n in notes]


@dataclass
class Evaluation:
    bleu: BleuReport
    memorization: MemorizationReport
    truncated: int = 0


def cmd_evaluate(checkpoint: str | Path | None, corpus_dir: str | Path, out_dir: str | Path,
                 run: RunConfig, split: str = "validation", limit: int | None = None,
                 references_as_candidates: bool = False) -> Evaluation:
    """Generate a response per segment of ``split`` and score it.

    ``references_as_candidates`` skips the model and scores the references
    against themselves, a check of the evaluation wiring.
    """
    corpus_dir, out_dir = Path(corpus_dir), Path(out_dir)
    data = load_split(corpus_dir, split, run.variant)
    if not data.rows:
        raise CommandError(f"no {split} segments in the manifest", EXIT_EMPTY)
    ids, sources, targets = data.ids(), data.sources, data.targets
    if limit:
        ids, sources, targets = ids[:limit], sources[:limit], targets[:limit]
    refs = dict(zip(ids, targets))
    truncated = 0
    if references_as_candidates:
        cands = dict(refs)
    else:
        if checkpoint is None:
            raise CommandError("a checkpoint is required", EXIT_USAGE)
        ck = load_checkpoint(checkpoint, torch.float64)
        _check_variant(ck.meta, run.variant)
        src_vocab, tgt_vocab = _vocabs(ck.meta)
        dc = run.decode
        cands = {}
        for sid, seq in zip(ids, sources):
            tr = translate(ck.model, seq, src_vocab, tgt_vocab, dc.beam_width, dc.alpha,
                           dc.max_steps or None, dc.grammar)
            truncated += tr.truncated
            cands[sid] = tr.tokens
    report = evaluate(cands, refs, run.variant)
    train = load_split(corpus_dir, "train", run.variant)
    train_targets = {i: note_tuples(t) for i, t in zip(train.ids(), train.targets)}
    responses = {i: note_tuples(t) for i, t in cands.items()}
    mem = memorization_scan(responses, train_targets)

    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_tsv(out_dir / "bleu.tsv")
    mem.write_tsv(out_dir / "memorization.tsv")
    table = format_table([report])
    (out_dir / "bleu_table.txt").write_text(table, encoding="utf-8")
    write_token_file(out_dir / "responses.txt", cands.values())
    print(table, end="")
    print(mem.summary(), end="")
    return Evaluation(report, mem, truncated)


# ---------------------------------------------------------------------------
# argument parsing


def _meter(text: str) -> tuple[int, int]:
    num, den = text.split("/")
    return int(num), int(den)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="counterpoint-nmt", description=__doc__.split("\n")[0])
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=["beat", "mod-beat", "none"])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="MIDI directory -> corpus directory")
    s.add_argument("midi_dir")
    s.add_argument("out_dir")
    s.add_argument("--val-fraction", type=float)
    s.add_argument("--both-directions", action="store_true")

    s = sub.add_parser("train", help="train a model on a corpus directory")
    s.add_argument("corpus_dir")
    s.add_argument("checkpoint")
    s.add_argument("--steps", type=int)
    s.add_argument("--resume")

    def decode_flags(s: argparse.ArgumentParser) -> None:
        s.add_argument("--beam-width", type=int)
        s.add_argument("--alpha", type=float)
        s.add_argument("--max-steps", type=int)
        s.add_argument("--no-grammar", action="store_true")

    s = sub.add_parser("generate", help="generate the other part for a MIDI or token file")
    s.add_argument("checkpoint")
    s.add_argument("source")
    s.add_argument("out_dir")
    s.add_argument("--meter", type=_meter, default=(4, 4), help="meter of token-file input, e.g. 3/4")
    decode_flags(s)

    s = sub.add_parser("evaluate", help="BLEU and memorization scan on a corpus split")
    s.add_argument("checkpoint", nargs="?")
    s.add_argument("corpus_dir")
    s.add_argument("out_dir")
    s.add_argument("--split", default="validation", choices=["train", "validation"])
    s.add_argument("--limit", type=int)
    s.add_argument("--references", action="store_true", help="score references against themselves")
    decode_flags(s)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        run = RunConfig.load(args.config, args.seed, args.variant)
        if getattr(args, "beam_width", None):
            run.decode.beam_width = args.beam_width
        if getattr(args, "alpha", None) is not None:
            run.decode.alpha = args.alpha
        if getattr(args, "max_steps", None):
            run.decode.max_steps = args.max_steps
        if getattr(args, "no_grammar", False):
            run.decode.grammar = False
        if args.command == "ingest":
            if args.val_fraction is not None:
                run.corpus.val_fraction = args.val_fraction
            if args.both_directions:
                run.corpus.both_directions = True
            cmd_ingest(args.midi_dir, args.out_dir, run)
        elif args.command == "train":
            cmd_train(args.corpus_dir, args.checkpoint, run, args.resume, args.steps)
        elif args.command == "generate":
            cmd_generate(args.checkpoint, args.source, args.out_dir, run, args.meter)
        else:
            cmd_evaluate(args.checkpoint, args.corpus_dir, args.out_dir, run, args.split,
                         args.limit, args.references)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EmptyResult as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (CounterpointError, GrammarError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
