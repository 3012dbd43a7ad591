"""Two-part counterpoint as sequence-to-sequence translation.

One voice of a Baroque piece is treated as the source sentence and the other
as the target. The package covers the whole pipeline: MIDI parsing, corpus
construction, word-level note encoding, a small Transformer, grammar-constrained
beam search and BLEU / edit-distance evaluation.
"""

from .midi_io import REST, MidiPiece, NoteEvent, RawTrack, parse_midi, ticks_to_beats, write_midi
from .tokenizer import TokenSequence, Vocabulary, decode, encode

__all__ = [
    "REST",
    "MidiPiece",
    "NoteEvent",
    "RawTrack",
    "TokenSequence",
    "Vocabulary",
    "decode",
    "encode",
    "parse_midi",
    "ticks_to_beats",
    "write_midi",
]

__version__ = "0.1.0"
