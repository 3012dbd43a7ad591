"""Exception types shared across the package."""

from __future__ import annotations


class CounterpointError(Exception):
    """Base class for all package errors."""


class MidiError(CounterpointError):
    """Malformed Standard MIDI File. ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class HeaderError(MidiError):
    pass


class TruncationError(MidiError):
    pass


class EventError(MidiError):
    pass


class QuantizationError(CounterpointError):
    """A beat value cannot be represented exactly at the output resolution."""


class EmptyResult(CounterpointError):
    pass


class EncodingError(CounterpointError):
    pass


class GrammarError(CounterpointError):
    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (token {index})")
        self.index = index


class ShapeError(CounterpointError, ValueError):
    pass


class RangeError(CounterpointError, IndexError):
    pass


class DivergenceError(CounterpointError):
    pass


class StateError(CounterpointError):
    pass


class MetricError(CounterpointError, ValueError):
    pass


class AlignmentError(CounterpointError):
    pass
