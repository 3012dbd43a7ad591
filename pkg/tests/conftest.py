from __future__ import annotations

import random
import struct
from pathlib import Path

import pytest

from counterpoint_nmt.midi_io import REST, NoteEvent

FIXTURES = Path(__file__).parent / "fixtures"


def vlq(value: int) -> bytes:
    buf = [value & 0x7F]
    value >>= 7
    while value:
        buf.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(buf))


def smf(tracks: list[bytes], fmt: int = 1, ppq: int = 480) -> bytes:
    """Assemble an SMF from raw track bodies (end-of-track appended)."""
    out = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), ppq)
    for body in tracks:
        body = body + b"\x00\xFF\x2F\x00"
        out += b"MTrk" + struct.pack(">I", len(body)) + body
    return out


DURATIONS_MILLI = (125, 250, 333, 334, 375, 500, 667, 750, 1000, 1500, 2000, 3000)


def random_line(rng: random.Random, max_notes: int = 40, rest_prob: float = 0.15) -> list[NoteEvent]:
    """Contiguous line from beat 0; every onset is the sum of earlier durations."""
    notes = []
    cursor = 0
    for _ in range(rng.randint(1, max_notes)):
        dur = rng.choice(DURATIONS_MILLI)
        pitch = REST if rng.random() < rest_prob else rng.randint(21, 108)
        notes.append(NoteEvent(pitch, dur / 1000, cursor / 1000))
        cursor += dur
    return notes


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture(scope="session")
def chorale_dir() -> Path:
    return FIXTURES / "chorales"


ACCEPTANCE: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    """Register one acceptance line; printed in the terminal summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
