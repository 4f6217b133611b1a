"""Standard MIDI File reader/writer working in absolute ticks.

Supports SMF formats 0 and 1 with ticks-per-quarter division. The parser
normalizes NoteOn events with velocity 0 into NoteOff events and converts
delta times to absolute ticks; the writer always emits a single format-0
track with explicit status bytes (no running status).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

VLQ_LIMIT = 1 << 28  # largest value a 4-byte variable-length quantity can hold

DEFAULT_TEMPO_US = 500_000  # 120 BPM


class MidiError(Exception):
    """Base class for MIDI codec failures."""


class BadHeaderError(MidiError):
    """File does not start with a valid MThd chunk."""


class UnsupportedFormatError(MidiError):
    """Format 2 files and SMPTE time divisions are rejected."""


class TruncatedChunkError(MidiError):
    """A chunk or event runs past the available bytes."""


class TruncatedInputError(MidiError):
    """Input ended in the middle of a variable-length quantity."""


class UnterminatedVlqError(MidiError):
    """Four continuation bytes appeared without a terminating byte."""


class ValueTooLargeError(MidiError):
    """Value cannot be represented in a 4-byte variable-length quantity."""


class DanglingRunningStatusError(MidiError):
    """A data byte appeared before any status byte was established."""


class NegativeDeltaError(MidiError):
    """Writer saw events out of tick order; indicates a caller bug."""


class EventKind(Enum):
    NOTE_ON = "NoteOn"
    NOTE_OFF = "NoteOff"
    TEMPO = "Tempo"
    END_OF_TRACK = "EndOfTrack"
    OTHER_META = "OtherMeta"
    SYSEX = "SysEx"


@dataclass(frozen=True)
class MidiEvent:
    """One timed event with its absolute tick.

    For OTHER_META the payload holds the meta type byte followed by its data,
    or a complete channel message (status byte first) for voice messages the
    tokenizer does not interpret. For SYSEX the payload starts with the
    0xF0/0xF7 status byte.
    """

    tick: int
    kind: EventKind
    channel: int = 0
    key: int = 0
    velocity: int = 0
    tempo_us_per_quarter: int = DEFAULT_TEMPO_US
    raw_payload: bytes = b""


def note_on(tick: int, key: int, velocity: int = 90, channel: int = 0) -> MidiEvent:
    return MidiEvent(tick=tick, kind=EventKind.NOTE_ON, channel=channel, key=key, velocity=velocity)


def note_off(tick: int, key: int, velocity: int = 0, channel: int = 0) -> MidiEvent:
    return MidiEvent(tick=tick, kind=EventKind.NOTE_OFF, channel=channel, key=key, velocity=velocity)


def tempo_event(tick: int, us_per_quarter: int) -> MidiEvent:
    return MidiEvent(tick=tick, kind=EventKind.TEMPO, tempo_us_per_quarter=us_per_quarter)


def end_of_track(tick: int) -> MidiEvent:
    return MidiEvent(tick=tick, kind=EventKind.END_OF_TRACK)


@dataclass
class MidiFile:
    """Decoded SMF contents: header fields plus per-track event lists."""

    format: int
    division: int
    tracks: list[list[MidiEvent]] = field(default_factory=list)


def decode_vlq(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode a variable-length quantity; returns (value, next offset)."""
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            raise TruncatedInputError(f"input ended inside a VLQ at offset {offset + i}")
        byte = data[offset + i]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, offset + i + 1
    raise UnterminatedVlqError(f"no VLQ terminator within 4 bytes at offset {offset}")


def encode_vlq(value: int) -> bytes:
    """Encode a value < 2**28 as a minimal-length variable-length quantity."""
    if value < 0 or value >= VLQ_LIMIT:
        raise ValueTooLargeError(f"value {value} out of VLQ range [0, 2**28)")
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    out.reverse()
    return bytes(out)


def _read_exact(data: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(data):
        raise TruncatedChunkError(f"unexpected end of input while reading {what}")
    return data[offset : offset + n]


# Data byte counts for channel voice messages by upper status nibble.
_CHANNEL_DATA_BYTES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


def parse_midi(data: bytes) -> MidiFile:
    """Parse SMF bytes into a MidiFile with absolute-tick events."""
    if len(data) < 8 or data[:4] != b"MThd":
        raise BadHeaderError("missing MThd chunk id")
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6:
        raise BadHeaderError(f"MThd length {header_len} is shorter than 6")
    header = _read_exact(data, 8, header_len, "MThd payload")
    fmt, ntrks, division = struct.unpack(">HHH", header[:6])
    if fmt not in (0, 1):
        raise UnsupportedFormatError(f"SMF format {fmt} not supported")
    if division & 0x8000:
        raise UnsupportedFormatError("SMPTE time division not supported")
    if division == 0:
        raise BadHeaderError("division of 0 ticks per quarter")

    tracks: list[list[MidiEvent]] = []
    offset = 8 + header_len
    while offset < len(data):
        chunk_id = _read_exact(data, offset, 4, "chunk id")
        length = struct.unpack(">I", _read_exact(data, offset + 4, 4, "chunk length"))[0]
        payload = _read_exact(data, offset + 8, length, f"chunk {chunk_id!r} payload")
        if chunk_id == b"MTrk":
            tracks.append(_parse_track(payload))
        offset += 8 + length

    if not tracks:
        raise TruncatedChunkError(f"no MTrk chunk found ({ntrks} declared)")
    return MidiFile(format=fmt, division=division, tracks=tracks)


def _parse_track(chunk: bytes) -> list[MidiEvent]:
    events: list[MidiEvent] = []
    tick = 0
    pos = 0
    running_status: int | None = None
    while pos < len(chunk):
        delta, pos = decode_vlq(chunk, pos)
        tick += delta
        status = _read_exact(chunk, pos, 1, "status byte")[0]
        if status < 0x80:
            if running_status is None:
                raise DanglingRunningStatusError(f"data byte 0x{status:02X} with no running status")
            status = running_status
        else:
            pos += 1

        if status == 0xFF:
            meta_type = _read_exact(chunk, pos, 1, "meta type")[0]
            length, pos = decode_vlq(chunk, pos + 1)
            body = _read_exact(chunk, pos, length, "meta payload")
            pos += length
            running_status = None  # meta and sysex clear running status
            if meta_type == 0x2F:
                events.append(end_of_track(tick))
                break
            if meta_type == 0x51 and length == 3:
                us = (body[0] << 16) | (body[1] << 8) | body[2]
                events.append(tempo_event(tick, us))
            else:
                events.append(MidiEvent(tick=tick, kind=EventKind.OTHER_META,
                                        raw_payload=bytes([meta_type]) + body))
        elif status in (0xF0, 0xF7):
            length, pos = decode_vlq(chunk, pos)
            body = _read_exact(chunk, pos, length, "sysex payload")
            pos += length
            running_status = None
            events.append(MidiEvent(tick=tick, kind=EventKind.SYSEX,
                                    raw_payload=bytes([status]) + body))
        elif 0x80 <= status < 0xF0:
            running_status = status
            nibble = status >> 4
            channel = status & 0x0F
            ndata = _CHANNEL_DATA_BYTES[nibble]
            body = _read_exact(chunk, pos, ndata, "channel message data")
            pos += ndata
            if nibble == 0x9 and body[1] > 0:
                events.append(note_on(tick, body[0], body[1], channel))
            elif nibble == 0x9 or nibble == 0x8:
                # NoteOn with velocity 0 is a NoteOff by convention
                events.append(note_off(tick, body[0], body[1] if nibble == 0x8 else 0, channel))
            else:
                events.append(MidiEvent(tick=tick, kind=EventKind.OTHER_META,
                                        raw_payload=bytes([status]) + body))
        else:
            raise TruncatedChunkError(f"unexpected status byte 0x{status:02X}")
    else:
        # chunk ended without End-of-Track; normalize by appending one
        events.append(end_of_track(tick))
    return events


# Tie-break ranks for simultaneous events: NoteOff sorts before NoteOn.
_WRITE_RANK = {
    EventKind.TEMPO: 0,
    EventKind.OTHER_META: 1,
    EventKind.SYSEX: 2,
    EventKind.NOTE_OFF: 3,
    EventKind.NOTE_ON: 4,
}


def write_midi(midi: MidiFile) -> bytes:
    """Serialize to a single-track format-0 SMF with explicit status bytes.

    Events from all tracks are merged and sorted by (tick, kind, key); the
    input's End-of-Track markers are dropped and exactly one is emitted after
    the last event.
    """
    if midi.division <= 0 or midi.division & 0x8000:
        raise ValueError(f"invalid division {midi.division}")
    merged = [ev for track in midi.tracks for ev in track if ev.kind is not EventKind.END_OF_TRACK]
    merged.sort(key=lambda ev: (ev.tick, _WRITE_RANK[ev.kind], ev.key))

    body = bytearray()
    last_tick = 0
    for ev in merged:
        delta = ev.tick - last_tick
        if delta < 0:
            raise NegativeDeltaError(f"event at tick {ev.tick} after tick {last_tick}")
        body += encode_vlq(delta)
        body += _encode_event(ev)
        last_tick = ev.tick
    body += b"\x00\xFF\x2F\x00"

    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, midi.division)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def _encode_event(ev: MidiEvent) -> bytes:
    if ev.kind is EventKind.NOTE_ON or ev.kind is EventKind.NOTE_OFF:
        if not 0 <= ev.key <= 127 or not 0 <= ev.velocity <= 127 or not 0 <= ev.channel <= 15:
            raise ValueError(f"note fields out of range: {ev}")
        status = (0x90 if ev.kind is EventKind.NOTE_ON else 0x80) | ev.channel
        return bytes([status, ev.key, ev.velocity])
    if ev.kind is EventKind.TEMPO:
        us = ev.tempo_us_per_quarter
        if not 0 < us < 1 << 24:
            raise ValueError(f"tempo {us} out of range")
        return bytes([0xFF, 0x51, 0x03, (us >> 16) & 0xFF, (us >> 8) & 0xFF, us & 0xFF])
    if ev.kind is EventKind.OTHER_META:
        first = ev.raw_payload[0]
        if first < 0x80:  # meta type byte
            return bytes([0xFF, first]) + encode_vlq(len(ev.raw_payload) - 1) + ev.raw_payload[1:]
        return bytes(ev.raw_payload)  # raw channel message, status byte included
    if ev.kind is EventKind.SYSEX:
        return bytes([ev.raw_payload[0]]) + encode_vlq(len(ev.raw_payload) - 1) + ev.raw_payload[1:]
    raise ValueError(f"cannot encode event kind {ev.kind}")


def dump_events(midi: MidiFile) -> str:
    """Human-readable event listing, one line per event; stable formatting."""
    lines = [f"format {midi.format} division {midi.division} tracks {len(midi.tracks)}"]
    for i, track in enumerate(midi.tracks):
        lines.append(f"track {i} ({len(track)} events)")
        for ev in track:
            lines.append("  " + _format_event(ev))
    return "\n".join(lines) + "\n"


def _format_event(ev: MidiEvent) -> str:
    head = f"tick {ev.tick:>8} {ev.kind.value:<10}"
    if ev.kind in (EventKind.NOTE_ON, EventKind.NOTE_OFF):
        return f"{head} ch {ev.channel:>2} key {ev.key:>3} vel {ev.velocity:>3}"
    if ev.kind is EventKind.TEMPO:
        return f"{head} {ev.tempo_us_per_quarter} us/quarter"
    if ev.kind in (EventKind.OTHER_META, EventKind.SYSEX):
        return f"{head} payload {ev.raw_payload.hex()}"
    return head.rstrip()
