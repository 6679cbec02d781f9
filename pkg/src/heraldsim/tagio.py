"""Time-tag stream wire formats.

Binary format (versioned, little-endian):

    header  : 16 bytes = magic ``b"HSIMTAGS"`` + uint32 version (1) + uint32 zero
    records : 12 bytes each = uint8 channel, 3 zero bytes, uint64 timestamp_ps

Records are stored in global time order (ties broken by channel id).  The
CSV alternative is lossless: a ``channel,timestamp_ps`` header followed by
one row per record with the channel spelled by name.
"""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .event_sim import CHANNEL_NAMES, CHANNELS_BY_NAME, Channel, TagStream

MAGIC = b"HSIMTAGS"
VERSION = 1
HEADER_SIZE = 16

RECORD_DTYPE = np.dtype(
    [("channel", "<u1"), ("reserved", "<u1", (3,)), ("timestamp", "<u8")]
)
assert RECORD_DTYPE.itemsize == 12


def _merged_records(stream: TagStream) -> np.ndarray:
    times = []
    codes = []
    for ch in Channel:
        arr = stream.channels.get(ch)
        if arr is None or arr.size == 0:
            continue
        times.append(np.asarray(arr, dtype=np.int64))
        codes.append(np.full(arr.size, int(ch), dtype=np.uint8))
    if not times:
        return np.empty(0, dtype=RECORD_DTYPE)
    t = np.concatenate(times)
    c = np.concatenate(codes)
    order = np.lexsort((c, t))
    records = np.zeros(t.size, dtype=RECORD_DTYPE)
    records["channel"] = c[order]
    records["timestamp"] = t[order].astype(np.uint64)
    return records


def _stream_from(codes: np.ndarray, times: np.ndarray, duration: int | None) -> TagStream:
    unknown = set(np.unique(codes).tolist()) - {int(ch) for ch in Channel}
    if unknown:
        raise FormatError(f"unknown channel ids {sorted(unknown)}")
    channels = {}
    for ch in Channel:
        sel = times[codes == int(ch)]
        channels[ch] = np.sort(sel.astype(np.int64))
    if duration is None:
        duration = int(times.max()) + 1 if times.size else 0
    return TagStream(channels=channels, duration=int(duration))


def write_binary(stream: TagStream, path) -> None:
    records = _merged_records(stream)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(VERSION).tobytes())
        fh.write(np.uint32(0).tobytes())
        fh.write(records.tobytes())


def read_binary(path, duration: int | None = None) -> TagStream:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE or header[:8] != MAGIC:
            raise FormatError(f"{path}: not a time-tag file (bad magic)")
        version = int(np.frombuffer(header[8:12], dtype="<u4")[0])
        if version != VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        payload = fh.read()
    if len(payload) % RECORD_DTYPE.itemsize:
        raise FormatError(f"{path}: truncated record payload")
    records = np.frombuffer(payload, dtype=RECORD_DTYPE)
    return _stream_from(records["channel"], records["timestamp"].astype(np.int64), duration)


def write_csv(stream: TagStream, path) -> None:
    records = _merged_records(stream)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("channel,timestamp_ps\n")
        names = {int(ch): name for ch, name in CHANNEL_NAMES.items()}
        for code, _, timestamp in records:
            fh.write(f"{names[int(code)]},{int(timestamp)}\n")


def read_csv(path, duration: int | None = None) -> TagStream:
    codes = []
    times = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "channel,timestamp_ps":
            raise FormatError(f"{path}: bad CSV header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                name, raw = line.split(",")
                codes.append(int(CHANNELS_BY_NAME[name]))
                times.append(int(raw))
            except (ValueError, KeyError) as exc:
                raise FormatError(f"{path}:{lineno}: bad record {line!r}") from exc
    return _stream_from(np.asarray(codes, dtype=np.uint8), np.asarray(times, dtype=np.int64), duration)


def read_tags(path, duration: int | None = None) -> TagStream:
    """Dispatch on file content: binary if the magic matches, else CSV."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == MAGIC:
        return read_binary(path, duration)
    return read_csv(path, duration)
