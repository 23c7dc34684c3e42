"""Time-tag stream files and their sidecar metadata.

Binary format: 16 bytes per record, little endian.

    offset  size  field
    0       8     time_ps   (u64)
    8       1     channel   (u8, 0 transmitted / 1 reflected)
    9       1     setting   (u8)
    10      6     reserved

A plain-text sidecar carries run metadata (config hash, seed, verdicts) as
``key: value`` lines.  A CSV mirror (``time_ps,channel,setting``) is
provided for tools that cannot read the binary records.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import InputError
from .photonsim import TagStream

TAG_RECORD_DTYPE = np.dtype(
    [
        ("time_ps", "<u8"),
        ("channel", "u1"),
        ("setting", "u1"),
        ("reserved", "V6"),
    ]
)


def atomic_write_bytes(path: str | Path, payload: bytes) -> None:
    """Write via a temporary file and rename, so readers never see a torn file."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, str(path))
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_tags(stream: TagStream, path: str | Path) -> None:
    """Write a tag stream in the 16-byte binary record format."""
    path = Path(path)
    records = np.zeros(len(stream), dtype=TAG_RECORD_DTYPE)
    records["time_ps"] = stream.time_ps.astype(np.uint64)
    records["channel"] = stream.channel
    records["setting"] = stream.setting
    atomic_write_bytes(path, records.tobytes())


def read_tags(path: str | Path) -> TagStream:
    """Read a binary tag stream file."""
    path = Path(path)
    raw = np.fromfile(str(path), dtype=np.uint8)
    if raw.size % TAG_RECORD_DTYPE.itemsize != 0:
        raise InputError(
            f"{path}: size {raw.size} is not a multiple of "
            f"{TAG_RECORD_DTYPE.itemsize}-byte records"
        )
    records = raw.view(TAG_RECORD_DTYPE)
    return TagStream(
        time_ps=records["time_ps"].astype(np.int64),
        channel=records["channel"].copy(),
        setting=records["setting"].copy(),
    )


def write_tags_csv(stream: TagStream, path: str | Path) -> None:
    """Textual mirror of a tag stream: time_ps,channel,setting.

    Written in blocks so multi-million-tag streams do not balloon memory.
    """
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write("time_ps,channel,setting\n")
            block = 1_000_000
            for start in range(0, len(stream), block):
                stop = min(start + block, len(stream))
                chunk = "\n".join(
                    f"{int(t)},{int(c)},{int(s)}"
                    for t, c, s in zip(
                        stream.time_ps[start:stop],
                        stream.channel[start:stop],
                        stream.setting[start:stop],
                    )
                )
                handle.write(chunk + "\n")
        os.replace(tmp_name, str(path))
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_tags_csv(path: str | Path) -> TagStream:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if header != "time_ps,channel,setting":
            raise InputError(f"{path}:1: expected header 'time_ps,channel,setting'")
        times, channels, settings = [], [], []
        for lineno, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 comma-separated fields")
            try:
                times.append(int(fields[0]))
                channels.append(int(fields[1]))
                settings.append(int(fields[2]))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from exc
    return TagStream(
        time_ps=np.asarray(times, dtype=np.int64),
        channel=np.asarray(channels, dtype=np.uint8),
        setting=np.asarray(settings, dtype=np.uint8),
    )


def write_sidecar(path: str | Path, metadata: dict[str, object]) -> None:
    """Plain-text run metadata, one ``key: value`` per line."""
    lines = [f"{key}: {value}" for key, value in metadata.items()]
    atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode())


def read_sidecar(path: str | Path) -> dict[str, str]:
    result: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition(":")
            result[key.strip()] = value.strip()
    return result
