"""WAV, JSON and CSV file I/O with atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DataError
from .stft import Signal

SAMPLE_FORMATS = ("pcm16", "float32")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_wav(path, expected_rate: int | None = None) -> Signal:
    """Mono float signal from a PCM or float WAV file.

    Integer PCM is scaled to [-1, 1); multi-channel files are averaged.
    """
    try:
        rate, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from exc
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if info.min == 0:
            data = (data.astype(float) - (info.max + 1) / 2) / ((info.max + 1) / 2)
        else:
            data = data.astype(float) / -info.min
    else:
        data = data.astype(float)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.size == 0:
        raise DataError(f"{path} holds no samples")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path} holds non-finite samples")
    if expected_rate is not None and rate != expected_rate:
        raise DataError(f"{path} is sampled at {rate} Hz, expected {expected_rate} Hz")
    return Signal(data, rate)


def write_wav(path, x: Signal, sample_format: str = "float32") -> None:
    if sample_format not in SAMPLE_FORMATS:
        raise ValueError(f"unknown sample format {sample_format!r}")
    if sample_format == "pcm16":
        data = np.clip(np.round(x.samples * 32768), -32768, 32767).astype(np.int16)
    else:
        data = x.samples.astype(np.float32)
    buf = io.BytesIO()
    wavfile.write(buf, x.sample_rate, data)
    atomic_write_bytes(path, buf.getvalue())


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON file {path}: {exc}") from exc


def write_json(path, obj) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def write_csv(path, rows, columns) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write_bytes(path, buf.getvalue().encode())


def read_npz(path, key: str):
    try:
        with np.load(path) as data:
            if key not in data:
                raise DataError(f"{path} has no array {key!r}")
            return np.asarray(data[key])
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read array file {path}: {exc}") from exc
