"""Reading and writing RIFF/WAVE files, PCM 16-bit mono only.

Chunk handling follows the RIFF rules: ``fmt `` and ``data`` are required,
anything else (LIST, fact, cue, ...) is skipped, and odd-sized chunks carry
a pad byte.  Integer samples map to floats via division by 32768, so the
float range is [-1, 1).
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioFormatError, FileParseError

_PCM_SCALE = 32768.0
_FMT_PCM = 1


@dataclass
class AudioClip:
    """A mono audio signal with float samples in [-1, 1)."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise AudioFormatError("AudioClip needs a non-empty 1-D sample vector")
        if self.sample_rate <= 0:
            raise AudioFormatError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> AudioClip:
    """Parse a PCM 16-bit mono WAV file.

    Raises AudioFormatError for anything that is valid RIFF but not
    PCM/16-bit/mono, and FileParseError for truncated or malformed files.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise FileParseError(f"{path}: too short to hold a RIFF header")
    riff, riff_size, wave = struct.unpack_from("<4sI4s", raw, 0)
    if riff != b"RIFF" or wave != b"WAVE":
        raise FileParseError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    offset = 12
    while offset + 8 <= len(raw):
        chunk_id, chunk_size = struct.unpack_from("<4sI", raw, offset)
        body_start = offset + 8
        body_end = body_start + chunk_size
        if body_end > len(raw):
            raise FileParseError(f"{path}: chunk {chunk_id!r} extends past end of file")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise FileParseError(f"{path}: fmt chunk too small ({chunk_size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
        elif chunk_id == b"data":
            data = raw[body_start:body_end]
        # other chunks skipped
        offset = body_end + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise FileParseError(f"{path}: missing fmt chunk")
    if data is None:
        raise FileParseError(f"{path}: missing data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != _FMT_PCM:
        raise AudioFormatError(f"{path}: unsupported format tag {audio_format}, need PCM")
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels, only mono is supported")
    if bits != 16:
        raise AudioFormatError(f"{path}: {bits}-bit samples, only 16-bit is supported")
    if len(data) % 2 != 0:
        raise FileParseError(f"{path}: data chunk has an odd byte count")
    if len(data) == 0:
        raise FileParseError(f"{path}: empty data chunk")

    ints = np.frombuffer(data, dtype="<i2")
    samples = ints.astype(np.float64) / _PCM_SCALE
    return AudioClip(samples=samples, sample_rate=sample_rate, source_id=path.stem)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1] as PCM 16-bit mono.

    Values are rounded and clipped to the int16 range, matching the read
    scaling (1/32768) so a round trip is exact for representable values.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise AudioFormatError("write_wav needs a non-empty 1-D sample vector")
    ints = np.clip(np.rint(samples * _PCM_SCALE), -32768, 32767).astype("<i2")
    data = ints.tobytes()

    fmt_body = struct.pack("<HHIIHH", _FMT_PCM, 1, sample_rate,
                           sample_rate * 2, 2, 16)
    riff_size = 4 + (8 + len(fmt_body)) + (8 + len(data))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI4s", b"RIFF", riff_size, b"WAVE"))
        fh.write(struct.pack("<4sI", b"fmt ", len(fmt_body)))
        fh.write(fmt_body)
        fh.write(struct.pack("<4sI", b"data", len(data)))
        fh.write(data)
