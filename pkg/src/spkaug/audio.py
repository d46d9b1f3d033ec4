"""Mono audio container, RIFF/WAVE I/O and small signal utilities."""

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from spkaug.errors import WavError

DEFAULT_SAMPLE_RATE = 8000

_FORMAT_PCM = 0x0001
_FORMAT_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE
# first two bytes of the KSDATAFORMAT_SUBTYPE_* GUIDs carry the plain format tag
_GUID_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"

ENCODINGS = ("pcm16", "float32")


@dataclass(frozen=True, eq=False)
class AudioClip:
    """A mono buffer of float64 samples at an integer sample rate.

    The sample array is made read-only on construction so clips can be
    shared between workers without copying.
    """

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 1:
            raise ValueError(f"AudioClip expects 1-D samples, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None

    @property
    def duration_seconds(self) -> float:
        return len(self) / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if len(self) else 0.0

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)


class WavInfo(NamedTuple):
    sample_rate: int
    channels: int
    num_frames: int
    encoding: str


def _parse_header(path, fh):
    """Walk the chunk list up to the data chunk.

    Returns (WavInfo, data_offset, data_size). Leaves the file position
    undefined.
    """
    head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise WavError(path, "malformed RIFF header (not a RIFF/WAVE file)")
    fmt = None
    while True:
        chunk = fh.read(8)
        if len(chunk) < 8:
            if fmt is None:
                raise WavError(path, "malformed RIFF header: no fmt chunk")
            raise WavError(path, "malformed RIFF header: no data chunk")
        cid, size = struct.unpack("<4sI", chunk)
        if cid == b"fmt ":
            body = fh.read(size)
            if len(body) < 16:
                raise WavError(path, "malformed RIFF header: truncated fmt chunk")
            tag, channels, rate, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _FORMAT_EXTENSIBLE:
                if len(body) < 40 or body[26:40] != _GUID_TAIL:
                    raise WavError(path, "unsupported codec: unknown extensible subformat")
                tag = struct.unpack("<H", body[24:26])[0]
            if tag == _FORMAT_PCM and bits == 16:
                encoding = "pcm16"
            elif tag == _FORMAT_FLOAT and bits == 32:
                encoding = "float32"
            else:
                raise WavError(path, f"unsupported codec: format tag {tag:#06x} with {bits} bits")
            if channels < 1 or rate < 1:
                raise WavError(path, "malformed RIFF header: bad channel count or rate")
            fmt = (rate, channels, encoding)
            if size % 2:
                fh.read(1)
        elif cid == b"data":
            if fmt is None:
                raise WavError(path, "malformed RIFF header: data chunk before fmt chunk")
            rate, channels, encoding = fmt
            frame_bytes = 2 * channels if encoding == "pcm16" else 4 * channels
            offset = fh.tell()
            # tolerate writers that leave a placeholder size or truncate the file
            available = os.fstat(fh.fileno()).st_size - offset
            size = min(size, max(available, 0))
            return WavInfo(rate, channels, size // frame_bytes, encoding), offset, size
        else:
            fh.seek(size + (size % 2), os.SEEK_CUR)


def wav_info(path) -> WavInfo:
    """Read only the header of a WAV file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            info, _, _ = _parse_header(path, fh)
    except FileNotFoundError:
        raise WavError(path, "no such file") from None
    except IsADirectoryError:
        raise WavError(path, "is a directory") from None
    return info


def read_wav(path) -> AudioClip:
    """Load a PCM16 or float32 WAV file as a mono clip.

    Multichannel files are averaged to mono. PCM16 samples are scaled by
    1/32768.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            info, offset, size = _parse_header(path, fh)
            fh.seek(offset)
            raw = fh.read(size)
    except FileNotFoundError:
        raise WavError(path, "no such file") from None
    except IsADirectoryError:
        raise WavError(path, "is a directory") from None

    n_values = info.num_frames * info.channels
    if info.encoding == "pcm16":
        data = np.frombuffer(raw, dtype="<i2", count=n_values).astype(np.float64) / 32768.0
    else:
        data = np.frombuffer(raw, dtype="<f4", count=n_values).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise WavError(path, "non-finite sample values")
    if info.channels > 1:
        data = data.reshape(-1, info.channels).mean(axis=1)
    return AudioClip(data, info.sample_rate)


def write_wav(path, clip: AudioClip, encoding: str = "float32") -> None:
    """Write a mono WAV file.

    ``pcm16`` requires every sample to lie in [-1, 1]; values are rounded
    to the nearest step of 1/32768 and +1.0 saturates at 32767.
    """
    path = Path(path)
    if encoding == "pcm16":
        x = clip.samples
        if len(x) and np.max(np.abs(x)) > 1.0:
            raise WavError(path, f"sample out of [-1, 1] (peak {clip.peak:.6g}); normalize before pcm16 encoding")
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        fmt = struct.pack("<HHIIHH", _FORMAT_PCM, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16)
        extra = b""
    elif encoding == "float32":
        payload = clip.samples.astype("<f4").tobytes()
        fmt = struct.pack("<HHIIHHH", _FORMAT_FLOAT, 1, clip.sample_rate, clip.sample_rate * 4, 4, 32, 0)
        extra = b"fact" + struct.pack("<II", 4, len(clip))
    else:
        raise ValueError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")

    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + extra
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) % 2:
        body += b"\x00"
    try:
        with open(path, "wb") as fh:
            fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)
    except OSError as exc:
        raise WavError(path, f"cannot write: {exc.strerror or exc}") from None


def rms(clip: AudioClip) -> float:
    if len(clip) == 0:
        return 0.0
    x = clip.samples
    return float(np.sqrt(np.dot(x, x) / len(x)))


def peak_normalize(clip: AudioClip, ceiling: float = 0.99) -> AudioClip:
    """Attenuate ``clip`` so its peak does not exceed ``ceiling``; never amplifies."""
    if not 0.0 < ceiling <= 1.0:
        raise ValueError(f"ceiling must lie in (0, 1], got {ceiling}")
    peak = clip.peak
    if peak <= ceiling:
        return clip
    scaled = clip.samples * (ceiling / peak)
    # rounding can leave the peak one ulp above the ceiling
    return clip.with_samples(np.clip(scaled, -ceiling, ceiling))


def dominant_frequency(clip: AudioClip) -> float:
    """Frequency in Hz of the strongest spectral peak.

    Hann-windowed full-length DFT; the peak bin is refined by fitting a
    parabola through the log magnitudes of the bin and its two neighbours.
    """
    n = len(clip)
    if n < 256:
        raise ValueError(f"dominant_frequency needs at least 256 samples, got {n}")
    spectrum = np.abs(np.fft.rfft(clip.samples * np.hanning(n)))
    k = int(np.argmax(spectrum))
    if spectrum[k] == 0.0 or k == len(spectrum) - 1:
        return k * clip.sample_rate / n
    # the spectrum of a real signal is symmetric about DC
    left = spectrum[k - 1] if k > 0 else spectrum[1]
    a, b, c = np.log(np.maximum([left, spectrum[k], spectrum[k + 1]], 1e-300))
    denom = a - 2.0 * b + c
    delta = 0.5 * (a - c) / denom if denom < 0 else 0.0
    return max(0.0, (k + delta) * clip.sample_rate / n)
