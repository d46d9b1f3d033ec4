"""Pitch-preserving tempo change by waveform-similarity overlap-add (WSOLA)."""

import math
from dataclasses import dataclass

import numpy as np

from spkaug.audio import AudioClip

FACTOR_MIN = 0.5
FACTOR_MAX = 2.0


@dataclass(frozen=True)
class WsolaConfig:
    frame_ms: float = 25.0
    overlap_ratio: float = 0.5
    search_ms: float = 7.5

    def __post_init__(self):
        if not 0.0 < self.overlap_ratio < 1.0:
            raise ValueError(f"overlap_ratio must lie in (0, 1), got {self.overlap_ratio}")
        if self.frame_ms <= 0 or self.search_ms < 0:
            raise ValueError("frame_ms must be positive and search_ms non-negative")

    def frame_samples(self, sample_rate: int) -> int:
        frame = int(round(self.frame_ms * sample_rate / 1000.0))
        if frame < 64:
            raise ValueError(f"WSOLA frame of {frame} samples at {sample_rate} Hz is below the 64-sample minimum")
        return frame

    def hop_samples(self, sample_rate: int) -> int:
        """Synthesis hop, frame * (1 - overlap_ratio)."""
        frame = self.frame_samples(sample_rate)
        return min(frame - 1, max(1, int(round(frame * (1.0 - self.overlap_ratio)))))

    def search_samples(self, sample_rate: int) -> int:
        search = int(round(self.search_ms * sample_rate / 1000.0))
        if search < 1:
            raise ValueError(f"WSOLA search window of {search} samples is below the 1-sample minimum")
        return search


def best_offset(prev_tail, candidates, search: int | None = None) -> int:
    """Offset of the candidate window most similar to ``prev_tail``.

    Offset ``o`` selects ``candidates[search + o : search + o + len(prev_tail)]``
    for ``o`` in ``[-search, search]``; ``search`` defaults to the largest
    radius the region allows. Similarity is the normalized cross-correlation.
    Ties go to the smallest ``|o|`` (then the negative side), and a silent
    tail or an all-silent region yields 0.
    """
    tail = np.asarray(prev_tail, dtype=np.float64)
    region = np.asarray(candidates, dtype=np.float64)
    width = len(tail)
    if len(region) < width:
        raise ValueError("candidate region is shorter than the overlap window")
    if search is None:
        search = (len(region) - width) // 2
    search = min(search, (len(region) - width) // 2)
    windows = np.lib.stride_tricks.sliding_window_view(region, width)[: 2 * search + 1]

    tail_energy = float(np.dot(tail, tail))
    if tail_energy == 0.0:
        return 0
    dots = windows @ tail
    energies = np.einsum("ij,ij->i", windows, windows)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = np.where(energies > 0.0, dots / np.sqrt(energies * tail_energy), 0.0)
    best = scores.max()
    offsets = np.arange(-search, search + 1)
    hits = offsets[scores == best]
    return int(hits[np.lexsort((hits, np.abs(hits)))][0])


def time_stretch(clip: AudioClip, factor, config: WsolaConfig | None = None) -> AudioClip:
    """Play ``clip`` ``factor`` times faster without changing its pitch.

    The output has exactly ``round(len(clip) / factor)`` samples. Frames are
    cross-faded with a Hann window and the overlap-add is normalized by the
    summed window weight, so every output sample is a convex combination of
    input samples. Frames that run past the end of the input read silence,
    which fades the final partial frame out.
    """
    config = config or WsolaConfig()
    factor = float(factor)
    if not FACTOR_MIN <= factor <= FACTOR_MAX:
        raise ValueError(f"tempo factor {factor} outside [{FACTOR_MIN}, {FACTOR_MAX}]")
    sr = clip.sample_rate
    frame = config.frame_samples(sr)
    hop = config.hop_samples(sr)
    search = config.search_samples(sr)
    n_in = len(clip)
    if n_in < frame:
        raise ValueError(f"clip of {n_in} samples is shorter than one WSOLA frame ({frame})")
    if factor == 1.0:
        return clip.with_samples(clip.samples)

    n_out = int(round(n_in / factor))
    overlap = frame - hop
    analysis_hop = hop * factor
    n_frames = max(1, math.ceil((n_out - frame) / hop) + 1)

    # pad so every searched window stays inside the buffer
    pad_left = search
    last_start = int(round((n_frames - 1) * analysis_hop)) + search + hop + frame
    x = np.concatenate([np.zeros(pad_left), clip.samples, np.zeros(max(0, last_start - n_in) + frame)])

    # shifted Hann: strictly positive, and copies spaced by half a frame sum to one
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * (np.arange(frame) + 0.5) / frame)
    acc = np.zeros(n_frames * hop + frame)
    weight = np.zeros_like(acc)

    prev = 0
    for k in range(n_frames):
        if k == 0:
            start = 0
        else:
            nominal = int(round(k * analysis_hop))
            # what the previous frame would continue into at the original tempo
            tail = x[pad_left + prev + hop: pad_left + prev + hop + overlap]
            region = x[pad_left + nominal - search: pad_left + nominal + search + overlap]
            start = nominal + best_offset(tail, region, search)
        seg = x[pad_left + start: pad_left + start + frame]
        out_pos = k * hop
        acc[out_pos:out_pos + frame] += window * seg
        weight[out_pos:out_pos + frame] += window
        prev = start

    out = acc[:n_out] / weight[:n_out]
    return clip.with_samples(out)
