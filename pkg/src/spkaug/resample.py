"""Speed perturbation by band-limited time-axis resampling.

``resample(clip, alpha)`` evaluates ``y[n] = x(alpha * n)`` with a
Kaiser-windowed sinc interpolator, so the output is ``1/alpha`` times as
long and every spectral component moves from ``f`` to ``alpha * f``.
The waveform amplitude is preserved.
"""

import functools
from fractions import Fraction

import numpy as np

from spkaug.audio import AudioClip

ALPHA_MIN = 0.5
ALPHA_MAX = 2.0

KAISER_BETA = 8.6
ZERO_CROSSINGS = 32
ANTIALIAS_MARGIN = 0.95
MAX_POLYPHASE_DENOMINATOR = 1000

_CHUNK = 1 << 14


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not (ALPHA_MIN <= alpha <= ALPHA_MAX):
        raise ValueError(f"perturbation factor {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
    return alpha


def snap_alpha(alpha) -> float:
    """Round to 4 decimals, the precision used in identifiers and cache keys."""
    return round(float(alpha), 4)


class AlphaSet(tuple):
    """Ordered, distinct perturbation factors that always include 1.0."""

    def __new__(cls, values=None):
        if values is None:
            values = DEFAULT_ALPHA_VALUES
        snapped = [snap_alpha(check_alpha(v)) for v in values]
        if len(set(snapped)) != len(snapped):
            raise ValueError(f"duplicate perturbation factors in {list(values)}")
        if 1.0 not in snapped:
            raise ValueError("alpha set must contain 1.0 (the unperturbed speaker)")
        return super().__new__(cls, sorted(snapped))

    @classmethod
    def parse(cls, text: str) -> "AlphaSet":
        return cls(float(v) for v in text.split(",") if v.strip())

    def __repr__(self):
        return f"AlphaSet({list(self)})"


DEFAULT_ALPHA_VALUES = (0.8, 0.9, 1.0, 1.1, 1.2)
DEFAULT_ALPHAS = AlphaSet(DEFAULT_ALPHA_VALUES)


def _cutoff(alpha: float) -> float:
    """Low-pass cutoff as a fraction of the input Nyquist frequency."""
    return ANTIALIAS_MARGIN / alpha if alpha > 1.0 else 1.0


def _kernel(offsets: np.ndarray, cutoff: float) -> np.ndarray:
    """Windowed-sinc weights at ``offsets`` input samples from the output instant."""
    half_width = ZERO_CROSSINGS / cutoff
    u = np.clip(offsets / half_width, -1.0, 1.0)
    window = np.i0(KAISER_BETA * np.sqrt(1.0 - u * u)) / np.i0(KAISER_BETA)
    w = cutoff * np.sinc(cutoff * offsets) * window
    # unit DC gain per output sample keeps amplitudes independent of phase
    return w / w.sum(axis=-1, keepdims=True)


def _taps(alpha: float) -> int:
    return int(np.ceil(ZERO_CROSSINGS / _cutoff(alpha)))


@functools.lru_cache(maxsize=64)
def _polyphase_table(num: int, den: int) -> np.ndarray:
    """Filter bank for alpha = num/den: one row per fractional phase r/den."""
    alpha = num / den
    taps = _taps(alpha)
    j = np.arange(-taps + 1, taps + 1)
    frac = np.arange(den)[:, None] / den
    table = _kernel(frac - j[None, :], _cutoff(alpha))
    table.flags.writeable = False
    return table


def _as_fraction(alpha: float):
    frac = Fraction(alpha).limit_denominator(MAX_POLYPHASE_DENOMINATOR)
    if abs(float(frac) - alpha) <= 1e-12:
        return frac.numerator, frac.denominator
    return None


def resample(clip: AudioClip, alpha, max_length: int | None = None) -> AudioClip:
    """Play ``clip`` ``alpha`` times faster at the same sample rate.

    Output length is ``round(len(clip) / alpha)``. For ``alpha > 1`` the
    interpolation kernel doubles as an anti-aliasing low-pass at
    0.95 * Nyquist / alpha. Samples outside the input are taken as zero.
    """
    alpha = check_alpha(alpha)
    if alpha == 1.0:
        return clip.with_samples(clip.samples)
    n_in = len(clip)
    n_out = int(round(n_in / alpha))
    if max_length is not None and n_out > max_length:
        raise ValueError(f"resampled length {n_out} exceeds the configured maximum {max_length}")
    if n_out == 0 or n_in == 0:
        return clip.with_samples(np.zeros(n_out))

    taps = _taps(alpha)
    # zero support: pad so every window [floor(t)-taps+1, floor(t)+taps] is in range
    padded = np.concatenate([np.zeros(taps), clip.samples, np.zeros(taps + 2)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * taps)
    out = np.empty(n_out)

    rational = _as_fraction(alpha)
    if rational is not None:
        num, den = rational
        table = _polyphase_table(num, den)
        n = np.arange(n_out, dtype=np.int64)
        pos = n * num
        base = pos // den
        phase = pos % den
        # windows[i] starts at input sample i - taps + 1
        for r in range(den):
            sel = np.nonzero(phase == r)[0]
            if sel.size:
                out[sel] = windows[base[sel] + 1] @ table[r]
    else:
        cutoff = _cutoff(alpha)
        j = np.arange(-taps + 1, taps + 1)
        for start in range(0, n_out, _CHUNK):
            t = np.arange(start, min(start + _CHUNK, n_out)) * alpha
            base = np.floor(t).astype(np.int64)
            weights = _kernel((t - base)[:, None] - j[None, :], cutoff)
            out[start:start + len(t)] = np.einsum("ij,ij->i", windows[base + 1], weights)
    return clip.with_samples(out)
