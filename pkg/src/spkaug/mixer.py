"""SNR-controlled mixing of a target with one interferer and optional noise."""

import math
from dataclasses import dataclass

import numpy as np

from spkaug.audio import AudioClip, rms

NORMALIZATION_CEILING = 0.99


@dataclass(frozen=True)
class SnrDistribution:
    """SNR prior in dB.

    ``uniform`` uses ``(low, high)``, ``gaussian`` uses ``(mean, variance)``
    and ``point`` uses ``(value,)``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        expected = {"uniform": 2, "gaussian": 2, "point": 1}
        if self.kind not in expected:
            raise ValueError(f"unknown SNR distribution kind {self.kind!r}")
        if len(params) != expected[self.kind]:
            raise ValueError(f"{self.kind} SNR distribution takes {expected[self.kind]} parameters, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ValueError("SNR distribution parameters must be finite")
        if self.kind == "uniform" and params[0] > params[1]:
            raise ValueError(f"uniform SNR bounds reversed: {params}")
        if self.kind == "gaussian" and params[1] < 0:
            raise ValueError(f"gaussian SNR variance must be >= 0, got {params[1]}")

    @classmethod
    def uniform(cls, low, high):
        return cls("uniform", (low, high))

    @classmethod
    def gaussian(cls, mean, variance):
        return cls("gaussian", (mean, variance))

    @classmethod
    def point(cls, value):
        return cls("point", (value,))

    @classmethod
    def parse(cls, text: str) -> "SnrDistribution":
        """Parse ``uniform:-5:5``, ``gauss:0:16.81`` (variance) or ``point:3.0``."""
        name, _, rest = text.partition(":")
        kind = {"uniform": "uniform", "gauss": "gaussian", "gaussian": "gaussian", "point": "point"}.get(name)
        if kind is None or not rest:
            raise ValueError(f"cannot parse SNR distribution {text!r}")
        try:
            params = tuple(float(v) for v in rest.split(":"))
        except ValueError:
            raise ValueError(f"cannot parse SNR distribution {text!r}") from None
        return cls(kind, params)

    def __str__(self):
        name = "gauss" if self.kind == "gaussian" else self.kind
        return ":".join([name, *(repr(p) for p in self.params)])


def sample_snr(dist: SnrDistribution, rng: np.random.Generator, size=None):
    """Draw SNR values in dB; a scalar float when ``size`` is None."""
    if dist.kind == "point":
        value = np.full(size, dist.params[0]) if size is not None else dist.params[0]
    elif dist.kind == "uniform":
        low, high = dist.params
        value = rng.uniform(low, high, size)
    else:
        mean, variance = dist.params
        value = mean + math.sqrt(variance) * rng.standard_normal(size)
    return float(value) if size is None else value


def gain_for_snr(target: AudioClip, interferer: AudioClip, snr: float) -> float:
    """Interferer gain that puts it ``snr`` dB below the target (RMS based)."""
    t, i = rms(target), rms(interferer)
    if t == 0.0:
        raise ValueError("target has zero energy; SNR is undefined")
    if i == 0.0:
        raise ValueError("interferer has zero energy; SNR is undefined")
    return (t / i) * 10.0 ** (-snr / 20.0)


@dataclass(frozen=True)
class MixtureResult:
    mixture: AudioClip
    target_gain: float
    interferer_gain: float
    noise_gain: float | None
    realized_snr: float
    normalization_scale: float

    def scaled_target(self, target: AudioClip) -> AudioClip:
        """The clean reference with exactly the scaling applied inside the mixture."""
        n = len(self.mixture)
        return target.with_samples(target.samples[:n] * self.target_gain * self.normalization_scale)


def power_ratio_db(a, b) -> float:
    return 10.0 * math.log10(float(np.dot(a, a)) / float(np.dot(b, b)))


def mix(target: AudioClip, interferer: AudioClip, snr: float, noise: AudioClip | None = None,
        noise_snr: float | None = None) -> MixtureResult:
    """Mix ``interferer`` into ``target`` at ``snr`` dB.

    Speech components are cut to the shorter of the two. Noise, when given,
    is looped or cut to that length and scaled to ``noise_snr`` dB below the
    target. The sum is attenuated to a 0.99 peak if needed; the scale is
    returned so references can be stored consistently.
    """
    if target.sample_rate != interferer.sample_rate:
        raise ValueError(f"sample-rate mismatch: target {target.sample_rate} Hz, interferer {interferer.sample_rate} Hz")
    n = min(len(target), len(interferer))
    if n == 0:
        raise ValueError("target and interferer do not overlap (zero length)")
    t = target.samples[:n]
    i = interferer.samples[:n]
    t_clip, i_clip = target.with_samples(t), interferer.with_samples(i)
    target_gain = 1.0
    interferer_gain = gain_for_snr(t_clip, i_clip, snr)

    scaled_t = t * target_gain
    scaled_i = i * interferer_gain
    total = scaled_t + scaled_i

    noise_gain = None
    if noise is not None:
        if noise_snr is None:
            raise ValueError("noise given without noise_snr")
        if noise.sample_rate != target.sample_rate:
            raise ValueError(f"sample-rate mismatch: target {target.sample_rate} Hz, noise {noise.sample_rate} Hz")
        if len(noise) == 0:
            raise ValueError("noise clip is empty")
        nz = np.resize(noise.samples, n)
        noise_gain = gain_for_snr(t_clip, noise.with_samples(nz), noise_snr)
        total = total + nz * noise_gain

    realized = power_ratio_db(scaled_t, scaled_i)
    peak = float(np.max(np.abs(total)))
    scale = 1.0
    if peak > NORMALIZATION_CEILING:
        scale = NORMALIZATION_CEILING / peak
        # step down past rounding so the scaled peak never exceeds the ceiling
        while peak * scale > NORMALIZATION_CEILING:
            scale = math.nextafter(scale, 0.0)
    return MixtureResult(
        mixture=target.with_samples(total * scale),
        target_gain=target_gain,
        interferer_gain=interferer_gain,
        noise_gain=noise_gain,
        realized_snr=realized,
        normalization_scale=scale,
    )
