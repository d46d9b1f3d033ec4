"""Pseudo-speaker augmentation, mixture synthesis and extraction metrics."""

from spkaug.audio import AudioClip, dominant_frequency, peak_normalize, read_wav, rms, write_wav
from spkaug.augment import AugmentSpec, PseudoSpeakerId, expand_speaker_set, make_pseudo
from spkaug.metrics import EvalReport, evaluate_dir, nsr, si_sdr, si_sdri
from spkaug.mixer import MixtureResult, SnrDistribution, gain_for_snr, mix, sample_snr
from spkaug.resample import DEFAULT_ALPHAS, AlphaSet, resample
from spkaug.wsola import WsolaConfig, best_offset, time_stretch

__version__ = "0.1.0"

__all__ = [
    "AlphaSet",
    "AudioClip",
    "AugmentSpec",
    "DEFAULT_ALPHAS",
    "EvalReport",
    "MixtureResult",
    "PseudoSpeakerId",
    "SnrDistribution",
    "WsolaConfig",
    "best_offset",
    "dominant_frequency",
    "evaluate_dir",
    "expand_speaker_set",
    "gain_for_snr",
    "make_pseudo",
    "mix",
    "nsr",
    "peak_normalize",
    "read_wav",
    "resample",
    "rms",
    "sample_snr",
    "si_sdr",
    "si_sdri",
    "time_stretch",
    "write_wav",
]
