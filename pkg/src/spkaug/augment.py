"""Pseudo-speaker generation: resample to shift speaker traits, then WSOLA
back to the original tempo."""

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from spkaug.audio import AudioClip, read_wav, write_wav
from spkaug.errors import SpkAugError
from spkaug.resample import DEFAULT_ALPHAS, check_alpha, resample, snap_alpha
from spkaug.wsola import WsolaConfig, time_stretch

PIPELINE_VERSION = "1"
ID_SEPARATOR = "#sp"


def alpha_code(alpha) -> str:
    """Render alpha as hundredths, zero-padded to 3 digits: 0.9 -> "090".

    Factors with more than two decimals keep them after a dot
    (0.905 -> "090.50") so that distinct snapped factors never collide.
    """
    units = int(round(snap_alpha(alpha) * 10000))
    whole, rest = divmod(units, 100)
    return f"{whole:03d}" if rest == 0 else f"{whole:03d}.{rest:02d}"


def parse_alpha_code(code: str) -> float:
    return snap_alpha(float(code) / 100.0)


@dataclass(frozen=True)
class PseudoSpeakerId:
    """A base speaker heard through perturbation factor ``alpha``.

    ``str()`` gives the canonical label: the bare base label for alpha 1.0,
    otherwise ``"<base>#sp<code>"``, e.g. ``"440#sp090"``.
    """

    base_speaker: str
    alpha: float = 1.0

    def __post_init__(self):
        if not self.base_speaker or ID_SEPARATOR in self.base_speaker:
            raise ValueError(f"invalid base speaker label {self.base_speaker!r}")
        object.__setattr__(self, "alpha", snap_alpha(check_alpha(self.alpha)))

    @property
    def is_original(self) -> bool:
        return self.alpha == 1.0

    def __str__(self):
        if self.is_original:
            return self.base_speaker
        return f"{self.base_speaker}{ID_SEPARATOR}{alpha_code(self.alpha)}"

    @classmethod
    def parse(cls, label: str) -> "PseudoSpeakerId":
        base, sep, code = label.rpartition(ID_SEPARATOR)
        if not sep:
            return cls(label, 1.0)
        return cls(base, parse_alpha_code(code))


@dataclass(frozen=True)
class AugmentSpec:
    alpha: float = 1.0
    restore_tempo: bool = True

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha))


def make_pseudo(clip: AudioClip, spec: AugmentSpec, config: WsolaConfig | None = None) -> AudioClip:
    """Shift speaker traits by ``spec.alpha``.

    With ``restore_tempo`` the resampled signal is time-stretched by
    ``1/alpha`` so duration, content and prosody timing match the input.
    """
    if spec.alpha == 1.0:
        return clip.with_samples(clip.samples)
    shifted = resample(clip, spec.alpha)
    if not spec.restore_tempo:
        return shifted
    return time_stretch(shifted, 1.0 / spec.alpha, config)


def expand_speaker_set(speakers, alphas=DEFAULT_ALPHAS) -> list[PseudoSpeakerId]:
    """All (speaker, alpha) pairs, speaker-major with ascending alpha."""
    speakers = list(speakers)
    if not speakers:
        raise ValueError("speaker list is empty")
    if len(set(speakers)) != len(speakers):
        dupes = sorted({s for s in speakers if speakers.count(s) > 1})
        raise ValueError(f"duplicate speaker labels: {dupes}")
    ordered = sorted({snap_alpha(a) for a in alphas})
    return [PseudoSpeakerId(s, a) for s in speakers for a in ordered]


class RenderCache:
    """On-disk cache of augmented utterances.

    Layout: ``{root}/{speaker}/{utterance}_{alpha_code}[_noTempo].wav``, stored
    as float32. Every render is returned as read back from float32 so cache
    hits and misses yield identical samples. Writers are serialized per key
    with a lock file; readers never see partial files because entries are
    published with an atomic rename.
    """

    def __init__(self, root, config: WsolaConfig | None = None):
        self.root = Path(root)
        self.config = config or WsolaConfig()
        self.root.mkdir(parents=True, exist_ok=True)
        self._check_version()

    def _version_tag(self) -> str:
        c = self.config
        return f"{PIPELINE_VERSION} frame_ms={c.frame_ms} overlap={c.overlap_ratio} search_ms={c.search_ms}\n"

    def _check_version(self):
        marker = self.root / "PIPELINE_VERSION"
        tag = self._version_tag()
        with FileLock(str(marker) + ".lock"):
            if not marker.exists():
                marker.write_text(tag)
            elif marker.read_text() != tag:
                raise SpkAugError(f"{self.root}: render cache was built with different pipeline settings "
                                  f"({marker.read_text().strip()!r}); remove it or use another cache directory")

    def path_for(self, speaker: str, utterance: str, spec: AugmentSpec) -> Path:
        suffix = "" if spec.restore_tempo else "_noTempo"
        return self.root / speaker / f"{utterance}_{alpha_code(spec.alpha)}{suffix}.wav"

    def get(self, speaker: str, utterance: str, spec: AugmentSpec, load) -> AudioClip:
        """Return the augmented utterance, rendering it with ``load()`` on a miss."""
        if spec.alpha == 1.0:
            return load()
        path = self.path_for(speaker, utterance, spec)
        if path.exists():
            return read_wav(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with FileLock(str(path) + ".lock"):
            if path.exists():
                return read_wav(path)
            rendered = make_pseudo(load(), spec, self.config)
            rendered = rendered.with_samples(rendered.samples.astype(np.float32))
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            os.close(fd)
            try:
                write_wav(tmp, rendered, "float32")
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        return rendered

