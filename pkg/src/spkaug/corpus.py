"""Corpus scanning, triplet sampling with hard-sample quotas, and rendering
of reproducible mixture datasets."""

import enum
import functools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spkaug.audio import AudioClip, WavInfo, peak_normalize, read_wav, wav_info, write_wav
from spkaug.augment import AugmentSpec, PseudoSpeakerId, RenderCache
from spkaug.errors import CorpusError, PolicyError, SpkAugError
from spkaug.mixer import SnrDistribution, mix, sample_snr
from spkaug.resample import DEFAULT_ALPHAS, AlphaSet
from spkaug.wsola import WsolaConfig

log = logging.getLogger(__name__)

# spawn keys separating the random streams derived from one master seed
_SCHEDULE_STREAM = 0
_TRIPLET_STREAM = 1

_ORDINARY, _SAME_CONTENT, _SAME_SPEAKER = 0, 1, 2


class HardSampleKind(enum.Enum):
    SAME_TEMPO = "ST"
    SAME_CONTENT = "SC"
    SAME_SPEAKER = "SS"

    @classmethod
    def parse(cls, text: str) -> "HardSampleKind":
        key = text.strip().upper().replace(".", "").replace("-", "_")
        aliases = {"ST": cls.SAME_TEMPO, "SC": cls.SAME_CONTENT, "SS": cls.SAME_SPEAKER}
        if key in aliases:
            return aliases[key]
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown hard-sample kind {text!r}; expected ST, SC or SS") from None


ALL_KINDS = frozenset(HardSampleKind)


def _tag_list(tags) -> list[str]:
    return sorted(t.value for t in tags)


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    speaker: str
    path: str
    num_samples: int
    duration: float


@dataclass(frozen=True)
class CorpusManifest:
    root: Path
    utterances: tuple
    speakers: dict
    sample_rate: int

    @functools.cached_property
    def by_id(self) -> dict:
        return {u.id: u for u in self.utterances}

    @property
    def unenrollable(self) -> list[str]:
        """Speakers with a single utterance: no enrollment distinct from the target."""
        return [s for s, ids in self.speakers.items() if len(ids) < 2]

    @property
    def enrollable(self) -> list[str]:
        return [s for s, ids in self.speakers.items() if len(ids) >= 2]

    def load(self, utterance_id: str) -> AudioClip:
        return read_wav(self.root / self.by_id[utterance_id].path)


def scan_corpus(root, skip_unreadable: bool = False) -> CorpusManifest:
    """Index ``root/{speaker}/{utterance}.wav`` in lexicographic order."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"{root}: not a directory")
    utterances = []
    speakers = {}
    rates = set()
    for spk_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        ids = []
        for wav in sorted(spk_dir.glob("*.wav")):
            try:
                info: WavInfo = wav_info(wav)
            except SpkAugError as exc:
                if skip_unreadable:
                    log.warning("skipping unreadable file %s", exc)
                    continue
                raise CorpusError(str(exc)) from None
            rates.add(info.sample_rate)
            if len(rates) > 1:
                raise CorpusError(f"{wav}: sample-rate mismatch ({sorted(rates)} Hz found in corpus)")
            rec = UtteranceRecord(
                id=f"{spk_dir.name}/{wav.stem}",
                speaker=spk_dir.name,
                path=f"{spk_dir.name}/{wav.name}",
                num_samples=info.num_frames,
                duration=info.num_frames / info.sample_rate,
            )
            utterances.append(rec)
            ids.append(rec.id)
        if ids:
            speakers[spk_dir.name] = tuple(ids)
    if not utterances:
        raise CorpusError(f"{root}: empty corpus (no readable {{speaker}}/{{utterance}}.wav files)")
    manifest = CorpusManifest(root, tuple(utterances), speakers, rates.pop())
    for spk in manifest.unenrollable:
        log.info("speaker %s has a single utterance and is unenrollable", spk)
    return manifest


@dataclass(frozen=True)
class CompositionPolicy:
    """How triplets are drawn. Hard-sample rates are exact quotas over ``total``."""

    total: int
    seed: int = 0
    allow: frozenset = ALL_KINDS
    rate_same_content: float = 0.01
    rate_same_speaker: float = 0.0008
    alphas: AlphaSet = DEFAULT_ALPHAS
    snr: SnrDistribution = SnrDistribution.uniform(-5.0, 5.0)
    noise: tuple = ()
    noise_snr: SnrDistribution | None = None

    def __post_init__(self):
        object.__setattr__(self, "allow", frozenset(self.allow))
        object.__setattr__(self, "alphas", AlphaSet(self.alphas))
        object.__setattr__(self, "noise", tuple(str(n) for n in self.noise))
        if self.total < 0:
            raise PolicyError(f"total must be >= 0, got {self.total}")
        for name in ("rate_same_content", "rate_same_speaker"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise PolicyError(f"{name} must lie in [0, 1], got {rate}")
        if self.rate_same_content + self.rate_same_speaker > 1.0:
            raise PolicyError("rate_same_content + rate_same_speaker exceeds 1")
        if HardSampleKind.SAME_CONTENT not in self.allow and self.rate_same_content > 0:
            raise PolicyError("SameContent is excluded but rate_same_content > 0")
        if HardSampleKind.SAME_SPEAKER not in self.allow and self.rate_same_speaker > 0:
            raise PolicyError("SameSpeaker is excluded but rate_same_speaker > 0")
        if self.noise and self.noise_snr is None:
            raise PolicyError("noise files given without a noise SNR distribution")

    @classmethod
    def excluding(cls, kinds, **kwargs) -> "CompositionPolicy":
        """Policy with ``kinds`` removed; their rates are forced to zero."""
        kinds = frozenset(kinds)
        if HardSampleKind.SAME_CONTENT in kinds:
            kwargs["rate_same_content"] = 0.0
        if HardSampleKind.SAME_SPEAKER in kinds:
            kwargs["rate_same_speaker"] = 0.0
        return cls(allow=ALL_KINDS - kinds, **kwargs)

    @property
    def restore_tempo(self) -> bool:
        # removing SameTempo means augmented speech is resampled only
        return HardSampleKind.SAME_TEMPO in self.allow

    @property
    def quotas(self) -> tuple[int, int]:
        return (math.floor(self.total * self.rate_same_content + 0.5),
                math.floor(self.total * self.rate_same_speaker + 0.5))

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "seed": self.seed,
            "allow": _tag_list(self.allow),
            "rate_same_content": self.rate_same_content,
            "rate_same_speaker": self.rate_same_speaker,
            "alphas": list(self.alphas),
            "snr": str(self.snr),
            "noise": list(self.noise),
            "noise_snr": str(self.noise_snr) if self.noise_snr else None,
            "restore_tempo": self.restore_tempo,
        }


@dataclass(frozen=True)
class TripletSpec:
    """One {target, enrollment, mixture} training example, by reference.

    ``target``, ``enrollment`` and ``interferer`` are base utterance ids;
    the pseudo-speaker ids say which perturbation each is heard through.
    The enrollment uses the target's pseudo-speaker.
    """

    index: int
    target: str
    target_speaker: PseudoSpeakerId
    enrollment: str
    interferer: str
    interferer_speaker: PseudoSpeakerId
    snr: float
    restore_tempo: bool = True
    noise: str | None = None
    noise_snr: float | None = None
    hard_tags: frozenset = field(default=frozenset())

    def __post_init__(self):
        if self.enrollment == self.target:
            raise ValueError(f"triplet {self.index}: enrollment must differ from the target utterance")
        if self.target_speaker == self.interferer_speaker:
            raise ValueError(f"triplet {self.index}: target and interferer share pseudo-speaker {self.target_speaker}")


def classify_hard(triplet: TripletSpec) -> frozenset:
    tags = set()
    if triplet.target == triplet.interferer:
        tags.add(HardSampleKind.SAME_CONTENT)
    elif triplet.target_speaker.base_speaker == triplet.interferer_speaker.base_speaker:
        tags.add(HardSampleKind.SAME_SPEAKER)
    augmented = not (triplet.target_speaker.is_original and triplet.interferer_speaker.is_original)
    if augmented and triplet.restore_tempo:
        tags.add(HardSampleKind.SAME_TEMPO)
    return frozenset(tags)


def _stream(seed: int, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@functools.lru_cache(maxsize=16)
def _schedule(seed: int, total: int, n_content: int, n_speaker: int) -> np.ndarray:
    """Hard-sample kind per index: quotas laid over a seeded permutation."""
    kinds = np.full(total, _ORDINARY, dtype=np.int8)
    order = _stream(seed, _SCHEDULE_STREAM).permutation(total)
    kinds[order[:n_content]] = _SAME_CONTENT
    kinds[order[n_content:n_content + n_speaker]] = _SAME_SPEAKER
    kinds.flags.writeable = False
    return kinds


def check_supply(manifest: CorpusManifest, policy: CompositionPolicy) -> None:
    """Raise PolicyError if the manifest cannot provide what the policy asks for."""
    if len(manifest.enrollable) < 2:
        raise PolicyError(f"need at least 2 enrollable speakers (with >= 2 utterances), found {len(manifest.enrollable)}")
    n_content, n_speaker = policy.quotas
    if (n_content or n_speaker) and len(policy.alphas) < 2:
        raise PolicyError("SameContent/SameSpeaker triplets need at least two perturbation factors")


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def sample_triplet(manifest: CorpusManifest, policy: CompositionPolicy, index: int) -> TripletSpec:
    """Draw triplet ``index``; the result depends only on (policy.seed, index)."""
    if not 0 <= index < policy.total:
        raise IndexError(f"triplet index {index} outside [0, {policy.total})")
    check_supply(manifest, policy)
    kind = _schedule(policy.seed, policy.total, *policy.quotas)[index]
    rng = _stream(policy.seed, _TRIPLET_STREAM, index)
    alphas = list(policy.alphas)

    pool = [u for s in manifest.enrollable for u in manifest.speakers[s]]
    target = _pick(rng, pool)
    speaker = manifest.by_id[target].speaker
    alpha_t = _pick(rng, alphas)
    others = [u for u in manifest.speakers[speaker] if u != target]
    enrollment = _pick(rng, others)

    if kind == _SAME_CONTENT:
        interferer = target
        alpha_i = _pick(rng, [a for a in alphas if a != alpha_t])
    elif kind == _SAME_SPEAKER:
        interferer = _pick(rng, others)
        alpha_i = _pick(rng, [a for a in alphas if a != alpha_t])
    else:
        other_speaker = _pick(rng, [s for s in manifest.speakers if s != speaker])
        interferer = _pick(rng, manifest.speakers[other_speaker])
        alpha_i = _pick(rng, alphas)

    snr = sample_snr(policy.snr, rng)
    noise = noise_snr = None
    if policy.noise:
        noise = _pick(rng, policy.noise)
        noise_snr = sample_snr(policy.noise_snr, rng)

    spec = TripletSpec(
        index=index,
        target=target,
        target_speaker=PseudoSpeakerId(speaker, alpha_t),
        enrollment=enrollment,
        interferer=interferer,
        interferer_speaker=PseudoSpeakerId(manifest.by_id[interferer].speaker, alpha_i),
        snr=snr,
        restore_tempo=policy.restore_tempo,
        noise=noise,
        noise_snr=noise_snr,
    )
    object.__setattr__(spec, "hard_tags", classify_hard(spec))
    return spec


@dataclass(frozen=True)
class _RenderContext:
    manifest: CorpusManifest
    policy: CompositionPolicy
    out: Path
    cache_root: Path
    encoding: str
    wsola: WsolaConfig
    noise_root: Path | None


_worker_ctx = None
_worker_cache = None


def _init_worker(ctx):
    global _worker_ctx, _worker_cache
    _worker_ctx = ctx
    _worker_cache = RenderCache(ctx.cache_root, ctx.wsola)


def _render_worker(index):
    return render_triplet(_worker_ctx, _worker_cache, index)


def _component(ctx, cache, utterance_id, pseudo: PseudoSpeakerId) -> AudioClip:
    rec = ctx.manifest.by_id[utterance_id]
    spec = AugmentSpec(pseudo.alpha, ctx.policy.restore_tempo)
    utt_name = utterance_id.rpartition("/")[2]
    return cache.get(rec.speaker, utt_name, spec, lambda: ctx.manifest.load(utterance_id))


def render_triplet(ctx: _RenderContext, cache: RenderCache, index: int) -> dict:
    """Sample, render and write triplet ``index``; returns its manifest line."""
    try:
        t = sample_triplet(ctx.manifest, ctx.policy, index)
        target = _component(ctx, cache, t.target, t.target_speaker)
        interferer = _component(ctx, cache, t.interferer, t.interferer_speaker)
        enrollment = peak_normalize(_component(ctx, cache, t.enrollment, t.target_speaker))
        noise = read_wav(ctx.noise_root / t.noise) if t.noise is not None else None
        result = mix(target, interferer, t.snr, noise, t.noise_snr)
        reference = result.scaled_target(target)

        name = f"{index:06d}.wav"
        write_wav(ctx.out / "mix" / name, result.mixture, ctx.encoding)
        write_wav(ctx.out / "ref" / name, reference, ctx.encoding)
        write_wav(ctx.out / "enroll" / name, enrollment, ctx.encoding)
    except (SpkAugError, ValueError, OSError) as exc:
        raise CorpusError(f"triplet {index}: {exc}") from exc

    by_id = ctx.manifest.by_id
    return {
        "index": index,
        "target_path": by_id[t.target].path,
        "enroll_path": f"enroll/{name}",
        "interferer_path": by_id[t.interferer].path,
        "mixture_path": f"mix/{name}",
        "reference_path": f"ref/{name}",
        "target_utterance": t.target,
        "enroll_utterance": t.enrollment,
        "interferer_utterance": t.interferer,
        "pseudo_speaker_target": str(t.target_speaker),
        "pseudo_speaker_interferer": str(t.interferer_speaker),
        "alpha_target": t.target_speaker.alpha,
        "alpha_interferer": t.interferer_speaker.alpha,
        "restore_tempo_target": t.restore_tempo,
        "restore_tempo_interferer": t.restore_tempo,
        "snr_db": t.snr,
        "realized_snr_db": result.realized_snr,
        "noise_path": t.noise,
        "noise_snr_db": t.noise_snr,
        "hard_tags": _tag_list(t.hard_tags),
        "normalization_scale": result.normalization_scale,
        "num_samples": len(result.mixture),
    }


def generate_corpus(manifest: CorpusManifest, policy: CompositionPolicy, out, *, cache_root=None,
                    workers: int = 1, encoding: str = "float32", wsola: WsolaConfig | None = None,
                    noise_root=None, config_echo: dict | None = None) -> list[dict]:
    """Render ``policy.total`` mixtures under ``out``.

    Writes ``mix/``, ``ref/`` and ``enroll/`` WAVs named by index, a
    JSON-lines ``manifest.jsonl`` in index order and ``run-config.json``.
    Augmented components are cached under ``cache_root`` (default
    ``out/cache``). Output is byte-identical for any ``workers``.
    """
    out = Path(out)
    wsola = wsola or WsolaConfig()
    if policy.total:
        check_supply(manifest, policy)
    if policy.noise and noise_root is None:
        raise PolicyError("policy names noise files but no noise_root was given")
    for sub in ("mix", "ref", "enroll"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    ctx = _RenderContext(manifest, policy, out, Path(cache_root) if cache_root else out / "cache",
                         encoding, wsola, Path(noise_root) if noise_root else None)

    indices = range(policy.total)
    if workers > 1 and policy.total > 1:
        chunk = max(1, policy.total // (workers * 4))
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(ctx,)) as pool:
            records = list(pool.map(_render_worker, indices, chunksize=chunk))
    else:
        cache = RenderCache(ctx.cache_root, wsola)
        records = [render_triplet(ctx, cache, i) for i in indices]

    tmp = out / "manifest.jsonl.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    os.replace(tmp, out / "manifest.jsonl")

    echo = {
        "corpus_root": str(manifest.root),
        "sample_rate": manifest.sample_rate,
        "policy": policy.to_dict(),
        "encoding": encoding,
        "wsola": {"frame_ms": wsola.frame_ms, "overlap_ratio": wsola.overlap_ratio, "search_ms": wsola.search_ms},
        "noise_root": str(noise_root) if noise_root else None,
    }
    if config_echo:
        echo["flags"] = config_echo
    (out / "run-config.json").write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return records


def read_manifest(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
