import filecmp
import json
from collections import Counter

import numpy as np
import pytest

from spkaug.audio import AudioClip, read_wav, write_wav
from spkaug.augment import PseudoSpeakerId, expand_speaker_set
from spkaug.corpus import (CompositionPolicy, HardSampleKind, TripletSpec, classify_hard, generate_corpus,
                           read_manifest, sample_triplet, scan_corpus)
from spkaug.errors import CorpusError, PolicyError
from spkaug.mixer import SnrDistribution
from spkaug.resample import AlphaSet

from conftest import SR, make_corpus, speechlike

ST, SC, SS = HardSampleKind.SAME_TEMPO, HardSampleKind.SAME_CONTENT, HardSampleKind.SAME_SPEAKER


def test_scan_counts(tmp_path):
    make_corpus(tmp_path, 2, 2, seconds=0.3)
    m = scan_corpus(tmp_path)
    assert len(m.speakers) == 2 and len(m.utterances) == 4
    assert [u.id for u in m.utterances] == ["spk00/utt00", "spk00/utt01", "spk01/utt00", "spk01/utt01"]
    u = m.utterances[0]
    assert abs(u.num_samples / m.sample_rate - u.duration) <= 1 / m.sample_rate
    assert m.unenrollable == []


def test_scan_empty_and_single_utterance(tmp_path):
    with pytest.raises(CorpusError, match="empty corpus"):
        scan_corpus(tmp_path)
    make_corpus(tmp_path, 2, 2, seconds=0.3)
    (tmp_path / "solo").mkdir()
    write_wav(tmp_path / "solo" / "only.wav", speechlike(0.3, 100), "pcm16")
    m = scan_corpus(tmp_path)
    assert "solo" in m.speakers and m.unenrollable == ["solo"]


def test_scan_rejects_mixed_rates_and_bad_files(tmp_path):
    make_corpus(tmp_path, 2, 2, seconds=0.3)
    (tmp_path / "spk00" / "broken.wav").write_bytes(b"nope")
    with pytest.raises(CorpusError, match="malformed"):
        scan_corpus(tmp_path)
    m = scan_corpus(tmp_path, skip_unreadable=True)
    assert len(m.utterances) == 4
    write_wav(tmp_path / "spk01" / "wide.wav", AudioClip(np.zeros(100), 16000), "pcm16")
    with pytest.raises(CorpusError, match="sample-rate mismatch"):
        scan_corpus(tmp_path, skip_unreadable=True)


def _triplet(target, tspk, interferer, ispk, restore=True):
    return TripletSpec(index=0, target=target, target_speaker=tspk, enrollment="A/other",
                       interferer=interferer, interferer_speaker=ispk, snr=0.0, restore_tempo=restore)


def test_classify_examples():
    same_content = _triplet("A/u1", PseudoSpeakerId("A"), "A/u1", PseudoSpeakerId("A", 0.9))
    assert classify_hard(same_content) == {ST, SC}
    same_speaker = _triplet("A/u1", PseudoSpeakerId("A"), "A/u2", PseudoSpeakerId("A", 0.9))
    assert classify_hard(same_speaker) == {ST, SS}
    ordinary = _triplet("A/u1", PseudoSpeakerId("A"), "B/u1", PseudoSpeakerId("B"))
    assert classify_hard(ordinary) == set()
    no_tempo = _triplet("A/u1", PseudoSpeakerId("A"), "A/u1", PseudoSpeakerId("A", 0.9), restore=False)
    assert classify_hard(no_tempo) == {SC}


def test_triplet_invariants_enforced():
    with pytest.raises(ValueError, match="share pseudo-speaker"):
        _triplet("A/u1", PseudoSpeakerId("A"), "A/u2", PseudoSpeakerId("A"))
    with pytest.raises(ValueError, match="enrollment"):
        TripletSpec(0, "A/u", PseudoSpeakerId("A"), "A/u", "B/u", PseudoSpeakerId("B"), 0.0)


def test_policy_validation():
    with pytest.raises(PolicyError):
        CompositionPolicy(total=10, rate_same_content=0.7, rate_same_speaker=0.4)
    with pytest.raises(PolicyError, match="excluded"):
        CompositionPolicy(total=10, allow={ST, SS})
    p = CompositionPolicy.excluding({SC}, total=10)
    assert p.rate_same_content == 0.0 and SC not in p.allow and p.restore_tempo
    assert not CompositionPolicy.excluding({ST}, total=10).restore_tempo
    assert CompositionPolicy(total=10000).quotas == (100, 8)


def test_baseline_mixing(toy_corpus):
    m = scan_corpus(toy_corpus)
    policy = CompositionPolicy(total=200, allow=set(), rate_same_content=0, rate_same_speaker=0,
                               alphas=AlphaSet([1.0]), seed=3)
    for i in range(200):
        t = sample_triplet(m, policy, i)
        assert t.hard_tags == frozenset()
        assert t.target_speaker.base_speaker != t.interferer_speaker.base_speaker


def test_sampling_is_random_access_and_deterministic(toy_corpus):
    m = scan_corpus(toy_corpus)
    policy = CompositionPolicy(total=500, seed=11, rate_same_content=0.1, rate_same_speaker=0.1)
    forward = [sample_triplet(m, policy, i) for i in range(500)]
    backward = [sample_triplet(m, policy, i) for i in reversed(range(500))][::-1]
    assert forward == backward
    other = CompositionPolicy(total=500, seed=12, rate_same_content=0.1, rate_same_speaker=0.1)
    assert [sample_triplet(m, other, i) for i in range(20)] != forward[:20]
    with pytest.raises(IndexError):
        sample_triplet(m, policy, 500)


def test_quota_enumeration(toy_corpus):
    m = scan_corpus(toy_corpus)
    policy = CompositionPolicy(total=10000, seed=7, rate_same_content=0.01, rate_same_speaker=0.0008)
    counts = Counter()
    for i in range(policy.total):
        t = sample_triplet(m, policy, i)
        counts.update(t.hard_tags)
        assert t.enrollment != t.target
        assert m.by_id[t.enrollment].speaker == t.target_speaker.base_speaker
        assert t.target_speaker != t.interferer_speaker
        assert t.hard_tags == classify_hard(t)
        assert -5 <= t.snr <= 5
    assert counts[SC] == 100 and counts[SS] == 8


@pytest.mark.parametrize("kind", [SC, SS, ST])
def test_exclusion_soundness(toy_corpus, kind):
    m = scan_corpus(toy_corpus)
    policy = CompositionPolicy.excluding({kind}, total=3000, seed=5, rate_same_content=0.05,
                                         rate_same_speaker=0.05)
    triplets = [sample_triplet(m, policy, i) for i in range(policy.total)]
    assert len(triplets) == 3000
    assert not any(kind in t.hard_tags for t in triplets)
    assert all(t.restore_tempo == (kind is not ST) for t in triplets)


def test_supply_errors(tmp_path):
    make_corpus(tmp_path, 1, 3, seconds=0.3)
    (tmp_path / "x").mkdir()
    write_wav(tmp_path / "x" / "a.wav", speechlike(0.3, 90), "pcm16")
    m = scan_corpus(tmp_path)
    with pytest.raises(PolicyError, match="enrollable"):
        sample_triplet(m, CompositionPolicy(total=1), 0)
    make_corpus(tmp_path, 3, 2, seconds=0.3)
    m = scan_corpus(tmp_path)
    with pytest.raises(PolicyError, match="two perturbation"):
        sample_triplet(m, CompositionPolicy(total=100, alphas=AlphaSet([1.0]), rate_same_content=0.5), 0)


def _tree_files(root):
    return sorted(p.relative_to(root) for sub in ("mix", "ref", "enroll") for p in (root / sub).glob("*.wav"))


def test_generate_zero_total(tmp_path, small_corpus):
    m = scan_corpus(small_corpus)
    records = generate_corpus(m, CompositionPolicy(total=0), tmp_path / "out")
    assert records == []
    assert (tmp_path / "out" / "manifest.jsonl").read_text() == ""
    assert _tree_files(tmp_path / "out") == []


def test_generate_outputs(tmp_path, small_corpus):
    m = scan_corpus(small_corpus)
    policy = CompositionPolicy(total=12, seed=2, rate_same_content=0.25, rate_same_speaker=0.25)
    out = tmp_path / "out"
    records = generate_corpus(m, policy, out, cache_root=tmp_path / "cache")
    lines = read_manifest(out / "manifest.jsonl")
    assert lines == json.loads(json.dumps(records))
    assert [r["index"] for r in lines] == list(range(12))
    required = {"index", "target_path", "enroll_path", "interferer_path", "mixture_path", "reference_path",
                "pseudo_speaker_target", "pseudo_speaker_interferer", "alpha_target", "alpha_interferer",
                "restore_tempo_target", "restore_tempo_interferer", "snr_db", "noise_path", "noise_snr_db",
                "hard_tags", "normalization_scale"}
    for r in lines:
        assert required <= set(r)
        mixture = read_wav(out / r["mixture_path"])
        ref = read_wav(out / r["reference_path"])
        assert len(mixture) == len(ref) == r["num_samples"]
        assert mixture.peak <= 0.99 + 1e-6
        assert (small_corpus / r["target_path"]).exists()
        assert abs(r["realized_snr_db"] - r["snr_db"]) <= 1e-6
    tags = Counter(t for r in lines for t in r["hard_tags"])
    assert tags["SC"] == 3 and tags["SS"] == 3
    config = json.loads((out / "run-config.json").read_text())
    assert config["policy"]["total"] == 12 and config["policy"]["seed"] == 2


def test_generate_reference_is_consistent_with_mixture(tmp_path, small_corpus):
    m = scan_corpus(small_corpus)
    policy = CompositionPolicy(total=4, seed=8, alphas=AlphaSet([1.0]), rate_same_content=0,
                               rate_same_speaker=0, snr=SnrDistribution.point(0.0))
    out = tmp_path / "out"
    for r in generate_corpus(m, policy, out):
        target = m.load(r["target_utterance"]).samples
        n = r["num_samples"]
        expected = target[:n] * r["normalization_scale"]
        np.testing.assert_allclose(read_wav(out / r["reference_path"]).samples, expected, atol=1e-7)


@pytest.mark.slow
def test_generate_parallel_matches_serial(tmp_path, small_corpus):
    m = scan_corpus(small_corpus)
    policy = CompositionPolicy(total=24, seed=4, rate_same_content=0.2, rate_same_speaker=0.1)
    a, b = tmp_path / "a", tmp_path / "b"
    generate_corpus(m, policy, a)
    generate_corpus(m, policy, b, workers=4)
    assert (a / "manifest.jsonl").read_bytes() == (b / "manifest.jsonl").read_bytes()
    files = _tree_files(a)
    assert files == _tree_files(b) and len(files) == 72
    _, mismatch, errors = filecmp.cmpfiles(a, b, [str(f) for f in files], shallow=False)
    assert mismatch == [] and errors == []


def test_generate_with_noise(tmp_path, small_corpus):
    noise_dir = tmp_path / "noise"
    noise_dir.mkdir()
    rng = np.random.default_rng(0)
    for k in range(2):
        write_wav(noise_dir / f"n{k}.wav", AudioClip(0.1 * rng.standard_normal(1500), SR), "pcm16")
    m = scan_corpus(small_corpus)
    policy = CompositionPolicy(total=5, seed=1, noise=("n0.wav", "n1.wav"),
                               noise_snr=SnrDistribution.point(5.0))
    records = generate_corpus(m, policy, tmp_path / "out", noise_root=noise_dir)
    assert all(r["noise_path"] in {"n0.wav", "n1.wav"} and r["noise_snr_db"] == 5.0 for r in records)
    with pytest.raises(PolicyError):
        CompositionPolicy(total=5, noise=("n0.wav",))


def test_generate_reports_failing_index(tmp_path):
    make_corpus(tmp_path / "c", 3, 2, seconds=0.3)
    write_wav(tmp_path / "c" / "spk00" / "utt00.wav", AudioClip(np.zeros(2400), SR), "pcm16")
    write_wav(tmp_path / "c" / "spk00" / "utt01.wav", AudioClip(np.zeros(2400), SR), "pcm16")
    m = scan_corpus(tmp_path / "c")
    policy = CompositionPolicy(total=30, seed=0, alphas=AlphaSet([1.0]), rate_same_content=0,
                               rate_same_speaker=0)
    with pytest.raises(CorpusError, match=r"triplet \d+: .*zero energy"):
        generate_corpus(m, policy, tmp_path / "out")


def test_pseudo_speakers_within_expansion(tmp_path):
    make_corpus(tmp_path / "c", 10, 2, seconds=0.3)
    m = scan_corpus(tmp_path / "c")
    policy = CompositionPolicy(total=1000, seed=9)
    allowed = {str(p) for p in expand_speaker_set(list(m.speakers), policy.alphas)}
    assert len(allowed) == 50
    for i in range(policy.total):
        t = sample_triplet(m, policy, i)
        assert str(t.target_speaker) in allowed and str(t.interferer_speaker) in allowed
