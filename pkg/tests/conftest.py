from pathlib import Path

import numpy as np
import pytest

from spkaug.audio import AudioClip, write_wav

SR = 8000


def tone(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0):
    n = int(round(seconds * sr))
    return AudioClip(amp * np.sin(2 * np.pi * freq * np.arange(n) / sr + phase), sr)


def speechlike(seconds, f0, sr=SR, seed=0):
    """Harmonic stack with a syllable-rate envelope plus a little noise."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sr))
    t = np.arange(n) / sr
    vib = 1 + 0.03 * np.sin(2 * np.pi * 5 * t)
    phase = 2 * np.pi * np.cumsum(f0 * vib) / sr
    x = sum(np.sin(h * phase) / h for h in range(1, 8))
    x *= 0.55 + 0.45 * np.sin(2 * np.pi * 3.3 * t + seed)
    x = 0.3 * x / np.max(np.abs(x)) + 0.005 * rng.standard_normal(n)
    return AudioClip(x, sr)


def make_corpus(root: Path, n_speakers: int, n_utts: int, seconds=1.0, seed=0, encoding="pcm16"):
    rng = np.random.default_rng(seed)
    for s in range(n_speakers):
        for u in range(n_utts):
            secs = seconds * rng.uniform(0.9, 1.1)
            clip = speechlike(secs, 90 + 7 * s + 3 * u, seed=1000 * s + u)
            path = root / f"spk{s:02d}" / f"utt{u:02d}.wav"
            path.parent.mkdir(parents=True, exist_ok=True)
            write_wav(path, clip, encoding)
    return root


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """20 speakers x 3 utterances of ~1 s, PCM16 @ 8 kHz."""
    return make_corpus(tmp_path_factory.mktemp("toy"), 20, 3)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """4 speakers x 3 utterances of ~0.5 s."""
    return make_corpus(tmp_path_factory.mktemp("small"), 4, 3, seconds=0.5, seed=3)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    config._acceptance = {}


def pytest_runtest_logreport(report):
    # one verdict per criterion; a failure in any phase wins
    if report.when != "call" and report.passed:
        return
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    results = report._config._acceptance
    number, title = marker
    if results.get(number, (None, "PASS"))[1] == "PASS":
        results[number] = (title, "PASS" if report.passed else "FAIL")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report._criterion = marker.args
        report._config = item.config


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, verdict = results[number]
        terminalreporter.write_line(f"[{verdict}] criterion {number:>2}: {title}")
