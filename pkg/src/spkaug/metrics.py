"""Extraction quality metrics: SI-SDR, SI-SDRi and the negative SI-SDRi rate."""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spkaug.audio import AudioClip, read_wav
from spkaug.errors import SpkAugError

STABILIZER = 1e-8


def _samples(x):
    if isinstance(x, AudioClip):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def si_sdr(reference, estimate, eps: float = 0.0) -> float:
    """Scale-invariant SDR in dB.

    The estimate is projected onto the reference; the result compares the
    projection with the residual. A zero residual gives ``inf`` and a zero
    projection gives ``-inf``. ``eps`` (e.g. ``STABILIZER``) is added to
    both energies for fuzzed inputs, which keeps the result finite.
    """
    s = _samples(reference)
    x = _samples(estimate)
    if s.shape != x.shape:
        raise ValueError(f"length mismatch: reference {s.shape}, estimate {x.shape}")
    ref_energy = float(np.dot(s, s))
    if eps == 0.0:
        if ref_energy == 0.0:
            raise ValueError("reference has zero energy")
        if not np.any(x):
            raise ValueError("estimate has zero energy")
    c = (float(np.dot(x, s)) + eps) / (ref_energy + eps)
    target = c * s
    residual = target - x
    num = float(np.dot(target, target)) + eps
    den = float(np.dot(residual, residual)) + eps
    if den == 0.0:
        return math.inf
    if num == 0.0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def si_sdri(reference, estimate, mixture, eps: float = 0.0) -> float:
    """SI-SDR of the estimate minus SI-SDR of the unprocessed mixture."""
    s, x, y = _samples(reference), _samples(estimate), _samples(mixture)
    if not (s.shape == x.shape == y.shape):
        raise ValueError(f"length mismatch: reference {s.shape}, estimate {x.shape}, mixture {y.shape}")
    est = si_sdr(s, x, eps)
    mix = si_sdr(s, y, eps)
    if est == mix:
        return 0.0
    return est - mix


def nsr(values, inclusive: bool = False) -> float:
    """Fraction of SI-SDRi values below 0 dB (``<= 0`` with ``inclusive``)."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("NSR of an empty list is undefined")
    if any(math.isnan(v) for v in values):
        raise ValueError("NaN in SI-SDRi values")
    hits = sum(1 for v in values if (v <= 0.0 if inclusive else v < 0.0))
    return hits / len(values)


@dataclass(frozen=True)
class EvalItem:
    item_id: str
    si_sdr_est: float
    si_sdr_mix: float
    si_sdri: float


def _json_number(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


@dataclass
class EvalReport:
    per_item: list = field(default_factory=list)
    nsr: float = 0.0
    mean_si_sdri: float | None = None
    n: int = 0
    inf_count: int = 0
    nsr_inclusive: bool = False

    @classmethod
    def from_items(cls, items, inclusive: bool = False) -> "EvalReport":
        items = list(items)
        values = [it.si_sdri for it in items]
        finite = [v for v in values if not math.isinf(v)]
        return cls(
            per_item=items,
            nsr=nsr(values, inclusive),
            # infinite improvements are counted separately rather than averaged
            mean_si_sdri=float(np.mean(finite)) if finite else None,
            n=len(items),
            inf_count=sum(1 for v in values if math.isinf(v)),
            nsr_inclusive=inclusive,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "nsr": self.nsr,
            "mean_si_sdri": self.mean_si_sdri,
            "inf_count": self.inf_count,
            "nsr_inclusive": self.nsr_inclusive,
            "items": [
                {
                    "id": it.item_id,
                    "si_sdr_est": _json_number(it.si_sdr_est),
                    "si_sdr_mix": _json_number(it.si_sdr_mix),
                    "si_sdri": _json_number(it.si_sdri),
                }
                for it in self.per_item
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "si_sdr_est", "si_sdr_mix", "si_sdri"])
        for it in self.per_item:
            writer.writerow([it.item_id, repr(it.si_sdr_est), repr(it.si_sdr_mix), repr(it.si_sdri)])
        return buf.getvalue()


def _evaluate_item(name, ref_dir, est_dir, mix_dir, truncate, eps):
    ref = read_wav(ref_dir / name).samples
    est = read_wav(est_dir / name).samples
    mix = read_wav(mix_dir / name).samples
    if not (len(ref) == len(est) == len(mix)):
        if not truncate:
            raise SpkAugError(f"{name}: length mismatch ref={len(ref)} est={len(est)} mix={len(mix)}")
        n = min(len(ref), len(est), len(mix))
        ref, est, mix = ref[:n], est[:n], mix[:n]
    try:
        est_db = si_sdr(ref, est, eps)
        mix_db = si_sdr(ref, mix, eps)
    except ValueError as exc:
        raise SpkAugError(f"{name}: {exc}") from None
    return EvalItem(Path(name).stem, est_db, mix_db, 0.0 if est_db == mix_db else est_db - mix_db)


def evaluate_dir(ref_dir, est_dir, mix_dir, truncate: bool = False, strict: bool = True,
                 inclusive: bool = False, eps: float = 0.0, workers: int = 1) -> EvalReport:
    """Score every ``*.wav`` present in all three directories.

    With ``strict`` any file missing from one of the directories is an error;
    otherwise only the common names are scored. Items are reported in sorted
    filename order regardless of ``workers``.
    """
    dirs = [Path(d) for d in (ref_dir, est_dir, mix_dir)]
    for d in dirs:
        if not d.is_dir():
            raise SpkAugError(f"{d}: not a directory")
    names = [{p.name for p in d.glob("*.wav")} for d in dirs]
    common = sorted(names[0] & names[1] & names[2])
    union = names[0] | names[1] | names[2]
    if strict and len(common) != len(union):
        unmatched = sorted(union - set(common))
        raise SpkAugError(f"unmatched filenames across directories: {unmatched[:10]}"
                          + (" ..." if len(unmatched) > 10 else ""))
    if not common:
        raise SpkAugError("no common filenames to evaluate")

    def job(name):
        return _evaluate_item(name, *dirs, truncate, eps)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            items = list(pool.map(job, common))
    else:
        items = [job(name) for name in common]
    return EvalReport.from_items(items, inclusive)
