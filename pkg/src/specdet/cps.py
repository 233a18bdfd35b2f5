"""Per-process hardware-counter samples (CPU-Processes State).

A sample carries three counter readings for one process at one instant:
L3 total cache accesses, L3 total cache misses, and total instructions
(the PAPI event is spelled both TOT_INS and TOT_INST; formats here use
``tot_ins``). Attack activity shows elevated miss ratios, which is what
the derived features and the synthetic generator encode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import TraceFormatError

TRACE_HEADER = ("timestamp_us", "pid", "process_name", "l3_tca", "l3_tcm", "tot_ins", "label")

FEATURE_NAMES = ("l3_tca", "l3_tcm", "tot_ins", "miss_rate")


@dataclass(frozen=True)
class CpsSample:
    timestamp_us: int
    pid: int
    process_name: str
    l3_tca: int
    l3_tcm: int
    tot_ins: int
    label: int | None = None

    def validate(self) -> None:
        if min(self.l3_tca, self.l3_tcm, self.tot_ins) < 0:
            raise ValueError("counter values must be non-negative")
        if self.l3_tcm > self.l3_tca:
            raise ValueError("cache misses exceed accesses")
        if self.timestamp_us < 0:
            raise ValueError("timestamp must be non-negative")
        if self.label not in (None, 0, 1):
            raise ValueError(f"label must be 0, 1, or empty, got {self.label!r}")


@dataclass(frozen=True)
class CpsFeatureRow:
    """Classifier-facing view of a sample: raw counts plus miss rate."""

    l3_tca: int
    l3_tcm: int
    tot_ins: int
    miss_rate: float
    label: int | None = None

    def vector(self) -> np.ndarray:
        return np.array([self.l3_tca, self.l3_tcm, self.tot_ins, self.miss_rate], dtype=float)


@dataclass(frozen=True)
class SynthConfig:
    """Distribution parameters for the synthetic two-class trace.

    Access and instruction counts are log-normal, miss ratios are Beta
    around a class mode. The attack mode must exceed the benign mode;
    a generator that cannot separate the classes is a configuration bug.
    """

    n_benign: int
    n_attack: int
    benign_access_rate: float = 20_000.0
    benign_miss_ratio: float = 0.05
    benign_ins_rate: float = 2_000_000.0
    attack_access_rate: float = 60_000.0
    attack_miss_ratio: float = 0.5
    attack_ins_rate: float = 4_000_000.0
    dispersion: float = 0.25
    miss_concentration: float = 80.0
    interval_us: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_benign < 0 or self.n_attack < 0:
            raise ValueError("sample counts must be non-negative")
        if not (0 < self.benign_miss_ratio < self.attack_miss_ratio < 1):
            raise ValueError(
                "attack mean miss ratio must exceed the benign mean miss ratio "
                f"(got benign={self.benign_miss_ratio}, attack={self.attack_miss_ratio})"
            )
        if self.dispersion <= 0 or self.miss_concentration <= 2:
            raise ValueError("dispersion must be > 0 and miss_concentration > 2")


def parse_trace(path: str | Path) -> list[CpsSample]:
    """Read a trace CSV, validating every row.

    Raises TraceFormatError naming the offending line for malformed rows
    and for samples whose miss count exceeds their access count.
    """
    samples = []
    last_ts: dict[int, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError(f"empty trace file: {path}", line=1) from None
        if tuple(header) != TRACE_HEADER:
            raise TraceFormatError(
                f"bad trace header {header!r}, expected {','.join(TRACE_HEADER)}", line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_HEADER):
                raise TraceFormatError(
                    f"expected {len(TRACE_HEADER)} fields, got {len(row)} at line {lineno}",
                    line=lineno,
                )
            try:
                sample = CpsSample(
                    timestamp_us=int(row[0]),
                    pid=int(row[1]),
                    process_name=row[2],
                    l3_tca=int(row[3]),
                    l3_tcm=int(row[4]),
                    tot_ins=int(row[5]),
                    label=int(row[6]) if row[6] != "" else None,
                )
            except ValueError as exc:
                raise TraceFormatError(f"malformed row at line {lineno}: {exc}", line=lineno) from exc
            if sample.l3_tcm > sample.l3_tca:
                raise TraceFormatError(
                    f"cache misses exceed accesses at line {lineno}", line=lineno
                )
            try:
                sample.validate()
            except ValueError as exc:
                raise TraceFormatError(f"invalid sample at line {lineno}: {exc}", line=lineno) from exc
            prev = last_ts.get(sample.pid)
            if prev is not None and sample.timestamp_us < prev:
                raise TraceFormatError(
                    f"timestamp regression for pid {sample.pid} at line {lineno}", line=lineno
                )
            last_ts[sample.pid] = sample.timestamp_us
            samples.append(sample)
    return samples


def write_trace(samples: list[CpsSample], path: str | Path) -> None:
    """Write the trace CSV (UTF-8, LF endings). Samples are validated first."""
    for sample in samples:
        sample.validate()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for s in samples:
            writer.writerow(
                [
                    s.timestamp_us,
                    s.pid,
                    s.process_name,
                    s.l3_tca,
                    s.l3_tcm,
                    s.tot_ins,
                    "" if s.label is None else s.label,
                ]
            )


def derive_features(samples: list[CpsSample]) -> list[CpsFeatureRow]:
    """One feature row per sample; miss_rate defined as 0 when there were
    no accesses."""
    rows = []
    for s in samples:
        rate = s.l3_tcm / s.l3_tca if s.l3_tca > 0 else 0.0
        rows.append(
            CpsFeatureRow(
                l3_tca=s.l3_tca,
                l3_tcm=s.l3_tcm,
                tot_ins=s.tot_ins,
                miss_rate=rate,
                label=s.label,
            )
        )
    return rows


def feature_arrays(rows: list[CpsFeatureRow]) -> tuple[np.ndarray, np.ndarray | None]:
    """Stack feature rows into (X, y); y is None when any label is missing."""
    X = np.array([r.vector() for r in rows]) if rows else np.zeros((0, 4))
    if rows and all(r.label is not None for r in rows):
        y = np.array([r.label for r in rows], dtype=int)
    else:
        y = None
    return X, y


def _beta_params(mode: float, concentration: float) -> tuple[float, float]:
    # Mode parametrization: alpha = m(k-2)+1, beta = (1-m)(k-2)+1.
    return mode * (concentration - 2) + 1, (1 - mode) * (concentration - 2) + 1


def synth_trace(config: SynthConfig) -> list[CpsSample]:
    """Generate a labeled two-class trace, deterministic for a given seed.

    Benign samples come first. Instruction counts grow with the miss
    count, more steeply for the attack class where the workload is
    dominated by repeated flush-and-probe loops.
    """
    rng = np.random.default_rng(config.seed)
    sigma = config.dispersion
    samples: list[CpsSample] = []
    t = 0

    def emit(n, label, access_rate, miss_mode, ins_rate, pid_base, name):
        nonlocal t
        a, b = _beta_params(miss_mode, config.miss_concentration)
        access = access_rate * rng.lognormal(mean=-0.5 * sigma**2, sigma=sigma, size=n)
        ratio = rng.beta(a, b, size=n)
        noise = rng.lognormal(mean=-0.5 * sigma**2, sigma=sigma, size=n)
        tca = np.maximum(1, np.rint(access)).astype(int)
        tcm = np.minimum(tca, np.rint(tca * ratio)).astype(int)
        # couple instructions to miss pressure
        ins = np.maximum(1, np.rint(ins_rate * (0.5 + 2.0 * ratio) * noise)).astype(int)
        for i in range(n):
            samples.append(
                CpsSample(
                    timestamp_us=t,
                    pid=pid_base + (i % 4),
                    process_name=f"{name}-{i % 4}",
                    l3_tca=int(tca[i]),
                    l3_tcm=int(tcm[i]),
                    tot_ins=int(ins[i]),
                    label=label,
                )
            )
            t += config.interval_us

    emit(
        config.n_benign, 0, config.benign_access_rate, config.benign_miss_ratio,
        config.benign_ins_rate, 1000, "benign",
    )
    emit(
        config.n_attack, 1, config.attack_access_rate, config.attack_miss_ratio,
        config.attack_ins_rate, 2000, "attack",
    )
    return samples
