"""Live per-process counter collection.

The real backend reads Linux perf events (cache references, cache
misses, instructions) per monitored pid. Collection is capability
gated: on hosts without usable counters every entry point raises
CapabilityError with a remediation hint, and the rest of the toolkit
keeps working from trace files and the synthetic generator.
"""

from __future__ import annotations

import ctypes
import logging
import os
import platform
import struct
import sys
import threading
import time
from collections import deque
from dataclasses import dataclass

from .cps import CpsSample
from .errors import CapabilityError

log = logging.getLogger("specdet.collector")

# Matches the finest documented sampling interval for per-process
# counter APIs; requests below this floor are rejected.
MIN_RESOLUTION_US = 3

EVENT_NAMES = ("l3_tca", "l3_tcm", "tot_ins")

_PERF_TYPE_HARDWARE = 0
_PERF_COUNT_HW_INSTRUCTIONS = 1
_PERF_COUNT_HW_CACHE_REFERENCES = 2
_PERF_COUNT_HW_CACHE_MISSES = 3

_SYSCALL_PERF_EVENT_OPEN = {"x86_64": 298, "aarch64": 241, "arm64": 241}


@dataclass(frozen=True)
class CollectorCapability:
    available: bool
    resolution_us: int = 0
    events: tuple[str, ...] = ()
    reason: str = ""


def _perf_event_attr(event_config: int) -> bytes:
    # struct perf_event_attr, version 0 header (type, size, config,
    # sample fields zeroed) with disabled=0, exclude_kernel and
    # exclude_hv set so unprivileged opens succeed where allowed.
    size = 112
    flags = (1 << 5) | (1 << 6)  # exclude_kernel | exclude_hv
    attr = struct.pack(
        "<IIQQQQQ",
        _PERF_TYPE_HARDWARE,
        size,
        event_config,
        0,  # sample_period
        0,  # sample_type
        0,  # read_format
        flags,
    )
    return attr.ljust(size, b"\x00")


class _PerfCounter:
    """One open perf fd for (event, pid)."""

    def __init__(self, libc, event_config: int, pid: int):
        attr = ctypes.create_string_buffer(_perf_event_attr(event_config))
        nr = _SYSCALL_PERF_EVENT_OPEN.get(platform.machine())
        if nr is None:
            raise OSError(f"perf_event_open unsupported on {platform.machine()}")
        fd = libc.syscall(nr, attr, pid, -1, -1, 0)
        if fd < 0:
            errno = ctypes.get_errno()
            raise OSError(errno, os.strerror(errno))
        self.fd = fd

    def read(self) -> int:
        return int.from_bytes(os.read(self.fd, 8), sys.byteorder)

    def close(self) -> None:
        os.close(self.fd)


class PerfEventSampler:
    """Reads the three counters for a set of pids as cumulative totals."""

    def __init__(self, pids: list[int]):
        self._libc = ctypes.CDLL(None, use_errno=True)
        self._counters: dict[int, tuple[_PerfCounter, _PerfCounter, _PerfCounter]] = {}
        self.names: dict[int, str] = {}
        try:
            for pid in pids:
                refs = _PerfCounter(self._libc, _PERF_COUNT_HW_CACHE_REFERENCES, pid)
                miss = _PerfCounter(self._libc, _PERF_COUNT_HW_CACHE_MISSES, pid)
                ins = _PerfCounter(self._libc, _PERF_COUNT_HW_INSTRUCTIONS, pid)
                self._counters[pid] = (refs, miss, ins)
                self.names[pid] = _process_name(pid)
        except OSError:
            self.close()
            raise

    def pids(self) -> list[int]:
        return list(self._counters)

    def read(self, pid: int) -> tuple[int, int, int]:
        refs, miss, ins = self._counters[pid]
        return refs.read(), miss.read(), ins.read()

    def close(self) -> None:
        for group in self._counters.values():
            for counter in group:
                try:
                    counter.close()
                except OSError:
                    pass
        self._counters.clear()


def _process_name(pid: int) -> str:
    try:
        with open(f"/proc/{pid}/comm", encoding="utf-8") as fh:
            return fh.read().strip() or str(pid)
    except OSError:
        return str(pid)


def detect_capability() -> CollectorCapability:
    """Probe whether per-process counters can actually be opened."""
    if sys.platform != "linux":
        return CollectorCapability(False, reason="perf events require Linux")
    try:
        with open("/proc/sys/kernel/perf_event_paranoid", encoding="utf-8") as fh:
            paranoid = int(fh.read().strip())
    except (OSError, ValueError):
        return CollectorCapability(False, reason="kernel lacks perf event support")
    if paranoid > 2 and os.geteuid() != 0:
        return CollectorCapability(
            False,
            reason=f"perf_event_paranoid={paranoid}; lower it or run privileged",
        )
    try:
        sampler = PerfEventSampler([os.getpid()])
    except OSError as exc:
        return CollectorCapability(False, reason=f"cannot open counters: {exc}")
    try:
        sampler.read(os.getpid())
    except OSError as exc:
        return CollectorCapability(False, reason=f"cannot read counters: {exc}")
    finally:
        sampler.close()
    return CollectorCapability(True, resolution_us=MIN_RESOLUTION_US, events=EVENT_NAMES)


class LiveCollector:
    """Single-producer stream of per-process samples.

    A producer thread polls the sampler at the requested interval and
    emits interval deltas onto a bounded buffer; when the consumer lags,
    the oldest samples are discarded and counted in ``drops``. Readings
    that cannot be a valid delta (counter went backwards, or misses
    exceeding accesses under event multiplexing) are also dropped and
    counted rather than emitted as invalid samples.
    """

    def __init__(self, sampler, interval_us: int, duration_s: float, buffer_size: int = 4096):
        self.sampler = sampler
        self.interval_us = interval_us
        self.duration_s = duration_s
        self.drops = 0
        self._buffer: deque[CpsSample] = deque()
        self._buffer_size = buffer_size
        self._lock = threading.Condition()
        self._done = False

    def _produce(self) -> None:
        last: dict[int, tuple[int, int, int]] = {}
        for pid in self.sampler.pids():
            try:
                last[pid] = self.sampler.read(pid)
            except OSError:
                last[pid] = (0, 0, 0)
        start = time.perf_counter()
        deadline = start + self.duration_s
        tick = 0
        while True:
            tick += 1
            target = start + tick * self.interval_us / 1e6
            now = time.perf_counter()
            if target > deadline:
                break
            if target > now:
                time.sleep(target - now)
            ts_us = int((time.perf_counter() - start) * 1e6)
            for pid in self.sampler.pids():
                try:
                    refs, miss, ins = self.sampler.read(pid)
                except OSError:
                    self.drops += 1
                    continue
                p_refs, p_miss, p_ins = last[pid]
                last[pid] = (refs, miss, ins)
                d = (refs - p_refs, miss - p_miss, ins - p_ins)
                if min(d) < 0 or d[1] > d[0]:
                    self.drops += 1
                    continue
                sample = CpsSample(
                    timestamp_us=ts_us,
                    pid=pid,
                    process_name=self.sampler.names.get(pid, str(pid)),
                    l3_tca=d[0],
                    l3_tcm=d[1],
                    tot_ins=d[2],
                )
                with self._lock:
                    if len(self._buffer) >= self._buffer_size:
                        self._buffer.popleft()
                        self.drops += 1
                    self._buffer.append(sample)
                    self._lock.notify()
        with self._lock:
            self._done = True
            self._lock.notify()

    def __iter__(self):
        producer = threading.Thread(target=self._produce, daemon=True)
        producer.start()
        try:
            while True:
                with self._lock:
                    while not self._buffer and not self._done:
                        self._lock.wait()
                    if self._buffer:
                        sample = self._buffer.popleft()
                    else:
                        break
                yield sample
            producer.join()
        finally:
            close = getattr(self.sampler, "close", None)
            if close is not None:
                close()


def collect_live(interval_us: int, duration_s: float, pids: list[int] | None = None) -> LiveCollector:
    """Open counters and return the sample stream for the three events.

    Raises CapabilityError when counters are unusable on this host and
    ValueError when the interval is below the supported resolution; both
    are raised here, before any sample is produced.
    """
    capability = detect_capability()
    if not capability.available:
        raise CapabilityError("live collection unavailable", hint=capability.reason)
    if interval_us < capability.resolution_us:
        raise ValueError(
            f"interval {interval_us} us is below the {capability.resolution_us} us resolution floor"
        )
    sampler = PerfEventSampler(pids or [os.getpid()])
    return LiveCollector(sampler, interval_us, duration_s)
