"""Metrics sources: host counters, the simulated gateway, or a scripted replay.

Every source owns a jobs gauge counting the jobs running locally right now and
applies the same exponential smoothing to cpu_util:

    ewma <- alpha * instant + (1 - alpha) * ewma

alpha = 1 disables smoothing.
"""
import logging
import os
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import pandas as pd
import psutil

from engine.clock import Clock, RealClock
from metrics.snapshot import MetricsSnapshot, sanitize
from utils.constants import (DEFAULT_FREQ_PATH, DEFAULT_SAMPLE_PERIOD_MS, DEFAULT_SMOOTHING_ALPHA,
                             DEFAULT_THERMAL_PATH, MIN_SAMPLE_PERIOD_MS, REPLAY_COLUMNS)
from utils.helpers import EdgeflowError

logger = logging.getLogger(__name__)


class MetricsError(EdgeflowError):
    pass


class GaugeUnderflow(MetricsError):
    pass


class JobsGauge:
    """Atomic counter of jobs currently executing locally"""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    @property
    def value(self) -> int:
        with self._lock:
            return self._count

    def increment(self) -> int:
        with self._lock:
            self._count += 1
            return self._count

    def decrement(self) -> int:
        with self._lock:
            if self._count == 0:
                logger.error("jobs gauge decremented below zero")
                raise GaugeUnderflow("jobs gauge decremented at 0 without a matching increment")
            self._count -= 1
            return self._count


class MetricsSource:
    kind = "base"

    def __init__(self, sample_period_ms=DEFAULT_SAMPLE_PERIOD_MS, smoothing_alpha=DEFAULT_SMOOTHING_ALPHA,
                 initial_ewma=None, clock: Optional[Clock] = None):
        if sample_period_ms < MIN_SAMPLE_PERIOD_MS:
            raise MetricsError(f"sample_period_ms must be at least {MIN_SAMPLE_PERIOD_MS}, got {sample_period_ms}")
        if not 0.0 <= smoothing_alpha <= 1.0:
            raise MetricsError(f"smoothing_alpha must be in [0, 1], got {smoothing_alpha}")
        self.sample_period_ms = sample_period_ms
        self.smoothing_alpha = smoothing_alpha
        self.clock = clock or RealClock()
        self.gauge = JobsGauge()
        self._ewma = initial_ewma
        self._lock = threading.Lock()

    def _read(self) -> MetricsSnapshot:
        raise NotImplementedError

    def _smooth(self, instant):
        with self._lock:
            if self._ewma is None:
                self._ewma = instant
            else:
                alpha = self.smoothing_alpha
                self._ewma = alpha * instant + (1.0 - alpha) * self._ewma
            return self._ewma

    def sample(self) -> MetricsSnapshot:
        snapshot = sanitize(self._read())
        smoothed = self._smooth(snapshot.cpu_util)
        return sanitize(MetricsSnapshot(snapshot.mem_util, smoothed, snapshot.cpu_temp_c,
                                        snapshot.jobs_in_flight, snapshot.cpu_freq_mhz,
                                        snapshot.taken_at, snapshot.invalid_fields))


def sample(source: MetricsSource) -> MetricsSnapshot:
    return source.sample()


def jobs_gauge_increment(source: MetricsSource) -> int:
    return source.gauge.increment()


def jobs_gauge_decrement(source: MetricsSource) -> int:
    return source.gauge.decrement()


@dataclass(frozen=True)
class CpuCounters:
    busy_s: float
    idle_s: float


def read_cpu_counters() -> CpuCounters:
    times = psutil.cpu_times()
    idle = times.idle + getattr(times, "iowait", 0.0)
    busy = sum(times) - idle
    return CpuCounters(busy, idle)


def read_memory_util() -> float:
    memory = psutil.virtual_memory()
    return (memory.total - memory.available) / memory.total


def _read_number(path, scale):
    with open(path, encoding="ascii") as handle:
        return float(handle.read().strip()) / scale


def _psutil_freq():
    try:
        current = psutil.cpu_freq()
    except (OSError, NotImplementedError):
        return float("nan")
    return current.current if current else float("nan")


class HostMetricsSource(MetricsSource):
    """Readings of the machine this process runs on"""
    kind = "host"

    def __init__(self, thermal_path=None, freq_path=None, cores=None,
                 counter_reader: Callable[[], CpuCounters] = read_cpu_counters,
                 memory_reader: Callable[[], float] = read_memory_util, **kwargs):
        super().__init__(**kwargs)
        self.thermal_path = thermal_path or os.getenv("EDGEFLOW_THERMAL_PATH", DEFAULT_THERMAL_PATH)
        self.freq_path = freq_path or os.getenv("EDGEFLOW_FREQ_PATH", DEFAULT_FREQ_PATH)
        self.cores = cores or psutil.cpu_count() or 1
        self.counter_reader = counter_reader
        self.memory_reader = memory_reader
        self._last_counters = self._counters()
        self._last_time = self.clock.now()
        # nothing measured until the first period has passed
        self._cpu, self._cpu_valid = 0.0, False
        self._cpu_lock = threading.Lock()

    def _counters(self):
        try:
            return self.counter_reader()
        except (OSError, RuntimeError) as e:
            logger.warning("cpu counters unreadable: %s", e)
            return None

    def _cpu_util(self, invalid):
        """Busy share over the last full sample period; between refreshes the previous value is returned"""
        with self._cpu_lock:
            now = self.clock.now()
            if now - self._last_time >= self.sample_period_ms / 1000.0:
                counters = self._counters()
                previous, previous_time = self._last_counters, self._last_time
                self._last_counters, self._last_time = counters, now
                self._cpu, self._cpu_valid = self._busy_share(previous, counters, now - previous_time)
            util, valid = self._cpu, self._cpu_valid
        if not valid:
            invalid.add("cpu_util")
        return util

    def _busy_share(self, previous, counters, window):
        if counters is None or previous is None or window <= 0:
            return 0.0, False
        busy_delta = counters.busy_s - previous.busy_s
        if busy_delta < 0:
            # counter wrapped or was reset
            return 0.0, False
        return busy_delta / (window * self.cores), True

    def _read(self) -> MetricsSnapshot:
        invalid = set()
        cpu = self._cpu_util(invalid)
        try:
            mem = self.memory_reader()
        except (OSError, RuntimeError, ZeroDivisionError) as e:
            logger.warning("memory counters unreadable: %s", e)
            invalid.add("mem_util")
            mem = 0.0
        try:
            temp = _read_number(self.thermal_path, 1000.0)
        except (OSError, ValueError) as e:
            logger.debug("temperature unreadable at %s: %s", self.thermal_path, e)
            invalid.add("cpu_temp_c")
            temp = float("nan")
        try:
            freq = _read_number(self.freq_path, 1000.0)
        except (OSError, ValueError):
            freq = _psutil_freq()
        return MetricsSnapshot(mem, cpu, temp, self.gauge.value, freq, self.clock.now(), frozenset(invalid))


class SimulatedMetricsSource(MetricsSource):
    """Readings of a simulated gateway; the gateway object supplies reading()"""
    kind = "simulated"

    def __init__(self, gateway, **kwargs):
        super().__init__(**kwargs)
        self.gateway = gateway

    def _read(self) -> MetricsSnapshot:
        reading = self.gateway.reading()
        return MetricsSnapshot(reading["mem_util"], reading["busy_cores"] / reading["cores"],
                               reading["temp_c"], reading["local_jobs"], reading["freq_mhz"],
                               reading["clock_s"])


class ReplayMetricsSource(MetricsSource):
    """Replays a CSV script; sample() returns the last row with t_ms <= now"""
    kind = "replay"

    def __init__(self, script, **kwargs):
        super().__init__(**kwargs)
        frame = script if isinstance(script, pd.DataFrame) else pd.read_csv(script)
        if list(frame.columns) != REPLAY_COLUMNS:
            raise MetricsError(f"replay script columns must be {','.join(REPLAY_COLUMNS)}, got {','.join(map(str, frame.columns))}")
        if frame.empty:
            raise MetricsError("replay script has no rows")
        if not frame["t_ms"].is_monotonic_increasing:
            raise MetricsError("replay script rows must be ordered by t_ms")
        self.frame = frame.reset_index(drop=True)

    def _read(self) -> MetricsSnapshot:
        now = self.clock.now()
        # before the first row the first row applies
        index = max(int(self.frame["t_ms"].searchsorted(now * 1000.0, side="right")) - 1, 0)
        row = self.frame.iloc[index]
        return MetricsSnapshot(float(row["mem_util"]), float(row["cpu_util"]), float(row["cpu_temp_c"]),
                               int(row["jobs_in_flight"]), float(row["cpu_freq_mhz"]), now)
