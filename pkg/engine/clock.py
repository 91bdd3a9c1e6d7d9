import threading
import time


class Clock:
    """Seconds since the run started"""

    def now(self) -> float:
        raise NotImplementedError


class RealClock(Clock):
    def __init__(self):
        self._origin = time.monotonic()

    def now(self) -> float:
        return time.monotonic() - self._origin


class ManualClock(Clock):
    """Virtual time, moved only by the caller"""

    def __init__(self, start=0.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def set(self, value):
        with self._lock:
            if value < self._now:
                raise ValueError(f"clock cannot move backwards ({value} < {self._now})")
            self._now = float(value)

    def advance(self, seconds):
        with self._lock:
            if seconds < 0:
                raise ValueError("clock cannot move backwards")
            self._now += seconds
            return self._now
