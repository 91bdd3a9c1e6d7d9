import math
from dataclasses import dataclass, field, replace
from typing import FrozenSet

from utils.constants import FALLBACK_FREQ_MHZ, TEMP_BAND_C


@dataclass(frozen=True)
class MetricsSnapshot:
    """Point-in-time resource readings used for one offload decision"""
    mem_util: float
    cpu_util: float
    cpu_temp_c: float
    jobs_in_flight: int
    cpu_freq_mhz: float
    taken_at: float = 0.0
    # names of fields that could not be read or had to be clamped
    invalid_fields: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def valid(self) -> bool:
        return not self.invalid_fields


def _clamp(value, low, high):
    if value is None or isinstance(value, bool) or not math.isfinite(value):
        return None
    return min(max(value, low), high)


def sanitize(snapshot: MetricsSnapshot) -> MetricsSnapshot:
    """Clamp every field into its band and flag the ones that were out of it"""
    invalid = set(snapshot.invalid_fields)
    fixed = {}
    low, high = TEMP_BAND_C
    for name, low_high, fallback in (("mem_util", (0.0, 1.0), 0.0),
                                     ("cpu_util", (0.0, 1.0), 0.0),
                                     ("cpu_temp_c", (low, high), low)):
        raw = getattr(snapshot, name)
        value = _clamp(raw, *low_high)
        if value is None:
            value = fallback
        if value != raw:
            invalid.add(name)
        fixed[name] = float(value)

    jobs = snapshot.jobs_in_flight
    if not isinstance(jobs, int) or jobs < 0:
        invalid.add("jobs_in_flight")
        jobs = max(int(jobs), 0) if isinstance(jobs, (int, float)) and math.isfinite(jobs) else 0
    freq = snapshot.cpu_freq_mhz
    if freq is None or not math.isfinite(freq) or freq <= 0:
        invalid.add("cpu_freq_mhz")
        freq = FALLBACK_FREQ_MHZ
    return replace(snapshot, jobs_in_flight=jobs, cpu_freq_mhz=float(freq),
                   invalid_fields=frozenset(invalid), **fixed)
