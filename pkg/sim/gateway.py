"""Virtual gateway: heat-up under load, stepped frequency throttling and job slowdown.

Per step of length dt, with busy = min(running, cores) taken at the start of the step:

    heat  = heat_rate * busy * (freq / freq_max) ** power_exponent
    temp <- temp + dt * (heat - cool_rate * (temp - t_ambient))

Every running job progresses at

    (freq / freq_max) * min(1, cores / running) * (1 + c*(cores-1)) / (1 + c*(busy-1))

work units per second (c = contention), so a fully loaded gateway at top
frequency runs each job at one unit per second. Progress inside a step is split
at completion instants: a job leaves at its exact finish time and the others
continue at the speed of the smaller set. A finish hook may admit a replacement
at that instant.

The governor acts on the temperature at the end of the step: it drops one
frequency level when the limit is reached while heating, and recovers one level
once the temperature is below limit - hysteresis.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

from utils.constants import (GATEWAY_BASE_JOB_WORK, GATEWAY_CONTENTION, GATEWAY_COOL_RATE, GATEWAY_CORES,
                             GATEWAY_DURATION_JITTER_S, GATEWAY_FREQ_LEVELS_MHZ, GATEWAY_HEAT_RATE,
                             GATEWAY_HYSTERESIS_C, GATEWAY_MEM_BASE, GATEWAY_MEM_PER_JOB, GATEWAY_POWER_EXPONENT,
                             GATEWAY_T_AMBIENT_C, GATEWAY_T_LIMIT_C)
from utils.helpers import EdgeflowError


_WORK_EPS = 1e-12

# (job id, finish time, jobs still running) -> (job id, work) of a job admitted at that instant, or None
FinishHook = Callable[[int, float, Dict[int, float]], Optional[Tuple[int, float]]]


class ModelError(EdgeflowError):
    pass


@dataclass(frozen=True)
class GatewayModel:
    cores: int = GATEWAY_CORES
    freq_levels_mhz: Tuple[float, ...] = tuple(GATEWAY_FREQ_LEVELS_MHZ)
    t_ambient_c: float = GATEWAY_T_AMBIENT_C
    t_limit_c: float = GATEWAY_T_LIMIT_C
    hysteresis_c: float = GATEWAY_HYSTERESIS_C
    heat_rate: float = GATEWAY_HEAT_RATE
    cool_rate: float = GATEWAY_COOL_RATE
    power_exponent: float = GATEWAY_POWER_EXPONENT
    contention: float = GATEWAY_CONTENTION
    base_job_work: float = GATEWAY_BASE_JOB_WORK
    duration_jitter: float = GATEWAY_DURATION_JITTER_S
    mem_base: float = GATEWAY_MEM_BASE
    mem_per_job: float = GATEWAY_MEM_PER_JOB
    t_initial_c: Optional[float] = None

    def __post_init__(self):
        levels = list(self.freq_levels_mhz)
        if not levels or any(f <= 0 for f in levels):
            raise ModelError("frequency levels must be positive")
        if any(a <= b for a, b in zip(levels, levels[1:])):
            raise ModelError(f"frequency levels must be strictly descending, got {levels}")
        if self.cores < 1:
            raise ModelError("a gateway needs at least one core")
        if self.t_limit_c <= self.t_ambient_c:
            raise ModelError("t_limit_c must be above t_ambient_c")
        if self.heat_rate <= 0 or self.cool_rate <= 0:
            raise ModelError("heat_rate and cool_rate must be positive")
        if self.base_job_work <= 0 or self.duration_jitter < 0 or self.duration_jitter >= self.base_job_work:
            raise ModelError("base_job_work must be positive and larger than duration_jitter")
        if self.hysteresis_c < 0 or self.contention < 0 or self.power_exponent < 0:
            raise ModelError("hysteresis_c, contention and power_exponent must not be negative")
        object.__setattr__(self, "freq_levels_mhz", tuple(float(f) for f in levels))

    @property
    def freq_max(self):
        return self.freq_levels_mhz[0]

    @property
    def initial_temp_c(self):
        return self.t_ambient_c if self.t_initial_c is None else self.t_initial_c

    def freq_ratio(self, level):
        return self.freq_levels_mhz[level] / self.freq_max

    def heat(self, busy, level):
        return self.heat_rate * busy * self.freq_ratio(level) ** self.power_exponent

    def job_speed(self, running, level):
        """Work units per second each of `running` jobs receives"""
        if running == 0:
            return 0.0
        busy = min(running, self.cores)
        share = min(1.0, self.cores / running)
        crowding = (1 + self.contention * (self.cores - 1)) / (1 + self.contention * (busy - 1))
        return self.freq_ratio(level) * share * crowding

    def mem_util(self, running):
        return min(max(self.mem_base + self.mem_per_job * running, 0.0), 1.0)


@dataclass(frozen=True)
class GatewayState:
    clock_s: float
    temp_c: float
    freq_level: int = 0
    # job id -> remaining work, in admission order
    running: Dict[int, float] = field(default_factory=dict)
    # (job id, finish time) of jobs completed by the step that produced this state
    finished: Tuple[Tuple[int, float], ...] = ()
    # speed a job admitted at clock_s would receive during the step just taken
    join_speed: float = 0.0


def initial_state(model: GatewayModel) -> GatewayState:
    return GatewayState(0.0, model.initial_temp_c)


def admit(state: GatewayState, job_id, work) -> GatewayState:
    running = dict(state.running)
    running[job_id] = work
    return replace(state, running=running)


def step(model: GatewayModel, state: GatewayState, dt_s, on_finish: Optional[FinishHook] = None) -> GatewayState:
    if dt_s <= 0:
        raise ModelError(f"dt must be positive, got {dt_s}")
    n = len(state.running)
    busy = min(n, model.cores)
    level = state.freq_level

    temp = state.temp_c + dt_s * (model.heat(busy, level) - model.cool_rate * (state.temp_c - model.t_ambient_c))

    now, end = state.clock_s, state.clock_s + dt_s
    running = dict(state.running)
    finished: List[Tuple[int, float]] = []
    while running:
        speed = model.job_speed(len(running), level)
        first = min(running.values())
        if first > speed * (end - now):
            break
        progress = first
        now = min(now + first / speed, end)
        done = sorted(job_id for job_id, remaining in running.items() if remaining - progress <= _WORK_EPS)
        running = {job_id: remaining - progress for job_id, remaining in running.items() if job_id not in done}
        for job_id in done:
            finished.append((job_id, now))
            if on_finish is not None:
                replacement = on_finish(job_id, now, running)
                if replacement is not None:
                    running[replacement[0]] = replacement[1]
    if running:
        progress = model.job_speed(len(running), level) * (end - now)
        running = {job_id: remaining - progress for job_id, remaining in running.items()}

    last = len(model.freq_levels_mhz) - 1
    if temp >= model.t_limit_c and temp > state.temp_c and level < last:
        level += 1
    elif temp < model.t_limit_c - model.hysteresis_c and level > 0:
        level -= 1

    join_speed = model.job_speed(len(running) + 1, state.freq_level)
    return GatewayState(end, temp, level, running, tuple(finished), join_speed)


class SimulatedGateway:
    """Mutable holder of a gateway's state, read by SimulatedMetricsSource"""

    def __init__(self, model: GatewayModel):
        self.model = model
        self.state = initial_state(model)

    def reading(self):
        n = len(self.state.running)
        return {
            "busy_cores": min(n, self.model.cores),
            "cores": self.model.cores,
            "local_jobs": n,
            "mem_util": self.model.mem_util(n),
            "temp_c": self.state.temp_c,
            "freq_mhz": self.model.freq_levels_mhz[self.state.freq_level],
            "clock_s": self.state.clock_s,
        }
