"""Event-driven reference for always-local workloads, run on a simpy environment.

Between events the load and frequency are constant, so the temperature follows
the closed-form solution of

    dT/dt = H - cool_rate * (T - t_ambient)

and every job progresses at a constant speed. Events are job arrivals, job
completions, the temperature reaching the limit while heating (drop one level)
and falling below limit - hysteresis (recover one level). The gateway process
sleeps exactly until the next of them, with no time step.
"""
import math
from typing import Dict

import simpy

from sim.gateway import GatewayModel
from sim.workload import WorkloadSpec, arrival_times, job_works
from utils.helpers import EdgeflowError


class OracleError(EdgeflowError):
    pass


def _time_to_reach(temp, equilibrium, rate, target):
    """Time until the exponential approach from temp toward equilibrium reaches target"""
    if (temp - target) * (target - equilibrium) <= 0 and temp != target:
        # target is not between temp and equilibrium
        return math.inf
    if temp == target:
        return 0.0
    return math.log((temp - equilibrium) / (target - equilibrium)) / rate


def _temp_after(temp, equilibrium, rate, elapsed):
    return equilibrium + (temp - equilibrium) * math.exp(-rate * elapsed)


class _ReferenceGateway:
    def __init__(self, env: simpy.Environment, model: GatewayModel, workload: WorkloadSpec):
        self.env = env
        self.model = model
        self.total = workload.total_jobs
        self.closed = workload.mode == "closed-loop"
        self.works = job_works(workload, model)
        self.temp = model.initial_temp_c
        self.level = 0
        self.last_level = len(model.freq_levels_mhz) - 1
        self.recover_below = model.t_limit_c - model.hysteresis_c
        self.running: Dict[int, float] = {}
        self.finished: Dict[int, float] = {}
        self.injected = 0
        self.arrived = 0
        self.arrivals_left = 0 if self.closed else self.total
        self.updated_at = env.now
        self.wake = env.event()

    @property
    def done(self):
        return self.injected == self.total and not self.running

    def inject(self):
        self.injected += 1
        self.running[self.injected] = self.works[self.injected - 1]

    def arrive(self):
        self.arrived += 1
        self.arrivals_left -= 1
        if not self.wake.triggered:
            self.wake.succeed()

    def _equilibrium(self):
        busy = min(len(self.running), self.model.cores)
        return self.model.t_ambient_c + self.model.heat(busy, self.level) / self.model.cool_rate

    def _advance(self):
        elapsed = self.env.now - self.updated_at
        self.updated_at = self.env.now
        if elapsed <= 0:
            return
        # load and level were constant since the last update
        speed = self.model.job_speed(len(self.running), self.level)
        self.temp = _temp_after(self.temp, self._equilibrium(), self.model.cool_rate, elapsed)
        done = []
        for job_id in self.running:
            self.running[job_id] -= speed * elapsed
            if self.running[job_id] <= 1e-9:
                done.append(job_id)
        for job_id in sorted(done):
            del self.running[job_id]
            self.finished[job_id] = self.env.now
        if self.closed:
            for _ in done:
                if self.injected < self.total:
                    self.inject()

    def _admit_arrivals(self):
        while self.arrived:
            self.arrived -= 1
            self.inject()

    def _governor_due(self):
        """Apply a transition that is due at this instant; True if the level changed"""
        rising = self._equilibrium() > self.temp
        if rising and self.temp >= self.model.t_limit_c and self.level < self.last_level:
            self.level += 1
            return True
        if self.temp < self.recover_below and self.level > 0:
            self.level -= 1
            return True
        return False

    def _next_event(self):
        equilibrium = self._equilibrium()
        rising = equilibrium > self.temp
        rate = self.model.cool_rate
        events = [(math.inf, "none")]
        if self.running:
            speed = self.model.job_speed(len(self.running), self.level)
            events.append((min(self.running.values()) / speed, "job"))
        if rising and self.level < self.last_level:
            events.append((_time_to_reach(self.temp, equilibrium, rate, self.model.t_limit_c), "throttle"))
        if not rising and self.level > 0:
            events.append((_time_to_reach(self.temp, equilibrium, rate, self.recover_below), "recover"))
        return min(events, key=lambda e: e[0])

    def run(self):
        while not self.done:
            if self._governor_due():
                continue
            delay, kind = self._next_event()
            if math.isinf(delay) and not self.arrivals_left and not self.arrived:
                raise OracleError("no further event: the workload cannot finish")
            waits = [self.wake]
            timer = None
            if not math.isinf(delay):
                timer = self.env.timeout(max(delay, 0.0))
                waits.append(timer)
            fired = yield self.env.any_of(waits)
            self._advance()
            # snap to the threshold so round-off cannot re-trigger or miss the transition
            if timer is not None and timer in fired:
                if kind == "throttle":
                    self.temp = self.model.t_limit_c
                    self.level += 1
                elif kind == "recover":
                    self.temp = self.recover_below
                    self.level -= 1
            if self.wake.triggered:
                self.wake = self.env.event()
            self._admit_arrivals()


def _arrivals(env: simpy.Environment, gateway: _ReferenceGateway, times):
    for at in times:
        yield env.timeout(at - env.now)
        gateway.arrive()


def completion_times(model: GatewayModel, workload: WorkloadSpec, max_time_s=1200.0) -> Dict[int, float]:
    """Finish time of every job when all of them run locally"""
    env = simpy.Environment()
    gateway = _ReferenceGateway(env, model, workload)
    if gateway.closed:
        for _ in range(min(workload.parallelism, workload.total_jobs)):
            gateway.inject()
    else:
        env.process(_arrivals(env, gateway, arrival_times(workload)))
    env.process(gateway.run())
    env.run(until=max_time_s)
    if not gateway.done:
        raise OracleError(f"workload still running after {max_time_s:g} s")
    return gateway.finished
