"""Offload decisions: map a metrics snapshot to local or remote execution.

A metric at or above its threshold always offloads; jobs:4 therefore keeps at
most four jobs running locally and sends the fifth away.
"""
from dataclasses import dataclass
from enum import Enum

from metrics.snapshot import MetricsSnapshot
from policy.spec import PolicySpec
from utils.helpers import format_number


class Target(str, Enum):
    LOCAL = "local"
    REMOTE = "remote"


@dataclass(frozen=True)
class OffloadDecision:
    target: Target
    reason: str

    @property
    def remote(self) -> bool:
        return self.target is Target.REMOTE


_METRIC_FIELDS = {
    "jobs": "jobs_in_flight",
    "cpu": "cpu_util",
    "mem": "mem_util",
    "temp": "cpu_temp_c",
}


def _decide_metric(policy: PolicySpec, snapshot: MetricsSnapshot) -> OffloadDecision:
    observed = getattr(snapshot, _METRIC_FIELDS[policy.kind])
    shown = f"{policy.kind} {format_number(observed)}"
    if observed >= policy.threshold:
        return OffloadDecision(Target.REMOTE, f"{shown} ≥ {format_number(policy.threshold)}")
    return OffloadDecision(Target.LOCAL, f"{shown} < {format_number(policy.threshold)}")


def decide(policy: PolicySpec, snapshot: MetricsSnapshot) -> OffloadDecision:
    if policy.kind == "always-local":
        return OffloadDecision(Target.LOCAL, "always-local")
    if policy.kind == "always-remote":
        return OffloadDecision(Target.REMOTE, "always-remote")
    if policy.kind in _METRIC_FIELDS:
        return _decide_metric(policy, snapshot)

    decisions = [decide(child, snapshot) for child in policy.children]
    remote = [d for d in decisions if d.remote]
    if policy.kind == "all-of":
        target = Target.REMOTE if len(remote) == len(decisions) else Target.LOCAL
    else:
        target = Target.REMOTE if remote else Target.LOCAL
    cited = remote if target is Target.REMOTE else [d for d in decisions if not d.remote]
    return OffloadDecision(target, "; ".join(d.reason for d in cited))
