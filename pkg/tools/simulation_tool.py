"""Simulation Tool - Edge/Cloud Pipeline Latency and Energy

Deterministic discrete-event simulation of the assistant pipeline: speech
recognition, photo transfer and on-device text recognition start in parallel
and join at the cloud multimodal model. Every stage starts as soon as all of
its dependencies have finished; branches never contend for resources.

Stage latencies come from small cost models (fixed, per word, transfer,
distribution quantile) that can differ between CPU and accelerator runs.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import simpy
from scipy import stats

import config
from tools.errors import StrkitError

logger = logging.getLogger(__name__)

STR_BRANCH = "str"
TRANSFER_BRANCH = "transfer"


class ExecutionMode(Enum):
    CPU = "cpu"
    HA = "ha"

    @classmethod
    def _missing_(cls, value):
        if value == "hardware_accelerated":
            return cls.HA
        return None


class Payload(Enum):
    FULL = "full"
    THUMB = "thumb"


@dataclass(frozen=True)
class FixedLatency:
    ms: float

    def __post_init__(self):
        _non_negative("latency", self.ms)

    def evaluate(self, scenario: "SimScenario") -> float:
        return float(self.ms)


@dataclass(frozen=True)
class PerWordLatency:
    ms_per_word: float
    base_ms: float = 0.0

    def __post_init__(self):
        _non_negative("per-word latency", self.ms_per_word)
        _non_negative("base latency", self.base_ms)

    def evaluate(self, scenario: "SimScenario") -> float:
        return self.base_ms + self.ms_per_word * scenario.word_count


@dataclass(frozen=True)
class TransferLatency:
    """payload bytes / bandwidth + round trip."""

    payload: Union[Payload, int]
    bandwidth_bytes_per_ms: float
    rtt_ms: float = 0.0

    def __post_init__(self):
        if not isinstance(self.payload, (Payload, int)):
            object.__setattr__(self, "payload", Payload(self.payload))
        if not self.bandwidth_bytes_per_ms > 0:
            raise StrkitError(f"Bandwidth must be positive, got {self.bandwidth_bytes_per_ms}")
        _non_negative("round trip", self.rtt_ms)

    def evaluate(self, scenario: "SimScenario") -> float:
        if self.payload is Payload.FULL:
            size = scenario.image_bytes_full
        elif self.payload is Payload.THUMB:
            size = scenario.image_bytes_thumb
        else:
            size = self.payload
        return size / self.bandwidth_bytes_per_ms + self.rtt_ms


@dataclass(frozen=True)
class DistributionLatency:
    """A scipy.stats distribution read at a fixed quantile."""

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)
    quantile: float = 0.5

    def __post_init__(self):
        dist = getattr(stats, self.kind, None)
        if not isinstance(dist, (stats.rv_continuous, stats.rv_discrete)):
            raise StrkitError(f"Unknown distribution '{self.kind}'")
        if not 0 < self.quantile < 1:
            raise StrkitError(f"Quantile must be in (0, 1), got {self.quantile}")

    def evaluate(self, scenario: "SimScenario") -> float:
        value = float(getattr(stats, self.kind)(**dict(self.params)).ppf(self.quantile))
        if not math.isfinite(value) or value < 0:
            raise StrkitError(f"Distribution '{self.kind}' gives latency {value} at q={self.quantile}")
        return value


LatencyModel = Union[FixedLatency, PerWordLatency, TransferLatency, DistributionLatency]
ModeValue = Union[LatencyModel, Mapping[ExecutionMode, LatencyModel]]


def _non_negative(name: str, value: float) -> None:
    if not (math.isfinite(value) and value >= 0):
        raise StrkitError(f"{name} must be a non-negative number, got {value!r}")


def _for_mode(value, mode: "ExecutionMode", stage: str, what: str):
    if isinstance(value, Mapping):
        if mode not in value:
            raise StrkitError(f"Stage '{stage}' has no {what} for mode '{mode.value}'")
        return value[mode]
    return value


@dataclass(frozen=True)
class StageCost:
    name: str
    latency: ModeValue
    energy_mwh: Union[float, Mapping[ExecutionMode, float]] = 0.0
    depends_on: Tuple[str, ...] = ()
    branch: Optional[str] = None

    def __post_init__(self):
        if not self.name:
            raise StrkitError("Stage name must be non-empty")
        object.__setattr__(self, "depends_on", tuple(self.depends_on))
        energies = self.energy_mwh.values() if isinstance(self.energy_mwh, Mapping) else [self.energy_mwh]
        for e in energies:
            _non_negative(f"energy of stage '{self.name}'", e)

    def latency_ms(self, scenario: "SimScenario") -> float:
        model = _for_mode(self.latency, scenario.mode, self.name, "latency")
        value = model.evaluate(scenario)
        _non_negative(f"latency of stage '{self.name}'", value)
        return value

    def energy(self, mode: ExecutionMode) -> float:
        return float(_for_mode(self.energy_mwh, mode, self.name, "energy"))


@dataclass(frozen=True)
class SimScenario:
    stages: Tuple[StageCost, ...]
    word_count: int = 100
    image_bytes_full: int = 3_000_000
    image_bytes_thumb: int = 150_000
    mode: ExecutionMode = ExecutionMode.HA
    join_stage: str = "mmllm"
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        object.__setattr__(self, "mode", ExecutionMode(self.mode))
        if self.word_count < 0:
            raise StrkitError(f"Word count must be non-negative, got {self.word_count}")
        if self.image_bytes_full < 0 or self.image_bytes_thumb < 0:
            raise StrkitError("Image sizes must be non-negative")

        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise StrkitError("Stage names must be unique")
        known = set(names)
        for s in self.stages:
            for dep in s.depends_on:
                if dep not in known:
                    raise StrkitError(f"Stage '{s.name}' depends on unknown stage '{dep}'")
        if self.join_stage not in known:
            raise StrkitError(f"Join stage '{self.join_stage}' is not in the scenario")

    @classmethod
    def from_config(cls, stages: Sequence[StageCost], **overrides) -> "SimScenario":
        values = {
            "word_count": config.SIMULATION_PARAMETERS["word_count"],
            "image_bytes_full": config.SIMULATION_PARAMETERS["image_bytes_full"],
            "image_bytes_thumb": config.SIMULATION_PARAMETERS["image_bytes_thumb"],
            "join_stage": config.SIMULATION_PARAMETERS["join_stage"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(stages=tuple(stages), **values)

    def stage(self, name: str) -> StageCost:
        for s in self.stages:
            if s.name == name:
                return s
        raise StrkitError(f"No stage named '{name}'")

    def branches(self) -> List[str]:
        seen = []
        for s in self.stages:
            if s.branch is not None and s.branch not in seen:
                seen.append(s.branch)
        return seen

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        for s in self.stages:
            g.add_node(s.name)
            for dep in s.depends_on:
                g.add_edge(dep, s.name)
        return g


@dataclass(frozen=True)
class TraceEvent:
    stage: str
    start_ms: float
    end_ms: float
    branch: Optional[str] = None

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


@dataclass(frozen=True)
class SimulationResult:
    trace: Tuple[TraceEvent, ...]
    e2e_ms: float
    critical_path: Tuple[str, ...]
    energy_mwh: float
    mode: ExecutionMode

    def event(self, stage: str) -> TraceEvent:
        for ev in self.trace:
            if ev.stage == stage:
                return ev
        raise StrkitError(f"No stage named '{stage}' in the trace")

    @property
    def branch_finish(self) -> Dict[str, float]:
        finish: Dict[str, float] = {}
        for ev in self.trace:
            if ev.branch is not None:
                finish[ev.branch] = max(finish.get(ev.branch, ev.end_ms), ev.end_ms)
        return finish

    def within_budget(self, budget_ms: Optional[float] = None) -> bool:
        budget = config.SIMULATION_PARAMETERS["e2e_budget_ms"] if budget_ms is None else budget_ms
        return self.e2e_ms <= budget


@dataclass(frozen=True)
class LatencyHiding:
    hidden: bool
    slack_ms: float


def _check_graph(s: SimScenario) -> nx.DiGraph:
    g = s.graph()
    if not nx.is_directed_acyclic_graph(g):
        cycle = " -> ".join(u for u, _ in nx.find_cycle(g))
        raise StrkitError(f"Stage dependencies contain a cycle: {cycle}")
    roots = [n for n in g.nodes if g.in_degree(n) == 0]
    unreachable = [r for r in roots if r != s.join_stage and not nx.has_path(g, r, s.join_stage)]
    if unreachable:
        raise StrkitError(f"Join stage '{s.join_stage}' is not reachable from {', '.join(unreachable)}")
    return g


def _run_stage(env: simpy.Environment, stage: StageCost, latency: float, upstream, done, trace):
    if upstream:
        yield simpy.AllOf(env, upstream)
    start = env.now
    yield env.timeout(latency)
    trace.append(TraceEvent(stage.name, start, env.now, stage.branch))
    done.succeed()


def simulate(s: SimScenario) -> SimulationResult:
    """Schedule every stage at the finish of its last dependency.

    The end-to-end time is the latest stage finish; the critical path walks
    back from that stage through the latest-finishing dependency.
    """
    g = _check_graph(s)
    order = {st.name: k for k, st in enumerate(s.stages)}

    env = simpy.Environment()
    done = {st.name: env.event() for st in s.stages}
    trace: List[TraceEvent] = []
    for name in nx.lexicographical_topological_sort(g, key=lambda n: order[n]):
        stage = s.stage(name)
        upstream = [done[d] for d in stage.depends_on]
        env.process(_run_stage(env, stage, stage.latency_ms(s), upstream, done[name], trace))
    env.run()

    trace.sort(key=lambda ev: (ev.start_ms, ev.end_ms, order[ev.stage]))
    end = {ev.stage: ev.end_ms for ev in trace}
    e2e = max(end.values(), default=0.0)

    path: List[str] = []
    if trace:
        current = min((n for n in end if end[n] == e2e), key=lambda n: order[n])
        while current is not None:
            path.append(current)
            deps = s.stage(current).depends_on
            current = max(deps, key=lambda d: (end[d], -order[d])) if deps else None
        path.reverse()

    energy = round(math.fsum(st.energy(s.mode) for st in s.stages), 9)
    logger.info("Simulated %s (%s): e2e %.1f ms, energy %.3f mWh", s.name, s.mode.value, e2e, energy)
    return SimulationResult(tuple(trace), e2e, tuple(path), energy, s.mode)


def branch_latency(result: SimulationResult, branch: str) -> float:
    """Span of a branch, first start to last finish."""
    events = [ev for ev in result.trace if ev.branch == branch]
    if not events:
        raise StrkitError(f"Branch '{branch}' is not in the scenario")
    return max(ev.end_ms for ev in events) - min(ev.start_ms for ev in events)


def without_branch_latency(s: SimScenario, branch: str) -> SimScenario:
    """Same scenario with every stage of `branch` taking no time."""
    if branch not in s.branches():
        raise StrkitError(f"Branch '{branch}' is not in the scenario")
    stages = tuple(replace(st, latency=FixedLatency(0.0)) if st.branch == branch else st for st in s.stages)
    return replace(s, stages=stages)


def str_latency_hidden(s: SimScenario) -> LatencyHiding:
    """Whether on-device recognition finishes in the shadow of the photo transfer."""
    for branch in (STR_BRANCH, TRANSFER_BRANCH):
        if branch not in s.branches():
            raise StrkitError(f"Scenario has no '{branch}' branch")

    baseline = simulate(s)
    stripped = simulate(without_branch_latency(s, STR_BRANCH))
    finish = baseline.branch_finish
    slack = finish[TRANSFER_BRANCH] - finish[STR_BRANCH]
    hidden = math.isclose(stripped.e2e_ms, baseline.e2e_ms, rel_tol=0.0, abs_tol=1e-9)
    logger.info("STR %s by transfer, slack %.1f ms", "hidden" if hidden else "not hidden", slack)
    return LatencyHiding(hidden=hidden, slack_ms=slack)


def per_word_recognition_ms(total_ms: float, words: int) -> float:
    if words < 1:
        raise StrkitError(f"Per-word latency needs at least one word, got {words}")
    return total_ms / words


def speedup(slow: SimulationResult, fast: SimulationResult, branch: Optional[str] = STR_BRANCH) -> float:
    """Latency ratio of two runs over a branch, or end to end when branch is None."""
    if branch is None:
        slow_ms, fast_ms = slow.e2e_ms, fast.e2e_ms
    else:
        slow_ms, fast_ms = branch_latency(slow, branch), branch_latency(fast, branch)
    if fast_ms <= 0:
        raise StrkitError(f"Speedup needs a positive reference latency on {branch or 'the whole run'}")
    return slow_ms / fast_ms


def energy_ratio(slow: SimulationResult, fast: SimulationResult) -> float:
    if fast.energy_mwh <= 0:
        raise StrkitError("Energy ratio needs a positive reference energy")
    return slow.energy_mwh / fast.energy_mwh


def format_ratio(ratio: float) -> str:
    return f"{ratio:.1f}X"
