"""Scripted stochastic attacker.

Each round every phase is evaluated in script order and acts only when its
precondition holds in the current infrastructure:

``spawn``
    start the malicious process when its source (an active scheduled job
    whose script exists, or a tampered file) is present; a running process
    exits once its source is gone, and dies if a syscall filter covers it.
``resolve``
    the running process looks up its domain; denylisted names fail.
``connect``
    open (or re-point, after rotation) the C2 connection unless blocked.
``objective``
    once the required condition has held ``dwell`` consecutive rounds,
    succeed with the phase probability.

Independently, with ``counter_drift`` probability per round the attacker
strips block rules and denylist entries naming its infrastructure, the
abstraction of an in-path device under attacker control.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..errors import ScenarioError
from .infrastructure import Connection, InfrastructureState

PHASE_KINDS = ("spawn", "resolve", "connect", "objective")


@dataclass(frozen=True)
class Phase:
    kind: str
    params: dict = field(default_factory=dict, hash=False, compare=True)
    probability: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "Phase":
        kind = d.get("kind")
        if kind not in PHASE_KINDS:
            raise ScenarioError(f"unknown attacker phase kind {kind!r}")
        params = {k: v for k, v in d.items() if k not in ("kind", "probability")}
        return cls(kind, params, float(d.get("probability", 1.0)))


@dataclass(frozen=True)
class AttackerScript:
    phases: tuple[Phase, ...] = ()
    counter_drift: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "AttackerScript":
        return cls(tuple(Phase.from_dict(p) for p in d.get("phases", [])),
                   float(d.get("counter_drift", 0.0)))

    def domains(self) -> set[str]:
        return {p.params["domain"] for p in self.phases if "domain" in p.params}


def _source_present(state: InfrastructureState, params: dict) -> bool:
    if "job" in params:
        job = state.scheduled_jobs.get(params["job"])
        return job is not None and job.active and state.file_present(job.host, job.script_path)
    if "file" in params:
        f = state.file(params["host"], params["file"])
        return f is not None and f.present and f.modified
    return False


def _has_source(params: dict) -> bool:
    return "job" in params or "file" in params


def _counter_drift(state: InfrastructureState, script: AttackerScript) -> None:
    domains = script.domains()
    ips = {ip for d in domains if d in state.dns_bindings for ip in state.dns_bindings[d].ips}
    state.network_policies -= domains | ips
    state.dns_denylist -= domains


def _spawn(state: InfrastructureState, ph: Phase, rng: random.Random) -> None:
    p = ph.params
    procs = [proc for proc in state.processes_named(p["host"], p["process"]) if proc.malicious]
    if procs and _has_source(p) and not _source_present(state, p):
        state.kill(procs)
        procs = []
    blocked = [proc for proc in procs if state.syscall_blocked(proc)]
    if blocked:
        state.kill(blocked)
        procs = [proc for proc in procs if proc not in blocked]
    syscalls = tuple(p.get("syscalls", ()))
    filtered = any((p["host"], s) in state.syscall_filters for s in syscalls)
    if not procs and _source_present(state, p) and not filtered and rng.random() < ph.probability:
        state.spawn(p["host"], p["process"], malicious=True, source_job=p.get("job"),
                    source_file=p.get("file"), syscalls=syscalls)


def _resolve(state: InfrastructureState, ph: Phase, rng: random.Random) -> None:
    p = ph.params
    domain = p["domain"]
    for proc in [x for x in state.processes_named(p["host"], p["process"]) if x.malicious]:
        state.dns_lookups.append((proc.host, domain))
        binding = state.dns_bindings.get(domain)
        if domain in state.dns_denylist or binding is None:
            proc.resolved_ip = None
            if p.get("exit_on_failure"):
                state.kill([proc])
        else:
            proc.resolved_ip = binding.current_ip


def _connect(state: InfrastructureState, ph: Phase, rng: random.Random) -> None:
    p = ph.params
    domain = p["domain"]
    for proc in [x for x in state.processes_named(p["host"], p["process"]) if x.malicious]:
        mine = [c for c in state.connections if c.src_host == proc.host and c.process == proc.name]
        ip = proc.resolved_ip
        if ip is None or state.is_blocked(domain, ip):
            for c in mine:
                c.active = False
            continue
        if rng.random() >= ph.probability:
            continue
        if mine:
            mine[0].dest_ip, mine[0].active = ip, True
        else:
            state.connections.append(Connection(proc.host, domain, ip, proc.name))


def _objective(state: InfrastructureState, ph: Phase, rng: random.Random) -> None:
    p = ph.params
    if state.conditions()[p["requires"]]:
        state.c2_dwell += 1
    else:
        state.c2_dwell = 0
    if state.c2_dwell >= int(p.get("dwell", 1)) and rng.random() < ph.probability:
        state.objective_reached = True


_HANDLERS = {"spawn": _spawn, "resolve": _resolve, "connect": _connect, "objective": _objective}


def attacker_step(
    state: InfrastructureState, script: AttackerScript, rng: random.Random, *, in_place: bool = False
) -> InfrastructureState:
    """Advance the attack by one round."""
    state = state if in_place else state.copy()
    for binding in state.dns_bindings.values():
        if binding.rotation_period > 0 and state.round > 1 and (state.round - 1) % binding.rotation_period == 0:
            binding.index += 1
    state.dns_lookups = []
    if script.counter_drift > 0 and rng.random() < script.counter_drift:
        _counter_drift(state, script)
    for phase in script.phases:
        _HANDLERS[phase.kind](state, phase, rng)
    # Connections whose owning process is gone are closed.
    alive = {(proc.host, proc.name) for proc in state.processes}
    for c in state.connections:
        if c.active and (c.src_host, c.process) not in alive:
            c.active = False
    return state


def has_reachable_phase(state: InfrastructureState, script: AttackerScript) -> bool:
    """Whether the script can still affect the world."""
    if script.counter_drift > 0:
        return True
    for ph in script.phases:
        if ph.kind != "spawn":
            continue
        if _source_present(state, ph.params):
            return True
    return any(proc.malicious for proc in state.processes)
