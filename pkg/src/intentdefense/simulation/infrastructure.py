"""Simulated infrastructure state.

A deliberately small world: hosts, files, processes, scheduled jobs, DNS
bindings with rotating addresses, outbound connections and the enforcement
artifacts defenders leave behind (block rules, DNS denylist entries, system
call filters, disabled accounts).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

ATTACKER = "attacker"


@dataclass
class Host:
    name: str
    attacker_privileged: bool = False  # attacker controls filesystem permissions
    reboots: int = 0


@dataclass
class FileEntry:
    host: str
    path: str
    owner: str = "root"
    present: bool = True
    modified: bool = False


@dataclass
class Process:
    pid: int
    host: str
    name: str
    malicious: bool = False
    source_job: str | None = None
    source_file: str | None = None
    syscalls: tuple[str, ...] = ()
    resolved_ip: str | None = None


@dataclass
class ScheduledJob:
    id: str
    host: str
    script_path: str
    active: bool = True


@dataclass
class DnsBinding:
    name: str
    ips: list[str]
    index: int = 0
    rotation_period: int = 1

    @property
    def current_ip(self) -> str:
        return self.ips[self.index % len(self.ips)]


@dataclass
class Connection:
    src_host: str
    dest_host: str
    dest_ip: str
    process: str
    active: bool = True


@dataclass
class InfrastructureState:
    hosts: dict[str, Host] = field(default_factory=dict)
    files: list[FileEntry] = field(default_factory=list)
    processes: list[Process] = field(default_factory=list)
    scheduled_jobs: dict[str, ScheduledJob] = field(default_factory=dict)
    dns_bindings: dict[str, DnsBinding] = field(default_factory=dict)
    connections: list[Connection] = field(default_factory=list)
    network_policies: set[str] = field(default_factory=set)  # blocked destinations
    dns_denylist: set[str] = field(default_factory=set)
    syscall_filters: set[tuple[str, str]] = field(default_factory=set)
    disabled_accounts: set[str] = field(default_factory=set)
    accounts: set[str] = field(default_factory=set)
    oneshot_effects: set[str] = field(default_factory=set)
    dns_lookups: list[tuple[str, str]] = field(default_factory=list)  # (host, name) this round
    objective_reached: bool = False
    c2_dwell: int = 0
    round: int = 0
    next_pid: int = 100

    def copy(self) -> "InfrastructureState":
        return copy.deepcopy(self)

    # -- queries -----------------------------------------------------------

    def file(self, host: str, path: str) -> FileEntry | None:
        for f in self.files:
            if f.host == host and f.path == path:
                return f
        return None

    def file_present(self, host: str, path: str) -> bool:
        f = self.file(host, path)
        return f is not None and f.present

    def processes_named(self, host: str, name: str) -> list[Process]:
        return [p for p in self.processes if p.host == host and p.name == name]

    def is_blocked(self, dest_host: str, dest_ip: str | None = None) -> bool:
        return dest_host in self.network_policies or (dest_ip is not None and dest_ip in self.network_policies)

    def syscall_blocked(self, proc: Process) -> bool:
        return any((proc.host, s) in self.syscall_filters for s in proc.syscalls)

    def active_connections(self) -> list[Connection]:
        return [c for c in self.connections if c.active]

    def spawn(self, host: str, name: str, **kwargs) -> Process:
        proc = Process(self.next_pid, host, name, **kwargs)
        self.next_pid += 1
        self.processes.append(proc)
        return proc

    def kill(self, procs) -> None:
        """Terminate processes and close their connections."""
        doomed = {id(p) for p in procs}
        for p in procs:
            for c in self.connections:
                if c.src_host == p.host and c.process == p.name:
                    c.active = False
        self.processes = [p for p in self.processes if id(p) not in doomed]

    def enforce_block_rules(self) -> None:
        for c in self.connections:
            if c.active and self.is_blocked(c.dest_host, c.dest_ip):
                c.active = False

    # -- attack conditions -------------------------------------------------

    def conditions(self) -> dict[str, bool]:
        """Attack conditions currently holding."""
        job_persistence = any(
            j.active and self.file_present(j.host, j.script_path) for j in self.scheduled_jobs.values()
        )
        file_persistence = any(f.present and f.modified for f in self.files)
        return {
            "persistence": job_persistence or file_persistence,
            "execution": any(p.malicious for p in self.processes),
            "c2": bool(self.active_connections()),
            "objective": self.objective_reached,
        }

    def summary(self) -> dict:
        return {
            "round": self.round,
            "conditions": self.conditions(),
            "files": sorted(f"{f.host}:{f.path}" for f in self.files if f.present),
            "modified_files": sorted(f"{f.host}:{f.path}" for f in self.files if f.present and f.modified),
            "processes": sorted(f"{p.host}:{p.name}" for p in self.processes),
            "connections": sorted(f"{c.src_host}->{c.dest_host}@{c.dest_ip}" for c in self.active_connections()),
            "block_rules": sorted(self.network_policies),
            "dns_denylist": sorted(self.dns_denylist),
            "syscall_filters": sorted(f"{h}:{s}" for h, s in self.syscall_filters),
            "disabled_accounts": sorted(self.disabled_accounts),
        }

    # -- config ------------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "InfrastructureState":
        state = cls()
        for h in d.get("hosts", []):
            host = Host(h["name"], bool(h.get("attacker_privileged", False)))
            state.hosts[host.name] = host
        for f in d.get("files", []):
            state.files.append(FileEntry(f["host"], f["path"], f.get("owner", "root"),
                                         bool(f.get("present", True)), bool(f.get("modified", False))))
        for j in d.get("scheduled_jobs", []):
            state.scheduled_jobs[j["id"]] = ScheduledJob(j["id"], j["host"], j["script_path"],
                                                         bool(j.get("active", True)))
        for b in d.get("dns_bindings", []):
            state.dns_bindings[b["name"]] = DnsBinding(b["name"], list(b["ips"]), 0,
                                                       int(b.get("rotation_period", 1)))
        for p in d.get("processes", []):
            state.spawn(p["host"], p["name"], malicious=bool(p.get("malicious", False)),
                        source_job=p.get("source_job"), source_file=p.get("source_file"),
                        syscalls=tuple(p.get("syscalls", ())))
        state.accounts = set(d.get("accounts", []))
        return state
