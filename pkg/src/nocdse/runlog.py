"""Per-iteration run records shared by the optimizers and the metrics.

The serialized log is split in two: a deterministic JSONL stream (one
self-describing record per iteration, append-only) and a timing sidecar
holding wall-clock data. Identical (instance, config, seed) runs therefore
produce byte-identical log streams; wall clock is reported alongside, not
inside.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(eq=False)
class LogRecord:
    iteration: int
    evaluations: int
    phv: float
    z: np.ndarray
    population: np.ndarray   # N x M objective vectors
    elapsed_ms: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, LogRecord):
            return NotImplemented
        return (self.iteration == other.iteration
                and self.evaluations == other.evaluations
                and self.phv == other.phv
                and np.array_equal(self.z, other.z)
                and np.array_equal(self.population, other.population)
                and self.elapsed_ms == other.elapsed_ms)


@dataclass(eq=False)
class RunLog:
    algo: str
    instance_digest: str
    m_obj: int
    seed: int
    records: list[LogRecord] = field(default_factory=list)

    def append(self, rec: LogRecord) -> None:
        if self.records:
            last = self.records[-1]
            if rec.evaluations < last.evaluations or rec.elapsed_ms < last.elapsed_ms:
                raise ValueError("log records must be monotone in evaluations and time")
        self.records.append(rec)

    def __eq__(self, other):
        if not isinstance(other, RunLog):
            return NotImplemented
        return (self.algo == other.algo
                and self.instance_digest == other.instance_digest
                and self.m_obj == other.m_obj
                and self.seed == other.seed
                and self.records == other.records)

    # -- serialization ------------------------------------------------------

    def header_line(self) -> str:
        head = {"algo": self.algo, "instance": self.instance_digest,
                "m_obj": self.m_obj, "seed": self.seed, "format": "noc-runlog/1"}
        return json.dumps(head, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def record_line(rec: LogRecord) -> str:
        body = {
            "iteration": rec.iteration,
            "evaluations": rec.evaluations,
            "phv": rec.phv,
            "z": [float(x) for x in rec.z],
            "population": [[float(x) for x in row] for row in rec.population],
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def to_jsonl(self) -> str:
        lines = [self.header_line()]
        lines.extend(self.record_line(r) for r in self.records)
        return "\n".join(lines) + "\n"

    def timing(self) -> dict:
        return {"elapsed_ms": [r.elapsed_ms for r in self.records]}

    @classmethod
    def from_jsonl(cls, text: str, timing: dict | None = None) -> "RunLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = json.loads(lines[0])
        if head.get("format") != "noc-runlog/1":
            raise ValueError("not a noc-runlog/1 document")
        log = cls(algo=head["algo"], instance_digest=head["instance"],
                  m_obj=head["m_obj"], seed=head["seed"])
        elapsed = (timing or {}).get("elapsed_ms", [])
        for i, ln in enumerate(lines[1:]):
            d = json.loads(ln)
            log.records.append(LogRecord(
                iteration=d["iteration"],
                evaluations=d["evaluations"],
                phv=d["phv"],
                z=np.array(d["z"], dtype=float),
                population=np.array(d["population"], dtype=float),
                elapsed_ms=float(elapsed[i]) if i < len(elapsed) else 0.0,
            ))
        return log
