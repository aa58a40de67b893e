"""CSV result tables, policy snapshot files and run manifests.

Floats are written with ``repr`` so every value survives a parse round trip
unchanged. Hierarchy edges are stored as space-separated ``d>s`` tokens in
sorted order.
"""

import csv
import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from .experiments import PopulationResult
from .metrics import DominanceDigraph, is_transitive, render_condensed
from .policy import restore, snapshot

GENERATIONS_TABLE = "generations.csv"
HIERARCHIES_TABLE = "hierarchies.csv"
SNAPSHOT_DIR = "snapshots"
MANIFEST = "manifest.json"


def fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_table(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def snapshot_name(population: int, agent: int) -> str:
    return f"pop{population:04d}_agent{agent:02d}.json"


def generation_rows(results, n_agents):
    pairs = [(i, j) for i in range(n_agents) for j in range(i + 1, n_agents)]
    header = (
        ["population", "generation"]
        + [f"agg_{i}" for i in range(n_agents)]
        + ["min_rapport", "mean_rapport", "all_related"]
        + [f"rapport_{i}_{j}" for i, j in pairs]
    )
    rows = []
    for r in results:
        for m in r.history:
            rows.append(
                [r.index, m.generation, *m.aggressiveness, m.min_rapport, m.mean_rapport, m.all_related]
                + [float(m.rapport[i, j]) for i, j in pairs]
            )
    return header, rows


def hierarchy_rows(results, n_agents):
    header = (
        ["population", "converged", "n_generations", "complete", "transitive", "edges", "condensed"]
        + [f"agg_{i}" for i in range(n_agents)]
    )
    rows = []
    for r in results:
        h = r.hierarchy
        complete = h is not None and h.complete
        rows.append([
            r.index, r.converged, r.n_generations, complete,
            is_transitive(h) if complete else None,
            h.to_tokens() if h is not None else None,
            render_condensed(h, plain=True) if complete else None,
            *r.aggressiveness,
        ])
    return header, rows


def write_snapshots(directory: Path, results, written: list) -> None:
    """Write one snapshot file per agent, appending each path to ``written``."""
    directory.mkdir(parents=True, exist_ok=True)
    for r in results:
        for i, state in enumerate(r.agents):
            path = directory / snapshot_name(r.index, i)
            written.append(path)
            path.write_text(snapshot(state) + "\n", encoding="utf-8")


def _bool(text: str) -> bool:
    return text.strip() == "1"


def read_populations(results_dir: Path, with_agents: bool = False) -> list[PopulationResult]:
    """Rebuild population results (without histories) from an ``emerge`` output directory."""
    rows = read_table(results_dir / HIERARCHIES_TABLE)
    out = []
    for row in rows:
        aggs = sorted((k for k in row if k.startswith("agg_")), key=lambda k: int(k[4:]))
        n = len(aggs)
        h = DominanceDigraph.from_tokens(n, row["edges"])
        agents = []
        index = int(row["population"])
        if with_agents:
            for i in range(n):
                path = results_dir / SNAPSHOT_DIR / snapshot_name(index, i)
                agents.append(restore(path.read_bytes()))
        out.append(PopulationResult(
            index=index,
            converged=_bool(row["converged"]),
            n_generations=int(row["n_generations"]),
            hierarchy=h,
            aggressiveness=tuple(float(row[k]) for k in aggs),
            agents=agents,
        ))
    return out


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write_json(path: Path, doc):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


class RunManifest:
    """Run metadata written when a run starts and finalised when it ends."""

    def __init__(self, out_dir: Path, command: str, config: dict, config_text: str,
                 master_seed: int, version: str, run_id: str):
        self.out_dir = out_dir
        self.path = out_dir / MANIFEST
        self.doc = {
            "run_id": run_id,
            "command": command,
            "config": config,
            "config_text": config_text,
            "master_seed": master_seed,
            "code_version": version,
            "started_at": _now(),
            "finished_at": None,
            "status": "running",
            "outputs": [],
        }

    def start(self):
        _atomic_write_json(self.path, self.doc)

    def finish(self, outputs, status="complete"):
        self.doc["finished_at"] = _now()
        self.doc["status"] = status
        self.doc["outputs"] = [
            {"path": p.relative_to(self.out_dir).as_posix(), "sha256": sha256(p)} for p in sorted(outputs)
        ]
        _atomic_write_json(self.path, self.doc)


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")
