"""Text formats: DIMACS CNF, edge lists, trajectories, trees and record streams.

Edge lists start with a header ``<n> <number of edges>`` followed by one edge
per line as space-separated vertex indices (0-based). Lines starting with
``#`` or ``c`` are comments.

Record streams are JSON lines; the first line is a header naming the schema.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, is_dataclass
from typing import IO, Iterable, Iterator

import numpy as np

from .apps.coloring import Graph
from .apps.hypergraph import Hypergraph
from .apps.sat import CnfFormula
from .engine import Step, Trajectory
from .witness import WitnessTree, parse_tree

SCHEMA = "lllca.records"
SCHEMA_VERSION = 1


class FormatError(ValueError):
    pass


def _text(data: str | bytes) -> str:
    return data.decode() if isinstance(data, (bytes, bytearray)) else data


def parse_dimacs(data: str | bytes) -> CnfFormula:
    n = m = None
    tokens: list[int] = []
    for lineno, raw in enumerate(_text(data).splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "c%":
            continue
        if line.startswith("p"):
            parts = line.split()
            if n is not None or len(parts) != 4 or parts[1] != "cnf":
                raise FormatError(f"line {lineno}: malformed header {line!r}")
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise FormatError(f"line {lineno}: malformed header {line!r}") from None
            if n < 0 or m < 0:
                raise FormatError(f"line {lineno}: negative counts")
            continue
        if n is None:
            raise FormatError(f"line {lineno}: clause before header")
        try:
            tokens.extend(int(t) for t in line.split())
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer literal") from None
    if n is None:
        raise FormatError("missing 'p cnf' header")
    if tokens and tokens[-1] != 0:
        raise FormatError("last clause is not terminated by 0")
    clauses, cur = [], []
    for t in tokens:
        if t == 0:
            if not cur:
                raise FormatError("empty clause")
            clauses.append(tuple(cur))
            cur = []
        else:
            if abs(t) > n:
                raise FormatError(f"literal {t} exceeds declared n={n}")
            cur.append(t)
    if len(clauses) != m:
        raise FormatError(f"header declares {m} clauses, found {len(clauses)}")
    return CnfFormula(n, tuple(clauses))


def write_dimacs(cnf: CnfFormula) -> str:
    lines = [f"p cnf {cnf.n} {cnf.m}"]
    lines += [" ".join(map(str, c)) + " 0" for c in cnf.clauses]
    return "\n".join(lines) + "\n"


def _edge_lines(data: str | bytes) -> tuple[int, list[tuple[int, ...]]]:
    rows = [l.split() for l in _text(data).splitlines() if l.strip() and l.lstrip()[0] not in "#c"]
    if not rows or len(rows[0]) != 2:
        raise FormatError("edge list needs a '<n> <edges>' header")
    try:
        n, count = int(rows[0][0]), int(rows[0][1])
        edges = [tuple(int(v) for v in r) for r in rows[1:]]
    except ValueError:
        raise FormatError("non-integer entry in edge list") from None
    if len(edges) != count:
        raise FormatError(f"header declares {count} edges, found {len(edges)}")
    return n, edges


def parse_graph(data: str | bytes) -> Graph:
    n, edges = _edge_lines(data)
    if any(len(e) != 2 for e in edges):
        raise FormatError("graph edges need exactly two endpoints")
    return Graph.from_edges(n, edges)


def parse_hypergraph(data: str | bytes) -> Hypergraph:
    n, edges = _edge_lines(data)
    return Hypergraph(n, tuple(edges))


def write_edge_list(n: int, edges: Iterable[Iterable[int]]) -> str:
    edges = [tuple(e) for e in edges]
    lines = [f"{n} {len(edges)}"] + [" ".join(map(str, e)) for e in edges]
    return "\n".join(lines) + "\n"


def write_graph(g: Graph) -> str:
    return write_edge_list(g.n, g.edges)


def write_hypergraph(h: Hypergraph) -> str:
    return write_edge_list(h.n, h.edges)


def write_trajectory(traj: Trajectory) -> str:
    """One line per resampling: ``t constraint old-values new-values`` (values comma-joined)."""
    out = []
    for t, st in enumerate(traj.steps, 1):
        out.append(f"{t} {st.constraint} {','.join(map(str, st.old))} {','.join(map(str, st.new))}")
    return "\n".join(out) + ("\n" if out else "")


def parse_trajectory(data: str | bytes, initial=None) -> Trajectory:
    traj = Trajectory(initial=np.asarray(initial if initial is not None else [], dtype=np.int64))
    for lineno, line in enumerate(_text(data).splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 or int(parts[0]) != traj.n_steps + 1:
            raise FormatError(f"line {lineno}: malformed step {line!r}")
        i = int(parts[1])
        old = tuple(int(v) for v in parts[2].split(","))
        new = tuple(int(v) for v in parts[3].split(","))
        traj.witness.append(i)
        traj.steps.append(Step(i, old, new))
    return traj


def write_tree(tau: WitnessTree) -> str:
    return tau.encoding


def read_tree(text: str) -> WitnessTree:
    return parse_tree(text.strip())


def _jsonable(x):
    if is_dataclass(x) and not isinstance(x, type):
        return {k: _jsonable(v) for k, v in asdict(x).items()}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def config_hash(config) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class RecordWriter:
    """Serializes records to one JSON object per line behind a schema header."""

    def __init__(self, stream: IO[str], config=None):
        self.stream = stream
        header = {"schema": SCHEMA, "version": SCHEMA_VERSION}
        if config is not None:
            header["config"] = _jsonable(config)
            header["config_hash"] = config_hash(config)
        self._write(header)

    def _write(self, obj) -> None:
        self.stream.write(json.dumps(_jsonable(obj), sort_keys=True) + "\n")

    def write(self, record: dict) -> None:
        self._write(record)


def read_records(stream: Iterable[str]) -> Iterator[dict]:
    it = iter(stream)
    try:
        header = json.loads(next(it))
    except StopIteration:
        raise FormatError("empty record stream") from None
    if header.get("schema") != SCHEMA:
        raise FormatError(f"unknown schema {header.get('schema')!r}")
    if header.get("version") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema version {header.get('version')!r}")
    for line in it:
        if line.strip():
            yield json.loads(line)
