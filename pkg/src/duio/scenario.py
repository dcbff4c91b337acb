"""Scenario files: JSON documents describing model, graph, design and run.

Layout::

    {
      "model":   {"A": [[...]], "B": [[...]], "D": [[...]],
                  "nodes": [{"C": [[...]], "known_inputs": [0, 2]}, ...]},
      "graph":   {"node_count": 4, "directed": false, "edges": [[0, 1], ...]}
              or {"node_count": 4, "switching": {"topologies": [[[0, 1], ...], ...],
                                                 "dwell_time": 0.1, "start_index": 0}},
      "design":  {"mode": "undirected", "chi": 84.81,
                  "nodes": [{"H": ..., "M": ..., "N": ..., "L": ..., "P": ..., "K": ...}, ...],
                  "certificate": {...}},
      "run":     {"horizon": 1.0, "step": 1e-4, "seed": 0,
                  "noise": {"kind": "band_limited_white", "power": 1.0, "sample_time": 1e-3},
                  "initial_state": [...], "initial_observer_states": [[...], ...],
                  "feedback_gain": [[...]]},
      "options": {"verify_tol": 5e-3, "safety_factor": 1.01, "reconcile_gains": true, ...}
    }

Node indices and input columns are 0-based.  Edges are ``[src, dst]``
pairs; for undirected graphs the order is irrelevant.  Floats are written
with ``repr`` so a save/load cycle is bit-exact.
"""

import json
import re
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from . import graph as G
from .designer import DesignOptions
from .errors import DuioError, ScenarioError
from .model import MODES, NodeGains, ObserverDesign, SystemModel
from .simulator import NoiseSpec

_MATRIX = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_VECTOR = {"type": "array", "items": {"type": "number"}}
_EDGES = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
}

SCHEMA = {
    "type": "object",
    "required": ["model", "graph"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "model": {
            "type": "object",
            "required": ["A", "B", "D", "nodes"],
            "additionalProperties": False,
            "properties": {
                "A": _MATRIX,
                "B": _MATRIX,
                "D": _MATRIX,
                "nodes": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["C", "known_inputs"],
                        "additionalProperties": False,
                        "properties": {
                            "C": _MATRIX,
                            "known_inputs": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                        },
                    },
                },
            },
        },
        "graph": {
            "type": "object",
            "required": ["node_count"],
            "additionalProperties": False,
            "properties": {
                "node_count": {"type": "integer", "minimum": 1},
                "directed": {"type": "boolean"},
                "edges": _EDGES,
                "switching": {
                    "type": "object",
                    "required": ["topologies", "dwell_time"],
                    "additionalProperties": False,
                    "properties": {
                        "topologies": {"type": "array", "minItems": 1, "items": _EDGES},
                        "dwell_time": {"type": "number", "exclusiveMinimum": 0},
                        "start_index": {"type": "integer", "minimum": 0},
                    },
                },
            },
            "oneOf": [{"required": ["edges"]}, {"required": ["switching"]}],
        },
        "design": {
            "type": "object",
            "required": ["nodes"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": list(MODES)},
                "chi": {"type": ["number", "null"]},
                "nodes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["H", "M", "N", "L", "P"],
                        "additionalProperties": False,
                        "properties": {k: _MATRIX for k in ("H", "M", "N", "L", "P", "K", "Y")},
                    },
                },
                "certificate": {"type": "object"},
            },
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "noise": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["none", "band_limited_white"]},
                        "power": {"type": "number", "minimum": 0},
                        "sample_time": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "initial_state": _VECTOR,
                "initial_observer_states": _MATRIX,
                "feedback_gain": _MATRIX,
            },
        },
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rank_tol": {"type": "number", "exclusiveMinimum": 0},
                "boundary_tol": {"type": "number", "minimum": 0},
                "verify_tol": {"type": "number", "exclusiveMinimum": 0},
                "safety_factor": {"type": "number", "minimum": 1},
                "beta0": {"type": "number", "exclusiveMinimum": 0},
                "beta_doublings": {"type": "integer", "minimum": 0},
                "margin": {"type": "number", "exclusiveMinimum": 0},
                "reconcile_gains": {"type": "boolean"},
                "Y": {"type": "object", "patternProperties": {"^[0-9]+$": _MATRIX}, "additionalProperties": False},
            },
        },
    },
}

BUNDLED = {
    "1": "scenario1_undirected.json",
    "2": "scenario2_directed.json",
    "3": "scenario3_switching.json",
}


@dataclass
class RunSpec:
    horizon: float = 1.0
    step: float = 1e-4
    seed: int = 0
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    initial_state: np.ndarray = None
    initial_observer_states: np.ndarray = None
    feedback_gain: np.ndarray = None


@dataclass
class Scenario:
    model: SystemModel
    topology: object
    design: ObserverDesign = None
    run: RunSpec = field(default_factory=RunSpec)
    options: dict = field(default_factory=dict)
    certificate: dict = None
    name: str = ""
    description: str = ""

    @property
    def mode(self):
        if isinstance(self.topology, G.SwitchingSchedule):
            return "switching"
        return "directed" if self.topology.directed else "undirected"

    def design_options(self):
        keys = ("rank_tol", "boundary_tol", "beta0", "beta_doublings", "margin", "safety_factor")
        kw = {k: self.options[k] for k in keys if k in self.options}
        kw["Y"] = {int(k): np.asarray(v, float) for k, v in self.options.get("Y", {}).items()}
        return DesignOptions(**kw)


# ------------------------------------------------------------------ loading


def _path(err):
    parts = ["$"]
    for p in err.absolute_path:
        parts.append(f"[{p}]" if isinstance(p, int) else f".{p}")
    return "".join(parts)


def _matrix(value, where, shape=None):
    rows = [len(r) for r in value]
    if rows and len(set(rows)) != 1:
        bad = next(k for k, r in enumerate(rows) if r != rows[0])
        raise ScenarioError("bad_dimension", f"row {bad} has {rows[bad]} entries, row 0 has {rows[0]}", f"{where}[{bad}]")
    arr = np.array(value, dtype=float).reshape(len(rows), rows[0] if rows else 0)
    if shape is not None:
        want = tuple(arr.shape[k] if s is None else s for k, s in enumerate(shape))
        if arr.shape != want:
            raise ScenarioError("bad_dimension", f"shape {arr.shape}, expected {want}", where)
    return arr


def parse(doc):
    """Validate a decoded document and build a :class:`Scenario`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ScenarioError("schema", err.message, _path(err))

    m = doc["model"]
    A = _matrix(m["A"], "$.model.A")
    n = A.shape[0]
    if A.shape != (n, n) or n == 0:
        raise ScenarioError("bad_dimension", f"A must be square and non-empty, got {A.shape}", "$.model.A")
    B = _matrix(m["B"], "$.model.B", (n, None)) if m["B"] else np.zeros((n, 0))
    D = _matrix(m["D"], "$.model.D", (n, None)) if m["D"] else np.zeros((n, 0))
    outputs, known = [], []
    for i, node in enumerate(m["nodes"]):
        outputs.append(_matrix(node["C"], f"$.model.nodes[{i}].C", (None, n)))
        for k in node["known_inputs"]:
            if k >= B.shape[1]:
                raise ScenarioError("bad_index", f"input column {k} out of range", f"$.model.nodes[{i}].known_inputs")
        known.append(tuple(node["known_inputs"]))
    try:
        model = SystemModel.from_partition(A, B, D, outputs, known)
    except DuioError as exc:
        raise ScenarioError(exc.code, str(exc), "$.model") from exc

    topology = _parse_graph(doc["graph"], model.N)
    design, cert = None, None
    if "design" in doc:
        design, cert = _parse_design(doc["design"], model, topology)
    run = _parse_run(doc.get("run", {}), model)
    return Scenario(model, topology, design, run, dict(doc.get("options", {})), cert,
                    doc.get("name", ""), doc.get("description", ""))


def _topology(N, edges, directed, where):
    for k, (a, b) in enumerate(edges):
        if a >= N or b >= N:
            raise ScenarioError("bad_index", f"edge {[a, b]} references a node >= {N}", f"{where}[{k}]")
        if a == b:
            raise ScenarioError("bad_edge", f"self-loop on node {a}", f"{where}[{k}]")
    return G.Topology.from_edges(N, [tuple(e) for e in edges], directed)


def _parse_graph(g, N):
    if g["node_count"] != N:
        raise ScenarioError("bad_dimension", f"graph has {g['node_count']} nodes, model has {N}", "$.graph.node_count")
    try:
        if "switching" in g:
            if g.get("directed", False):
                raise ScenarioError("bad_schedule", "switching schedules must be undirected", "$.graph.directed")
            sw = g["switching"]
            tops = [_topology(N, e, False, f"$.graph.switching.topologies[{k}]") for k, e in enumerate(sw["topologies"])]
            return G.SwitchingSchedule(tops, float(sw["dwell_time"]), sw.get("start_index", 0))
        return _topology(N, g["edges"], g.get("directed", False), "$.graph.edges")
    except ScenarioError:
        raise
    except DuioError as exc:
        raise ScenarioError(exc.code, str(exc), "$.graph") from exc


def _parse_design(d, model, topology):
    if len(d["nodes"]) != model.N:
        raise ScenarioError("bad_dimension", f"design has {len(d['nodes'])} nodes, model has {model.N}", "$.design.nodes")
    n = model.n
    nodes = []
    for i, (g, node) in enumerate(zip(d["nodes"], model.nodes)):
        w = f"$.design.nodes[{i}]"
        p = node.p
        kw = {
            "H": _matrix(g["H"], f"{w}.H", (n, p)),
            "M": _matrix(g["M"], f"{w}.M", (n, n)),
            "N": _matrix(g["N"], f"{w}.N", (n, n)),
            "L": _matrix(g["L"], f"{w}.L", (n, p)),
            "P": _matrix(g["P"], f"{w}.P", (n, n)),
        }
        if "K" in g:
            kw["K"] = _matrix(g["K"], f"{w}.K", (n, p))
        if "Y" in g:
            kw["Y"] = _matrix(g["Y"], f"{w}.Y", (n, None))
        nodes.append(NodeGains(**kw))
    mode = d.get("mode") or ("switching" if isinstance(topology, G.SwitchingSchedule)
                             else "directed" if topology.directed else "undirected")
    chi = d.get("chi")
    return ObserverDesign(nodes, float("nan") if chi is None else float(chi), mode), d.get("certificate")


def _parse_run(r, model):
    n, N = model.n, model.N
    noise = r.get("noise", {})
    spec = RunSpec(
        horizon=float(r.get("horizon", 1.0)),
        step=float(r.get("step", 1e-4)),
        seed=int(r.get("seed", 0)),
        noise=NoiseSpec(noise.get("kind", "none"), float(noise.get("power", 0.0)), float(noise.get("sample_time", 1e-3))),
    )
    if "initial_state" in r:
        x0 = np.asarray(r["initial_state"], float)
        if x0.shape != (n,):
            raise ScenarioError("bad_dimension", f"length {x0.size}, expected {n}", "$.run.initial_state")
        spec.initial_state = x0
    if "initial_observer_states" in r:
        spec.initial_observer_states = _matrix(r["initial_observer_states"], "$.run.initial_observer_states", (N, n))
    if "feedback_gain" in r:
        spec.feedback_gain = _matrix(r["feedback_gain"], "$.run.feedback_gain", (model.m, n))
    return spec


def loads(text, source="<string>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("parse", exc.msg, f"{source}:{exc.lineno}:{exc.colno}") from exc
    return parse(doc)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError("io", exc.strerror or str(exc), str(path)) from exc
    return loads(text, str(path))


def load_bundled(which):
    """One of the shipped reference scenarios, ``"1"``, ``"2"`` or ``"3"``."""
    try:
        name = BUNDLED[str(which)]
    except KeyError:
        raise ScenarioError("unknown_scenario", f"no bundled scenario {which!r}") from None
    text = resources.files("duio").joinpath("data", name).read_text(encoding="utf-8")
    return loads(text, name)


def bundled_path(which):
    return resources.files("duio").joinpath("data", BUNDLED[str(which)])


# ------------------------------------------------------------------- saving


def _rows(M):
    return np.asarray(M, dtype=float).tolist()


def _edges(top):
    if top.directed:
        return [list(e) for e in top.edges()]
    return [list(e) for e in top.edges() if e[0] < e[1]]


def to_document(sc):
    model = sc.model
    doc = {}
    if sc.name:
        doc["name"] = sc.name
    if sc.description:
        doc["description"] = sc.description
    doc["model"] = {
        "A": _rows(model.A),
        "B": _rows(model.B),
        "D": _rows(model.D),
        "nodes": [{"C": _rows(nd.C), "known_inputs": list(nd.known_inputs)} for nd in model.nodes],
    }
    top = sc.topology
    if isinstance(top, G.SwitchingSchedule):
        doc["graph"] = {
            "node_count": top.node_count,
            "switching": {
                "topologies": [_edges(t) for t in top.topologies],
                "dwell_time": top.dwell_time,
                "start_index": top.start_index,
            },
        }
    else:
        doc["graph"] = {"node_count": top.node_count, "directed": bool(top.directed), "edges": _edges(top)}
    if sc.design is not None:
        nodes = []
        for g in sc.design.nodes:
            entry = {k: _rows(getattr(g, k)) for k in ("H", "M", "N", "L", "P")}
            for k in ("K", "Y"):
                if getattr(g, k) is not None:
                    entry[k] = _rows(getattr(g, k))
            nodes.append(entry)
        chi = sc.design.chi
        doc["design"] = {"mode": sc.design.mode, "chi": None if np.isnan(chi) else float(chi), "nodes": nodes}
        if sc.certificate:
            doc["design"]["certificate"] = sc.certificate
    r = sc.run
    run = {
        "horizon": r.horizon,
        "step": r.step,
        "seed": r.seed,
        "noise": {"kind": r.noise.kind, "power": r.noise.power, "sample_time": r.noise.sample_time},
    }
    if r.initial_state is not None:
        run["initial_state"] = np.asarray(r.initial_state, float).tolist()
    if r.initial_observer_states is not None:
        run["initial_observer_states"] = _rows(r.initial_observer_states)
    if r.feedback_gain is not None:
        run["feedback_gain"] = _rows(r.feedback_gain)
    doc["run"] = run
    if sc.options:
        doc["options"] = sc.options
    return doc


_FLAT_LIST = re.compile(r"\[\s*([^\[\]{}\"]*?)\s*\]")


def dumps(sc):
    """Serialise with one matrix row per line."""
    text = json.dumps(to_document(sc), indent=1, allow_nan=False)
    return _FLAT_LIST.sub(lambda mt: "[" + ", ".join(v.strip() for v in mt.group(1).split(",")) + "]", text) + "\n"


def save(sc, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(sc))
