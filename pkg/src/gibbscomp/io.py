"""Versioned line-oriented text formats for models and metrics.

Floats are written with ``repr`` so that a write/read round trip is exact.
Blank lines and lines starting with ``#`` after the header are ignored.
"""

from __future__ import annotations

import json

import numpy as np

from . import __version__
from .core import SiteMetric, StateSpace
from .hmm import LatticeGraph, LatticeHMM
from .oracle import FactorModel

FACTOR_HEADER = "# gibbscomp factor-model v1"
LATTICE_HEADER = "# gibbscomp lattice-hmm v1"
METRIC_HEADER = "# gibbscomp metric v1"


class FormatError(ValueError):
    """Malformed model, metric or parameter file."""


def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def _ints(values) -> str:
    return " ".join(str(int(v)) for v in values)


def _lines(text: str, header: str) -> list[list[str]]:
    raw = text.splitlines()
    if not raw or raw[0].strip() != header:
        found = raw[0].strip() if raw else "<empty>"
        raise FormatError(f"expected header {header!r}, found {found!r}")
    out = []
    for n, line in enumerate(raw[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        out.append((n, line.split()))
    return out


def _parse_float_list(tokens, n, what):
    try:
        return np.array([float(t) for t in tokens])
    except ValueError as e:
        raise FormatError(f"line {n}: bad number in {what}: {e}") from None


def _parse_int_list(tokens, n, what):
    try:
        return [int(t) for t in tokens]
    except ValueError as e:
        raise FormatError(f"line {n}: bad integer in {what}: {e}") from None


# ---------------------------------------------------------------- factor models


def dump_factor_model(model: FactorModel) -> str:
    out = [FACTOR_HEADER, f"cards {_ints(model.space.cards)}"]
    if model.space.labels is not None:
        out.append("labels " + " ".join(f"{t}:{v}" for t, v in model.space.labels))
    for region, table in model.factors:
        out.append(f"factor {_ints(region)} : {_floats(table)}")
    return "\n".join(out) + "\n"


def load_factor_model(text: str) -> FactorModel:
    cards = labels = None
    factors = []
    for n, tok in _lines(text, FACTOR_HEADER):
        key = tok[0]
        if key == "cards":
            cards = tuple(_parse_int_list(tok[1:], n, "cards"))
        elif key == "labels":
            try:
                labels = tuple(tuple(int(p) for p in t.split(":")) for t in tok[1:])
            except ValueError:
                raise FormatError(f"line {n}: labels must be time:vertex pairs") from None
        elif key == "factor":
            if ":" not in tok:
                raise FormatError(f"line {n}: factor line needs ':'")
            c = tok.index(":")
            factors.append((tuple(_parse_int_list(tok[1:c], n, "region")), _parse_float_list(tok[c + 1:], n, "table")))
        else:
            raise FormatError(f"line {n}: unknown key {key!r}")
    if cards is None:
        raise FormatError("missing 'cards' line")
    try:
        return FactorModel(StateSpace(cards, labels), factors)
    except ValueError as e:
        raise FormatError(str(e)) from None


# ---------------------------------------------------------------- lattice HMMs


def dump_lattice_model(model: LatticeHMM) -> str:
    g = model.graph
    out = [
        LATTICE_HEADER,
        f"shape {_ints(g.shape)}",
        f"r {g.r}",
        f"periodic {int(g.periodic)}",
        f"k {model.k}",
        f"obs_k {model.obs_k}",
        f"eps {model.eps!r}",
        f"delta {model.delta!r}",
        f"kappa {model.kappa!r}",
        f"init {_ints(model.init)}",
    ]
    for v in range(model.n_vertices):
        out.append(f"q {v} : {_floats(model.q[v])}")
        out.append(f"theta {v} : {_floats(model.theta[v])}")
        out.append(f"obs {v} : {_floats(model.obs[v])}")
    return "\n".join(out) + "\n"


def load_lattice_model(text: str) -> LatticeHMM:
    scalars: dict = {}
    tables: dict = {"q": {}, "theta": {}, "obs": {}}
    for n, tok in _lines(text, LATTICE_HEADER):
        key = tok[0]
        if key in ("shape", "init"):
            scalars[key] = tuple(_parse_int_list(tok[1:], n, key))
        elif key in ("r", "periodic", "k", "obs_k"):
            scalars[key] = _parse_int_list(tok[1:2], n, key)[0]
        elif key in ("eps", "delta", "kappa"):
            scalars[key] = float(_parse_float_list(tok[1:2], n, key)[0])
        elif key in tables:
            if len(tok) < 3 or tok[2] != ":":
                raise FormatError(f"line {n}: expected '{key} <vertex> : values'")
            tables[key][_parse_int_list(tok[1:2], n, key)[0]] = _parse_float_list(tok[3:], n, key)
        else:
            raise FormatError(f"line {n}: unknown key {key!r}")
    missing = {"shape", "r", "periodic", "k", "obs_k", "eps", "delta", "kappa"} - scalars.keys()
    if missing:
        raise FormatError(f"missing keys {sorted(missing)}")
    try:
        graph = LatticeGraph(scalars["shape"], scalars["r"], bool(scalars["periodic"]))
        k, m = scalars["k"], scalars["obs_k"]
        V = graph.n_vertices
        for key in tables:
            if sorted(tables[key]) != list(range(V)):
                raise FormatError(f"'{key}' tables must be given for vertices 0..{V - 1}")
        q = [tables["q"][v].reshape(k, k) for v in range(V)]
        theta = [tables["theta"][v].reshape(-1, k) for v in range(V)]
        obs = [tables["obs"][v].reshape(k, m) for v in range(V)]
        return LatticeHMM(graph, k, m, q, theta, obs, scalars["eps"], scalars["delta"], scalars["kappa"], scalars.get("init"))
    except FormatError:
        raise
    except ValueError as e:
        raise FormatError(str(e)) from None


def load_any_model(text: str):
    head = text.splitlines()[0].strip() if text else ""
    if head == FACTOR_HEADER:
        return load_factor_model(text)
    if head == LATTICE_HEADER:
        return load_lattice_model(text)
    raise FormatError(f"unrecognized model header {head!r}")


# ---------------------------------------------------------------- metrics


def dump_metrics(metrics: list[SiteMetric], cards) -> str:
    out = [METRIC_HEADER]
    for i, (m, k) in enumerate(zip(metrics, cards)):
        out.append(f"site {i} : {_floats(m.matrix(k))}")
    return "\n".join(out) + "\n"


def load_metrics(text: str, space: StateSpace) -> list[SiteMetric]:
    """Per-site tables; an ``all`` line sets the default for unlisted sites."""
    default = None
    per: dict = {}
    for n, tok in _lines(text, METRIC_HEADER):
        if tok[0] == "all" and len(tok) > 1 and tok[1] == ":":
            default = _parse_float_list(tok[2:], n, "metric")
        elif tok[0] == "site" and len(tok) > 2 and tok[2] == ":":
            per[_parse_int_list(tok[1:2], n, "site")[0]] = _parse_float_list(tok[3:], n, "metric")
        else:
            raise FormatError(f"line {n}: expected 'site <i> : values' or 'all : values'")
    out = []
    try:
        for i, k in enumerate(space.cards):
            t = per.get(i, default)
            out.append(SiteMetric() if t is None else SiteMetric(t.reshape(k, k)))
    except ValueError as e:
        raise FormatError(str(e)) from None
    return out


# ---------------------------------------------------------------- documents


def json_document(kind: str, payload: dict) -> str:
    """Canonical JSON (sorted keys, repr floats) with provenance fields."""
    doc = {"kind": kind, "library_version": __version__}
    doc.update(payload)
    return json.dumps(_plain(doc), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
