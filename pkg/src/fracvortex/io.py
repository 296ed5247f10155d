"""Plain-text serialization: field snapshots, energy traces, forests.

All formats are line-oriented ASCII.  Floats are written with Python's
shortest round-trip representation, so writing and re-reading reproduces
every value bit for bit and identical inputs produce byte-identical files.

Field snapshot (``write_snapshot``/``read_snapshot``)::

    # field snapshot v1
    shape disk
    h 0.0125
    degree 1
    boundary_mode canonical
    phase0 0.0
    fourier 0
    vertices 0
    m 2
    eps 0.05
    eta 0.0
    converged 1
    sweeps 871
    nodes 20527
    <x> <y> <Re u> <Im u> <psi>     (one line per node, grid order)
    labeled_edges 52
    <i> <j> <k>                     (one line per edge with nonzero label)

``vertices N`` is followed by N ``x y`` lines for polygon domains, and
``fourier N`` by N ``a b`` coefficient lines.  Node order is the order of
``build_grid(spec)``, which the reader rebuilds and checks.  Edges carry
node ids with i < j, matching ``grid.edges``.

Energy trace (``write_trace``/``read_trace``): CSV with header
``sweep,quotient_dirichlet,potential,jump_length,at_wall,total`` and one
row per sweep, sweeps numbered from 1.

Forest (``write_forest``/``read_forest``)::

    # forest v1
    terminals 4
    <x> <y>
    steiner_points 1
    <x> <y>
    edges 4
    <a> <b>

Edge indices address the stacked array [terminals; steiner_points].  The
reader recomputes total length and connected components from the data.
"""

from __future__ import annotations

import functools

import numpy as np

from .domain import DomainSpec, Grid, build_grid
from .errors import ConfigError
from .quotient import ModulusParams
from .simulate import FieldState, SimParams
from .steiner import SteinerForest

_SNAPSHOT_MAGIC = "# field snapshot v1"
_FOREST_MAGIC = "# forest v1"
_TRACE_HEADER = "sweep,quotient_dirichlet,potential,jump_length,at_wall,total"


def _fmt(x) -> str:
    """Shortest decimal that round-trips the float64 exactly."""
    return repr(float(x))


# --------------------------------------------------------------------------
# field snapshots
# --------------------------------------------------------------------------


def write_snapshot(path, state: FieldState, grid: Grid, sim: SimParams) -> None:
    """Write a field state with enough header data to rebuild its grid.

    The per-sweep history is not part of the snapshot; use ``write_trace``
    for it.  A missing psi field is written as all ones.
    """
    spec = grid.spec
    psi = np.ones(grid.n_nodes) if state.psi is None else state.psi
    if state.u.shape[0] != grid.n_nodes or psi.shape[0] != grid.n_nodes:
        raise ConfigError("state does not match the grid's node count")
    if state.labels.shape[0] != grid.edges.shape[0]:
        raise ConfigError("state does not match the grid's edge count")
    lines = [_SNAPSHOT_MAGIC]
    lines.append(f"shape {spec.shape}")
    lines.append(f"h {_fmt(spec.h)}")
    lines.append(f"degree {int(spec.degree)}")
    lines.append(f"boundary_mode {spec.boundary_mode}")
    lines.append(f"phase0 {_fmt(spec.phase0)}")
    lines.append(f"fourier {len(spec.fourier_coeffs)}")
    for a, b in spec.fourier_coeffs:
        lines.append(f"{_fmt(a)} {_fmt(b)}")
    verts = spec.vertices or ()
    lines.append(f"vertices {len(verts)}")
    for x, y in verts:
        lines.append(f"{_fmt(x)} {_fmt(y)}")
    lines.append(f"m {sim.params.m}")
    lines.append(f"eps {_fmt(sim.eps)}")
    lines.append(f"eta {_fmt(sim.eta)}")
    lines.append(f"converged {int(state.converged)}")
    lines.append(f"sweeps {int(state.sweeps)}")
    lines.append(f"nodes {grid.n_nodes}")
    for i in range(grid.n_nodes):
        lines.append(
            f"{_fmt(grid.xy[i, 0])} {_fmt(grid.xy[i, 1])} "
            f"{_fmt(state.u[i].real)} {_fmt(state.u[i].imag)} {_fmt(psi[i])}"
        )
    labeled = np.flatnonzero(state.labels)
    lines.append(f"labeled_edges {labeled.size}")
    for e in labeled:
        i, j = grid.edges[e]
        lines.append(f"{int(i)} {int(j)} {int(state.labels[e])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _reading(fn):
    """Report unparsable numeric data as ConfigError with the path."""

    @functools.wraps(fn)
    def wrapper(path, *args, **kwargs):
        try:
            return fn(path, *args, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    return wrapper


class _LineReader:
    def __init__(self, path, magic):
        with open(path) as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0
        if not self.lines or self.lines[0] != magic:
            raise ConfigError(f"{path}: expected first line {magic!r}")
        self.pos = 1

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise ConfigError("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def keyed(self, key: str) -> str:
        line = self.next()
        parts = line.split(maxsplit=1)
        if len(parts) != 2 or parts[0] != key:
            raise ConfigError(f"expected '{key} <value>', got {line!r}")
        return parts[1]


@_reading
def read_snapshot(path):
    """Read a snapshot; returns (grid, sim, state).

    The grid is rebuilt from the header and its node layout checked
    against the stored coordinates.  The state's history is None.
    """
    r = _LineReader(path, _SNAPSHOT_MAGIC)
    shape = r.keyed("shape")
    h = float(r.keyed("h"))
    degree = int(r.keyed("degree"))
    boundary_mode = r.keyed("boundary_mode")
    phase0 = float(r.keyed("phase0"))
    n_four = int(r.keyed("fourier"))
    fourier = tuple(tuple(map(float, r.next().split())) for _ in range(n_four))
    n_vert = int(r.keyed("vertices"))
    verts = tuple(tuple(map(float, r.next().split())) for _ in range(n_vert))
    spec = DomainSpec(
        shape=shape,
        h=h,
        degree=degree,
        vertices=verts if verts else None,
        boundary_mode=boundary_mode,
        fourier_coeffs=fourier,
        phase0=phase0,
    )
    m = int(r.keyed("m"))
    eps = float(r.keyed("eps"))
    eta = float(r.keyed("eta"))
    converged = bool(int(r.keyed("converged")))
    sweeps = int(r.keyed("sweeps"))
    grid = build_grid(spec)
    n = int(r.keyed("nodes"))
    if n != grid.n_nodes:
        raise ConfigError(
            f"snapshot has {n} nodes but the rebuilt grid has {grid.n_nodes}"
        )
    u = np.empty(n, dtype=complex)
    psi = np.empty(n)
    for i in range(n):
        x, y, re, im, ps = (float(t) for t in r.next().split())
        if x != grid.xy[i, 0] or y != grid.xy[i, 1]:
            raise ConfigError(f"node {i} coordinates do not match the grid")
        u[i] = complex(re, im)
        psi[i] = ps
    labels = np.zeros(grid.edges.shape[0], dtype=int)
    keys = grid.edges[:, 0] * np.int64(grid.n_nodes) + grid.edges[:, 1]
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    n_lab = int(r.keyed("labeled_edges"))
    for _ in range(n_lab):
        i, j, k = (int(t) for t in r.next().split())
        key = i * np.int64(grid.n_nodes) + j
        pos = int(np.searchsorted(skeys, key))
        if pos >= skeys.size or skeys[pos] != key:
            raise ConfigError(f"({i}, {j}) is not an edge of the rebuilt grid")
        labels[order[pos]] = k
    sim = SimParams(params=ModulusParams(m), eps=eps, eta=eta)
    state = FieldState(u=u, labels=labels, psi=psi,
                       converged=converged, sweeps=sweeps)
    return grid, sim, state


# --------------------------------------------------------------------------
# energy traces
# --------------------------------------------------------------------------


def write_trace(path, history) -> None:
    """Write a per-sweep energy breakdown (S, 5) array as CSV."""
    hist = np.atleast_2d(np.asarray(history, dtype=float))
    if hist.size and hist.shape[1] != 5:
        raise ConfigError(f"history must have 5 columns, got {hist.shape[1]}")
    lines = [_TRACE_HEADER]
    for s in range(hist.shape[0]):
        row = ",".join(_fmt(v) for v in hist[s])
        lines.append(f"{s + 1},{row}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@_reading
def read_trace(path) -> np.ndarray:
    """Read a trace CSV back into an (S, 5) array (sweep column dropped)."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _TRACE_HEADER:
        raise ConfigError(f"{path}: expected header {_TRACE_HEADER!r}")
    out = np.empty((len(lines) - 1, 5))
    for s, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != 6 or int(cells[0]) != s + 1:
            raise ConfigError(f"{path}: malformed row {line!r}")
        out[s] = [float(c) for c in cells[1:]]
    return out


# --------------------------------------------------------------------------
# forests
# --------------------------------------------------------------------------


def write_forest(path, forest: SteinerForest) -> None:
    lines = [_FOREST_MAGIC]
    lines.append(f"terminals {forest.terminals.shape[0]}")
    for x, y in np.atleast_2d(forest.terminals):
        lines.append(f"{_fmt(x)} {_fmt(y)}")
    ns = 0 if forest.steiner_points.size == 0 else forest.steiner_points.shape[0]
    lines.append(f"steiner_points {ns}")
    for x, y in np.atleast_2d(forest.steiner_points)[:ns]:
        lines.append(f"{_fmt(x)} {_fmt(y)}")
    ne = 0 if forest.edges.size == 0 else forest.edges.shape[0]
    lines.append(f"edges {ne}")
    for a, b in np.atleast_2d(forest.edges)[:ne]:
        lines.append(f"{int(a)} {int(b)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@_reading
def read_forest(path) -> SteinerForest:
    """Read a forest; length and components are recomputed from the data."""
    r = _LineReader(path, _FOREST_MAGIC)
    nt = int(r.keyed("terminals"))
    terms = np.array([[float(t) for t in r.next().split()] for _ in range(nt)],
                     dtype=float).reshape(nt, 2)
    ns = int(r.keyed("steiner_points"))
    steiner = np.array([[float(t) for t in r.next().split()] for _ in range(ns)],
                       dtype=float).reshape(ns, 2)
    ne = int(r.keyed("edges"))
    edges = np.array([[int(t) for t in r.next().split()] for _ in range(ne)],
                     dtype=int).reshape(ne, 2)
    n_all = nt + ns
    if ne and (edges.min() < 0 or edges.max() >= n_all):
        raise ConfigError("edge index out of range")
    pts = np.vstack([terms, steiner]) if ns else terms
    length = 0.0
    if ne:
        seg = pts[edges]
        length = float(np.sum(np.linalg.norm(seg[:, 0] - seg[:, 1], axis=1)))
    parent = list(range(n_all))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        parent[find(int(a))] = find(int(b))
    comp_map = {}
    for t in range(nt):
        comp_map.setdefault(find(t), []).append(t)
    components = tuple(
        tuple(v) for _, v in sorted(comp_map.items(), key=lambda kv: kv[1][0])
    )
    return SteinerForest(terminals=terms, steiner_points=steiner, edges=edges,
                         total_length=length, components=components)
