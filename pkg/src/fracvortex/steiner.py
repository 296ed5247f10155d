"""Exact small-instance Steiner networks and mod-m connection lengths.

``steiner_tree`` enumerates every full Steiner topology for up to six
terminals (nine with ``large=True``), optimizes junction coordinates by
iteratively reweighted least squares with a Newton-quality polish, and
returns the global minimum.  ``lambda_mu`` minimizes total length over all
partitions of the points into blocks of size divisible by m, one tree per
block.  ``construct_competitor_field`` realizes a forest as a lattice field
whose m-th power matches the canonical vortex map, with the forest encoded
in edge labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np

from .errors import (
    ConfigError,
    InstanceTooLarge,
    ResolutionError,
    TooManyTerminals,
)
from .quotient import ModulusParams, lift_mth_root, nearest_group_elements, project_p

_COLLAPSE_TOL = 1e-8


# --------------------------------------------------------------------------
# forests
# --------------------------------------------------------------------------


@dataclass
class SteinerForest:
    """Straight-segment network: terminals, junctions, and index edges.

    Edge indices address the stacked array [terminals; steiner_points].
    ``components`` lists the terminal indices of each connected component.
    """

    terminals: np.ndarray
    steiner_points: np.ndarray
    edges: np.ndarray
    total_length: float
    components: tuple

    @property
    def n_terminals(self) -> int:
        return self.terminals.shape[0]

    def all_points(self) -> np.ndarray:
        if self.steiner_points.size == 0:
            return self.terminals.copy()
        return np.vstack([self.terminals, self.steiner_points])

    def edge_segments(self) -> np.ndarray:
        """(E, 2, 2) array of segment endpoint coordinates."""
        pts = self.all_points()
        if self.edges.size == 0:
            return np.zeros((0, 2, 2))
        return pts[self.edges]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_terminals + self.steiner_points.shape[0], dtype=int)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def _segment_length_sum(points, edges) -> float:
    if len(edges) == 0:
        return 0.0
    seg = points[np.asarray(edges)]
    return float(np.sum(np.linalg.norm(seg[:, 0] - seg[:, 1], axis=1)))


def _finalize_forest(terminals, steiner, edges) -> SteinerForest:
    """Collapse zero-length edges, drop isolated junctions, find components.

    Steiner points that merged into terminals (or each other) during
    optimization are removed; a merged terminal absorbs the junction.
    """
    terminals = np.atleast_2d(np.asarray(terminals, dtype=float))
    steiner = (np.asarray(steiner, dtype=float).reshape(-1, 2)
               if np.size(steiner) else np.zeros((0, 2)))
    nt = terminals.shape[0]
    pts = np.vstack([terminals, steiner]) if steiner.size else terminals.copy()
    edges = [tuple(e) for e in edges]

    uf = _UnionFind(pts.shape[0])
    for a, b in edges:
        if np.linalg.norm(pts[a] - pts[b]) < _COLLAPSE_TOL:
            uf.union(a, b)
    # representative: smallest index in the merge class, so terminals win
    kept_edges = set()
    for a, b in edges:
        ra, rb = uf.find(a), uf.find(b)
        if ra == rb:
            continue
        kept_edges.add((min(ra, rb), max(ra, rb)))

    used = sorted({i for e in kept_edges for i in e} | set(range(nt)))
    remap = {old: new for new, old in enumerate(used)}
    new_pts = pts[used]
    new_edges = np.array(sorted((remap[a], remap[b]) for a, b in kept_edges),
                         dtype=int).reshape(-1, 2)
    n_terms = nt  # terminals keep their indices 0..nt-1 (smallest reps)
    new_steiner = new_pts[n_terms:]

    uf2 = _UnionFind(new_pts.shape[0])
    for a, b in new_edges:
        uf2.union(a, b)
    comp_map = {}
    for t in range(n_terms):
        comp_map.setdefault(uf2.find(t), []).append(t)
    components = tuple(tuple(v) for _, v in sorted(comp_map.items()))

    return SteinerForest(
        terminals=new_pts[:n_terms],
        steiner_points=new_steiner,
        edges=new_edges,
        total_length=_segment_length_sum(new_pts, new_edges),
        components=components,
    )


# --------------------------------------------------------------------------
# full topology enumeration and batched optimization
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _full_topologies(n: int) -> np.ndarray:
    """All full Steiner topologies for n terminals as an (T, 2n-3, 2) array.

    Terminals are 0..n-1, junctions n..2n-4.  Built by the classic edge
    split: terminal k+1 attaches to a new junction inserted on each existing
    edge, giving (2n-5)!! topologies.
    """
    if n < 3:
        raise ValueError("full topologies need n >= 3")
    topo = np.array([[[0, n], [1, n], [2, n]]], dtype=np.int32)
    for t in range(3, n):
        s_new = n + t - 2
        t_old, e_old = topo.shape[0], topo.shape[1]
        pieces = []
        for j in range(e_old):
            keep = topo[:, [k for k in range(e_old) if k != j]]
            a = topo[:, j, 0][:, None, None]
            b = topo[:, j, 1][:, None, None]
            sn = np.full((t_old, 1, 1), s_new, dtype=np.int32)
            tn = np.full((t_old, 1, 1), t, dtype=np.int32)
            add = np.concatenate(
                [np.concatenate([a, sn], 2), np.concatenate([b, sn], 2),
                 np.concatenate([tn, sn], 2)], axis=1
            )
            pieces.append(np.concatenate([keep, add], axis=1))
        topo = np.concatenate(pieces, axis=0)
    return topo


def _irls_lengths(term_batch: np.ndarray, topos: np.ndarray,
                  stages=((1e-3, 8, 1.25), (1e-7, 12, 1.02), (1e-13, 25, None))):
    """Optimize junction positions for every (instance, topology) pair.

    term_batch is (G, n, 2).  Each sweep solves the weighted-Laplacian
    fixed point exactly (batched s-by-s solves) with the length floor
    delta annealed over the stages.  For a single instance the topology
    set is thinned between stages: iterate lengths only overestimate each
    topology's own optimum, so candidates above the incumbent times the
    stage margin cannot win (at least 500 are kept regardless).

    Returns (junc (G, T', s, 2), lengths (G, T'), topo_idx (T',)) where
    topo_idx maps surviving columns back into the input topology array.
    """
    G, n, _ = term_batch.shape
    s = n - 2
    topo_idx = np.arange(topos.shape[0])

    centroid = term_batch.mean(axis=1)  # (G, 2)
    ang = 2 * np.pi * np.arange(s) / max(s, 1)
    jitter = 1e-3 * np.stack([np.cos(ang), np.sin(ang)], axis=1)  # (s, 2)
    junc = np.broadcast_to(
        centroid[:, None, None, :] + jitter[None, None, :, :],
        (G, topos.shape[0], s, 2),
    ).copy()

    lengths = None
    for delta, iters, margin in stages:
        T, E, _ = topos.shape
        ea = topos[:, :, 0].astype(np.int64)  # (T, E)
        eb = topos[:, :, 1].astype(np.int64)
        tt = np.broadcast_to(np.arange(T)[:, None], (T, E))
        t_all = np.arange(T)
        term_rep = np.broadcast_to(term_batch[:, None, :, :], (G, T, n, 2))
        a_is_term = (ea < n)[None, :, :, None]
        b_is_term = (eb < n)[None, :, :, None]
        pa_term = term_rep[:, tt, np.minimum(ea, n - 1)]  # junction slots unused
        pb_term = term_rep[:, tt, np.minimum(eb, n - 1)]
        ja_all = np.maximum(ea - n, 0)
        jb_all = np.maximum(eb - n, 0)

        def endpoints(junc):
            pa = np.where(a_is_term, pa_term, junc[:, tt, ja_all])
            pb = np.where(b_is_term, pb_term, junc[:, tt, jb_all])
            return pa, pb

        # loop-invariant scatter indices, one set per edge slot
        plan = []
        for e in range(E):
            a, b = ea[:, e], eb[:, e]
            a_j, b_j = a >= n, b >= n
            both = a_j & b_j
            plan.append((
                (t_all[a_j], (a - n)[a_j], a_j),
                (t_all[b_j], (b - n)[b_j], b_j),
                (t_all[both], (a - n)[both], (b - n)[both], both),
                (t_all[b_j & ~a_j], (b - n)[b_j & ~a_j], a[b_j & ~a_j], b_j & ~a_j),
                (t_all[a_j & ~b_j], (a - n)[a_j & ~b_j], b[a_j & ~b_j], a_j & ~b_j),
            ))

        for _ in range(iters):
            pa, pb = endpoints(junc)  # (G, T, E, 2)
            w = 1.0 / np.maximum(np.linalg.norm(pa - pb, axis=3), delta)
            L = np.zeros((G, T, s, s))
            rhs = np.zeros((G, T, s, 2))
            for e, (da, db, off, ra, rb) in enumerate(plan):
                we = w[:, :, e]  # (G, T)
                if da[0].size:
                    L[:, da[0], da[1], da[1]] += we[:, da[2]]
                if db[0].size:
                    L[:, db[0], db[1], db[1]] += we[:, db[2]]
                if off[0].size:
                    L[:, off[0], off[1], off[2]] -= we[:, off[3]]
                    L[:, off[0], off[2], off[1]] -= we[:, off[3]]
                if ra[0].size:
                    rhs[:, ra[0], ra[1]] += we[:, ra[3], None] * term_rep[:, ra[0], ra[2]]
                if rb[0].size:
                    rhs[:, rb[0], rb[1]] += we[:, rb[3], None] * term_rep[:, rb[0], rb[2]]
            junc = np.linalg.solve(L, rhs)

        pa, pb = endpoints(junc)
        lengths = np.linalg.norm(pa - pb, axis=3).sum(axis=2)  # (G, T)

        if margin is not None and G == 1 and T > 600:
            best = float(lengths[0].min())
            keep = np.flatnonzero(lengths[0] <= best * margin + 1e-12)
            if keep.size < 500:
                keep = np.sort(np.argpartition(lengths[0], 500)[:500])
            topos = topos[keep]
            junc = np.ascontiguousarray(junc[:, keep])
            topo_idx = topo_idx[keep]

    return junc, lengths, topo_idx


def _polish_topology(terminals: np.ndarray, topo: np.ndarray, junc0: np.ndarray):
    """High-accuracy refinement of one topology's junction coordinates.

    Quasi-Newton plus exact-Hessian Newton steps on the smooth part; when an
    edge collapses (degenerate optimum), the edge is contracted — the
    junction snaps exactly onto its merge target — and the reduced smooth
    problem is re-polished.  The returned junction array therefore carries
    exact coincidences, which the forest constructor collapses losslessly.
    """
    from scipy.optimize import minimize

    n = terminals.shape[0]
    s = n - 2

    def find(parent, i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def positions(parent, junc):
        pts = np.empty((n + s, 2))
        pts[:n] = terminals
        for j in range(n, n + s):
            r = find(parent, j)
            pts[j] = terminals[r] if r < n else junc[r - n]
        return pts

    def polish_once(parent, junc):
        """L-BFGS plus exact-Hessian Newton on the merge-reduced problem."""
        active = [j for j in range(n, n + s) if find(parent, j) == j]
        eff = np.array([(find(parent, int(a)), find(parent, int(b)))
                        for a, b in topo])
        eff = eff[eff[:, 0] != eff[:, 1]]
        if not active or eff.size == 0:
            pts = positions(parent, junc)
            seg = pts[np.asarray(topo)]
            return junc, float(np.sum(np.linalg.norm(seg[:, 0] - seg[:, 1],
                                                     axis=1)))
        ea, eb = eff[:, 0], eff[:, 1]
        slot = np.full(n + s, -1)
        for k, j in enumerate(active):
            slot[j] = k
        na = len(active)

        def fg(xflat):
            x = xflat.reshape(na, 2)
            pts = np.empty((n + s, 2))
            pts[:n] = terminals
            for j in range(n, n + s):
                r = find(parent, j)
                pts[j] = terminals[r] if r < n else x[slot[r]]
            d = pts[ea] - pts[eb]
            le = np.sqrt(np.sum(d * d, axis=1) + 1e-300)
            unit = d / le[:, None]
            grad = np.zeros((n + s, 2))
            np.add.at(grad, ea, unit)
            np.add.at(grad, eb, -unit)
            return float(np.sum(le)), grad[active].ravel()

        x0 = np.array([junc[j - n] for j in active]).ravel()
        res = minimize(fg, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-12})
        x, fx = res.x, float(res.fun)

        # Newton with the exact Hessian (projector (I - uu^T)/|d| per edge)
        # reaches machine precision when no edge is nearly collapsed
        for _ in range(6):
            xv = x.reshape(na, 2)
            pts = np.empty((n + s, 2))
            pts[:n] = terminals
            for j in range(n, n + s):
                r = find(parent, j)
                pts[j] = terminals[r] if r < n else xv[slot[r]]
            d = pts[ea] - pts[eb]
            le = np.linalg.norm(d, axis=1)
            if le.min() < 1e-9:
                break
            unit = d / le[:, None]
            grad = np.zeros((n + s, 2))
            np.add.at(grad, ea, unit)
            np.add.at(grad, eb, -unit)
            g = grad[active].ravel()
            H = np.zeros((2 * na, 2 * na))
            for e in range(ea.size):
                P = (np.eye(2) - np.outer(unit[e], unit[e])) / le[e]
                for i, sign_i in ((ea[e], 1.0), (eb[e], -1.0)):
                    si = slot[i]
                    if si < 0:
                        continue
                    for j, sign_j in ((ea[e], 1.0), (eb[e], -1.0)):
                        sj = slot[j]
                        if sj < 0:
                            continue
                        H[2 * si:2 * si + 2, 2 * sj:2 * sj + 2] += (
                            sign_i * sign_j * P
                        )
            H[np.diag_indices_from(H)] += 1e-13 * max(np.trace(H), 1.0)
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                break
            f_new, _ = fg(x + step)
            if not np.isfinite(f_new) or f_new > fx + 1e-15:
                break
            x, fx = x + step, f_new
            if np.linalg.norm(step) < 1e-14:
                break

        out = junc.copy()
        for j in active:
            out[j - n] = x.reshape(na, 2)[slot[j]]
        return out, fx

    parent = list(range(n + s))
    junc, fx = polish_once(parent, junc0.copy())

    # Degenerate optima leave junctions a hair's breadth from their merge
    # targets, where the length is nonsmooth and both Newton and quasi-Newton
    # stall.  Contract any suspiciously short edge and keep the contraction
    # iff the reduced network is no longer than what we already have.
    for _ in range(s):
        pts = positions(parent, junc)
        eff = np.array([(find(parent, int(a)), find(parent, int(b)))
                        for a, b in topo])
        eff = eff[eff[:, 0] != eff[:, 1]]
        if eff.size == 0:
            break
        d = np.linalg.norm(pts[eff[:, 0]] - pts[eff[:, 1]], axis=1)
        e = int(np.argmin(d))
        a, b = int(eff[e, 0]), int(eff[e, 1])
        if d[e] >= 1e-5 or (a < n and b < n):
            break
        trial_parent = parent.copy()
        trial_parent[max(a, b)] = min(a, b)
        trial_junc, trial_fx = polish_once(trial_parent, junc.copy())
        if trial_fx <= fx + 1e-14:
            parent, junc, fx = trial_parent, trial_junc, trial_fx
        else:
            break

    pts = positions(parent, junc)
    seg = pts[np.asarray(topo)]
    total = float(np.sum(np.linalg.norm(seg[:, 0] - seg[:, 1], axis=1)))
    return pts[n:], total


def _steiner_tree_exact(points: np.ndarray) -> SteinerForest:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if n == 1:
        return _finalize_forest(pts, np.zeros((0, 2)), [])
    if n == 2:
        return _finalize_forest(pts, np.zeros((0, 2)), [(0, 1)])
    topos = _full_topologies(n)
    junc, lengths, t_idx = _irls_lengths(pts[None, :, :], topos)
    surv = topos[t_idx]
    lengths = lengths[0]
    junc = junc[0]
    order = np.argsort(lengths)
    budget = min(len(order), 48)
    cutoff = lengths[order[0]] + 1e-3 * max(lengths[order[0]], 1.0)
    best_len, best_junc, best_topo = np.inf, None, None
    for idx in order[:budget]:
        if lengths[idx] > cutoff and best_junc is not None:
            break
        jj, ll = _polish_topology(pts, surv[idx], junc[idx])
        if ll < best_len:
            best_len, best_junc, best_topo = ll, jj, surv[idx]
    return _finalize_forest(pts, best_junc, [tuple(e) for e in best_topo])


def steiner_tree(points, large: bool = False) -> SteinerForest:
    """Exact Euclidean Steiner minimal tree on up to 6 terminals.

    Enumerates all full topologies, optimizes junctions, and polishes the
    front-runners; degenerate optima appear as collapsed junctions and are
    merged in the returned forest.  ``large=True`` raises the terminal cap
    to 9 (topology count (2n-5)!! = 135135; expect minutes of runtime).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    cap = 9 if large else 6
    if n > cap:
        raise TooManyTerminals(f"{n} terminals exceeds the exact cap {cap}")
    if n == 0:
        raise ConfigError("points: need at least one terminal")
    d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2) + np.eye(n)
    if n > 1 and d.min() < 1e-12:
        raise ConfigError("points: terminals must be distinct")
    return _steiner_tree_exact(pts)


def _steiner_batch(term_batch: np.ndarray):
    """Minimal tree lengths for G same-size terminal sets, batched.

    Returns (lengths (G,), forests list).  Used by lambda_mu so that all
    blocks of one size share a single topology sweep.
    """
    G, n, _ = term_batch.shape
    if n == 1:
        return np.zeros(G), [
            _finalize_forest(term_batch[g], np.zeros((0, 2)), []) for g in range(G)
        ]
    if n == 2:
        lens = np.linalg.norm(term_batch[:, 0] - term_batch[:, 1], axis=1)
        return lens, [
            _finalize_forest(term_batch[g], np.zeros((0, 2)), [(0, 1)])
            for g in range(G)
        ]
    topos = _full_topologies(n)
    junc, lengths, t_idx = _irls_lengths(term_batch, topos)
    surv = topos[t_idx]
    out_len = np.empty(G)
    forests = []
    for g in range(G):
        order = np.argsort(lengths[g])
        best_len, best_junc, best_topo = np.inf, None, None
        cutoff = lengths[g, order[0]] + 1e-3 * max(lengths[g, order[0]], 1.0)
        for idx in order[: min(len(order), 48)]:
            if lengths[g, idx] > cutoff and best_junc is not None:
                break
            jj, ll = _polish_topology(term_batch[g], surv[idx], junc[g, idx])
            if ll < best_len:
                best_len, best_junc, best_topo = ll, jj, surv[idx]
        out_len[g] = best_len
        forests.append(
            _finalize_forest(term_batch[g], best_junc,
                             [tuple(e) for e in best_topo])
        )
    return out_len, forests


# --------------------------------------------------------------------------
# partitions and lambda
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _partitions_cached(md: int, m: int):
    allowed = tuple(range(m, md + 1, m))

    def rec(remaining):
        if not remaining:
            return [()]
        first = remaining[0]
        rest = remaining[1:]
        out = []
        for size in allowed:
            if size > len(remaining):
                break
            for others in combinations(rest, size - 1):
                block = (first,) + others
                left = tuple(i for i in rest if i not in others)
                for tail in rec(left):
                    out.append((block,) + tail)
        return out

    return tuple(rec(tuple(range(md))))


def enumerate_partitions(md: int, m: int):
    """All partitions of {0..md-1} into blocks of size m, 2m, ...

    Deterministic order: blocks anchored at their smallest member, sizes
    ascending, members lexicographic.  Raises InstanceTooLarge above md=12.
    """
    if md > 12:
        raise InstanceTooLarge(f"md={md} exceeds the partition enumeration cap 12")
    if md <= 0 or m < 2:
        raise ConfigError("need md >= 1 and m >= 2")
    if md % m != 0:
        raise ConfigError(f"md={md} is not a multiple of m={m}")
    return _partitions_cached(md, m)


@dataclass
class LambdaResult:
    """Minimal admissible connection: value, forest, chosen partition.

    Unpacks as ``value, forest = lambda_mu(...)``; the partition and any
    omitted block sizes ride along as attributes.
    """

    total_length: float
    forest: SteinerForest
    partition: tuple
    omitted_block_sizes: tuple = ()

    def __iter__(self):
        return iter((self.total_length, self.forest))


def lambda_mu(points, params: ModulusParams, large: bool = False) -> LambdaResult:
    """Minimum total length of trees covering the points in mod-m blocks.

    Minimizes over every partition of the points into blocks whose sizes
    are multiples of m, with an exact Steiner tree per block.  Blocks larger
    than the exact-solver cap (6, or 9 with ``large=True``) are omitted from
    the search and reported in ``omitted_block_sizes``; for m=2 the pairing
    theorem makes the result exact anyway, otherwise the value is the
    minimum over the evaluated family.  Raises InstanceTooLarge when no
    partition is evaluable.
    """
    if hasattr(points, "as_xy"):
        pts = points.as_xy()
    else:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
    md = pts.shape[0]
    m = params.m
    partitions = enumerate_partitions(md, m)
    if m == 2:
        # Any tree on four or more terminals has a cherry (two leaves with a
        # common junction) whose stem edge splits the terminals into two even
        # parts, so the edge is removable and the tree is not minimal.  The
        # minimum is therefore attained by a perfect pairing; larger blocks
        # are skipped exactly, not approximately.
        usable = [p for p in partitions if max(len(b) for b in p) == 2]
        omitted = ()
    else:
        cap = 9 if large else 6
        usable = [p for p in partitions if max(len(b) for b in p) <= cap]
        omitted = tuple(
            sorted({len(b) for p in partitions for b in p if len(b) > cap})
        )
        if not usable:
            raise InstanceTooLarge(
                f"every mod-{m} partition of {md} points needs a block above "
                f"the cap {cap}; rerun with large=True" if not large else
                f"md={md} needs blocks above the supported exact size 9"
            )

    needed = sorted({b for p in usable for b in p}, key=lambda b: (len(b), b))
    by_size = {}
    for b in needed:
        by_size.setdefault(len(b), []).append(b)
    block_value = {}
    block_tree = {}
    for size, blocks in sorted(by_size.items()):
        batch = np.stack([pts[list(b)] for b in blocks])
        lens, forests = _steiner_batch(batch)
        for b, ln, fo in zip(blocks, lens, forests):
            block_value[b] = float(ln)
            block_tree[b] = fo

    best_val, best_part = np.inf, None
    for p in usable:
        val = sum(block_value[b] for b in p)
        if val < best_val - 1e-15:
            best_val, best_part = val, p

    steiner_all = []
    edges_all = []
    offset = md
    for b in best_part:
        tree = block_tree[b]
        ns = tree.steiner_points.shape[0]
        idx_map = {}
        for local, original in enumerate(b):
            idx_map[local] = original
        for local in range(len(b), len(b) + ns):
            idx_map[local] = offset + (local - len(b))
        for a, c in tree.edges:
            edges_all.append((idx_map[int(a)], idx_map[int(c)]))
        if ns:
            steiner_all.append(tree.steiner_points)
        offset += ns
    steiner = np.vstack(steiner_all) if steiner_all else np.zeros((0, 2))
    forest = _finalize_forest(pts, steiner, edges_all)
    return LambdaResult(
        total_length=float(best_val),
        forest=forest,
        partition=best_part,
        omitted_block_sizes=omitted,
    )


def minimal_connection(p_points, q_points):
    """Exact bipartite minimal connection: min over pairings sum |p - q|.

    Brute force over permutations; d <= 8.  Returns (value, matching) with
    matching[k] the q-index paired to p_k.
    """
    P = np.atleast_2d(np.asarray(p_points, dtype=float))
    Q = np.atleast_2d(np.asarray(q_points, dtype=float))
    if P.shape != Q.shape:
        raise ConfigError("minimal_connection needs equally many points")
    d = P.shape[0]
    if d > 8:
        raise InstanceTooLarge(f"d={d} exceeds the brute-force cap 8")
    dist = np.linalg.norm(P[:, None] - Q[None, :], axis=2)
    best, best_perm = np.inf, None
    for sigma in permutations(range(d)):
        val = dist[np.arange(d), sigma].sum()
        if val < best - 1e-15:
            best, best_perm = val, sigma
    return float(best), tuple(best_perm)


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass
class ForestReport:
    """Per-check booleans from validate_forest; ``ok`` is the conjunction."""

    coverage: bool
    counts_mod_m: bool
    degrees: bool
    angles: bool
    hull: bool
    non_removable: bool
    non_crossing: bool
    failures: tuple = ()

    @property
    def ok(self) -> bool:
        return all((self.coverage, self.counts_mod_m, self.degrees,
                    self.angles, self.hull, self.non_removable,
                    self.non_crossing))


def _convex_hull_contains(hull_pts: np.ndarray, query: np.ndarray,
                          tol: float = 1e-9) -> bool:
    """True if every query point lies in the convex hull (degenerate-safe)."""
    if query.size == 0:
        return True
    hp = np.unique(np.round(hull_pts / tol) * tol, axis=0)
    if hp.shape[0] == 1:
        return bool(np.all(np.linalg.norm(query - hp[0], axis=1) <= tol))
    # monotone chain
    pts = hull_pts[np.lexsort((hull_pts[:, 1], hull_pts[:, 0]))]

    def half(iterable):
        out = []
        for p in iterable:
            while len(out) >= 2:
                u = out[-1] - out[-2]
                w = p - out[-2]
                if u[0] * w[1] - u[1] * w[0] > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if hull.shape[0] < 3:
        # colinear terminals: distance to the spanning segment
        a, b = pts[0], pts[-1]
        ab = b - a
        L2 = float(ab @ ab)
        t = np.clip(((query - a) @ ab) / max(L2, 1e-300), 0.0, 1.0)
        proj = a + t[:, None] * ab
        return bool(np.all(np.linalg.norm(query - proj, axis=1) <= tol))
    nxt = np.roll(hull, -1, axis=0)
    edge = nxt - hull
    rel = query[:, None, :] - hull[None, :, :]
    cross = edge[None, :, 0] * rel[:, :, 1] - edge[None, :, 1] * rel[:, :, 0]
    return bool(np.all(cross >= -tol))


def _proper_crossing(p1, p2, q1, q2, tol=1e-12) -> bool:
    """Strict interior intersection of segments p1p2 and q1q2."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < -tol) and (d3 * d4 < -tol)


def validate_forest(forest: SteinerForest, mu_points, params: ModulusParams,
                    angle_tol_deg: float = 0.5) -> ForestReport:
    """Structure checks for an admissible minimal network.

    Checks terminal coverage of the vortex points, per-component counts in
    m*N, junction degrees (terminals >= 1, junctions exactly 3 with pairwise
    120-degree angles), convex-hull containment per component, edge
    non-crossing, and non-removability: deleting any single edge must leave
    some side with a terminal count not divisible by m (else the network
    could be shortened, so it was not minimal).
    """
    if hasattr(mu_points, "as_xy"):
        mu = mu_points.as_xy()
    else:
        mu = np.atleast_2d(np.asarray(mu_points, dtype=float))
    m = params.m
    pts = forest.all_points()
    nt = forest.n_terminals
    failures = []

    if mu.shape[0] == 0 or forest.terminals.shape[0] == 0:
        cov = mu.shape[0] == 0 and forest.terminals.shape[0] == 0
    else:
        d = np.linalg.norm(mu[:, None] - forest.terminals[None, :], axis=2)
        cov = bool(np.all(d.min(axis=1) < 1e-9) and np.all(d.min(axis=0) < 1e-9))
    if not cov:
        failures.append("coverage: vortex points and terminals differ")

    counts = all(len(c) > 0 and len(c) % m == 0 for c in forest.components)
    covered_terms = {t for c in forest.components for t in c}
    if covered_terms != set(range(nt)):
        counts = False
    if not counts:
        failures.append("counts: some component terminal count not in m*N")

    deg = forest.degrees()
    degrees_ok = bool(np.all(deg[:nt] >= 1)) and bool(np.all(deg[nt:] == 3))
    if not degrees_ok:
        failures.append("degrees: terminal degree 0 or junction degree != 3")

    angles_ok = True
    for j in range(nt, pts.shape[0]):
        nbrs = [b if a == j else a for a, b in forest.edges if j in (a, b)]
        if len(nbrs) != 3:
            angles_ok = False
            continue
        vecs = pts[nbrs] - pts[j]
        norms = np.linalg.norm(vecs, axis=1)
        if np.any(norms < 1e-12):
            angles_ok = False
            continue
        vecs = vecs / norms[:, None]
        for i, k in ((0, 1), (0, 2), (1, 2)):
            ang = np.degrees(np.arccos(np.clip(vecs[i] @ vecs[k], -1, 1)))
            if abs(ang - 120.0) > angle_tol_deg:
                angles_ok = False
    if not angles_ok:
        failures.append("angles: junction angle off 120 degrees")

    hull_ok = True
    for comp in forest.components:
        comp_set = set(comp)
        comp_steiner = set()
        # junctions reachable within the component: walk its edges
        uf = _UnionFind(pts.shape[0])
        for a, b in forest.edges:
            uf.union(a, b)
        if comp:
            root = uf.find(comp[0])
            comp_steiner = {i for i in range(nt, pts.shape[0]) if uf.find(i) == root}
        if comp_steiner:
            if not _convex_hull_contains(pts[sorted(comp_set)],
                                         pts[sorted(comp_steiner)]):
                hull_ok = False
    if not hull_ok:
        failures.append("hull: junction outside its component's terminal hull")

    removable = False
    for skip in range(forest.edges.shape[0]):
        uf = _UnionFind(pts.shape[0])
        for i, (a, b) in enumerate(forest.edges):
            if i != skip:
                uf.union(a, b)
        a, b = forest.edges[skip]
        if uf.find(a) == uf.find(b):
            continue  # edge in a cycle (should not happen in a forest)
        side_a = sum(1 for t in range(nt) if uf.find(t) == uf.find(a))
        side_b = sum(1 for t in range(nt) if uf.find(t) == uf.find(b))
        if side_a % m == 0 and side_b % m == 0:
            removable = True
    if removable:
        failures.append("removable: an edge separates two mod-m-closed parts")

    crossing = False
    seg = forest.edge_segments()
    E = seg.shape[0]
    for i in range(E):
        for j in range(i + 1, E):
            if len(set(map(int, forest.edges[i])) & set(map(int, forest.edges[j]))):
                continue
            if _proper_crossing(seg[i, 0], seg[i, 1], seg[j, 0], seg[j, 1]):
                crossing = True
    if crossing:
        failures.append("crossing: two edges intersect away from endpoints")

    return ForestReport(
        coverage=cov, counts_mod_m=counts, degrees=degrees_ok,
        angles=angles_ok, hull=hull_ok, non_removable=not removable,
        non_crossing=not crossing, failures=tuple(failures),
    )


# --------------------------------------------------------------------------
# competitor field
# --------------------------------------------------------------------------


def _segments_cross_edges(grid, segments: np.ndarray) -> np.ndarray:
    """Boolean mask over grid edges: does the edge cross any segment?

    Sign ties (a node or segment endpoint exactly on the other line) count
    as the positive side, as if every line were shifted infinitesimally.
    Without this a segment passing exactly through a lattice node would
    leave a gap in the cut that reconnects the two sides.
    """
    if segments.size == 0:
        return np.zeros(grid.edges.shape[0], dtype=bool)
    p1 = grid.xy[grid.edges[:, 0]]
    p2 = grid.xy[grid.edges[:, 1]]
    out = np.zeros(grid.edges.shape[0], dtype=bool)
    for q1, q2 in segments:
        d1 = ((q2[0] - q1[0]) * (p1[:, 1] - q1[1])
              - (q2[1] - q1[1]) * (p1[:, 0] - q1[0]))
        d2 = ((q2[0] - q1[0]) * (p2[:, 1] - q1[1])
              - (q2[1] - q1[1]) * (p2[:, 0] - q1[0]))
        d3 = ((p2[:, 0] - p1[:, 0]) * (q1[1] - p1[:, 1])
              - (p2[:, 1] - p1[:, 1]) * (q1[0] - p1[:, 0]))
        d4 = ((p2[:, 0] - p1[:, 0]) * (q2[1] - p1[:, 1])
              - (p2[:, 1] - p1[:, 1]) * (q2[0] - p1[:, 0]))
        out |= ((d1 >= 0.0) != (d2 >= 0.0)) & ((d3 >= 0.0) != (d4 >= 0.0))
    return out


def construct_competitor_field(forest: SteinerForest, config, domain):
    """Lattice field u with p(u) equal to the canonical vortex map, jumping
    across the forest only.

    ``domain`` is either a prebuilt Grid or a DomainSpec (a grid is then
    built at the spec's spacing).  Cuts the lattice along the forest
    segments, lifts an m-th root of the canonical map on each piece, and
    labels the cut edges with the group element reconnecting the pieces.
    Raises NonzeroWinding (from the lift) when the forest is not admissible
    for the vortex configuration, and ResolutionError when the lattice
    cannot resolve the forest's shortest segment.
    """
    from .renorm import canonical_map

    if hasattr(domain, "edges"):
        grid = domain
    else:
        from .domain import build_grid

        grid = build_grid(domain)

    params = config.params
    zn = grid.xy[:, 0] + 1j * grid.xy[:, 1]
    for x in np.asarray(config.points, dtype=complex):
        if np.min(np.abs(zn - x)) < 1e-6 * grid.h:
            raise ResolutionError(
                "a vortex coincides with a lattice node, where the canonical "
                "map is singular; perturb the points or change h"
            )
    seg = forest.edge_segments()
    if seg.size:
        lens = np.linalg.norm(seg[:, 0] - seg[:, 1], axis=1)
        feature = lens[lens > _COLLAPSE_TOL].min() if np.any(lens > _COLLAPSE_TOL) else np.inf
        if grid.h >= 0.5 * feature:
            raise ResolutionError(
                f"h={grid.h} cannot resolve a forest segment of length {feature:.3g}"
            )

    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    cmap = canonical_map(config, grid)
    v = cmap.v_nodes()
    cut = _segments_cross_edges(grid, seg)
    kept = grid.edges[~cut]

    n = grid.n_nodes
    adj = coo_matrix((np.ones(kept.shape[0]), (kept[:, 0], kept[:, 1])),
                     shape=(n, n))
    n_comp, comp_label = connected_components(adj, directed=False)

    u = np.empty(n, dtype=complex)
    kept_labels = comp_label[kept[:, 0]]
    for c in range(n_comp):
        nodes = np.flatnonzero(comp_label == c)
        if nodes.size == 1:
            i = int(nodes[0])
            u[i] = abs(v[i]) * np.exp(1j * np.angle(v[i]) / params.m)
            continue
        sub_edges = kept[kept_labels == c]
        remap = np.searchsorted(nodes, sub_edges)
        u[nodes] = lift_mth_root(v[nodes], remap, params)

    # align each ring-touching piece with the boundary map g
    ring_g_full = grid.ring_values_full(grid.ring_g)
    aligned = np.zeros(n_comp, dtype=bool)
    for r in grid.ring_ids:
        c = comp_label[r]
        if aligned[c]:
            continue
        aligned[c] = True
        k = int(nearest_group_elements(ring_g_full[r], u[r], params))
        if k:
            u[comp_label == c] *= params.a**k

    labels = np.zeros(grid.edges.shape[0], dtype=int)
    e_cut = grid.edges[cut]
    labels[cut] = nearest_group_elements(u[e_cut[:, 0]], u[e_cut[:, 1]], params)
    # sanity: the projection is unchanged by the lift
    assert np.max(np.abs(project_p(u, params) - v)) < 1e-8
    return u, labels
