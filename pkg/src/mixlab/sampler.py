"""Digraph samplers: uniform stub matching (DCM) and injective out-maps (OCM)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import DegreeSequence, ModelKind, validate_degrees
from .errors import BadRange, BadValue
from .rng import RngStream


@dataclass(frozen=True, eq=False)
class Digraph:
    """A realized multigraph: ragged out-edge lists in flat CSR-like storage.

    ``heads[offsets[x]:offsets[x+1]]`` are the head vertices of x's out-edges,
    with multiplicity, in sampling order.  Self-loops and parallel edges are
    kept; the walk semantics need them.
    """

    seq: DegreeSequence
    heads: np.ndarray
    offsets: np.ndarray
    stream: RngStream

    @property
    def n(self) -> int:
        return self.seq.n

    def out_degree(self, x: int) -> int:
        return int(self.offsets[x + 1] - self.offsets[x])

    def out_edges(self, x: int) -> np.ndarray:
        return self.heads[self.offsets[x]:self.offsets[x + 1]]


def _finish(seq: DegreeSequence, heads: np.ndarray, stream: RngStream) -> Digraph:
    offsets = np.zeros(seq.n + 1, dtype=np.int64)
    np.cumsum(seq.out_degrees, out=offsets[1:])
    heads = heads.astype(np.int64)
    heads.setflags(write=False)
    offsets.setflags(write=False)
    return Digraph(seq=seq, heads=heads, offsets=offsets, stream=stream)


def sample_dcm(seq: DegreeSequence, stream: RngStream) -> Digraph:
    """Match the m tail stubs to a uniform permutation of the m head stubs."""
    if seq.model is not ModelKind.DCM:
        raise BadValue("sample_dcm needs a DCM degree sequence")
    gen = stream.generator()
    head_slots = np.repeat(np.arange(seq.n, dtype=np.int64), seq.in_degrees)
    heads = gen.permutation(head_slots)
    return _finish(seq, heads, stream)


def sample_ocm(seq: DegreeSequence, stream: RngStream) -> Digraph:
    """Each vertex independently picks d_x distinct targets uniformly."""
    if seq.model is not ModelKind.OCM:
        raise BadValue("sample_ocm needs an OCM degree sequence")
    gen = stream.generator()
    n = seq.n
    degs = seq.out_degrees
    dmax = int(degs.max())
    # Draw a candidate block per vertex and redraw rows with repeats; for
    # d << n almost every row is accepted on the first pass.
    draws = gen.integers(0, n, size=(n, dmax), dtype=np.int64)
    mask = np.arange(dmax)[None, :] < degs[:, None]
    draws[~mask] = -np.arange(1, dmax * n + 1).reshape(n, dmax)[~mask]  # unique fillers
    for _ in range(64):
        s = np.sort(draws, axis=1)
        bad = (s[:, 1:] == s[:, :-1]).any(axis=1)
        if not bad.any():
            break
        redraw = gen.integers(0, n, size=(int(bad.sum()), dmax), dtype=np.int64)
        sub = draws[bad]
        sub[mask[bad]] = redraw[mask[bad]]
        draws[bad] = sub
    else:
        # Astronomically unlikely for d <= n/2; fall back to per-vertex draws.
        for x in np.nonzero(bad)[0]:
            d = int(degs[x])
            picks = set()
            while len(picks) < d:
                picks.add(int(gen.integers(0, n)))
            draws[x, :d] = sorted(picks)
    heads = draws[mask]
    return _finish(seq, heads, stream)


def sample_digraph(seq: DegreeSequence, stream: RngStream) -> Digraph:
    if seq.model is ModelKind.DCM:
        return sample_dcm(seq, stream)
    return sample_ocm(seq, stream)


def is_simple(g: Digraph) -> bool:
    """True when the graph has no self-loops and no parallel edges."""
    tails = np.repeat(np.arange(g.n, dtype=np.int64), g.seq.out_degrees)
    if (g.heads == tails).any():
        return False
    order = np.lexsort((g.heads, tails))
    t, h = tails[order], g.heads[order]
    dup = (t[1:] == t[:-1]) & (h[1:] == h[:-1])
    return not bool(dup.any())


def sample_simple_dcm(seq: DegreeSequence, stream: RngStream,
                      max_tries: int = 1000) -> Digraph:
    """Rejection-sample a simple DCM realization.

    Provided for callers that need simple graphs; the estimators in this
    package are calibrated on the unconditioned model.
    """
    for k in range(max_tries):
        g = sample_dcm(seq, stream.offset(k))
        if is_simple(g):
            return g
    raise BadValue(f"no simple realization in {max_tries} tries")


def strongly_connected(g: Digraph) -> bool:
    tails = np.repeat(np.arange(g.n, dtype=np.int64), g.seq.out_degrees)
    adj = csr_matrix((np.ones(len(g.heads)), (tails, g.heads)), shape=(g.n, g.n))
    ncomp, _ = connected_components(adj, directed=True, connection="strong")
    return int(ncomp) == 1


def digraph_to_json(g: Digraph) -> str:
    doc = {
        "seed": {"root_seed": g.stream.root_seed,
                 "stream_index": g.stream.stream_index},
        "model": g.seq.model.value,
        "out_edges": [g.out_edges(x).tolist() for x in range(g.n)],
    }
    return json.dumps(doc)


def digraph_from_json(text: str) -> Digraph:
    doc = json.loads(text)
    model = ModelKind(doc["model"])
    out_edges = doc["out_edges"]
    out_degrees = [len(row) for row in out_edges]
    n = len(out_edges)
    heads = np.array([h for row in out_edges for h in row], dtype=np.int64)
    if heads.size and (heads.min() < 0 or heads.max() >= n):
        raise BadRange("edge head outside vertex range")
    if model is ModelKind.DCM:
        in_degrees = np.bincount(heads, minlength=n)
        seq = validate_degrees(model, out_degrees, in_degrees)
    else:
        seq = validate_degrees(model, out_degrees)
    stream = RngStream(doc["seed"]["root_seed"], doc["seed"]["stream_index"])
    return _finish(seq, heads, stream)
