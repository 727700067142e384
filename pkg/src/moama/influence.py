"""Inter- and intra-motif influence measurement.

The influence of a source node u on a target node v is the L2 distance
between v's encoder representation and the representation obtained when u's
layer-0 embedding is replaced by the zero vector, everything else unchanged.
Encoding always runs on clean (unmasked) attributes.

Motif-level influence averages the top-k most influential candidate nodes so
small motifs and large inter-motif pools compare on equal footing; pools
smaller than k fall back to all candidates (flagged), and nodes whose own
motif has no other member are excluded from aggregates but counted.

Aggregates:
  InfRatio  node-level and graph-level means of inter/intra influence ratios.
  MRR       motifs ranked per node by descending motif influence (ties break
            toward the lower motif index); reciprocal ranks of each node's
            own motif are averaged at node, graph, and motif-count level,
            with single-motif graphs excluded. The per-motif-count
            inter-motif transfer score is one minus the restricted MRR.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .gin import EncoderConfig, ParamStore, TensorGraph, encode, single
from .molgraph import MolGraph
from .motif import MotifDecomposition

INTER_MODES = ("top_k", "size_weighted")


def worker_count() -> int:
    """Worker cap from MOAMA_THREADS (default 1)."""
    raw = os.environ.get("MOAMA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _inference_store(store: ParamStore) -> ParamStore:
    frozen = ParamStore({n: ad.const(t.values) for n, t in store.params.items()})
    return frozen


def _encode_values(tg: TensorGraph, store: ParamStore, cfg: EncoderConfig,
                   zero_nodes=()) -> np.ndarray:
    return encode(tg, store, cfg, zero_nodes=zero_nodes).values


def influence_pair(g: MolGraph, store: ParamStore, cfg: EncoderConfig,
                   u: int, v: int) -> float:
    """s(u, v): representation shift at v when u's initial embedding is zero."""
    if u == v:
        raise ValueError("influence_pair requires u != v")
    tg = single(g)
    frozen = _inference_store(store)
    h = _encode_values(tg, frozen, cfg)
    h_wo = _encode_values(tg, frozen, cfg, zero_nodes=(u,))
    return float(np.linalg.norm(h[v] - h_wo[v]))


def influence_matrix(g: MolGraph, store: ParamStore, cfg: EncoderConfig) -> np.ndarray:
    """S[u, v] = s(u, v) for all ordered pairs; diagonal fixed at 0."""
    tg = single(g)
    frozen = _inference_store(store)
    h = _encode_values(tg, frozen, cfg)
    n = g.n_atoms
    s = np.zeros((n, n))
    for u in range(n):
        h_wo = _encode_values(tg, frozen, cfg, zero_nodes=(u,))
        for v in range(n):
            if v != u:
                s[u, v] = np.linalg.norm(h[v] - h_wo[v])
    return s


def _topk_mean(values: np.ndarray, top_k: int | None) -> tuple[float, bool]:
    """Mean of the top_k largest values; (value, truncated-pool flag)."""
    if top_k is None or len(values) <= top_k:
        return float(values.mean()), len(values) < (top_k or 0)
    part = np.sort(values)[::-1][:top_k]
    return float(part.mean()), False


def motif_influence(g: MolGraph, store: ParamStore, cfg: EncoderConfig,
                    v: int, motif_nodes, top_k: int = 3,
                    s_row: np.ndarray | None = None) -> float | None:
    """Mean influence on v from the top_k most influential motif members.

    Returns None (undefined) when the motif has no member other than v.
    ``s_row`` may carry precomputed s(., v) values to avoid re-encoding.
    """
    candidates = [u for u in motif_nodes if u != v]
    if not candidates:
        return None
    if s_row is None:
        vals = np.array([influence_pair(g, store, cfg, u, v) for u in candidates])
    else:
        vals = s_row[candidates]
    return _topk_mean(vals, top_k)[0]


@dataclass(frozen=True)
class NodeInfluence:
    graph_index: int
    node: int
    n_motifs: int
    intra: float | None
    inter: float | None
    rank: int | None
    truncated: bool


def intra_inter(g: MolGraph, dec: MotifDecomposition, store: ParamStore,
                cfg: EncoderConfig, v: int, top_k: int = 3,
                mode: str = "top_k",
                s_col: np.ndarray | None = None) -> tuple[float | None, float | None]:
    """(intra, inter) influence means for one node.

    ``top_k`` mode draws the same number of top candidates from the node's
    own motif and from the pooled outside nodes; ``size_weighted`` keeps the
    plain means over all candidates on both sides.
    """
    if mode not in INTER_MODES:
        raise ValueError(f"unknown inter mode {mode!r}")
    if s_col is None:
        s = influence_matrix(g, store, cfg)
        s_col = s[:, v]
    k = top_k if mode == "top_k" else None
    own = dec.motif_of[v]
    intra_nodes = [u for u in dec.motifs[own].node_ids if u != v]
    inter_nodes = [u for u in range(g.n_atoms) if dec.motif_of[u] != own]
    intra = _topk_mean(s_col[intra_nodes], k)[0] if intra_nodes else None
    inter = _topk_mean(s_col[inter_nodes], k)[0] if inter_nodes else None
    return intra, inter


def _node_rows_for_graph(args) -> list[NodeInfluence]:
    gi, g, dec, store, cfg, top_k, mode = args
    rows = []
    n_motifs = dec.n_motifs
    s = influence_matrix(g, store, cfg)
    k = top_k if mode == "top_k" else None
    for v in range(g.n_atoms):
        own = dec.motif_of[v]
        intra_nodes = [u for u in dec.motifs[own].node_ids if u != v]
        truncated = bool(intra_nodes) and len(intra_nodes) < top_k
        intra, inter = intra_inter(g, dec, store, cfg, v, top_k, mode, s_col=s[:, v])
        rank = None
        if n_motifs >= 2 and intra is not None:
            per_motif = []
            for mi, motif in enumerate(dec.motifs):
                cand = [u for u in motif.node_ids if u != v]
                val = _topk_mean(s[cand, v], top_k)[0] if cand else -np.inf
                per_motif.append((mi, val))
            order = sorted(per_motif, key=lambda t: (-t[1], t[0]))
            rank = next(i for i, (mi, _) in enumerate(order, start=1) if mi == own)
        rows.append(NodeInfluence(gi, v, n_motifs, intra, inter, rank, truncated))
    return rows


@dataclass(frozen=True)
class InfluenceReport:
    nodes: tuple[NodeInfluence, ...]
    top_k: int
    inter_mode: str
    inf_ratio_node: float
    inf_ratio_graph: float
    mrr_node: float
    mrr_graph: float
    mrr_motif: float
    mrr_inter: tuple[tuple[int, float, int], ...]  # (n_motifs, score, graph_count)
    excluded_nodes: int


def analyze_dataset(graphs, decomps, store: ParamStore, cfg: EncoderConfig,
                    top_k: int = 3, mode: str = "top_k") -> InfluenceReport:
    """Per-node influence rows plus dataset-level aggregates."""
    jobs = [(gi, g, dec, store, cfg, top_k, mode)
            for gi, (g, dec) in enumerate(zip(graphs, decomps))]
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_graph = list(pool.map(_node_rows_for_graph, jobs))
    else:
        per_graph = [_node_rows_for_graph(j) for j in jobs]
    rows = tuple(r for chunk in per_graph for r in chunk)

    ratios_by_graph: dict[int, list[float]] = {}
    excluded = 0
    for r in rows:
        if r.intra is None or r.inter is None or r.intra <= 0.0:
            excluded += 1
            continue
        ratios_by_graph.setdefault(r.graph_index, []).append(r.inter / r.intra)
    all_ratios = [x for v in ratios_by_graph.values() for x in v]
    inf_node = float(np.mean(all_ratios)) if all_ratios else float("nan")
    per_graph_means = [np.mean(v) for v in ratios_by_graph.values()]
    inf_graph = float(np.mean(per_graph_means)) if per_graph_means else float("nan")

    mrr = mrr_from_rows(rows)
    return InfluenceReport(rows, top_k, mode, inf_node, inf_graph,
                           mrr["node"], mrr["graph"], mrr["motif"],
                           mrr["inter"], excluded)


def mrr_from_rows(rows) -> dict:
    """Aggregate reciprocal ranks (multi-motif graphs only)."""
    by_graph: dict[int, list[float]] = {}
    motifs_of_graph: dict[int, int] = {}
    for r in rows:
        if r.n_motifs < 2 or r.rank is None:
            continue
        by_graph.setdefault(r.graph_index, []).append(1.0 / r.rank)
        motifs_of_graph[r.graph_index] = r.n_motifs

    if not by_graph:
        return {"node": float("nan"), "graph": float("nan"),
                "motif": float("nan"), "inter": ()}

    all_rr = [x for v in by_graph.values() for x in v]
    mrr_node = float(np.mean(all_rr))
    mrr_graph = float(np.mean([np.mean(v) for v in by_graph.values()]))

    n_graphs_total = len(by_graph)
    by_count: dict[int, list[int]] = {}
    for gi, n in motifs_of_graph.items():
        by_count.setdefault(n, []).append(gi)
    mrr_motif = 0.0
    inter_table = []
    for n in sorted(by_count):
        gids = by_count[n]
        rr = [x for gi in gids for x in by_graph[gi]]
        restricted = float(np.mean(rr))
        mrr_motif += (len(gids) / (n_graphs_total * len(rr))) * sum(rr)
        inter_table.append((n, 1.0 - restricted, len(gids)))
    return {"node": mrr_node, "graph": mrr_graph, "motif": float(mrr_motif),
            "inter": tuple(inter_table)}


def inf_ratios(graphs, decomps, store: ParamStore, cfg: EncoderConfig,
               top_k: int = 3, mode: str = "top_k") -> tuple[float, float]:
    """(node-level, graph-level) inter/intra influence ratio means."""
    report = analyze_dataset(graphs, decomps, store, cfg, top_k, mode)
    return report.inf_ratio_node, report.inf_ratio_graph


def mrr_scores(graphs, decomps, store: ParamStore, cfg: EncoderConfig,
               top_k: int = 3) -> tuple[float, float, float, tuple]:
    """(MRR_node, MRR_graph, MRR_motif, per-motif-count inter table)."""
    report = analyze_dataset(graphs, decomps, store, cfg, top_k)
    return report.mrr_node, report.mrr_graph, report.mrr_motif, report.mrr_inter
