"""Directed cross-impact predictability networks.

For an ordered asset pair (i, j) the edge strategy trades asset j on
the days asset i's signal sits in quantile group q:

    PnL_{i,j,d} = 1{Q(i,d,q)} * sign(s_{i,d}) * f_{j,d}

An edge i -> j enters the network when this series' Sharpe ratio is
significantly nonzero, at one of three thresholds: 0.05 uncorrected,
0.05/N with a per-row correction, or 0.05/N^2 with the full Bonferroni
correction (bounding the family-wise error rate by 0.05). Self-loops
are meaningful and kept; diagnostics count edge series whose test was
undefined (zero variance).
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import comb

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .errors import DegenerateFitError, DimensionError, ValidationError
from .evaluation.portfolio import PnlSeries, QuantileAssignment, quantile_groups
from .evaluation.returns import ReturnsPanel
from .evaluation.stats import sr_test_statistics
from .powerlaw import powerlaw_degree_test
from .signals import SignalPanel

FWER_TARGET = 0.05


class SignificanceLevel(enum.Enum):
    Uncorrected = "uncorrected"
    RowBonferroni = "row_bonferroni"
    FullBonferroni = "full_bonferroni"

    def threshold(self, n_assets: int) -> float:
        if self is SignificanceLevel.Uncorrected:
            return FWER_TARGET
        if self is SignificanceLevel.RowBonferroni:
            return FWER_TARGET / n_assets
        return FWER_TARGET / n_assets ** 2


@dataclass
class ImpactNetwork:
    adjacency: np.ndarray          # (N, N) uint8, row = source
    assets: np.ndarray
    q: int
    level: SignificanceLevel
    threshold: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    @property
    def density(self) -> float:
        n = len(self.assets)
        return self.n_edges / float(n * n)


@dataclass
class DegreeStats:
    d_in: np.ndarray
    d_out: np.ndarray
    p_in: np.ndarray               # empirical per-node edge densities
    p_out: np.ndarray
    n_edges: int
    self_loops: int
    bidirected: int
    er_self_loops: float
    er_bidirected: float


def _aligned(signals: SignalPanel, returns: ReturnsPanel):
    t = returns.values.shape[1]
    if not np.array_equal(signals.assets, returns.assets) or \
            signals.values.shape[1] < t or \
            not np.array_equal(signals.days[:t], returns.days):
        raise DimensionError("signal and return panels are not aligned")
    return t


def edge_pnl(signals: SignalPanel, returns: ReturnsPanel, source: str,
             target: str, q: int = 3,
             assignment: QuantileAssignment | None = None) -> PnlSeries:
    """Daily P&L of trading `target` on `source`'s group-q signal days."""
    t = _aligned(signals, returns)
    index = {a: k for k, a in enumerate(signals.assets)}
    if source not in index or target not in index:
        raise ValidationError(f"unknown asset in pair ({source}, {target})")
    i, j = index[source], index[target]
    assignment = assignment or quantile_groups(signals)
    active = assignment.in_group(q)[i, :t] & (signals.values[i, :t] != 0.0) \
        & returns.mask[j]
    daily = np.where(active,
                     np.sign(signals.values[i, :t]) * returns.values[j], 0.0)
    return PnlSeries(daily=daily, bet_totals=active.astype(float),
                     n_positions=active.astype(np.int64), days=returns.days,
                     meta={"signal": signals.name, "source": source,
                           "target": target, "group": f"Q{q}"})


def build_impact_network(signals: SignalPanel, returns: ReturnsPanel,
                         q: int = 3,
                         level: SignificanceLevel = SignificanceLevel.FullBonferroni,
                         assets=None, threads: int = 1) -> ImpactNetwork:
    """Test all N^2 ordered pairs and keep the significant edges.

    `assets` restricts the universe (quantile membership is recomputed
    inside it). Edge series with an undefined test (zero variance, e.g.
    a never-active source) contribute no edge and are counted under
    diagnostics['untestable_edges'].
    """
    t = _aligned(signals, returns)
    if assets is not None:
        index = {a: k for k, a in enumerate(signals.assets)}
        missing = [a for a in assets if a not in index]
        if missing:
            raise ValidationError(f"unknown assets {missing[:3]}")
        sel = np.array([index[a] for a in assets])
        signals = SignalPanel(values=signals.values[sel], assets=np.asarray(assets),
                              days=signals.days, name=signals.name)
        returns = ReturnsPanel(values=returns.values[sel], mask=returns.mask[sel],
                               assets=np.asarray(assets), days=returns.days,
                               mode=returns.mode)
    n = len(signals.assets)
    threshold = level.threshold(n)
    s = signals.values[:, :t]
    member = quantile_groups(signals).in_group(q)[:, :t] & (s != 0.0)
    src = np.where(member, np.sign(s), 0.0)             # (N, t)
    f = np.where(returns.mask, returns.values, 0.0)     # (N, t)

    adjacency = np.zeros((n, n), dtype=np.uint8)

    def run_block(rows) -> int:
        skipped = 0
        for i in rows:
            series = src[i][None, :] * f                # (N_targets, t)
            _, pvals = sr_test_statistics(series)
            finite = np.isfinite(pvals)
            adjacency[i] = (finite & (pvals < threshold)).astype(np.uint8)
            skipped += int((~finite).sum())
        return skipped

    if threads and threads > 1:
        blocks = np.array_split(np.arange(n), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            untestable = int(sum(pool.map(run_block, blocks)))
    else:
        untestable = run_block(range(n))

    return ImpactNetwork(adjacency=adjacency, assets=signals.assets, q=q,
                         level=level, threshold=threshold,
                         diagnostics={"untestable_edges": untestable})


def er_motif_expectations(n_nodes: int, n_edges: int, n_self_loops: int = 0):
    """(self-loops, bi-directed pairs) expected in a same-density random digraph."""
    e_self = n_edges / n_nodes
    p = (n_edges - n_self_loops) / float(n_nodes * n_nodes - n_nodes)
    e_bidir = comb(n_nodes, 2) * p * p
    return e_self, e_bidir


def motif_stats(net: ImpactNetwork) -> DegreeStats:
    """Degrees, motif counts and their random-graph expectations."""
    g = net.adjacency
    n = len(net.assets)
    d_in = g.sum(axis=0).astype(np.int64)
    d_out = g.sum(axis=1).astype(np.int64)
    self_loops = int(np.trace(g))
    bidirected = int((np.triu(g & g.T, k=1)).sum())
    e_self, e_bidir = er_motif_expectations(n, int(g.sum()), self_loops)
    return DegreeStats(d_in=d_in, d_out=d_out, p_in=d_in / n, p_out=d_out / n,
                       n_edges=int(g.sum()), self_loops=self_loops,
                       bidirected=bidirected, er_self_loops=e_self,
                       er_bidirected=e_bidir)


def binomial_degree_tests(net: ImpactNetwork) -> dict:
    """All-pairs two-sample binomial tests of equal per-node densities.

    Statistic (p_i - p_j) / sqrt(p(1-p) / (2N)) with p the pooled
    proportion (d_i + d_j) / (2N), rejected two-sided at the full
    Bonferroni level 0.05/N^2. Pairs with pooled proportion 0 or 1 have
    no variance and are skipped (counted separately).
    """
    n = len(net.assets)
    if n < 2:
        raise ValidationError("need at least 2 nodes")
    z_crit = float(ndtri(1.0 - (FWER_TARGET / n ** 2) / 2.0))
    out = {}
    stats = motif_stats(net)
    for tag, d in (("in", stats.d_in), ("out", stats.d_out)):
        p_node = d / n
        pooled = (d[:, None] + d[None, :]) / (2.0 * n)
        testable = (pooled > 0.0) & (pooled < 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = (p_node[:, None] - p_node[None, :]) / \
                np.sqrt(pooled * (1.0 - pooled) / (2.0 * n))
        iu = np.triu_indices(n, k=1)
        ok = testable[iu]
        rej = np.abs(stat[iu])[ok] > z_crit
        out[f"fraction_rejected_{tag}"] = float(rej.mean()) if ok.any() else 0.0
        out[f"skipped_{tag}"] = int((~ok).sum())
        out[f"tested_{tag}"] = int(ok.sum())
    return out


def write_edge_list(net: ImpactNetwork, path) -> None:
    src, dst = np.nonzero(net.adjacency)
    pd.DataFrame({"src": net.assets[src], "dst": net.assets[dst]}) \
        .to_csv(path, index=False)


def network_summary(net: ImpactNetwork, powerlaw_boot: int = 200,
                    seed: int = 0) -> dict:
    """Summary dict mirroring the tabular per-network report."""
    stats = motif_stats(net)
    summary = {
        "q": net.q,
        "level": net.level.value,
        "threshold": net.threshold,
        "n_assets": int(len(net.assets)),
        "n_edges": stats.n_edges,
        "density": net.density,
        "self_loops": stats.self_loops,
        "bidirected": stats.bidirected,
        "er_self_loops": stats.er_self_loops,
        "er_bidirected": stats.er_bidirected,
        "untestable_edges": net.diagnostics.get("untestable_edges", 0),
    }
    for tag, d in (("in", stats.d_in), ("out", stats.d_out)):
        try:
            res = powerlaw_degree_test(d, n_boot=powerlaw_boot, seed=seed)
            summary[f"powerlaw_{tag}"] = {k: res[k] for k in
                                          ("alpha", "xmin", "p_value", "ntail")}
        except DegenerateFitError as exc:
            summary[f"powerlaw_{tag}"] = {"error": str(exc)}
    summary.update(binomial_degree_tests(net))
    return summary


def write_network_summary(summary: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
