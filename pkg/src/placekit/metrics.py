"""Response-time and reliability models, and the weighted-sum fitness.

Two evaluation routes exist and are tested against each other: the scalar
functions below follow the model term by term through ``link_lookup``,
while :func:`evaluate_batch` computes the same quantities for a whole
population from the dense arrays in :class:`~placekit.model.InstanceArrays`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import NodeKind, ScenarioInstance, link_lookup

RELIABILITY_SCOPES = ("used", "all")


@dataclass(frozen=True)
class FitnessWeights:
    w1: float = 1 / 3
    w2: float = 1 / 3
    w3: float = 1 / 3

    def __post_init__(self):
        for w in (self.w1, self.w2, self.w3):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight {w} outside [0, 1]")
        if abs(self.w1 + self.w2 + self.w3 - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    def as_tuple(self):
        return (self.w1, self.w2, self.w3)


@dataclass(frozen=True)
class ProportionalNormalizer:
    """Map a total response time to ``min(1, rt / reference)``."""

    reference: float

    def __post_init__(self):
        if not self.reference > 0:
            raise ValueError("normalizer reference must be positive")

    def __call__(self, rt):
        return np.minimum(1.0, np.asarray(rt, dtype=float) / self.reference)


@dataclass(frozen=True)
class EvalOptions:
    """Knobs of the evaluation model.

    ``thread_capacity`` drives the optional contention term: a component
    that is the q-th (0-based, in gene order) on its node waits
    ``max(0, q - t) * cr / cc`` seconds.  The default (inf) means no wait.
    """

    thread_capacity: float = math.inf
    reliability_scope: str = "used"

    def __post_init__(self):
        if self.reliability_scope not in RELIABILITY_SCOPES:
            raise ValueError(f"reliability_scope must be one of {RELIABILITY_SCOPES}")
        if not self.thread_capacity >= 0:
            raise ValueError("thread_capacity must be >= 0")


DEFAULT_OPTIONS = EvalOptions()


@dataclass
class EvaluationReport:
    total_rt: float
    per_service_rt: list[float]
    infra_reliability: float
    service_reliability: float
    fitness: float
    rt_reference: float | None = None
    per_service_reliability: list[float] = field(default_factory=list)

    def to_row(self) -> dict:
        return {"total_rt_s": self.total_rt, "rs_p": self.infra_reliability,
                "rs_s": self.service_reliability, "fitness": self.fitness}

    def to_json(self) -> dict:
        d = self.to_row()
        d["per_service_rt_s"] = list(self.per_service_rt)
        d["per_service_rs"] = list(self.per_service_reliability)
        d["rt_reference_s"] = self.rt_reference
        return d


# ---------------------------------------------------------------------------
# scalar models


def transmission_delay(ds: float, bw: float, rtt: float) -> float:
    """Seconds to push ``ds`` Mb over a ``bw`` Mbps link with round trip ``rtt`` s."""
    if not bw > 0:
        raise ValueError(f"bandwidth must be positive, got {bw}")
    if ds < 0 or rtt < 0:
        raise ValueError("data size and rtt must be non-negative")
    if math.isinf(bw):
        return rtt / 2.0
    return ds / bw + rtt / 2.0


def execution_time(cr: float, cc: float, w: float = 0.0) -> float:
    if not cc > 0:
        raise ValueError(f"compute capacity must be positive, got {cc}")
    if cr < 0 or w < 0:
        raise ValueError("workload and waiting time must be non-negative")
    return cr / cc + w


def waiting_time(q: int, cr: float, cc: float, thread_capacity: float) -> float:
    if math.isinf(thread_capacity):
        return 0.0
    return max(0.0, (q - thread_capacity) * cr / cc)


def _gene(inst, placement, x, y):
    Y = inst.Y
    g = x * Y + y
    if not 0 <= g < len(placement):
        raise ValueError(f"component ({x}, {y}) has no gene")
    v, node = placement.gene(g)
    return g, v, node


def component_response_time(inst: ScenarioInstance, placement, x: int, y: int,
                            options: EvalOptions = DEFAULT_OPTIONS) -> float:
    g, v, node = _gene(inst, placement, x, y)
    ver = inst.services[x].components[y][v]
    td = 0.0
    for j in inst.services[x].successors(y):
        _, _, other = _gene(inst, placement, x, j)
        if other == node:
            continue
        bw, rtt_ms = link_lookup(inst, node, other)
        td += transmission_delay(ver.ds, bw, rtt_ms / 1000.0)
    spec = inst.node_spec(node)
    q = sum(1 for i in range(g) if placement.gene(i)[1] == node)
    w = waiting_time(q, ver.cr, spec.cc, options.thread_capacity)
    et = execution_time(ver.cr, spec.cc, w)
    return td + et + ver.provider_delay + ver.coding_delay


def service_response_time(inst, placement, x, options=DEFAULT_OPTIONS) -> float:
    return sum(component_response_time(inst, placement, x, y, options) for y in range(inst.Y))


def total_response_time(inst, placement, options=DEFAULT_OPTIONS) -> float:
    return sum(service_response_time(inst, placement, x, options) for x in range(inst.X))


def service_reliability(inst, placement, x) -> float:
    r = 1.0
    for y in range(inst.Y):
        _, v, _ = _gene(inst, placement, x, y)
        r *= inst.services[x].components[y][v].rs
    return r


def mean_service_reliability(inst, placement) -> float:
    if inst.X == 0:
        return 1.0
    return sum(service_reliability(inst, placement, x) for x in range(inst.X)) / inst.X


def parallel_reliability(scores) -> float:
    """1 - prod(1 - r); an empty set of nodes cannot fail and scores 1."""
    scores = list(scores)
    if not scores:
        return 1.0
    prod = 1.0
    for r in scores:
        prod *= 1.0 - r
    return 1.0 - prod


def infrastructure_reliability(inst, placement, scope: str = "used") -> float:
    if scope == "all":
        nodes = range(inst.K)
    elif scope == "used":
        nodes = sorted({node.index for _, node in placement.genes() if node.kind == NodeKind.COMPUTE})
    else:
        raise ValueError(f"unknown reliability scope {scope!r}")
    return parallel_reliability(inst.compute[k].rs for k in nodes)


def pair_hardware_reliability(inst, placement, scope: str = "used") -> float:
    rs_cn = infrastructure_reliability(inst, placement, scope)
    rs_u = sum(u.rs for u in inst.users) / inst.N if inst.N else 1.0
    rs_h = sum(h.rs for h in inst.helpers) / inst.M if inst.M else 1.0
    return rs_cn * rs_u * rs_h


def fitness(normalized_rt, rs_p, rs_s, weights: FitnessWeights = FitnessWeights()):
    """Weighted sum to minimise; accepts scalars or equal-length arrays."""
    nrt = np.asarray(normalized_rt, dtype=float)
    if np.any(nrt < 0) or np.any(nrt > 1) or np.any(np.isnan(nrt)):
        raise ValueError("normalized response time must lie in [0, 1]")
    w1, w2, w3 = weights.as_tuple()
    f = w1 * nrt + w2 * (1.0 - np.asarray(rs_p)) + w3 * (1.0 - np.asarray(rs_s))
    return float(f) if np.ndim(f) == 0 else f


def evaluate(inst, placement, weights=FitnessWeights(), normalizer=None,
             options: EvalOptions = DEFAULT_OPTIONS) -> EvaluationReport:
    """Scalar-route evaluation of one placement.

    Without a normalizer the raw total is used as its own reference, so the
    response-time term is 1 (or 0 for a zero total).
    """
    per_rt = [service_response_time(inst, placement, x, options) for x in range(inst.X)]
    total = sum(per_rt)
    per_rs = [service_reliability(inst, placement, x) for x in range(inst.X)]
    rs_s = sum(per_rs) / len(per_rs) if per_rs else 1.0
    rs_p = pair_hardware_reliability(inst, placement, options.reliability_scope)
    if normalizer is None:
        normalizer = ProportionalNormalizer(total if total > 0 else 1.0)
    f = fitness(normalizer(total), rs_p, rs_s, weights)
    ref = getattr(normalizer, "reference", None)
    return EvaluationReport(total, per_rt, rs_p, rs_s, f, ref, per_rs)


# ---------------------------------------------------------------------------
# batch route


@dataclass
class BatchEvaluation:
    total_rt: np.ndarray        # (P,)
    service_rt: np.ndarray      # (P, X)
    rs_p: np.ndarray            # (P,)
    rs_s: np.ndarray            # (P,)
    service_rs: np.ndarray      # (P, X)


def _queue_positions(hosts: np.ndarray) -> np.ndarray:
    # q[p, g] = number of genes i < g on the same host in row p
    P, G = hosts.shape
    q = np.zeros((P, G), dtype=np.int64)
    for g in range(1, G):
        q[:, g] = np.sum(hosts[:, :g] == hosts[:, g:g + 1], axis=1)
    return q


def evaluate_batch(inst: ScenarioInstance, versions, hosts,
                   options: EvalOptions = DEFAULT_OPTIONS) -> BatchEvaluation:
    """Evaluate ``P`` placements given as ``(P, G)`` version and host arrays."""
    a = inst.arrays
    versions = np.atleast_2d(np.asarray(versions, dtype=np.int64))
    hosts = np.atleast_2d(np.asarray(hosts, dtype=np.int64))
    P, G = versions.shape
    gidx = np.arange(G)

    cr = a.cr[gidx, versions]
    cc = a.capacity[hosts, 0]
    rt = cr / cc + a.fixed_delay[gidx, versions]
    if not math.isinf(options.thread_capacity):
        q = _queue_positions(hosts)
        rt += np.maximum(0.0, (q - options.thread_capacity) * cr / cc)

    if a.edge_src.size:
        s, d = a.edge_src, a.edge_dst
        hs, hd = hosts[:, s], hosts[:, d]
        ds = a.ds[s, versions[:, s]]
        td = ds * a.bw_inv[hs, hd] + a.half_rtt[hs, hd]
        td = np.where(hs == hd, 0.0, td)
        comp_td = np.zeros((P, G))
        np.add.at(comp_td, (slice(None), s), td)
        rt += comp_td

    X, Y = a.X, a.Y
    service_rt = rt.reshape(P, X, Y).sum(axis=2)
    total = service_rt.sum(axis=1)

    rs = a.rs[gidx, versions].reshape(P, X, Y)
    service_rs = rs.prod(axis=2)
    rs_s = service_rs.mean(axis=1) if X else np.ones(P)

    K = a.K
    if options.reliability_scope == "all":
        rs_cn = np.full(P, 1.0 - np.prod(1.0 - a.host_rs[:K])) if K else np.ones(P)
    else:
        used = np.zeros((P, K), dtype=bool)
        is_c = hosts < K
        rows = np.broadcast_to(np.arange(P)[:, None], hosts.shape)
        used[rows[is_c], hosts[is_c]] = True
        fail = np.where(used, 1.0 - a.host_rs[:K], 1.0)
        rs_cn = 1.0 - np.prod(fail, axis=1)
        rs_cn = np.where(used.any(axis=1), rs_cn, 1.0)
    rs_p = rs_cn * a.user_rs_mean * a.helper_rs_mean
    return BatchEvaluation(total, service_rt, rs_p, rs_s, service_rs)


def report_from_batch(batch: BatchEvaluation, i: int, weights, normalizer) -> EvaluationReport:
    total = float(batch.total_rt[i])
    f = fitness(normalizer(total), batch.rs_p[i], batch.rs_s[i], weights)
    return EvaluationReport(total, batch.service_rt[i].tolist(), float(batch.rs_p[i]),
                            float(batch.rs_s[i]), float(f), getattr(normalizer, "reference", None),
                            batch.service_rs[i].tolist())
