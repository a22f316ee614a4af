"""Random scenario generation at the four reference scales."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import InfeasibleInstanceError, PlacekitError
from .model import (LinkTable, NodeSpec, Pair, ScenarioInstance, ServiceSpec, Tier,
                    VersionSpec, dump_scenario)
from .placement import first_fit_decreasing

Range = tuple[float, float]

OS_LABELS = ("linux", "android", "windows")
PROVIDERS = ("aws", "azure", "k8s-internal")
TRANSCODES = ("none", "h264-to-h265", "h265-to-h264")
CODECS = ("h264", "h265", "vp9", "av1")


class GenerationError(PlacekitError):
    pass


@dataclass(frozen=True)
class ScaleSpec:
    name: str
    n_users: int
    n_helpers: int
    tier_counts: tuple[int, int, int]
    x_services: int
    y_components: int
    v_versions: int
    cr: Range = (800, 3000)
    mr: Range = (1.5, 3.3)
    dr: Range = (1, 3)
    ds: Range = (500, 800)
    user_cc: Range = (500, 2200)
    helper_cc: Range = (1500, 2500)
    device_mc: Range = (2, 4)
    device_dc: Range = (4, 8)
    tier_cc: tuple[Range, Range, Range] = ((1500, 2000), (5000, 15000), (15000, 30000))
    tier_mc: tuple[Range, Range, Range] = ((4, 8), (8, 16), (32, 64))
    tier_dc: tuple[Range, Range, Range] = ((8, 32), (32, 128), (128, 256))
    node_rs: Range = (0.7, 0.9)
    component_rs: Range = (0.9, 0.99)
    bw: Range = (100, 500)
    rtt_ms: Range = (500, 1200)
    # Generator defaults below are not reference-table values.
    device_rs: Range = (0.97, 0.999)
    provider_delay: Range = (0.05, 0.3)
    coding_delay: Range = (0.05, 0.5)
    mean_out_degree: float = 1.5
    load_window: Range = (0.60, 0.70)

    def __post_init__(self):
        counts = (self.n_users, self.n_helpers, *self.tier_counts,
                  self.x_services, self.y_components, self.v_versions)
        if any(c <= 0 for c in counts):
            raise ValueError(f"{self.name}: all counts must be positive")
        if self.x_services < self.n_users:
            raise ValueError(f"{self.name}: every user needs a pair, so X must be >= N")
        for f in fields(self):
            val = getattr(self, f.name)
            rngs = val if f.name.startswith("tier_") and f.name != "tier_counts" else [val]
            for r in rngs:
                if isinstance(r, tuple) and len(r) == 2 and not r[0] <= r[1]:
                    raise ValueError(f"{self.name}.{f.name}: low > high")

    @property
    def K(self):
        return sum(self.tier_counts)


_BUILTIN = {
    "small": ScaleSpec("small", 15, 8, (10, 8, 2), 15, 5, 5),
    "medium": ScaleSpec("medium", 50, 25, (30, 18, 4), 50, 5, 6),
    "large": ScaleSpec("large", 100, 50, (75, 60, 8), 200, 5, 7),
    "xlarge": ScaleSpec("xlarge", 250, 125, (150, 100, 15), 250, 5, 8),
}

SCALES = tuple(_BUILTIN)


def builtin_scale(name: str) -> ScaleSpec:
    try:
        return _BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown scale {name!r}; choose from {', '.join(SCALES)}") from None


def tiny_scale(n_users=2, n_helpers=1, tier_counts=(1, 1, 1), y=3, v=2, **overrides) -> ScaleSpec:
    """Enumerable instance shape used for oracle comparisons."""
    return ScaleSpec("tiny", n_users, n_helpers, tier_counts, n_users, y, v, **overrides)


# ---------------------------------------------------------------------------


def _u(rng, r: Range, size=None):
    return rng.uniform(r[0], r[1], size)


def _random_dag(rng, Y: int, mean_out_degree: float) -> list[list[int]]:
    dag = [[0] * Y for _ in range(Y)]
    for j in range(1, Y):
        dag[int(rng.integers(j))][j] = 1
    spare = [(i, j) for i in range(Y) for j in range(i + 1, Y) if not dag[i][j]]
    if spare and Y > 1:
        target = mean_out_degree * (Y - 1)
        p = min(1.0, max(0.0, (target - (Y - 1)) / len(spare)))
        for (i, j), keep in zip(spare, rng.random(len(spare)) < p):
            if keep:
                dag[i][j] = 1
    return dag


def _rtt_band(spec: ScaleSpec, a: str, b: str) -> Range:
    lo, hi = spec.rtt_ms
    third = (hi - lo) / 3.0
    pair = {a, b}
    if "helper" in pair or "tier3" in pair:
        return (lo + 2 * third, hi)
    if pair == {"user", "tier1"}:
        return (lo, lo + third)
    return (lo + third, lo + 2 * third)


def _links(rng, spec: ScaleSpec, classes: list[str], K: int) -> LinkTable:
    C = len(classes)
    bw = np.full((K, C), np.nan)
    rtt = np.full((K, C), np.nan)
    for r in range(K):
        for c in range(C):
            if c < K and c <= r:
                continue
            band = _rtt_band(spec, classes[r], classes[c])
            bw[r, c] = _u(rng, spec.bw)
            rtt[r, c] = _u(rng, band)
            if c < K:
                bw[c, r], rtt[c, r] = bw[r, c], rtt[r, c]
        bw[r, r], rtt[r, r] = np.inf, 0.0
    return LinkTable(bw, rtt)


def _device(rng, spec, cc: Range, tier: Tier) -> NodeSpec:
    return NodeSpec(cc=float(_u(rng, cc)), mc=float(_u(rng, spec.device_mc)),
                    dc=float(_u(rng, spec.device_dc)), os=str(rng.choice(OS_LABELS)),
                    rs=float(_u(rng, spec.device_rs)), tier=tier)


MAX_DRAWS = 100


def generate(spec: ScaleSpec, seed: int) -> ScenarioInstance:
    """Sample a feasible instance whose aggregate demand is 60-70% of capacity.

    Aggregate demand per dimension counts each component once, at the mean
    over its versions; capacity sums the three compute tiers (end devices
    are not counted as infrastructure).  Each dimension is rescaled by its
    own factor.  Draws that first-fit decreasing cannot pack are rejected
    and redrawn from the same stream, so every returned instance can be
    repaired by the healing operator.
    """
    rng = np.random.default_rng(seed)
    for _ in range(MAX_DRAWS):
        inst = _draw(spec, rng)
        try:
            first_fit_decreasing(inst)
        except InfeasibleInstanceError:
            continue
        return inst
    raise GenerationError(f"{spec.name}: no packable instance in {MAX_DRAWS} draws (seed {seed})")


def _draw(spec: ScaleSpec, rng) -> ScenarioInstance:
    N, M, X, Y, V = spec.n_users, spec.n_helpers, spec.x_services, spec.y_components, spec.v_versions

    users = [_device(rng, spec, spec.user_cc, Tier.USER_DEVICE) for _ in range(N)]
    helpers = [_device(rng, spec, spec.helper_cc, Tier.HELPER_DEVICE) for _ in range(M)]
    compute = []
    for t, (count, tier) in enumerate(zip(spec.tier_counts, (Tier.TIER1, Tier.TIER2, Tier.TIER3))):
        for _ in range(count):
            compute.append(NodeSpec(cc=float(_u(rng, spec.tier_cc[t])), mc=float(_u(rng, spec.tier_mc[t])),
                                    dc=float(_u(rng, spec.tier_dc[t])), os=str(rng.choice(OS_LABELS)),
                                    rs=float(_u(rng, spec.node_rs)), tier=tier))
    K = len(compute)
    # users are reused round-robin only when X > N (the large scale)
    pairs = [Pair(x % N, x % M) for x in range(X)]

    raw = np.stack([_u(rng, spec.cr, (X, Y, V)), _u(rng, spec.mr, (X, Y, V)),
                    _u(rng, spec.dr, (X, Y, V))], axis=-1)
    ds = _u(rng, spec.ds, (X, Y, V))
    rs = _u(rng, spec.component_rs, (X, Y, V))
    pd = _u(rng, spec.provider_delay, (X, Y, V))
    cd = _u(rng, spec.coding_delay, (X, Y, V))
    labels = [rng.integers(len(L), size=(X, Y, V)) for L in (PROVIDERS, TRANSCODES, CODECS)]
    dags = [_random_dag(rng, Y, spec.mean_out_degree) for _ in range(X)]

    capacity = np.array([[h.cc, h.mc, h.dc] for h in compute]).sum(axis=0)
    demand = raw.mean(axis=2).sum(axis=(0, 1))
    lo, hi = spec.load_window
    if np.any(demand <= 0):
        raise GenerationError("aggregate demand is zero; cannot reach the load window")
    margin = (hi - lo) * 0.1
    target = rng.uniform(lo + margin, hi - margin, size=3)
    scaled = raw * (target * capacity / demand)
    ratio = scaled.mean(axis=2).sum(axis=(0, 1)) / capacity
    if np.any(ratio < lo) or np.any(ratio > hi) or np.any(scaled <= 0):
        raise GenerationError(f"load ratio {ratio} outside window {spec.load_window}")

    services = []
    for x in range(X):
        comps = []
        for y in range(Y):
            comps.append(tuple(
                VersionSpec(cr=float(scaled[x, y, v, 0]), mr=float(scaled[x, y, v, 1]),
                            dr=float(scaled[x, y, v, 2]), ds=float(ds[x, y, v]),
                            pr=PROVIDERS[labels[0][x, y, v]], tc=TRANSCODES[labels[1][x, y, v]],
                            ct=CODECS[labels[2][x, y, v]], rs=float(rs[x, y, v]),
                            provider_delay=float(pd[x, y, v]), coding_delay=float(cd[x, y, v]))
                for v in range(V)))
        services.append(ServiceSpec(x, tuple(comps), tuple(tuple(r) for r in dags[x])))

    classes = [c.tier.value for c in compute] + ["user"] * N + ["helper"] * M
    links = _links(rng, spec, classes, K)
    return ScenarioInstance(tuple(users), tuple(helpers), tuple(compute), tuple(pairs),
                            tuple(services), links)


def load_ratios(inst: ScenarioInstance) -> np.ndarray:
    """Aggregate (mean-version) demand over aggregate compute-tier capacity, per dimension."""
    a = inst.arrays
    return a.demand.mean(axis=1).sum(axis=0) / a.capacity[:a.K].sum(axis=0)


def save_scenario(inst: ScenarioInstance, indent=None) -> str:
    return dump_scenario(inst, indent=indent)
