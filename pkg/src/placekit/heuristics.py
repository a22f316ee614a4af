"""Deterministic baseline placement heuristics.

All six walk the genes in a fixed order and place each one greedily on
the first host/version that still fits.  None of them use randomness.
Helper devices are never used as overflow targets.

A greedy pass can dead-end on a feasible instance (earlier choices leave
no room for a late component).  The stuck component is then put on its
first-choice host anyway and the finished chromosome is repaired with the
healing operator under a fixed seed, so results stay deterministic.
"""

from __future__ import annotations

import numpy as np

from .metrics import evaluate_batch
from .model import ScenarioInstance, Tier
from .placement import Placement, ResourceLedger, heal_arrays

TIER_ORDER = (Tier.TIER1, Tier.TIER2, Tier.TIER3)


def _tier_nodes(inst: ScenarioInstance) -> list[list[int]]:
    return [[k for k, c in enumerate(inst.compute) if c.tier == t] for t in TIER_ORDER]


REPAIR_SEED = 0


class _Greedy:
    def __init__(self, inst: ScenarioInstance):
        self.inst = inst
        self.a = inst.arrays
        self.led = ResourceLedger(inst)
        self.vs = np.zeros(self.a.G, dtype=np.int64)
        self.hs = np.zeros(self.a.G, dtype=np.int64)
        self.forced = 0

    def put(self, g, v, h):
        self.led.add(h, g, v)
        self.vs[g], self.hs[g] = v, h

    def fits(self, h, g, v):
        return self.led.fits(h, g, v)

    def force(self, g, v, h):
        self.put(g, v, h)
        self.forced += 1

    def result(self) -> Placement:
        if self.forced:
            # raises InfeasibleInstanceError if no repair exists
            heal_arrays(self.inst, self.vs, self.hs, np.random.default_rng(REPAIR_SEED))
        return Placement.for_instance(self.inst, self.vs, self.hs)


def _escalate(inst, order, versions_for, host_major=False) -> Placement:
    """User device first, then Tier1, Tier2, Tier3.

    Within a tier the default is version-major (every node tried with the
    first version before the second version is considered); ``host_major``
    instead tries all versions on a node before moving to the next node.
    """
    st = _Greedy(inst)
    tiers = _tier_nodes(inst)
    for g in order:
        vlist = versions_for(g)
        done = False
        u = int(st.a.user_host[g // st.a.Y])
        for v in vlist:
            if st.fits(u, g, v):
                st.put(g, v, u)
                done = True
                break
        for nodes in tiers:
            if done:
                break
            pairs = ([(h, v) for h in nodes for v in vlist] if host_major
                     else [(h, v) for v in vlist for h in nodes])
            for h, v in pairs:
                if st.fits(h, g, v):
                    st.put(g, v, h)
                    done = True
                    break
        if not done:
            st.force(g, vlist[0], tiers[-1][0] if tiers[-1] else u)
    return st.result()


def tca(inst: ScenarioInstance) -> Placement:
    """Run locally on the user device when possible, escalating tier by tier."""
    V = inst.V
    return _escalate(inst, range(inst.arrays.G), lambda g: list(range(V)))


def lrc(inst: ScenarioInstance) -> Placement:
    """As tca, but only the least CPU-demanding version of each component."""
    cr = inst.arrays.cr
    return _escalate(inst, range(inst.arrays.G), lambda g: [int(np.argmin(cr[g]))])


def mds(inst: ScenarioInstance) -> Placement:
    """Largest data size first (by version 0), placed as close to the user as possible."""
    a = inst.arrays
    order = sorted(range(a.G), key=lambda g: (-a.ds[g, 0], g)) if a.G else []
    return _escalate(inst, order, lambda g: list(range(a.V)), host_major=True)


def _ranked(values, descending):
    # stable ordering; ties keep the lower index first
    idx = np.argsort(-values if descending else values, kind="stable")
    return [int(i) for i in idx]


def mr(inst: ScenarioInstance) -> Placement:
    """Most reliable version on the most reliable host that can take it.

    The service's own devices are considered only when they beat every
    compute node that could host the component.
    """
    st = _Greedy(inst)
    a = st.a
    by_rs = _ranked(a.host_rs[:a.K], descending=True)
    for g in range(a.G):
        x = g // a.Y
        own = [int(a.user_host[x]), int(a.helper_host[x])]
        placed = False
        for v in _ranked(a.rs[g], descending=True):
            feas = [h for h in by_rs if st.fits(h, g, v)]
            best_rs = a.host_rs[feas[0]] if feas else -np.inf
            dev = [h for h in own if st.fits(h, g, v) and a.host_rs[h] > best_rs]
            if dev:
                h = max(dev, key=lambda h: (a.host_rs[h], -h))
            elif feas:
                h = feas[0]
            else:
                continue
            st.put(g, v, h)
            placed = True
            break
        if not placed:
            st.force(g, _ranked(a.rs[g], descending=True)[0], by_rs[0] if by_rs else own[0])
    return st.result()


def _power(inst, cheapest_version: bool, strongest_host: bool) -> Placement:
    st = _Greedy(inst)
    a = st.a
    for g in range(a.G):
        x = g // a.Y
        cands = np.concatenate([np.arange(a.K), [a.user_host[x]]]).astype(np.int64)
        cands = cands[_ranked(a.capacity[cands, 0], descending=strongest_host)]
        placed = False
        for v in _ranked(a.cr[g], descending=not cheapest_version):
            for h in cands:
                if st.fits(int(h), g, v):
                    st.put(g, v, int(h))
                    placed = True
                    break
            if placed:
                break
        if not placed:
            st.force(g, _ranked(a.cr[g], descending=not cheapest_version)[0], int(cands[0]))
    return st.result()


def mp(inst: ScenarioInstance) -> Placement:
    """Least CPU-demanding version on the most powerful node (compute or own user device)."""
    return _power(inst, cheapest_version=True, strongest_host=True)


def lp(inst: ScenarioInstance) -> Placement:
    """Most CPU-demanding version on the least powerful node, walking up the cc ordering."""
    return _power(inst, cheapest_version=False, strongest_host=False)


HEURISTICS = {"tca": tca, "lrc": lrc, "mds": mds, "mr": mr, "mp": mp, "lp": lp}


def heuristic_reference(inst: ScenarioInstance) -> float:
    """Worst total RT among the six heuristics; the default RT normaliser for them."""
    worst = 0.0
    for solve in HEURISTICS.values():
        p = solve(inst)
        worst = max(worst, float(evaluate_batch(inst, p.versions, p.hosts).total_rt[0]))
    return worst or 1.0
