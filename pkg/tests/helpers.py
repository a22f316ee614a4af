"""Builders for small hand-made instances used across the tests."""

import numpy as np

from placekit.model import (LinkTable, NodeSpec, Pair, ScenarioInstance, ServiceSpec, Tier,
                            VersionSpec)

TIERS = {1: Tier.TIER1, 2: Tier.TIER2, 3: Tier.TIER3}


def node(cc=1000.0, mc=8.0, dc=64.0, rs=0.9, tier=1, os="linux"):
    t = TIERS[tier] if isinstance(tier, int) else tier
    return NodeSpec(cc=float(cc), mc=float(mc), dc=float(dc), os=os, rs=float(rs), tier=t)


def device(cc=500.0, mc=0.1, dc=0.1, rs=0.99, kind="user"):
    t = Tier.USER_DEVICE if kind == "user" else Tier.HELPER_DEVICE
    return NodeSpec(cc=float(cc), mc=float(mc), dc=float(dc), os="android", rs=float(rs), tier=t)


def version(cr=1000.0, mr=1.0, dr=1.0, ds=100.0, rs=0.95, pd=0.0, cd=0.0):
    return VersionSpec(cr=float(cr), mr=float(mr), dr=float(dr), ds=float(ds), pr="aws", tc="none",
                       ct="h264", rs=float(rs), provider_delay=float(pd), coding_delay=float(cd))


def chain(Y):
    return tuple(tuple(1 if j == i + 1 else 0 for j in range(Y)) for i in range(Y))


def build(compute, services, users=None, helpers=None, pairs=None, bw=100.0, rtt_ms=1000.0,
          link=None):
    """Assemble an instance.

    ``services`` is a list of ``(components, dag)`` where ``components`` is a
    list of version lists; service ``x`` uses pair ``x`` unless ``pairs`` is
    given.  Every link gets ``(bw, rtt_ms)`` unless ``link(r, c)`` overrides.
    """
    users = users if users is not None else [device() for _ in services]
    helpers = helpers if helpers is not None else [device(kind="helper")]
    if pairs is None:
        pairs = [Pair(x % len(users), x % len(helpers)) for x in range(len(services))]
    K = len(compute)
    C = K + len(users) + len(helpers)
    b = np.full((K, C), float(bw))
    r = np.full((K, C), float(rtt_ms))
    for i in range(K):
        for j in range(C):
            if link is not None:
                val = link(i, j)
                if val is not None:
                    b[i, j], r[i, j] = val
                    if j < K:
                        b[j, i], r[j, i] = val
        b[i, i], r[i, i] = np.inf, 0.0
    svcs = []
    for x, (comps, dag) in enumerate(services):
        svcs.append(ServiceSpec(x, tuple(tuple(vs) for vs in comps), tuple(tuple(d) for d in dag)))
    return ScenarioInstance(tuple(users), tuple(helpers), tuple(compute), tuple(pairs), tuple(svcs),
                            LinkTable(b, r))
