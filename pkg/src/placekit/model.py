"""Domain entities and the scenario document loader.

Hosts are addressed two ways.  Public APIs use :class:`NodeId`
(``kind`` + 0-based index within that kind).  Internally every host has a
global index following the link-table column layout: compute nodes
``0..K-1``, users ``K..K+N-1``, helpers ``K+N..K+N+M-1``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from typing import NamedTuple

import jsonschema
import numpy as np

from .errors import ScenarioError, TopologyError

SCHEMA_VERSION = 1


class NodeKind(str, enum.Enum):
    USER = "user"
    HELPER = "helper"
    COMPUTE = "compute"


class Tier(str, enum.Enum):
    USER_DEVICE = "user"
    HELPER_DEVICE = "helper"
    TIER1 = "tier1"
    TIER2 = "tier2"
    TIER3 = "tier3"


# Host classes used by distribution reports, in display order.
HOST_CLASSES = ("user", "helper", "tier1", "tier2", "tier3")


class NodeId(NamedTuple):
    kind: NodeKind
    index: int

    def __str__(self):
        return f"{self.kind.value}[{self.index}]"


def compute(k: int) -> NodeId:
    return NodeId(NodeKind.COMPUTE, k)


def user(n: int) -> NodeId:
    return NodeId(NodeKind.USER, n)


def helper(m: int) -> NodeId:
    return NodeId(NodeKind.HELPER, m)


@dataclass(frozen=True)
class NodeSpec:
    cc: float  # MIPS
    mc: float  # GB
    dc: float  # GB
    os: str
    rs: float
    tier: Tier


@dataclass(frozen=True)
class Pair:
    user: int
    helper: int


@dataclass(frozen=True)
class VersionSpec:
    cr: float  # million instructions
    mr: float  # GB
    dr: float  # GB
    ds: float  # Mb sent to each successor
    pr: str
    tc: str
    ct: str
    rs: float
    provider_delay: float  # s
    coding_delay: float  # s


@dataclass(frozen=True)
class ServiceSpec:
    pair_index: int
    components: tuple[tuple[VersionSpec, ...], ...]
    dag: tuple[tuple[int, ...], ...]

    def successors(self, y: int) -> list[int]:
        return [j for j, bit in enumerate(self.dag[y]) if bit]


@dataclass(frozen=True, eq=False)
class LinkTable:
    """K x (K+N+M) end-to-end link characteristics.

    ``bw`` is in Mbps and ``rtt_ms`` in milliseconds; forbidden entries
    are NaN.  Compute self-links are stored as (inf, 0), meaning no
    transmission delay at all.
    """

    bw: np.ndarray
    rtt_ms: np.ndarray

    def __post_init__(self):
        self.bw.setflags(write=False)
        self.rtt_ms.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, LinkTable):
            return NotImplemented
        return (np.array_equal(self.bw, other.bw, equal_nan=True)
                and np.array_equal(self.rtt_ms, other.rtt_ms, equal_nan=True))

    @property
    def shape(self):
        return self.bw.shape


@dataclass(frozen=True, eq=False)
class ScenarioInstance:
    users: tuple[NodeSpec, ...]
    helpers: tuple[NodeSpec, ...]
    compute: tuple[NodeSpec, ...]
    pairs: tuple[Pair, ...]
    services: tuple[ServiceSpec, ...]
    links: LinkTable

    def __eq__(self, other):
        if not isinstance(other, ScenarioInstance):
            return NotImplemented
        return (self.users == other.users and self.helpers == other.helpers
                and self.compute == other.compute and self.pairs == other.pairs
                and self.services == other.services and self.links == other.links)

    __hash__ = None

    @property
    def N(self):
        return len(self.users)

    @property
    def M(self):
        return len(self.helpers)

    @property
    def K(self):
        return len(self.compute)

    @property
    def X(self):
        return len(self.services)

    @property
    def Y(self):
        return len(self.services[0].components) if self.services else 0

    @property
    def V(self):
        return len(self.services[0].components[0]) if self.services else 0

    @property
    def n_components(self):
        return sum(len(s.components) for s in self.services)

    # -- host addressing -------------------------------------------------

    def host_index(self, node: NodeId) -> int:
        kind, idx = node
        if kind == NodeKind.COMPUTE:
            limit, offset = self.K, 0
        elif kind == NodeKind.USER:
            limit, offset = self.N, self.K
        else:
            limit, offset = self.M, self.K + self.N
        if not 0 <= idx < limit:
            raise IndexError(f"{node} out of range")
        return offset + idx

    def node_at(self, h: int) -> NodeId:
        K, N = self.K, self.N
        if h < K:
            return compute(h)
        if h < K + N:
            return user(h - K)
        return helper(h - K - N)

    def node_spec(self, node: NodeId) -> NodeSpec:
        kind, idx = node
        if kind == NodeKind.COMPUTE:
            return self.compute[idx]
        if kind == NodeKind.USER:
            return self.users[idx]
        return self.helpers[idx]

    def pair_of_service(self, x: int) -> Pair:
        return self.pairs[self.services[x].pair_index]

    @cached_property
    def arrays(self) -> "InstanceArrays":
        return InstanceArrays(self)


# ---------------------------------------------------------------------------
# link lookup


def _relay_node(inst: ScenarioInstance, u_col: int, h_col: int) -> int | None:
    # Helpers sit behind the cloud: user<->helper traffic relays through the
    # tier-3 node with the smallest combined rtt (any compute node if there
    # is no tier 3).
    bw, rtt = inst.links.bw, inst.links.rtt_ms
    cands = [k for k, c in enumerate(inst.compute) if c.tier == Tier.TIER3]
    if not cands:
        cands = list(range(inst.K))
    best, best_rtt = None, math.inf
    for k in cands:
        if math.isnan(bw[k, u_col]) or math.isnan(bw[k, h_col]):
            continue
        total = rtt[k, u_col] + rtt[k, h_col]
        if total < best_rtt:
            best, best_rtt = k, total
    return best


def link_lookup(inst: ScenarioInstance, a: NodeId, b: NodeId) -> tuple[float, float]:
    """Return ``(bw Mbps, rtt ms)`` between two hosts.

    ``a == b`` gives ``(inf, 0.0)``.  User-helper links are composed through
    the cloud relay (bottleneck-free store-and-forward, so the effective
    bandwidth is the harmonic combination of the two hops).
    """
    if a == b:
        return math.inf, 0.0
    ka, kb = a.kind, b.kind
    if ka == kb == NodeKind.USER or ka == kb == NodeKind.HELPER:
        raise TopologyError(f"no link between {a} and {b}")
    if ka != NodeKind.COMPUTE and kb != NodeKind.COMPUTE:
        u, h = (a, b) if ka == NodeKind.USER else (b, a)
        uc, hc = inst.host_index(u), inst.host_index(h)
        k = _relay_node(inst, uc, hc)
        if k is None:
            raise TopologyError(f"no relay path between {a} and {b}")
        bw1, bw2 = inst.links.bw[k, uc], inst.links.bw[k, hc]
        return (1.0 / (1.0 / bw1 + 1.0 / bw2),
                float(inst.links.rtt_ms[k, uc] + inst.links.rtt_ms[k, hc]))
    if ka != NodeKind.COMPUTE:
        a, b = b, a
    row, col = a.index, inst.host_index(b)
    bw = inst.links.bw[row, col]
    if math.isnan(bw):
        raise TopologyError(f"link {a} <-> {b} is marked forbidden")
    return float(bw), float(inst.links.rtt_ms[row, col])


# ---------------------------------------------------------------------------
# dense per-instance arrays used by the evaluators


class InstanceArrays:
    """Flattened numeric views of an instance.

    Gene ``g = x*Y + y``.  ``demand[g, v]`` is ``(cr, mr, dr)``;
    ``capacity[h]`` is ``(cc, mc, dc)``.  ``bw_inv`` and ``half_rtt`` are
    H x H matrices in seconds-per-Mb and seconds, zero on the diagonal and
    inf where no link exists.
    """

    def __init__(self, inst: ScenarioInstance):
        K, N, M, X = inst.K, inst.N, inst.M, inst.X
        Y, V = inst.Y, inst.V
        H = K + N + M
        self.K, self.N, self.M, self.H = K, N, M, H
        self.X, self.Y, self.V, self.G = X, Y, V, X * Y

        hosts = list(inst.compute) + list(inst.users) + list(inst.helpers)
        self.capacity = np.array([[s.cc, s.mc, s.dc] for s in hosts], dtype=float).reshape(H, 3)
        self.host_rs = np.array([s.rs for s in hosts], dtype=float)
        self.host_class = np.array([HOST_CLASSES.index(s.tier.value) for s in hosts], dtype=np.int64)

        G = self.G
        attrs = np.zeros((7, G, V))
        for x, svc in enumerate(inst.services):
            for y, comp in enumerate(svc.components):
                g = x * Y + y
                for v, ver in enumerate(comp):
                    attrs[:, g, v] = (ver.cr, ver.mr, ver.dr, ver.ds, ver.rs,
                                      ver.provider_delay, ver.coding_delay)
        self.cr, self.mr, self.dr, self.ds, self.rs, self.pd, self.cd = attrs
        self.demand = np.stack([self.cr, self.mr, self.dr], axis=-1)  # (G, V, 3)
        self.fixed_delay = self.pd + self.cd

        self.service_of = np.repeat(np.arange(X), Y)
        self.user_host = np.array([K + inst.pair_of_service(x).user for x in range(X)], dtype=np.int64)
        self.helper_host = np.array([K + N + inst.pair_of_service(x).helper for x in range(X)], dtype=np.int64)

        src, dst = [], []
        for x, svc in enumerate(inst.services):
            for i in range(Y):
                for j in svc.successors(i):
                    src.append(x * Y + i)
                    dst.append(x * Y + j)
        self.edge_src = np.array(src, dtype=np.int64)
        self.edge_dst = np.array(dst, dtype=np.int64)

        self.bw_inv, self.half_rtt = self._delay_matrices(inst)
        self.user_rs_mean = float(np.mean([u.rs for u in inst.users])) if N else 1.0
        self.helper_rs_mean = float(np.mean([h.rs for h in inst.helpers])) if M else 1.0

    def _delay_matrices(self, inst):
        K, N, H = self.K, self.N, self.H
        bw_inv = np.full((H, H), np.inf)
        half = np.full((H, H), np.inf)
        bw = inst.links.bw
        rtt_s = inst.links.rtt_ms / 1000.0
        with np.errstate(divide="ignore"):
            row_inv = np.where(np.isnan(bw), np.inf, 1.0 / bw)
        row_half = np.where(np.isnan(rtt_s), np.inf, rtt_s / 2.0)
        if K:
            bw_inv[:K, :] = row_inv
            half[:K, :] = row_half
            bw_inv[:, :K] = np.minimum(bw_inv[:, :K], row_inv.T)
            half[:, :K] = np.minimum(half[:, :K], row_half.T)
        for x in range(self.X):
            u, h = int(self.user_host[x]), int(self.helper_host[x])
            try:
                b, r = link_lookup(inst, inst.node_at(u), inst.node_at(h))
            except TopologyError:
                continue
            bw_inv[u, h] = bw_inv[h, u] = 1.0 / b
            half[u, h] = half[h, u] = r / 2000.0
        np.fill_diagonal(bw_inv, 0.0)
        np.fill_diagonal(half, 0.0)
        return bw_inv, half

    def legal_host_array(self, g: int) -> np.ndarray:
        return self._legal_by_service[g // self.Y]

    @cached_property
    def _legal_by_service(self) -> list[np.ndarray]:
        out = []
        for x in range(self.X):
            arr = np.concatenate([np.arange(self.K), [self.user_host[x], self.helper_host[x]]]).astype(np.int64)
            arr.flags.writeable = False
            out.append(arr)
        return out

    @cached_property
    def size(self) -> np.ndarray:
        """Scalar size of each (gene, version): demand over mean compute capacity, summed."""
        scale = self.capacity[:self.K].mean(axis=0) if self.K else self.capacity.mean(axis=0)
        return (self.demand / scale).sum(axis=-1)


# ---------------------------------------------------------------------------
# document <-> instance


def load_schema() -> dict:
    text = resources.files("placekit").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        schema = load_schema()
        _VALIDATOR = jsonschema.Draft202012Validator(schema)
    return _VALIDATOR


def _format_path(parts) -> str:
    out = ""
    for p in parts:
        if isinstance(p, int):
            out += f"[{p}]"
        else:
            out += f".{p}" if out else str(p)
    return out


def _node(d: dict, default_tier: Tier) -> NodeSpec:
    tier = Tier(d["tier"]) if "tier" in d else default_tier
    return NodeSpec(cc=float(d["cc"]), mc=float(d["mc"]), dc=float(d["dc"]),
                    os=d["os"], rs=float(d["rs"]), tier=tier)


def _version(d: dict) -> VersionSpec:
    return VersionSpec(cr=float(d["cr"]), mr=float(d["mr"]), dr=float(d["dr"]),
                       ds=float(d["ds"]), pr=d["pr"], tc=d["tc"], ct=d["ct"],
                       rs=float(d["rs"]), provider_delay=float(d["provider_delay"]),
                       coding_delay=float(d["coding_delay"]))


def _semantic_violations(doc: dict) -> list[tuple[str, str]]:
    out = []
    N, M, K = len(doc["users"]), len(doc["helpers"]), len(doc["compute_nodes"])
    pairs, services = doc["pairs"], doc["services"]

    seen_users = set()
    for i, p in enumerate(pairs):
        if p["user"] >= N:
            out.append((f"pairs[{i}].user", f"user index {p['user']} out of range (N={N})"))
        else:
            seen_users.add(p["user"])
        if p["helper"] >= M:
            out.append((f"pairs[{i}].helper", f"helper index {p['helper']} out of range (M={M})"))
    missing = sorted(set(range(N)) - seen_users)
    if missing:
        out.append(("pairs", f"users {missing} belong to no pair"))
    elif len(pairs) <= N and len(pairs) != len(seen_users):
        out.append(("pairs", "a user may appear in several pairs only when there are more pairs than users"))

    if len(services) != len(pairs):
        out.append(("services", f"expected one service per pair ({len(pairs)}), got {len(services)}"))
    shape = None
    seen_pairs = {}
    for x, s in enumerate(services):
        if s["pair"] >= len(pairs):
            out.append((f"services[{x}].pair", f"pair index {s['pair']} out of range"))
        elif s["pair"] in seen_pairs:
            out.append((f"services[{x}].pair", f"pair {s['pair']} already served by services[{seen_pairs[s['pair']]}]"))
        else:
            seen_pairs[s["pair"]] = x
        comps = s["components"]
        this = (len(comps), len(comps[0]))
        for y, c in enumerate(comps):
            if len(c) != this[1]:
                out.append((f"services[{x}].components[{y}]",
                            f"expected {this[1]} versions, got {len(c)}"))
        if shape is None:
            shape = this
        elif this != shape:
            out.append((f"services[{x}].components",
                        f"shape (Y, V)={this} differs from services[0] {shape}"))
        Y = len(comps)
        dag = s["dag"]
        if len(dag) != Y or any(len(r) != Y for r in dag):
            out.append((f"services[{x}].dag", f"dag must be {Y}x{Y}"))
            continue
        for i in range(Y):
            for j in range(i + 1):
                if dag[i][j]:
                    out.append((f"services[{x}].dag[{i}][{j}]",
                                "dag must be strictly upper-triangular"))

    links = doc["links"]
    C = K + N + M
    if len(links) != K:
        out.append(("links", f"expected {K} rows, got {len(links)}"))
    for r, row in enumerate(links):
        if len(row) != C:
            out.append((f"links[{r}]", f"expected {C} columns, got {len(row)}"))
            continue
        for c, entry in enumerate(row):
            if entry is None or r == c:
                continue
            if entry[0] <= 0:
                out.append((f"links[{r}][{c}]", "bandwidth must be positive"))
            if c < K and c < len(links) and len(links[c]) == C:
                other = links[c][r]
                if other != entry:
                    out.append((f"links[{r}][{c}]", f"asymmetric with links[{c}][{r}]"))
    return out


def instance_from_document(doc: dict) -> ScenarioInstance:
    errors = sorted(_validator().iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ScenarioError((_format_path(e.absolute_path), e.message) for e in errors)
    violations = _semantic_violations(doc)
    if violations:
        raise ScenarioError(violations)

    users = tuple(_node(d, Tier.USER_DEVICE) for d in doc["users"])
    helpers = tuple(_node(d, Tier.HELPER_DEVICE) for d in doc["helpers"])
    comp = tuple(_node(d, Tier.TIER1) for d in doc["compute_nodes"])
    pairs = tuple(Pair(p["user"], p["helper"]) for p in doc["pairs"])
    services = tuple(
        ServiceSpec(
            pair_index=s["pair"],
            components=tuple(tuple(_version(v) for v in c) for c in s["components"]),
            dag=tuple(tuple(int(b) for b in r) for r in s["dag"]),
        )
        for s in doc["services"]
    )
    K, C = len(comp), len(comp) + len(users) + len(helpers)
    bw = np.full((K, C), np.nan)
    rtt = np.full((K, C), np.nan)
    for r, row in enumerate(doc["links"]):
        for c, entry in enumerate(row):
            if entry is not None:
                bw[r, c], rtt[r, c] = entry
        if r < C:
            bw[r, r], rtt[r, r] = np.inf, 0.0
    return ScenarioInstance(users, helpers, comp, pairs, services, LinkTable(bw, rtt))


def load_scenario(document) -> ScenarioInstance:
    """Parse and validate a scenario from JSON text, bytes or a decoded dict."""
    if isinstance(document, (str, bytes, bytearray)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ScenarioError([("", f"invalid JSON: {exc}")]) from None
    return instance_from_document(document)


def _node_doc(n: NodeSpec, with_tier: bool) -> dict:
    d = {"cc": n.cc, "mc": n.mc, "dc": n.dc, "os": n.os, "rs": n.rs}
    if with_tier:
        d["tier"] = n.tier.value
    return d


def instance_to_document(inst: ScenarioInstance) -> dict:
    K = inst.K
    links = []
    for r in range(K):
        row = []
        for c in range(inst.links.shape[1]):
            if r == c:
                row.append([0, 0])
            elif np.isnan(inst.links.bw[r, c]):
                row.append(None)
            else:
                row.append([float(inst.links.bw[r, c]), float(inst.links.rtt_ms[r, c])])
        links.append(row)
    return {
        "schema_version": SCHEMA_VERSION,
        "users": [_node_doc(u, True) for u in inst.users],
        "helpers": [_node_doc(h, True) for h in inst.helpers],
        "compute_nodes": [_node_doc(c, True) for c in inst.compute],
        "pairs": [{"user": p.user, "helper": p.helper} for p in inst.pairs],
        "services": [
            {
                "pair": s.pair_index,
                "components": [[vars(v).copy() for v in comp] for comp in s.components],
                "dag": [list(r) for r in s.dag],
            }
            for s in inst.services
        ],
        "links": links,
    }


def dump_scenario(inst: ScenarioInstance, indent=None) -> str:
    return json.dumps(instance_to_document(inst), indent=indent)
