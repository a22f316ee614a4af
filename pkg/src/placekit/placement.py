"""Chromosome representation, constraint checking and the healing operator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import InfeasibleInstanceError
from .model import HOST_CLASSES, NodeId, NodeKind, ScenarioInstance

# Relative slack when comparing accumulated float demand with capacity.
CAPACITY_TOL = 1e-9
DIMENSIONS = ("cc", "mc", "dc")


class Gene(NamedTuple):
    version: int
    node: NodeId


class Placement:
    """X*Y genes; gene ``x*Y + y`` places component ``y`` of service ``x``.

    Stored as two integer arrays: the chosen version and the global host
    index of each gene.
    """

    __slots__ = ("versions", "hosts", "_layout")

    def __init__(self, versions, hosts, layout: tuple[int, int, int]):
        self.versions = np.asarray(versions, dtype=np.int64).copy()
        self.hosts = np.asarray(hosts, dtype=np.int64).copy()
        if self.versions.shape != self.hosts.shape or self.versions.ndim != 1:
            raise ValueError("versions and hosts must be equal-length vectors")
        self._layout = tuple(layout)

    @classmethod
    def for_instance(cls, inst: ScenarioInstance, versions, hosts) -> "Placement":
        return cls(versions, hosts, (inst.K, inst.N, inst.M))

    @classmethod
    def from_genes(cls, inst: ScenarioInstance, genes) -> "Placement":
        genes = list(genes)
        return cls.for_instance(inst, [g[0] for g in genes], [inst.host_index(g[1]) for g in genes])

    @classmethod
    def from_json(cls, inst: ScenarioInstance, triples) -> "Placement":
        return cls.from_genes(inst, [(v, NodeId(NodeKind(k), i)) for v, k, i in triples])

    def __len__(self):
        return len(self.versions)

    def __eq__(self, other):
        if not isinstance(other, Placement):
            return NotImplemented
        return (self._layout == other._layout and np.array_equal(self.versions, other.versions)
                and np.array_equal(self.hosts, other.hosts))

    __hash__ = None

    def __repr__(self):
        return f"Placement({self.to_json()!r})"

    def _node(self, h: int) -> NodeId:
        K, N, _ = self._layout
        if h < K:
            return NodeId(NodeKind.COMPUTE, h)
        if h < K + N:
            return NodeId(NodeKind.USER, h - K)
        return NodeId(NodeKind.HELPER, h - K - N)

    def gene(self, g: int) -> Gene:
        return Gene(int(self.versions[g]), self._node(int(self.hosts[g])))

    def genes(self) -> Iterator[Gene]:
        for g in range(len(self)):
            yield self.gene(g)

    def to_json(self) -> list:
        return [[v, node.kind.value, node.index] for v, node in self.genes()]

    def copy(self) -> "Placement":
        return Placement(self.versions, self.hosts, self._layout)


@dataclass(frozen=True)
class Violation:
    kind: str  # capacity | user_ownership | helper_ownership | pinned | version | host
    node: NodeId | None
    gene: int | None
    detail: str

    def to_json(self):
        return {"kind": self.kind, "node": str(self.node) if self.node else None,
                "gene": self.gene, "detail": self.detail}


# ---------------------------------------------------------------------------
# legal hosts


def _legal_mask(inst: ScenarioInstance, hosts: np.ndarray, pin_endpoints: bool) -> np.ndarray:
    a = inst.arrays
    svc = a.service_of
    ok = (hosts < a.K) | (hosts == a.user_host[svc]) | (hosts == a.helper_host[svc])
    if pin_endpoints and a.Y:
        first = np.arange(a.G) % a.Y == 0
        last = np.arange(a.G) % a.Y == a.Y - 1
        ok = np.where(first, hosts == a.user_host[svc], ok)
        ok = np.where(last & ~first, hosts == a.helper_host[svc], ok)
    return ok


def legal_host_array(inst: ScenarioInstance, g: int, pin_endpoints: bool = False) -> np.ndarray:
    a = inst.arrays
    x, y = divmod(g, a.Y)
    if pin_endpoints:
        if y == 0:
            return np.array([a.user_host[x]])
        if y == a.Y - 1:
            return np.array([a.helper_host[x]])
    return a.legal_host_array(g)


def legal_hosts(inst: ScenarioInstance, x: int, y: int, pin_endpoints: bool = False) -> set[NodeId]:
    """Compute nodes plus service ``x``'s own user and helper devices."""
    g = x * inst.Y + y
    return {inst.node_at(int(h)) for h in legal_host_array(inst, g, pin_endpoints)}


# ---------------------------------------------------------------------------
# resource accounting


class ResourceLedger:
    """Accumulated (cr, mr, dr) demand per host against (cc, mc, dc)."""

    def __init__(self, inst: ScenarioInstance):
        self._a = inst.arrays
        self.capacity = self._a.capacity
        self.used = np.zeros_like(self.capacity)

    @classmethod
    def of(cls, inst: ScenarioInstance, versions, hosts) -> "ResourceLedger":
        led = cls(inst)
        d = led._a.demand[np.arange(len(versions)), versions]
        H = len(led.capacity)
        for i in range(3):
            led.used[:, i] = np.bincount(hosts, weights=d[:, i], minlength=H)
        return led

    def demand(self, g: int, v: int) -> np.ndarray:
        return self._a.demand[g, v]

    def fits(self, h: int, g: int, v: int) -> bool:
        return bool(np.all(self.used[h] + self._a.demand[g, v] <= self.capacity[h] * (1 + CAPACITY_TOL)))

    def add(self, h: int, g: int, v: int):
        self.used[h] += self._a.demand[g, v]

    def remove(self, h: int, g: int, v: int):
        self.used[h] -= self._a.demand[g, v]

    def overloaded(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.used > self.capacity * (1 + CAPACITY_TOL), axis=1))


# ---------------------------------------------------------------------------
# constraints


def check_constraints(inst: ScenarioInstance, placement: Placement,
                      pin_endpoints: bool = False) -> list[Violation]:
    a = inst.arrays
    if len(placement) != a.G:
        raise ValueError(f"placement has {len(placement)} genes, instance needs {a.G}")
    out = []
    vs, hs = placement.versions, placement.hosts
    for g in np.flatnonzero((vs < 0) | (vs >= a.V)):
        out.append(Violation("version", None, int(g), f"version {vs[g]} out of range"))
    if out:
        return out
    bad_host = (hs < 0) | (hs >= a.H)
    for g in np.flatnonzero(bad_host):
        out.append(Violation("host", None, int(g), f"host index {hs[g]} out of range"))
    if out:
        return out

    legal = _legal_mask(inst, hs, pin_endpoints)
    for g in np.flatnonzero(~legal):
        node = inst.node_at(int(hs[g]))
        x = g // a.Y
        if node.kind == NodeKind.USER:
            kind = "user_ownership"
        elif node.kind == NodeKind.HELPER:
            kind = "helper_ownership"
        else:
            kind = "pinned"
        out.append(Violation(kind, node, int(g), f"service {x} component {g % a.Y} may not run on {node}"))

    led = ResourceLedger.of(inst, vs, hs)
    for h in led.overloaded():
        over = [DIMENSIONS[i] for i in range(3) if led.used[h, i] > led.capacity[h, i] * (1 + CAPACITY_TOL)]
        out.append(Violation("capacity", inst.node_at(int(h)), None,
                             f"demand exceeds capacity in {', '.join(over)}"))
    return out


def is_feasible_batch(inst: ScenarioInstance, versions, hosts, pin_endpoints=False) -> np.ndarray:
    """Vectorised feasibility of ``(P, G)`` placements (legal hosts assumed valid indices)."""
    a = inst.arrays
    versions = np.atleast_2d(versions)
    hosts = np.atleast_2d(hosts)
    P, G = versions.shape
    d = a.demand[np.arange(G), versions]  # (P, G, 3)
    used = np.zeros((P * a.H, 3))
    flat = (np.arange(P)[:, None] * a.H + hosts).ravel()
    np.add.at(used, flat, d.reshape(-1, 3))
    used = used.reshape(P, a.H, 3)
    fit = np.all(used <= a.capacity * (1 + CAPACITY_TOL), axis=(1, 2))
    legal = np.all(_legal_mask(inst, hosts, pin_endpoints), axis=1)
    return fit & legal


# ---------------------------------------------------------------------------
# healing


class _Healer:
    """Repair state for one chromosome (arrays are modified in place)."""

    def __init__(self, inst, versions, hosts, rng, pin_endpoints):
        self.inst = inst
        self.a = inst.arrays
        self.vs, self.hs = versions, hosts
        self.rng = rng
        self.pin = pin_endpoints
        self.led = ResourceLedger.of(inst, versions, hosts)
        self.size = self.a.size
        self.limit = self.led.capacity * (1 + CAPACITY_TOL)
        self.budget = 20 * max(1, self.a.G)

    def _best_host(self, g, v, cands):
        # least-loaded host by post-placement peak utilisation; ties -> first candidate
        after = self.led.used[cands] + self.a.demand[g, v]
        ok = (after <= self.limit[cands]).all(axis=1)
        if not ok.any():
            return None
        util = (after / self.led.capacity[cands]).max(axis=1)
        util[~ok] = np.inf
        return int(cands[util.argmin()])

    def _place(self, g, v, h):
        self.vs[g], self.hs[g] = v, h
        self.led.add(h, g, v)

    def _unplace(self, g):
        self.led.remove(int(self.hs[g]), g, int(self.vs[g]))
        self.hs[g] = -1  # keeps the gene out of later per-host scans

    def _candidates(self, g, exclude=None):
        cands = legal_host_array(self.inst, g, self.pin)
        if exclude is not None and len(cands) > 1:
            cands = cands[cands != exclude]
        return cands

    def relocate(self, g, exclude=None):
        """Move an unplaced gene to the least-loaded legal host that fits it.

        The version is kept when possible, otherwise re-drawn among versions
        that fit somewhere.  Returns the genes evicted to make room (only
        when no version fits anywhere).
        """
        cands = self._candidates(g, exclude)
        v = int(self.vs[g])
        h = self._best_host(g, v, cands)
        if h is not None:
            self._place(g, v, h)
            return []
        fitting = [w for w in range(self.a.V) if w != v and self._best_host(g, w, cands) is not None]
        if fitting:
            w = fitting[int(self.rng.integers(len(fitting)))]
            self._place(g, w, self._best_host(g, w, cands))
            return []
        return self._eject(g, cands)

    def _eject(self, g, cands):
        # Make room by evicting strictly smaller genes; chains of evictions
        # strictly decrease in size, so they cannot cycle.
        best = None
        for v in [int(self.vs[g])] + [w for w in range(self.a.V) if w != self.vs[g]]:
            need = self.a.demand[g, v]
            limit = self.led.capacity * (1 + CAPACITY_TOL)
            for h in cands:
                h = int(h)
                if np.any(need > limit[h]):
                    continue
                on_h = np.flatnonzero(self.hs == h)
                on_h = on_h[on_h != g]
                sizes = self.size[on_h, self.vs[on_h]]
                order = on_h[np.argsort(sizes, kind="stable")]
                used = self.led.used[h].copy()
                evicted, cost = [], 0.0
                for e in order:
                    if np.all(used + need <= limit[h]):
                        break
                    if self.size[e, self.vs[e]] >= self.size[g, v]:
                        break
                    used -= self.a.demand[e, self.vs[e]]
                    evicted.append(int(e))
                    cost += self.size[e, self.vs[e]]
                if not np.all(used + need <= limit[h]):
                    continue
                if best is None or cost < best[0]:
                    best = (cost, v, h, evicted)
        self.budget -= 1
        if best is None or self.budget < 0:
            x, y = divmod(g, self.a.Y)
            raise InfeasibleInstanceError(f"service {x} component {y}: no version fits on any legal host")
        _, v, h, evicted = best
        for e in evicted:
            self._unplace(e)
        self._place(g, v, h)
        return evicted

    def repack(self, versions0, hosts0, keep_versions=True, keep_hosts=True):
        """Last resort: rebuild the chromosome largest-first.

        Each gene keeps its original (version, host) when that still fits
        and is legal; otherwise it takes its current version on the
        least-loaded legal host, then progressively smaller versions.
        With ``keep_versions=False`` every gene starts from its smallest
        version instead; with ``keep_hosts=False`` as well the result no
        longer depends on the input at all (plain first-fit decreasing).
        """
        if not keep_versions:
            versions0 = np.argmin(self.size, axis=1)
        self.vs[:], self.hs[:] = versions0, hosts0
        self.led = ResourceLedger(self.inst)
        legal = _legal_mask(self.inst, hosts0, self.pin) & keep_hosts
        G = self.a.G
        order = sorted(range(G), key=lambda g: (-self.size[g, versions0[g]], g))
        for g in order:
            v, h = int(versions0[g]), int(hosts0[g])
            if legal[g] and self.led.fits(h, g, v):
                self._place(g, v, h)
                continue
            cands = self._candidates(g)
            for w in [v] + [int(w) for w in np.argsort(self.size[g], kind="stable") if w != v]:
                h = self._best_host(g, w, cands)
                if h is not None:
                    self._place(g, w, h)
                    break
            else:
                x, y = divmod(g, self.a.Y)
                raise InfeasibleInstanceError(f"service {x} component {y}: no version fits on any legal host")
        return True

    def run(self) -> bool:
        v0, h0 = self.vs.copy(), self.hs.copy()
        try:
            return self._run()
        except InfeasibleInstanceError:
            pass
        for keep_versions, keep_hosts in ((True, True), (False, True)):
            try:
                return self.repack(v0, h0, keep_versions, keep_hosts)
            except InfeasibleInstanceError:
                pass
        return self.repack(v0, h0, keep_versions=False, keep_hosts=False)

    def _run(self) -> bool:
        legal = _legal_mask(self.inst, self.hs, self.pin)
        changed = False
        queue = []
        for g in np.flatnonzero(~legal):
            g = int(g)
            self._unplace(g)
            queue.extend(self.relocate(g))
            changed = True

        shed = []
        for h in self.led.overloaded():
            h = int(h)
            limit = self.led.capacity[h] * (1 + CAPACITY_TOL)
            while np.any(self.led.used[h] > limit):
                on_h = np.flatnonzero(self.hs == h)
                # descending cc demand; argmax keeps the lowest index on ties
                g = int(on_h[np.argmax(self.a.cr[on_h, self.vs[on_h]])])
                self._unplace(g)
                shed.append((g, h))
                changed = True
        shed.sort(key=lambda gh: (-self.size[gh[0], self.vs[gh[0]]], gh[0]))
        for g, h in shed:
            queue.extend(self.relocate(g, exclude=h))

        while queue:
            queue.sort(key=lambda g: (-self.size[g, self.vs[g]], g))
            g = queue.pop(0)
            queue.extend(self.relocate(g))
        return changed


def first_fit_decreasing(inst: ScenarioInstance, pin_endpoints: bool = False) -> Placement:
    """Largest-first packing from the smallest versions onto the least-loaded hosts.

    This is heal's final fallback; it ignores its input, so an instance it
    can pack is one heal can always repair.
    """
    G = inst.n_components
    vs = np.zeros(G, dtype=np.int64)
    hs = np.zeros(G, dtype=np.int64)
    _Healer(inst, vs, hs, None, pin_endpoints).repack(vs, hs, keep_versions=False, keep_hosts=False)
    return Placement.for_instance(inst, vs, hs)


def heal_arrays(inst: ScenarioInstance, versions: np.ndarray, hosts: np.ndarray, rng,
                pin_endpoints: bool = False) -> bool:
    """In-place repair of one chromosome; returns True if anything changed."""
    return _Healer(inst, versions, hosts, rng, pin_endpoints).run()


def heal(inst: ScenarioInstance, placement: Placement, rng, pin_endpoints: bool = False) -> Placement:
    """Return a constraint-satisfying copy of ``placement``.

    Genes on foreign devices are relocated first; then every overloaded
    host sheds its heaviest genes, which are re-placed heaviest-first on
    the least-loaded legal host that can take them.  Only when a gene fits
    nowhere are smaller genes evicted to make room.
    """
    rng = np.random.default_rng(rng)
    vs, hs = placement.versions.copy(), placement.hosts.copy()
    heal_arrays(inst, vs, hs, rng, pin_endpoints)
    return Placement.for_instance(inst, vs, hs)


def random_genes(inst: ScenarioInstance, rng, size=None, pin_endpoints: bool = False):
    """Uniform versions and uniform legal hosts, shape ``(G,)`` or ``(size, G)``."""
    a = inst.arrays
    shape = (a.G,) if size is None else (size, a.G)
    versions = rng.integers(a.V, size=shape)
    pick = rng.integers(a.K + 2, size=shape)
    svc = a.service_of
    hosts = np.where(pick < a.K, pick, np.where(pick == a.K, a.user_host[svc], a.helper_host[svc]))
    if pin_endpoints and a.Y:
        y = np.arange(a.G) % a.Y
        hosts = np.where(y == 0, a.user_host[svc], hosts)
        hosts = np.where((y == a.Y - 1) & (y != 0), a.helper_host[svc], hosts)
    return versions.astype(np.int64), hosts.astype(np.int64)


def random_placement(inst: ScenarioInstance, rng, pin_endpoints: bool = False) -> Placement:
    rng = np.random.default_rng(rng)
    vs, hs = random_genes(inst, rng, pin_endpoints=pin_endpoints)
    heal_arrays(inst, vs, hs, rng, pin_endpoints)
    return Placement.for_instance(inst, vs, hs)


def distribution(inst: ScenarioInstance, placement: Placement) -> dict[str, float]:
    """Fraction of components per host class."""
    a = inst.arrays
    n = len(placement)
    counts = np.bincount(a.host_class[placement.hosts], minlength=len(HOST_CLASSES))
    return {c: (float(counts[i]) / n if n else 0.0) for i, c in enumerate(HOST_CLASSES)}
