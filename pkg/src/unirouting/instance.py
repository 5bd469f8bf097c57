"""Unified instance representation, signatures, generation and augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .closure import min_plus_closure
from .variants import SIGNATURE_SLOTS, ConstraintSpec, is_single_tour, size_scaled

_MASK64 = (1 << 64) - 1

# per-field RNG streams; adding a family never shifts another field's draws
STREAMS = {
    "coords": 0, "demands": 1, "backhaul": 2, "windows": 3, "eta": 4,
    "prizes": 5, "penalties": 6, "dist": 7, "resample": 8, "eta_aug": 9,
}

OMEGA_FIELDS = ("demand", "prize", "penalty", "tw_start", "tw_end", "service")
XI_FIELDS = ("depot", "pickup", "delivery", "subroutes", "open")


def stream(seed, name, *extra):
    """Independent PCG64 generator for ``(seed, field, *extra)``."""
    ss = np.random.SeedSequence(int(seed) & _MASK64, spawn_key=(STREAMS[name],) + tuple(extra))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class NodeRecord:
    rho: tuple
    omega: tuple
    xi: tuple


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def euclidean(xy):
    diff = xy[:, None, :] - xy[None, :, :]
    return np.sqrt((diff * diff).sum(-1))


@dataclass(frozen=True, eq=False)
class UnifiedInstance:
    """One routing instance in unified form.

    ``rho`` (N,3), ``omega`` (N,6) and ``xi`` (N,5) hold the per-node position
    identifier, attribute set and type bits; depots occupy the first
    ``spec.depot_count`` rows.  Time-window attributes are stored in raw time
    units; the policy rescales them by the depot end time.
    """

    rho: np.ndarray
    omega: np.ndarray
    xi: np.ndarray
    dist: np.ndarray
    relation: np.ndarray | None
    spec: ConstraintSpec
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen(self.rho))
        object.__setattr__(self, "omega", _frozen(self.omega))
        object.__setattr__(self, "xi", _frozen(self.xi, np.int8))
        object.__setattr__(self, "dist", _frozen(self.dist))
        if self.relation is not None:
            object.__setattr__(self, "relation", _frozen(self.relation, np.int8))
        n = self.rho.shape[0]
        if self.omega.shape != (n, 6) or self.xi.shape != (n, 5) or self.rho.shape != (n, 3):
            raise ValueError("node arrays disagree in size")
        if self.dist.shape != (n, n):
            raise ValueError(f"distance matrix is {self.dist.shape}, expected {(n, n)}")
        if n != self.spec.n_nodes:
            raise ValueError(f"{n} nodes but spec implies {self.spec.n_nodes}")
        if ("PD" in self.spec.families) != (self.relation is not None):
            raise ValueError("relation matrix must be present exactly when PD is active")

    @property
    def n_nodes(self) -> int:
        return self.rho.shape[0]

    @property
    def depot_indices(self) -> list:
        return list(range(self.spec.depot_count))

    @property
    def customers(self) -> list:
        return list(range(self.spec.depot_count, self.n_nodes))

    @property
    def nodes(self) -> list:
        return [
            NodeRecord(tuple(self.rho[i]), tuple(self.omega[i]), tuple(int(b) for b in self.xi[i]))
            for i in range(self.n_nodes)
        ]

    @property
    def symmetric(self) -> bool:
        return not self.spec.asymmetric

    @property
    def demand(self):
        return self.omega[:, 0]

    @property
    def pair(self):
        """Partner index for PD nodes, -1 elsewhere."""
        out = np.full(self.n_nodes, -1, dtype=np.int64)
        if "PD" in self.spec.families:
            dc, half = self.spec.depot_count, self.spec.n_customers // 2
            for i in range(half):
                p, q = dc + i, dc + i + half
                out[p], out[q] = q, p
        return out

    def replace(self, **changes) -> "UnifiedInstance":
        fields = dict(rho=self.rho, omega=self.omega, xi=self.xi, dist=self.dist,
                      relation=self.relation, spec=self.spec, seed=self.seed)
        fields.update(changes)
        return UnifiedInstance(**fields)

    def __eq__(self, other):
        if not isinstance(other, UnifiedInstance):
            return NotImplemented
        same_rel = (self.relation is None and other.relation is None) or (
            self.relation is not None and other.relation is not None
            and np.array_equal(self.relation, other.relation))
        return (self.spec == other.spec and self.seed == other.seed and same_rel
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("rho", "omega", "xi", "dist")))

    __hash__ = None


@dataclass(frozen=True)
class ProblemSignature:
    vector: tuple
    families: frozenset

    @property
    def array(self):
        return np.array(self.vector, dtype=np.float64)

    def __str__(self):
        return "".join(str(b) for b in self.vector)


def derive_signature(instance: UnifiedInstance) -> ProblemSignature:
    """13-bit activity vector: a slot is on iff it is non-zero on some node."""
    cols = np.concatenate([instance.rho, instance.omega, instance.xi.astype(np.float64)], axis=1)
    assert cols.shape[1] == len(SIGNATURE_SLOTS) + 1
    # rho contributes RI (eta) and one Coord bit for (x, y)
    active = cols != 0
    bits = [active[:, 0].any(), active[:, 1:3].any()]
    bits += [active[:, k].any() for k in range(3, cols.shape[1])]
    return ProblemSignature(tuple(int(b) for b in bits), instance.spec.families)


# ----------------------------------------------------------------- generation

def _fresh_route_ok(dist, dc, j, spec, service):
    """Whether some depot can serve customer ``j`` alone on a fresh route."""
    fam, p = spec.families, spec.params
    open_route = "O" in fam
    for k in range(dc):
        out, back = dist[k, j], dist[j, k]
        if "L" in fam and out + (0.0 if open_route else back) > p["duration_limit"] + 1e-12:
            continue
        # the window contract includes the return leg even for open routes
        if "TW" in fam and out + service + back > p["depot_end_time"] + 1e-12:
            continue
        return True
    return False


def _distances(spec, seed):
    n_nodes = spec.n_nodes
    if spec.asymmetric:
        raw = stream(seed, "dist").random((n_nodes, n_nodes))
        np.fill_diagonal(raw, 0.0)
        return np.zeros((n_nodes, 2)), raw, min_plus_closure(raw)
    xy = stream(seed, "coords").random((n_nodes, 2))
    return xy, None, euclidean(xy)


def _enforce_fresh_routes(spec, seed, xy, raw, dist):
    """Resample customers no depot can serve alone (TW / L reachability)."""
    fam = spec.families
    if not fam & {"TW", "L"}:
        return xy, dist
    dc = spec.depot_count
    service = spec.params.get("service_time", 0.0) if "TW" in fam else 0.0
    rs = stream(seed, "resample")
    for _ in range(1000):
        bad = [j for j in range(dc, spec.n_nodes) if not _fresh_route_ok(dist, dc, j, spec, service)]
        if not bad:
            return xy, dist
        for j in bad:
            if raw is None:
                xy[j] = rs.random(2)
            else:
                raw[j, :] = rs.random(spec.n_nodes)
                raw[:, j] = rs.random(spec.n_nodes)
                raw[j, j] = 0.0
        dist = euclidean(xy) if raw is None else min_plus_closure(raw)
    raise RuntimeError("could not satisfy fresh-route reachability")


def _time_windows(spec, seed, dist):
    """Windows per the reachability contract, measured from each customer's best depot."""
    p, dc, n_nodes = spec.params, spec.depot_count, spec.n_nodes
    l0, s = float(p["depot_end_time"]), float(p["service_time"])
    rng = stream(seed, "windows")
    u = rng.random((n_nodes, 2))
    e = np.zeros(n_nodes)
    l = np.zeros(n_nodes)
    svc = np.zeros(n_nodes)
    l[:dc] = l0
    for j in range(dc, n_nodes):
        k = min(range(dc), key=lambda d: (dist[d, j] + dist[j, d], d))
        t_in, t_out = dist[k, j], dist[j, k]
        hi = l0 - t_out - s
        c = t_in + u[j, 0] * (hi - t_in)
        w = s / 2 + u[j, 1] * (l0 / 6 - s / 2)
        e[j] = max(0.0, c - w)
        l[j] = min(hi, c + w)
        svc[j] = s
    return e, l, svc


def generate_instance(spec: ConstraintSpec, seed: int) -> UnifiedInstance:
    """Deterministic instance for ``(spec, seed)``."""
    fam, p = spec.families, spec.params
    n, dc, n_nodes = spec.n_customers, spec.depot_count, spec.n_nodes
    cust = slice(dc, n_nodes)

    xy, raw, dist = _distances(spec, seed)
    xy, dist = _enforce_fresh_routes(spec, seed, xy, raw, dist)

    rho = np.zeros((n_nodes, 3))
    if spec.asymmetric:
        rho[:, 0] = stream(seed, "eta").random(n_nodes)
    else:
        rho[:, 1:] = xy

    omega = np.zeros((n_nodes, 6))
    xi = np.zeros((n_nodes, 5), dtype=np.int8)
    xi[:dc, 0] = 1
    relation = None

    if "C" in fam:
        cap = float(p["capacity"])
        if "PD" in fam:
            half = n // 2
            raw_dem = stream(seed, "demands").integers(1, 10, size=half).astype(np.float64)
            omega[dc:dc + half, 0] = -raw_dem / cap
            omega[dc + half:, 0] = raw_dem / cap
        else:
            raw_dem = stream(seed, "demands").integers(1, 10, size=n).astype(np.float64)
            if fam & {"B", "BP"}:
                k = int(round(p["backhaul_fraction"] * n))
                chosen = stream(seed, "backhaul").permutation(n)[:k]
                raw_dem[chosen] *= -1.0
            omega[cust, 0] = raw_dem / cap
            xi[cust, 1] = (omega[cust, 0] < 0)
            xi[cust, 2] = (omega[cust, 0] > 0)
    if "PD" in fam:
        half = n // 2
        xi[dc:dc + half, 1] = 1
        xi[dc + half:, 2] = 1
        relation = np.ones((n_nodes, n_nodes), dtype=np.int8)
        for i in range(half):
            a, b = dc + i, dc + i + half
            relation[a, b] = relation[b, a] = 0
    if "PC" in fam:
        omega[cust, 1] = stream(seed, "prizes").random(n) * (4.0 / n)
        pen_hi = min(1.0, 3.0 * size_scaled(n) / n)
        omega[cust, 2] = stream(seed, "penalties").random(n) * pen_hi
    if "OP" in fam:
        omega[cust, 1] = (1 + stream(seed, "prizes").integers(0, 100, size=n)) / 100.0
    if "TW" in fam:
        e, l, svc = _time_windows(spec, seed, dist)
        omega[:, 3], omega[:, 4], omega[:, 5] = e, l, svc
    if "C" in fam and not is_single_tour(fam):
        xi[:, 3] = 1
    if "O" in fam:
        xi[:, 4] = 1
    return UnifiedInstance(rho, omega, xi, dist, relation, spec, int(seed))


# --------------------------------------------------------------- augmentation

_DIHEDRAL = (
    lambda x, y: (x, y),
    lambda x, y: (y, x),
    lambda x, y: (1 - x, y),
    lambda x, y: (y, 1 - x),
    lambda x, y: (x, 1 - y),
    lambda x, y: (1 - y, x),
    lambda x, y: (1 - x, 1 - y),
    lambda x, y: (1 - y, 1 - x),
)


def dihedral(k, x, y):
    return _DIHEDRAL[k](x, y)


def symmetric_augmentations(instance: UnifiedInstance) -> list:
    """The eight unit-square symmetries applied to node coordinates."""
    if not instance.symmetric:
        raise ValueError("symmetric augmentation needs a coordinate instance")
    x, y = instance.rho[:, 1], instance.rho[:, 2]
    out = [instance]
    for k in range(1, 8):
        nx, ny = dihedral(k, x, y)
        rho = instance.rho.copy()
        rho[:, 1], rho[:, 2] = nx, ny
        out.append(instance.replace(rho=rho, dist=euclidean(rho[:, 1:])))
    return out


def asymmetric_augmentations(instance: UnifiedInstance, k: int, seed=None) -> list:
    """``k`` copies with freshly drawn random identifiers; everything else shared."""
    if instance.symmetric:
        raise ValueError("asymmetric augmentation needs an asymmetric instance")
    if k < 1:
        raise ValueError("k must be positive")
    base = instance.seed if seed is None else seed
    out = []
    for i in range(k):
        rho = instance.rho.copy()
        rho[:, 0] = stream(base, "eta_aug", i).random(instance.n_nodes)
        out.append(instance.replace(rho=rho))
    return out


def augment(instance: UnifiedInstance, factor: int) -> list:
    if factor <= 1:
        return [instance]
    if instance.symmetric:
        return symmetric_augmentations(instance)[:factor]
    return asymmetric_augmentations(instance, factor)
