"""Domain model for priority center problems: metric instances, constraint
specifications, validation, file I/O, and seeded random generation.

Instance files are JSON documents with the following keys:

    n           number of points
    points      optional list of [x, y] coordinates
    dist        optional dense n x n distance matrix (wins over "points")
    clients     list of client indices (subset of 0..n-1)
    facilities  list of facility indices (subset of 0..n-1)
    radius      object mapping client index (as a string) -> positive radius
    constraint  tagged union, one of
                  {"kind": "cardinality", "k": int}
                  {"kind": "partition_matroid", "class_of": {...}, "cap": {...}}
                  {"kind": "general_matroid", "independent_sets": [[...], ...]}
                  {"kind": "knapsack", "weight": {...}, "budget": int}
    m           coverage target (int; a real threshold when client_weight given)
    client_weight  optional object client -> non-negative weight
    prob_demand    optional object client -> probability demand in [0, 1]

All numbers are decimal; the file is UTF-8.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Optional, Union

import numpy as np

# Tolerances are relative to the largest pairwise distance of the instance.
TRIANGLE_TOL = 1e-9
COMPARE_TOL = 1e-9

# Declared support boundaries (see README).
MAX_KNAPSACK_INT = 10**6
MAX_MATROID_GROUND = 20


class ValidationError(ValueError):
    """An instance, file, or constraint failed structural validation."""


# ---------------------------------------------------------------------------
# Metric space
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MetricSpace:
    """Dense symmetric metric on points 0..n-1."""

    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError("distance matrix must be square")
        if d.shape[0] < 1:
            raise ValidationError("metric needs at least one point")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValidationError("distances must be finite and non-negative")
        if np.any(np.diag(d) != 0.0):
            raise ValidationError("distance matrix diagonal must be zero")
        if not np.array_equal(d, d.T):
            raise ValidationError("distance matrix must be symmetric")
        tol = TRIANGLE_TOL * (d.max() if d.size else 1.0)
        for j in range(d.shape[0]):
            if np.any(d > d[:, j, None] + d[None, j, :] + tol):
                raise ValidationError("triangle inequality violated (via point %d)" % j)
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, MetricSpace) and np.array_equal(self.dist, other.dist)


# ---------------------------------------------------------------------------
# Constraint specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cardinality:
    k: int

    def __post_init__(self):
        if not isinstance(self.k, int) or self.k < 1:
            raise ValidationError("cardinality bound k must be a positive integer")


@dataclass(frozen=True, eq=False)
class PartitionMatroid:
    class_of: Mapping[int, int]
    cap: Mapping[int, int]

    def __post_init__(self):
        object.__setattr__(self, "class_of", dict(self.class_of))
        object.__setattr__(self, "cap", dict(self.cap))
        for f, c in self.class_of.items():
            if c not in self.cap:
                raise ValidationError("facility %d assigned to unknown class %r" % (f, c))
        for c, cap in self.cap.items():
            if not isinstance(cap, int) or cap < 0:
                raise ValidationError("class %r capacity must be a non-negative integer" % c)

    def __eq__(self, other):
        return (
            isinstance(other, PartitionMatroid)
            and self.class_of == other.class_of
            and self.cap == other.cap
        )


@dataclass(frozen=True, eq=False)
class GeneralMatroid:
    """Explicit independence family on a small ground set (<= 20 elements).

    The family must be downward closed and satisfy the exchange axiom; both
    are checked on construction.
    """

    independent_sets: tuple

    def __post_init__(self):
        fam = {frozenset(s) for s in self.independent_sets}
        fam.add(frozenset())
        ground = frozenset().union(*fam) if fam else frozenset()
        if len(ground) > MAX_MATROID_GROUND:
            raise ValidationError(
                "general matroid ground set larger than %d" % MAX_MATROID_GROUND
            )
        for s in fam:
            for x in s:
                if s - {x} not in fam:
                    raise ValidationError("independence family is not downward closed")
        for a in fam:
            for b in fam:
                if len(a) > len(b) and not any(b | {x} in fam for x in a - b):
                    raise ValidationError("independence family violates the exchange axiom")
        object.__setattr__(self, "independent_sets", tuple(sorted(fam, key=sorted)))
        object.__setattr__(self, "_family", fam)
        object.__setattr__(self, "ground", ground)

    def is_independent(self, s: Iterable[int]) -> bool:
        return frozenset(s) in self._family

    def rank(self, s: Iterable[int]) -> int:
        s = frozenset(s)
        return max(len(i) for i in self._family if i <= s)

    def __eq__(self, other):
        return isinstance(other, GeneralMatroid) and self._family == other._family


@dataclass(frozen=True, eq=False)
class Knapsack:
    weight: Mapping[int, int]
    budget: int

    def __post_init__(self):
        object.__setattr__(self, "weight", dict(self.weight))
        for f, w in self.weight.items():
            if not isinstance(w, int) or w < 0 or w > MAX_KNAPSACK_INT:
                raise ValidationError(
                    "knapsack weight of facility %d must be an integer in [0, %d]; "
                    "scale real weights on the caller side" % (f, MAX_KNAPSACK_INT)
                )
        if not isinstance(self.budget, int) or self.budget < 0 or self.budget > MAX_KNAPSACK_INT:
            raise ValidationError("knapsack budget must be an integer in [0, %d]" % MAX_KNAPSACK_INT)

    def __eq__(self, other):
        return (
            isinstance(other, Knapsack)
            and self.weight == other.weight
            and self.budget == other.budget
        )


ConstraintSpec = Union[Cardinality, PartitionMatroid, GeneralMatroid, Knapsack]


def constraint_allows(constraint: ConstraintSpec, centers: Iterable[int]) -> bool:
    """Whether a center set is feasible for the constraint."""
    s = frozenset(centers)
    if isinstance(constraint, Cardinality):
        return len(s) <= constraint.k
    if isinstance(constraint, PartitionMatroid):
        counts: dict = {}
        for f in s:
            c = constraint.class_of.get(f)
            if c is None:
                return False
            counts[c] = counts.get(c, 0) + 1
        return all(counts[c] <= constraint.cap[c] for c in counts)
    if isinstance(constraint, GeneralMatroid):
        return constraint.is_independent(s)
    if isinstance(constraint, Knapsack):
        return sum(constraint.weight.get(f, 0) for f in s) <= constraint.budget
    raise TypeError("unknown constraint %r" % (constraint,))


# ---------------------------------------------------------------------------
# Instance and solution
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Instance:
    metric: MetricSpace
    clients: tuple
    facilities: tuple
    radius: Mapping[int, float]
    constraint: ConstraintSpec
    coverage_target: float
    client_weight: Optional[Mapping[int, float]] = None
    prob_demand: Optional[Mapping[int, float]] = None

    def __post_init__(self):
        n = self.metric.n
        clients = tuple(sorted(int(v) for v in self.clients))
        facilities = tuple(sorted(int(f) for f in self.facilities))
        for v in clients + facilities:
            if v < 0 or v >= n:
                raise ValidationError("point index %d out of range" % v)
        if len(set(clients)) != len(clients) or len(set(facilities)) != len(facilities):
            raise ValidationError("duplicate indices in clients or facilities")
        radius = {int(v): float(r) for v, r in dict(self.radius).items()}
        for v in clients:
            if v not in radius:
                raise ValidationError("client %d has no radius" % v)
            if not (radius[v] > 0.0) or not math.isfinite(radius[v]):
                raise ValidationError("client %d needs a strictly positive radius" % v)
        m = self.coverage_target
        if self.client_weight is None:
            if not isinstance(m, int) or isinstance(m, bool):
                raise ValidationError("coverage target m must be an integer")
            if m < 0 or m > len(clients):
                raise ValidationError("coverage target m must lie in [0, |clients|]")
        else:
            m = float(m)
            weights = {int(v): float(w) for v, w in dict(self.client_weight).items()}
            for v in clients:
                if weights.get(v, -1.0) < 0.0:
                    raise ValidationError("client %d needs a non-negative weight" % v)
            object.__setattr__(self, "client_weight", weights)
        if self.prob_demand is not None:
            demand = {int(v): float(p) for v, p in dict(self.prob_demand).items()}
            for v in clients:
                p = demand.get(v, -1.0)
                if not (0.0 <= p <= 1.0):
                    raise ValidationError("client %d needs a probability demand in [0, 1]" % v)
            object.__setattr__(self, "prob_demand", demand)
        if isinstance(self.constraint, PartitionMatroid):
            if set(self.constraint.class_of) != set(facilities):
                raise ValidationError("partition matroid must assign every facility exactly one class")
        if isinstance(self.constraint, GeneralMatroid):
            if not self.constraint.ground <= set(facilities):
                raise ValidationError("matroid ground set must be a subset of the facilities")
        if isinstance(self.constraint, Knapsack):
            if set(self.constraint.weight) != set(facilities):
                raise ValidationError("knapsack weights must cover exactly the facilities")
        object.__setattr__(self, "clients", clients)
        object.__setattr__(self, "facilities", facilities)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "coverage_target", m)
        object.__setattr__(self, "eps", COMPARE_TOL * float(self.metric.dist.max()))

    @property
    def n(self) -> int:
        return self.metric.n

    def dist(self, u: int, v: int) -> float:
        return float(self.metric.dist[u, v])

    def weight_of(self, v: int) -> float:
        if self.client_weight is None:
            return 1.0
        return self.client_weight.get(v, 0.0)

    def is_center_variant(self) -> bool:
        """Every client may itself host a center (C subset of F)."""
        return set(self.clients) <= set(self.facilities)

    def within(self, d: float, rad: float) -> bool:
        """Ball membership test d <= rad, with the instance-wide tolerance."""
        return d <= rad + self.eps

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Instance)
            and self.metric == other.metric
            and self.clients == other.clients
            and self.facilities == other.facilities
            and self.radius == other.radius
            and self.constraint == other.constraint
            and self.coverage_target == other.coverage_target
            and self.client_weight == other.client_weight
            and self.prob_demand == other.prob_demand
        )


@dataclass(frozen=True)
class Solution:
    """A center set with its achieved dilation.

    ``certificate`` is None for a feasible solution and carries a short
    infeasibility note otherwise.
    """

    centers: tuple
    alpha: float
    covered: tuple
    certificate: Optional[str] = None
    stats: Optional[dict] = None

    @property
    def feasible(self) -> bool:
        return self.certificate is None


def validate_solution(inst: Instance, sol: Solution) -> None:
    """Re-check a claimed-feasible solution against the instance, independent
    of the solver path that produced it."""
    if not sol.feasible:
        return
    if not constraint_allows(inst.constraint, sol.centers):
        raise ValidationError("solution violates the center constraint")
    total = sum(inst.weight_of(v) for v in sol.covered)
    target = inst.coverage_target
    if inst.client_weight is None:
        if total < target:
            raise ValidationError("solution covers %s < m = %s clients" % (total, target))
    elif total <= target - 1e-9:
        raise ValidationError("solution covers weight %s <= threshold %s" % (total, target))
    for v in sol.covered:
        d = min((inst.dist(v, f) for f in sol.centers), default=math.inf)
        if not inst.within(d, sol.alpha * inst.radius[v]):
            raise ValidationError("covered client %d is outside alpha * r(v)" % v)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def _constraint_to_json(c: ConstraintSpec) -> dict:
    if isinstance(c, Cardinality):
        return {"kind": "cardinality", "k": c.k}
    if isinstance(c, PartitionMatroid):
        return {
            "kind": "partition_matroid",
            "class_of": {str(f): cls for f, cls in sorted(c.class_of.items())},
            "cap": {str(cls): cap for cls, cap in sorted(c.cap.items())},
        }
    if isinstance(c, GeneralMatroid):
        return {"kind": "general_matroid", "independent_sets": [sorted(s) for s in c.independent_sets]}
    if isinstance(c, Knapsack):
        return {
            "kind": "knapsack",
            "weight": {str(f): w for f, w in sorted(c.weight.items())},
            "budget": c.budget,
        }
    raise TypeError("unknown constraint %r" % (c,))


def _constraint_from_json(obj: dict) -> ConstraintSpec:
    try:
        kind = obj["kind"]
        if kind == "cardinality":
            return Cardinality(k=int(obj["k"]))
        if kind == "partition_matroid":
            return PartitionMatroid(
                class_of={int(f): int(c) for f, c in obj["class_of"].items()},
                cap={int(c): int(cap) for c, cap in obj["cap"].items()},
            )
        if kind == "general_matroid":
            return GeneralMatroid(tuple(frozenset(int(x) for x in s) for s in obj["independent_sets"]))
        if kind == "knapsack":
            return Knapsack(
                weight={int(f): int(w) for f, w in obj["weight"].items()},
                budget=int(obj["budget"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("malformed constraint: %s" % exc) from exc
    raise ValidationError("unknown constraint kind %r" % kind)


def instance_to_json(inst: Instance) -> dict:
    doc = {
        "n": inst.n,
        "dist": inst.metric.dist.tolist(),
        "clients": list(inst.clients),
        "facilities": list(inst.facilities),
        "radius": {str(v): inst.radius[v] for v in inst.clients},
        "constraint": _constraint_to_json(inst.constraint),
        "m": inst.coverage_target,
    }
    if inst.client_weight is not None:
        doc["client_weight"] = {str(v): w for v, w in sorted(inst.client_weight.items())}
    if inst.prob_demand is not None:
        doc["prob_demand"] = {str(v): p for v, p in sorted(inst.prob_demand.items())}
    return doc


def instance_from_json(doc: dict) -> Instance:
    try:
        n = int(doc["n"])
        if "dist" in doc and doc["dist"] is not None:
            dist = np.asarray(doc["dist"], dtype=float)
        elif "points" in doc and doc["points"] is not None:
            pts = np.asarray(doc["points"], dtype=float)
            if pts.ndim != 2:
                raise ValidationError("points must be a list of coordinate pairs")
            dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
            dist = np.minimum(dist, dist.T)
            np.fill_diagonal(dist, 0.0)
        else:
            raise ValidationError("instance needs either 'dist' or 'points'")
        if dist.shape != (n, n):
            raise ValidationError("distance data does not match n = %d" % n)
        constraint = _constraint_from_json(doc["constraint"])
        m = doc["m"]
        wmap = doc.get("client_weight")
        return Instance(
            metric=MetricSpace(dist),
            clients=tuple(int(v) for v in doc["clients"]),
            facilities=tuple(int(f) for f in doc["facilities"]),
            radius={int(v): float(r) for v, r in doc["radius"].items()},
            constraint=constraint,
            coverage_target=float(m) if wmap is not None else int(m),
            client_weight=None if wmap is None else {int(v): float(w) for v, w in wmap.items()},
            prob_demand=None
            if doc.get("prob_demand") is None
            else {int(v): float(p) for v, p in doc["prob_demand"].items()},
        )
    except ValidationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("malformed instance document: %s" % exc) from exc


def load_instance(path) -> Instance:
    """Load and fully validate an instance file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise ValidationError("could not parse %s: %s" % (path, exc)) from exc
    if not isinstance(doc, dict):
        raise ValidationError("instance file must contain a JSON object")
    return instance_from_json(doc)


def save_instance(inst: Instance, path) -> None:
    """Write an instance so that load_instance reproduces it exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_json(inst), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Candidate dilations
# ---------------------------------------------------------------------------


def candidate_dilations(inst: Instance) -> list:
    """Sorted distinct values {0} | {d(v, f) / r(v)}.

    The optimal dilation of any variant is always a member of this set, which
    is what makes dilation search over it exact.
    """
    vals = {0.0}
    for v in inst.clients:
        rv = inst.radius[v]
        for f in inst.facilities:
            vals.add(inst.dist(v, f) / rv)
    return sorted(vals)


# ---------------------------------------------------------------------------
# Seeded generation
# ---------------------------------------------------------------------------

PROFILES = ("uniform-radii", "two-radii", "powers-of-b", "jkl-radii", "random-radii")


def _parse_profile(profile: str):
    name, arg = profile, None
    if "(" in profile and profile.endswith(")"):
        name, rest = profile.split("(", 1)
        arg = float(rest[:-1])
    if name not in PROFILES:
        raise ValidationError("unknown generation profile %r" % profile)
    return name, arg


def generate_instance(
    seed: int,
    n: int,
    profile: str,
    *,
    constraint_kind: str = "cardinality",
    supplier: bool = False,
    m: Optional[int] = None,
) -> Instance:
    """Deterministically generate a valid instance.

    Points are drawn in the unit square with Euclidean distances. Profiles
    control the radii: "uniform-radii", "two-radii", "powers-of-b(b)",
    "jkl-radii(k)", "random-radii".
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    name, arg = _parse_profile(profile)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, 1.0, size=(n, 2))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    metric = MetricSpace(dist)

    if supplier and n >= 2:
        nf = max(1, n // 2)
        perm = rng.permutation(n)
        facilities = tuple(sorted(int(x) for x in perm[:nf]))
        clients = tuple(sorted(int(x) for x in perm[nf:]))
    else:
        clients = tuple(range(n))
        facilities = tuple(range(n))

    if name == "uniform-radii":
        radius = {v: 0.25 for v in clients}
    elif name == "two-radii":
        lo, hi = 0.15, 0.45
        pick = rng.integers(0, 2, size=len(clients))
        if len(clients) >= 2:
            pick[0], pick[1] = 0, 1
        radius = {v: (lo if p == 0 else hi) for v, p in zip(clients, pick)}
    elif name == "powers-of-b":
        b = arg if arg is not None else 2.0
        if b <= 1.0:
            raise ValidationError("powers-of-b profile needs b > 1")
        expo = rng.integers(0, 3, size=len(clients))
        radius = {v: 0.1 * b ** int(e) for v, e in zip(clients, expo)}
    elif name == "jkl-radii":
        k = int(arg) if arg is not None else 2
        if not 1 <= k:
            raise ValidationError("jkl-radii profile needs k >= 1")
        ell = math.ceil(n / k)
        radius = {}
        for v in clients:
            row = np.sort(dist[v])
            radius[v] = float(row[ell - 1]) if ell > 1 else 0.0
        if any(r <= 0.0 for r in radius.values()):
            # duplicated points; nudge to the smallest positive distance
            floor = float(np.min(dist[dist > 0])) if np.any(dist > 0) else 1.0
            radius = {v: max(r, floor * 0.5) for v, r in radius.items()}
    elif name == "random-radii":
        radius = {v: float(r) for v, r in zip(clients, rng.uniform(0.1, 0.5, size=len(clients)))}
    else:  # pragma: no cover
        raise AssertionError(name)

    constraint = _generate_constraint(rng, constraint_kind, facilities)
    target = len(clients) if m is None else m
    return Instance(
        metric=metric,
        clients=clients,
        facilities=facilities,
        radius=radius,
        constraint=constraint,
        coverage_target=target,
    )


def _generate_constraint(rng, kind: str, facilities) -> ConstraintSpec:
    nf = len(facilities)
    if kind == "cardinality":
        return Cardinality(k=int(rng.integers(1, max(2, nf // 2 + 1))))
    if kind == "partition":
        ncls = int(rng.integers(1, min(3, nf) + 1))
        class_of = {f: int(rng.integers(0, ncls)) for f in facilities}
        cap = {c: int(rng.integers(0, 3)) for c in range(ncls)}
        return PartitionMatroid(class_of=class_of, cap=cap)
    if kind == "general":
        # uniform matroid of random rank, listed explicitly
        rank = int(rng.integers(1, max(2, min(nf, 3) + 1)))
        fam = []
        for size in range(rank + 1):
            fam.extend(frozenset(c) for c in combinations(facilities, size))
        return GeneralMatroid(tuple(fam))
    if kind == "knapsack":
        weight = {f: int(rng.integers(1, 5)) for f in facilities}
        budget = int(rng.integers(1, max(2, sum(weight.values()) // 2 + 1)))
        return Knapsack(weight=weight, budget=budget)
    raise ValidationError("unknown constraint kind %r" % kind)
