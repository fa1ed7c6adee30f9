"""Contact-map analysis: contrast normalization, point-set clustering,
active-area statistics, contact areas and bimanual grasp statistics.

Thresholding is strict (value > threshold) everywhere, and the pipeline
contract is: normalize first, threshold after.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import ContactMap, SymmetrySpec, TriMesh, rotation_about_axis

__all__ = [
    "AnalysisConfig",
    "ContactPointSet",
    "ActiveArea",
    "GraspRecord",
    "GroupStats",
    "KMedoidsResult",
    "normalize_sigmoid",
    "contact_points",
    "set_distance",
    "symmetric_set_distance",
    "pairwise_distance_matrix",
    "kmedoids",
    "dominant_map",
    "contact_area",
    "active_area_fraction",
    "fingertip_bound",
    "bimanual_stats",
    "format_percentage",
    "format_active_area_table",
]


@dataclass(frozen=True)
class AnalysisConfig:
    contact_threshold: float = 0.4
    sigmoid_low: float = 0.05
    sigmoid_high: float = 0.95
    k: int = 3
    n_sym_angles: int = 36

    def __post_init__(self):
        if not (0.0 < self.sigmoid_low < self.sigmoid_high < 1.0):
            raise ValueError("need 0 < sigmoid_low < sigmoid_high < 1")
        if not (0.0 < self.contact_threshold < 1.0):
            raise ValueError("contact_threshold must be in (0, 1)")
        if self.k < 1 or self.n_sym_angles < 1:
            raise ValueError("k and n_sym_angles must be >= 1")


@dataclass(frozen=True)
class ContactPointSet:
    """XYZ positions (meters) of vertices above the contact threshold."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ActiveArea:
    """Named vertex region on a reference mesh (user supplied)."""

    name: str
    vertex_set: np.ndarray

    def __post_init__(self):
        v = np.unique(np.asarray(self.vertex_set, dtype=np.int64))
        if v.size == 0:
            raise ValueError("active area must contain at least one vertex")
        object.__setattr__(self, "vertex_set", v)


@dataclass(frozen=True)
class GraspRecord:
    participant_id: str
    object_id: str
    intent: str  # "use" | "handoff"
    bimanual: bool
    hand_length: float  # wrist to mid fingertip, meters

    def __post_init__(self):
        if self.hand_length <= 0.0:
            raise ValueError("hand_length must be positive")
        if self.intent not in ("use", "handoff"):
            raise ValueError(f"unknown intent {self.intent!r}")


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def normalize_sigmoid(contact: ContactMap, cfg: AnalysisConfig) -> ContactMap:
    """Contrast normalization: logistic curve fitted so the map minimum
    lands exactly on sigmoid_low and the maximum on sigmoid_high."""
    v = contact.values
    vmin = float(v.min())
    vmax = float(v.max())
    if vmax == vmin:
        raise ValueError("constant contact map: sigmoid slope undefined")
    a = (_logit(cfg.sigmoid_high) - _logit(cfg.sigmoid_low)) / (vmax - vmin)
    b = _logit(cfg.sigmoid_low) - a * vmin
    out = 1.0 / (1.0 + np.exp(-(a * v + b)))
    # pin the endpoints: the affine map sends them there analytically but
    # floating point can miss by an ulp
    out[v == vmin] = cfg.sigmoid_low
    out[v == vmax] = cfg.sigmoid_high
    return ContactMap(out, mesh_ref=contact.mesh_ref)


def contact_points(contact: ContactMap, mesh: TriMesh,
                   cfg: AnalysisConfig) -> ContactPointSet:
    """Vertices with contact strictly above the threshold (may be empty)."""
    contact.check_mesh(mesh)
    hot = contact.values > cfg.contact_threshold
    return ContactPointSet(mesh.vertices[hot])


def _directed_min_dists(a: np.ndarray, b: np.ndarray,
                        chunk: int = 512) -> np.ndarray:
    """min_j ||a_i - b_j|| for every i, computed by brute force in chunks."""
    mins = np.empty(a.shape[0])
    for lo in range(0, a.shape[0], chunk):
        block = a[lo:lo + chunk]
        d2 = ((block[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        mins[lo:lo + chunk] = np.sqrt(d2.min(axis=1))
    return mins


def set_distance(p1: ContactPointSet, p2: ContactPointSet) -> float:
    """Symmetric normalized sum of nearest-neighbor distances:
    (sum_i min_j ||p1_i - p2_j|| + sum_j min_i ||p2_j - p1_i||) / (|p1| + |p2|).
    """
    if len(p1) == 0 or len(p2) == 0:
        raise ValueError("set_distance requires non-empty point sets")
    d12 = np.sum(_directed_min_dists(p1.points, p2.points))
    d21 = np.sum(_directed_min_dists(p2.points, p1.points))
    return float((d12 + d21) / (len(p1) + len(p2)))


def symmetric_set_distance(p1: ContactPointSet, p2: ContactPointSet,
                           sym: SymmetrySpec,
                           cfg: AnalysisConfig | None = None) -> tuple[float, float]:
    """Minimum set_distance over rotations of p2 about the symmetry axis
    (through the object origin).  Returns (distance, minimizing angle)."""
    if sym.kind != "axial":
        raise ValueError("symmetric_set_distance requires axial symmetry")
    n = cfg.n_sym_angles if cfg is not None else sym.n_test_angles
    best = (math.inf, 0.0)
    for i in range(n):
        angle = 2.0 * math.pi * i / n
        rot = rotation_about_axis(sym.axis, angle)
        d = set_distance(p1, ContactPointSet(p2.points @ rot.T))
        if d < best[0]:
            best = (d, angle)
    return best


def pairwise_distance_matrix(
    sets: Sequence[ContactPointSet],
    distance: Callable[[ContactPointSet, ContactPointSet], float] = set_distance,
) -> np.ndarray:
    n = len(sets)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = distance(sets[i], sets[j])
    return d


class KMedoidsResult(NamedTuple):
    assignments: np.ndarray  # (n,) medoid slot per item
    medoids: np.ndarray  # (k,) item indices
    cost: float
    cost_history: tuple  # total cost after each alternation, non-increasing


def kmedoids(sets: Sequence[ContactPointSet] | np.ndarray, k: int,
             distance: Callable = set_distance, seed: int = 0,
             max_iterations: int = 100) -> KMedoidsResult:
    """PAM-style alternation on a pairwise distance matrix.

    Initialization is deterministic: the first medoid minimizes the total
    distance to all items, the rest are added farthest-first.  Assignment
    and medoid-update ties break toward the lowest index, so runs are
    reproducible; the seed only matters for optional random restarts
    (none by default).  Accepts either the point sets or a precomputed
    distance matrix.
    """
    if isinstance(sets, np.ndarray) and sets.ndim == 2 and sets.shape[0] == sets.shape[1]:
        d = np.asarray(sets, dtype=np.float64)
    else:
        if len(sets) < k:
            raise ValueError(f"need at least k={k} items, got {len(sets)}")
        d = pairwise_distance_matrix(sets, distance)
    n = d.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} items, got {n}")

    medoids = [int(np.argmin(d.sum(axis=1)))]
    while len(medoids) < k:
        nearest = d[:, medoids].min(axis=1)
        nearest[medoids] = -1.0
        medoids.append(int(np.argmax(nearest)))
    medoids = np.array(sorted(medoids))

    # medoids stay sorted so argmin ties resolve to the lowest item index
    def total_cost(meds, assign):
        return float(d[np.arange(n), meds[assign]].sum())

    assignments = np.argmin(d[:, medoids], axis=1)
    history = [total_cost(medoids, assignments)]
    for _ in range(max_iterations):
        new_medoids = medoids.copy()
        for slot in range(k):
            members = np.flatnonzero(assignments == slot)
            if members.size == 0:
                continue
            within = d[np.ix_(members, members)].sum(axis=1)
            new_medoids[slot] = members[int(np.argmin(within))]
        new_medoids = np.sort(new_medoids)
        new_assignments = np.argmin(d[:, new_medoids], axis=1)
        history.append(total_cost(new_medoids, new_assignments))
        if np.array_equal(new_medoids, medoids) and \
                np.array_equal(new_assignments, assignments):
            break
        medoids, assignments = new_medoids, new_assignments

    # tiny instances finish with an exhaustive medoid scan: the alternation
    # can stall in a local optimum, and at this size the global one is cheap
    if math.comb(n, k) <= 512:
        best = history[-1]
        best_combo = None
        for combo in itertools.combinations(range(n), k):
            cost = float(d[:, combo].min(axis=1).sum())
            if cost < best - 1e-15:
                best = cost
                best_combo = combo
        if best_combo is not None:
            medoids = np.array(best_combo)
            assignments = np.argmin(d[:, medoids], axis=1)
            history.append(best)
    return KMedoidsResult(assignments=assignments, medoids=medoids,
                          cost=history[-1], cost_history=tuple(history))


def dominant_map(sets: Sequence[ContactPointSet] | np.ndarray, k: int,
                 seed: int = 0, distance: Callable = set_distance) -> int:
    """Medoid index of the largest cluster; ties prefer the cluster with
    the lower within-cluster cost, then the lower medoid index."""
    result = kmedoids(sets, k, distance=distance, seed=seed)
    d = sets if isinstance(sets, np.ndarray) and sets.ndim == 2 \
        else pairwise_distance_matrix(sets, distance)
    best = None
    for slot in range(k):
        members = np.flatnonzero(result.assignments == slot)
        if members.size == 0:
            continue
        cost = float(d[members, result.medoids[slot]].sum())
        key = (-members.size, cost, int(result.medoids[slot]))
        if best is None or key < best:
            best = key
    return int(best[2])


def contact_area(mesh: TriMesh, contact: ContactMap,
                 cfg: AnalysisConfig) -> float:
    """Total area of faces with at least one vertex above the threshold."""
    contact.check_mesh(mesh)
    hot = contact.values > cfg.contact_threshold
    touched = hot[mesh.faces].any(axis=1)
    return float(mesh.face_areas()[touched].sum())


def active_area_fraction(maps: Sequence[ContactMap], area: ActiveArea,
                         cfg: AnalysisConfig) -> float:
    """Fraction of maps that touch the active area (any vertex above
    threshold)."""
    if not maps:
        raise ValueError("no contact maps given")
    sizes = {m.values.size for m in maps}
    if len(sizes) != 1:
        raise ValueError("contact maps live on different meshes")
    n = sizes.pop()
    if area.vertex_set.max() >= n:
        raise ValueError("active area references vertices outside the mesh")
    touched = [bool(np.any(m.values[area.vertex_set] > cfg.contact_threshold))
               for m in maps]
    return float(np.mean(touched))


def fingertip_bound(fingertip_areas: Sequence[Sequence[float]],
                    bimanual_object: bool) -> float:
    """Mean over participants of their summed fingertip areas, doubled for
    objects that are grasped bimanually."""
    if len(fingertip_areas) == 0:
        raise ValueError("no participants")
    totals = [float(np.sum(np.asarray(a, dtype=np.float64)))
              for a in fingertip_areas]
    bound = float(np.mean(totals))
    return 2.0 * bound if bimanual_object else bound


@dataclass(frozen=True)
class GroupStats:
    mean: float
    std: float  # sample std (n-1 denominator); 0 for single-member groups
    n: int
    single_member: bool


def bimanual_stats(records: Sequence[GraspRecord]
                   ) -> dict[tuple[str, str, bool], GroupStats]:
    """Hand-length mean and sample std per (object, intent, bimanual)."""
    groups: dict[tuple[str, str, bool], list[float]] = {}
    for rec in records:
        key = (rec.object_id, rec.intent, rec.bimanual)
        groups.setdefault(key, []).append(rec.hand_length)
    out = {}
    for key, values in groups.items():
        arr = np.asarray(values)
        if arr.size == 1:
            out[key] = GroupStats(float(arr[0]), 0.0, 1, True)
        else:
            out[key] = GroupStats(float(arr.mean()),
                                  float(arr.std(ddof=1)), arr.size, False)
    return out


def format_percentage(fraction: float) -> str:
    """Table formatting convention: percentage with two decimals."""
    return f"{100.0 * fraction:.2f}"


def format_active_area_table(rows: Sequence[tuple[str, str, float]],
                             delimiter: str = "\t") -> str:
    """Rows of (active area name, intent, fraction) as a delimited table."""
    lines = [delimiter.join(["active_area", "intent", "percent"])]
    for name, intent, fraction in rows:
        lines.append(delimiter.join([name, intent, format_percentage(fraction)]))
    return "\n".join(lines)
