"""Finitely supported probability measures on R^d.

DiscreteMeasure and ProductMeasure are immutable values: every operation in
this module returns a fresh measure and never mutates its inputs. Atoms are
stored as a (n, d) float array of support points and a (n,) weight vector.
"""

from dataclasses import dataclass

import numpy as np

from config.settings import Config


class MeasureError(ValueError):
    """Raised when measure input violates the simplex or dimension contracts."""

    def __init__(self, message, field=None, value=None):
        self.field = field
        self.value = value
        super().__init__(message)


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))
        object.__setattr__(self, "weights", _frozen(self.weights))

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    def canonical(self):
        """Merge coincident atoms, drop massless ones, sort lexicographically."""
        points, weights = merge_atoms(self.points, self.weights)
        return DiscreteMeasure(points, weights)

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            points, weights = data["points"], data["weights"]
        except (KeyError, TypeError) as exc:
            raise MeasureError(f"measure dict is missing {exc}", field="measure") from exc
        mu = new_discrete(points, weights)
        if "dim" in data and int(data["dim"]) != mu.dim:
            raise MeasureError(
                f"declared dim {data['dim']} does not match points of dimension {mu.dim}",
                field="dim",
                value=data["dim"],
            )
        return mu

    def __repr__(self):
        return f"DiscreteMeasure(dim={self.dim}, atoms={self.size})"


@dataclass(frozen=True, eq=False)
class ProductMeasure:
    """Measure on X_1 x ... x X_k given by atom tuples (one array per slot)."""

    slots: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(_frozen(s) for s in self.slots))
        object.__setattr__(self, "weights", _frozen(self.weights))

    @property
    def n_slots(self):
        return len(self.slots)

    @property
    def dims(self):
        return tuple(s.shape[1] for s in self.slots)

    @property
    def size(self):
        return self.weights.shape[0]

    def canonical(self):
        stacked = np.hstack(self.slots)
        points, weights = merge_atoms(stacked, self.weights)
        bounds = np.cumsum(self.dims)[:-1]
        return ProductMeasure(tuple(np.split(points, bounds, axis=1)), weights)

    def to_dict(self):
        return {
            "dims": [int(d) for d in self.dims],
            "slots": [s.tolist() for s in self.slots],
            "weights": self.weights.tolist(),
        }

    def __repr__(self):
        return f"ProductMeasure(dims={self.dims}, atoms={self.size})"


def merge_atoms(points, weights):
    """Canonical merge: equal after rounding to 1e-12 means the same atom.

    The first atom of each group keeps its exact coordinates; groups come
    back sorted by their rounded coordinates. Atoms of zero mass are dropped.
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    keep = weights > 0
    points, weights = points[keep], weights[keep]
    # + 0.0 folds -0.0 onto 0.0
    keys = np.round(points, Config.MERGE_DECIMALS) + 0.0
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=weights, minlength=first.shape[0])
    return points[first], merged


def _as_points(points, field="points"):
    try:
        array = np.asarray(points, dtype=float)
    except (TypeError, ValueError) as exc:
        raise MeasureError(
            "dimension mismatch: all points must share one ambient dimension", field=field
        ) from exc
    if array.ndim == 1:
        array = array.reshape(-1, 1)
    if array.ndim != 2 or array.shape[1] < 1:
        raise MeasureError(f"points must be a list of coordinate lists, got shape {array.shape}", field=field)
    if array.shape[0] == 0:
        raise MeasureError("a measure needs at least one support point", field=field)
    if not np.all(np.isfinite(array)):
        raise MeasureError("point coordinates must be finite", field=field)
    return array


def new_discrete(points, weights):
    """Validate and build a DiscreteMeasure.

    Weights whose raw sum lies within 1e-9 of one are renormalized; anything
    further away is rejected rather than silently rescaled.
    """
    pts = _as_points(points)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != pts.shape[0]:
        raise MeasureError(
            f"{pts.shape[0]} points but {w.shape[0]} weights", field="weights", value=w.shape[0]
        )
    if not np.all(np.isfinite(w)):
        raise MeasureError("weights must be finite", field="weights")
    if np.any(w < 0):
        raise MeasureError(f"negative weight {w.min()!r}", field="weights", value=float(w.min()))
    total = float(w.sum())
    if abs(total - 1.0) > Config.RENORMALIZE_WINDOW:
        raise MeasureError(
            f"weights sum to {total!r}, outside 1 +/- {Config.RENORMALIZE_WINDOW}",
            field="weights",
            value=total,
        )
    return DiscreteMeasure(pts, w / total)


def dirac(point):
    return new_discrete([np.atleast_1d(np.asarray(point, dtype=float))], [1.0])


def uniform(points):
    pts = _as_points(points)
    return new_discrete(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))


def random_measure(rng, n_atoms, dim, radius=1.0):
    """Seeded random measure: uniform atoms in the cube [-radius, radius]^dim, Dirichlet weights."""
    points = rng.uniform(-radius, radius, size=(n_atoms, dim))
    weights = rng.dirichlet(np.ones(n_atoms))
    return new_discrete(points, weights)


def grid_measure(dims, spacing=1.0):
    """Uniform measure on the lattice {0, spacing, ...}^dims (one count per axis)."""
    counts = [int(c) for c in dims]
    if not counts or min(counts) < 1:
        raise MeasureError(f"grid dims must be positive counts, got {dims!r}", field="dims")
    index = np.indices(counts).reshape(len(counts), -1).T
    return uniform(index * float(spacing))


def moment(mu, p=2.0):
    """Return sum_i w_i |x_i|^p."""
    if p < 1:
        raise MeasureError(f"moment order must be >= 1, got {p!r}", field="p", value=p)
    norms = np.linalg.norm(mu.points, axis=1)
    return float(np.dot(mu.weights, norms ** p))


def second_moment_bounded(measures, cap):
    """True when every measure has second moment at most cap."""
    return all(moment(mu, 2.0) <= cap for mu in measures)


def pushforward(mu, transform, pointwise=False):
    """Image measure of mu under transform, coincident images merged.

    transform receives the (n, d) point array and returns (n, d') images;
    with pointwise=True it is called once per atom on a (d,) array instead.
    """
    try:
        if pointwise:
            images = np.asarray([np.atleast_1d(transform(x)) for x in mu.points], dtype=float)
        else:
            images = np.asarray(transform(mu.points), dtype=float)
    except ValueError as exc:
        raise MeasureError("map output dimension inconsistent across atoms", field="map") from exc
    if images.ndim == 1:
        images = images.reshape(-1, 1)
    if images.ndim != 2 or images.shape[0] != mu.size:
        raise MeasureError(
            f"map returned shape {images.shape} for {mu.size} atoms", field="map"
        )
    if not np.all(np.isfinite(images)):
        raise MeasureError("map produced non-finite coordinates", field="map")
    points, weights = merge_atoms(images, mu.weights)
    return DiscreteMeasure(points, weights)


def product(*measures):
    """Independent coupling mu_1 x ... x mu_k as a ProductMeasure."""
    if len(measures) < 2:
        raise MeasureError("a product needs at least two factors", field="measures")
    sizes = [m.size for m in measures]
    index = np.indices(sizes).reshape(len(sizes), -1)
    weights = np.ones(index.shape[1])
    for k, m in enumerate(measures):
        weights = weights * m.weights[index[k]]
    slots = tuple(m.points[index[k]] for k, m in enumerate(measures))
    return ProductMeasure(slots, weights)


def marginal(plan, slots):
    """Projection of a ProductMeasure onto the given 0-based slots.

    A single slot gives a DiscreteMeasure, several give a ProductMeasure in
    the requested slot order; collapsed atoms have their weights summed.
    """
    slots = [slots] if isinstance(slots, (int, np.integer)) else list(slots)
    if not slots:
        raise MeasureError("marginal needs at least one slot", field="slots")
    for s in slots:
        if not 0 <= s < plan.n_slots:
            raise MeasureError(
                f"slot {s} out of range for a {plan.n_slots}-slot plan", field="slots", value=s
            )
    if len(set(slots)) != len(slots):
        raise MeasureError(f"repeated slot in {slots!r}", field="slots")
    if len(slots) == 1:
        points, weights = merge_atoms(plan.slots[slots[0]], plan.weights)
        return DiscreteMeasure(points, weights)
    return ProductMeasure(tuple(plan.slots[s] for s in slots), plan.weights).canonical()


def measures_equal(a, b, atol=1e-9):
    """Atom-for-atom equality after canonical merge."""
    if a.dim != b.dim:
        return False
    ca, cb = a.canonical(), b.canonical()
    if ca.size != cb.size:
        return False
    return bool(
        np.allclose(ca.points, cb.points, atol=atol, rtol=0.0)
        and np.allclose(ca.weights, cb.weights, atol=atol, rtol=0.0)
    )


def products_equal(a, b, atol=1e-9):
    if a.dims != b.dims:
        return False
    ca, cb = a.canonical(), b.canonical()
    if ca.size != cb.size:
        return False
    return all(
        np.allclose(sa, sb, atol=atol, rtol=0.0) for sa, sb in zip(ca.slots, cb.slots)
    ) and bool(np.allclose(ca.weights, cb.weights, atol=atol, rtol=0.0))
