"""Finite-sequence surrogates for narrow / weak convergence in P_2(R^d).

Nothing here proves convergence: every verdict is a diagnostic computed
on a finite tail of the sequence. liminf is replaced by the minimum over
a trailing window and lim sup by the maximum, and reports carry the value
at a second window so the sensitivity to the window choice stays visible.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config.settings import Config
from w2checks.measure import DiscreteMeasure, moment, new_discrete, pushforward
from w2checks.transport import w2, w2_squared

log = logging.getLogger(__name__)


class SequenceError(ValueError):
    """Raised for empty sequences, bad windows, or mixed dimensions."""


@dataclass(frozen=True)
class MeasureSequence:
    terms: tuple

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise SequenceError("a measure sequence needs at least one term")
        dims = {t.dim for t in terms}
        if len(dims) != 1:
            raise SequenceError(f"sequence mixes dimensions {sorted(dims)}")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self):
        return self.terms[0].dim

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Named family of scalar test functions evaluated on (n, d) point arrays."""

    __test__ = False  # not a pytest class

    name: str
    growth: str
    members: tuple
    labels: tuple

    def values(self, points):
        return np.stack([np.asarray(f(points), dtype=float) for f in self.members])

    def integrals(self, mu):
        return self.values(mu.points) @ mu.weights

    def reordered(self, order):
        return TestFunctionFamily(
            self.name,
            self.growth,
            tuple(self.members[k] for k in order),
            tuple(self.labels[k] for k in order),
        )


@dataclass(frozen=True)
class ConvergenceReport:
    narrow_discrepancy: list
    narrow_tail: float
    narrow_tail_alt: float
    moment_p_gaps: list
    moment_p_tail: float
    moment_q_values: list
    moment_q_sup: float
    window: int
    alt_window: int
    tolerance: float
    moment_cap: float
    narrow_converged: bool
    moment_p_converged: bool
    moment_q_bounded: bool

    @property
    def verdict(self):
        return self.narrow_converged and self.moment_p_converged and self.moment_q_bounded


@dataclass(frozen=True)
class OpialTerms:
    to_probe: list
    to_limit: list
    probe_to_limit: float
    liminf_to_probe: float
    liminf_to_limit: float
    window: int

    @property
    def residual(self):
        return self.liminf_to_probe - self.probe_to_limit - self.liminf_to_limit


@dataclass(frozen=True)
class CandidateProbe:
    distances: list
    monotone: bool
    limit_value: float


@dataclass(frozen=True)
class LimitSetReport:
    candidates: list
    passing: list = field(default_factory=list)
    unique: bool = True


@dataclass(frozen=True)
class SWCase:
    name: str
    sequence: MeasureSequence
    limit: DiscreteMeasure
    x_dim: int
    p: float
    q: float
    moment_cap: float


def default_window(length):
    return max(1, min(length, max(5, length // 4)))


def _check_window(values, window):
    if len(values) == 0:
        raise SequenceError("tail statistics need a nonempty list")
    if window < 1 or window > len(values):
        raise SequenceError(f"window {window} outside [1, {len(values)}]")


def tail_liminf(values, window):
    """Minimum of the last `window` values."""
    _check_window(values, window)
    return float(np.min(np.asarray(values[-window:], dtype=float)))


def tail_limsup(values, window):
    """Maximum of the last `window` values."""
    _check_window(values, window)
    return float(np.max(np.asarray(values[-window:], dtype=float)))


def _alt_window(window, length):
    return min(length, 2 * window) if 2 * window <= length else max(1, window // 2)


# ---------------------------------------------------------------------------
# Test-function families
# ---------------------------------------------------------------------------

def _cos_feature(k, b, alpha):
    def feature(points):
        envelope = (1.0 + np.sum(points * points, axis=1)) ** (alpha / 2.0)
        return np.cos(points @ k + b) * envelope
    return feature


def _ramp(axis, radius):
    def ramp(points):
        return np.clip(points[:, axis], -radius, radius)
    return ramp


def default_test_family(dim, seed=Config.TEST_FAMILY_SEED, count=Config.TEST_FAMILY_SIZE,
                        radius=Config.TEST_FAMILY_RADIUS):
    """cos(<k,x>+b)(1+|x|^2)^(alpha/2), alpha in {0, 1/2}, plus clipped coordinate ramps."""
    rng = np.random.default_rng(seed)
    members, labels = [], []
    for n in range(count):
        k = rng.normal(size=dim)
        b = rng.uniform(0.0, 2.0 * np.pi)
        alpha = 0.0 if n % 2 == 0 else 0.5
        members.append(_cos_feature(k, b, alpha))
        labels.append(f"cos{n}_a{alpha:g}")
    for axis in range(dim):
        members.append(_ramp(axis, radius))
        labels.append(f"ramp{axis}")
    return TestFunctionFamily("default", "subquadratic", tuple(members), tuple(labels))


def bounded_lipschitz_family(dim, seed=Config.TEST_FAMILY_SEED, count=Config.TEST_FAMILY_SIZE):
    rng = np.random.default_rng(seed)
    members, labels = [], []
    for n in range(count):
        k = rng.normal(size=dim)
        b = rng.uniform(0.0, 2.0 * np.pi)
        members.append(_cos_feature(k, b, 0.0))
        labels.append(f"cos{n}")
    return TestFunctionFamily("bounded_lipschitz", "bounded_lipschitz", tuple(members), tuple(labels))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def narrow_discrepancy(seq, limit, family):
    """Per term: sup over the family of |int zeta dmu_n - int zeta dmu|."""
    if seq.dim != limit.dim:
        raise SequenceError(f"sequence in R^{seq.dim} but limit in R^{limit.dim}")
    reference = family.integrals(limit)
    return [float(np.max(np.abs(family.integrals(mu) - reference))) for mu in seq]


def check_sw_convergence(seq, limit, x_dim, p=2.0, q=2.0, family=None, window=None,
                         tolerance=Config.CONVERGENCE_TOL, moment_cap=Config.MOMENT_CAP):
    """Strong-weak convergence conditions on R^m x R^n with m = x_dim.

    (i) narrow convergence of the joint measures, (ii) convergence of the
    p-moments of the x-marginals, (iii) q-moments of the y-marginals
    bounded by moment_cap.
    """
    if p < 1 or q <= 1:
        raise SequenceError(f"need p >= 1 and q > 1, got p={p}, q={q}")
    if not 1 <= x_dim < seq.dim:
        raise SequenceError(f"x_dim {x_dim} must split R^{seq.dim} into two nonempty factors")
    family = family or default_test_family(seq.dim)
    window = window or default_window(len(seq))
    alt = _alt_window(window, len(seq))

    def x_part(points):
        return points[:, :x_dim]

    def y_part(points):
        return points[:, x_dim:]

    discrepancy = narrow_discrepancy(seq, limit, family)
    limit_p = moment(pushforward(limit, x_part), p)
    p_gaps = [abs(moment(pushforward(mu, x_part), p) - limit_p) for mu in seq]
    q_values = [moment(pushforward(mu, y_part), q) for mu in seq]

    narrow_tail = tail_limsup(discrepancy, window)
    p_tail = tail_limsup(p_gaps, window)
    q_sup = float(np.max(q_values))
    report = ConvergenceReport(
        narrow_discrepancy=discrepancy,
        narrow_tail=narrow_tail,
        narrow_tail_alt=tail_limsup(discrepancy, alt),
        moment_p_gaps=p_gaps,
        moment_p_tail=p_tail,
        moment_q_values=q_values,
        moment_q_sup=q_sup,
        window=window,
        alt_window=alt,
        tolerance=tolerance,
        moment_cap=moment_cap,
        narrow_converged=narrow_tail <= tolerance,
        moment_p_converged=p_tail <= tolerance,
        moment_q_bounded=bool(np.isfinite(q_sup) and q_sup <= moment_cap),
    )
    log.debug("sw convergence: narrow=%.3e p-gap=%.3e q-sup=%.3e verdict=%s",
              narrow_tail, p_tail, q_sup, report.verdict)
    return report


def opial_terms(seq, limit, probe, window=None):
    if not seq.dim == limit.dim == probe.dim:
        raise SequenceError("sequence, limit and probe must share one dimension")
    window = window or default_window(len(seq))
    to_probe = [w2_squared(mu, probe) for mu in seq]
    to_limit = [w2_squared(mu, limit) for mu in seq]
    return OpialTerms(
        to_probe=to_probe,
        to_limit=to_limit,
        probe_to_limit=w2_squared(probe, limit),
        liminf_to_probe=tail_liminf(to_probe, window),
        liminf_to_limit=tail_liminf(to_limit, window),
        window=window,
    )


def opial_residual(seq, limit, probe, window=None):
    """liminf W2^2(mu_n, probe) - W2^2(probe, limit) - liminf W2^2(mu_n, limit).

    The Opial inequality predicts a nonnegative value for every probe.
    """
    return opial_terms(seq, limit, probe, window).residual


def hilbert_opial_residual(points, limit_point, probe_point, window=None):
    """Point version: liminf |x_n - y|^2 - |y - x|^2 - liminf |x_n - x|^2."""
    xs = np.atleast_2d(np.asarray(points, dtype=float))
    if xs.shape[0] == 1 and np.ndim(points) == 1:
        xs = xs.T
    x = np.atleast_1d(np.asarray(limit_point, dtype=float))
    y = np.atleast_1d(np.asarray(probe_point, dtype=float))
    window = window or default_window(xs.shape[0])
    to_probe = np.sum((xs - y) ** 2, axis=1)
    to_limit = np.sum((xs - x) ** 2, axis=1)
    return (tail_liminf(list(to_probe), window) - float(np.sum((y - x) ** 2))
            - tail_liminf(list(to_limit), window))


def limit_set_probe(trace, candidates, window=None, atol=Config.MONOTONE_ATOL,
                    uniqueness_tol=Config.CONVERGENCE_TOL):
    """Monotone-distance probe of candidate limit points along a trace.

    For each candidate nu, checks that t -> W2(mu(t), nu) is non-increasing
    and records L(nu) = tail minimum of W2(mu(t), nu). Candidates that
    pass should all coincide: the limit of such a trace is unique.
    """
    if not trace:
        raise SequenceError("limit-set probe needs a nonempty trace")
    times = np.array([t for t, _ in trace], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise SequenceError("trace times must be strictly increasing")
    window = window or default_window(len(trace))
    probes = []
    for nu in candidates:
        distances = [w2(mu, nu) for _, mu in trace]
        monotone = bool(np.all(np.diff(distances) <= atol))
        probes.append(CandidateProbe(
            distances=distances,
            monotone=monotone,
            limit_value=tail_liminf(distances, window),
        ))
    passing = [k for k, probe in enumerate(probes) if probe.monotone]
    unique = all(
        w2(candidates[a], candidates[b]) <= uniqueness_tol
        for i, a in enumerate(passing) for b in passing[i + 1:]
    )
    return LimitSetReport(candidates=probes, passing=passing, unique=unique)


# ---------------------------------------------------------------------------
# Sequence constructions
# ---------------------------------------------------------------------------

def _unit_rows(rng, shape):
    v = rng.normal(size=shape)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms > 0, norms, 1.0)


def _dirac_drift(limit, n, rng_state, rate):
    return new_discrete(limit.points + rate ** n * rng_state["v"], limit.weights)


def _weight_oscillation(limit, n, rng_state, rate):
    u = rng_state["u"]
    return new_discrete(limit.points, limit.weights + (-1) ** n * rate ** n * u)


def _two_atom_splitting(limit, n, rng_state, rate):
    shift = rate ** n * rng_state["v"]
    points = np.vstack([limit.points + shift, limit.points - shift])
    weights = np.concatenate([limit.weights, limit.weights]) / 2.0
    return new_discrete(points, weights)


def _mass_escape(limit, n, rng_state, rate):
    far = np.sqrt(n) * rng_state["e"]
    points = np.vstack([limit.points, far[None, :]])
    weights = np.concatenate([(1.0 - 1.0 / n) * limit.weights, [1.0 / n]])
    return new_discrete(points, weights)


def _symmetric_spread(limit, n, rng_state, rate):
    norms = np.linalg.norm(limit.points, axis=1, keepdims=True)
    outward = limit.points / np.where(norms > 0, norms, 1.0)
    return new_discrete(limit.points + outward / n, limit.weights)


SEQUENCE_CONSTRUCTIONS = {
    "dirac_drift": _dirac_drift,
    "weight_oscillation": _weight_oscillation,
    "two_atom_splitting": _two_atom_splitting,
    "mass_escape": _mass_escape,
    "symmetric_spread": _symmetric_spread,
}


def build_sequence(construction, limit, length, rng, rate=0.5):
    """Terms n = 1..length of a named construction converging to `limit`.

    dirac_drift, weight_oscillation and two_atom_splitting converge at the
    geometric rate rate**n; symmetric_spread moves atoms outward by 1/n;
    mass_escape sends mass 1/n to distance sqrt(n), so it converges
    narrowly with bounded but non-converging second moments.
    """
    try:
        step = SEQUENCE_CONSTRUCTIONS[construction]
    except KeyError:
        raise SequenceError(
            f"unknown construction {construction!r}; choose from {sorted(SEQUENCE_CONSTRUCTIONS)}"
        ) from None
    u = rng.normal(size=limit.size)
    u = u - u.mean()
    scale = np.max(np.abs(u))
    state = {
        "v": _unit_rows(rng, limit.points.shape),
        "u": u * (limit.weights.min() / scale) if scale > 0 else np.zeros(limit.size),
        "e": _unit_rows(rng, (1, limit.dim))[0],
    }
    return MeasureSequence(tuple(step(limit, n, state, rate) for n in range(1, length + 1)))


def dirac_sequence(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return MeasureSequence(tuple(new_discrete([p], [1.0]) for p in pts))


def sw_canonical_case(name, length=40):
    """The three canonical sequences on R x R used to exercise the sw conditions.

    constant: a fixed two-atom measure. escaping_y: delta_(0, n), whose
    y-moments grow without bound. oscillating_y: an x-atom at 2^-n plus
    mass 2^-n at y = (-1)^n 2^(n/2); narrow limit delta_(0,0), y second
    moments stay equal to 1.
    """
    if name == "constant":
        mu = new_discrete([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5])
        terms, limit = tuple(mu for _ in range(length)), mu
    elif name == "escaping_y":
        terms = tuple(new_discrete([[0.0, float(n)]], [1.0]) for n in range(1, length + 1))
        limit = new_discrete([[0.0, 0.0]], [1.0])
    elif name == "oscillating_y":
        terms = []
        for n in range(1, length + 1):
            eps = 2.0 ** -n
            terms.append(new_discrete(
                [[eps, 0.0], [0.0, 0.0], [0.0, (-1) ** n * 2.0 ** (n / 2.0)]],
                [0.5, 0.5 - eps, eps],
            ))
        terms, limit = tuple(terms), new_discrete([[0.0, 0.0]], [1.0])
    else:
        raise SequenceError(f"unknown canonical case {name!r}")
    return SWCase(name, MeasureSequence(terms), limit, x_dim=1, p=2.0, q=2.0, moment_cap=1e3)
