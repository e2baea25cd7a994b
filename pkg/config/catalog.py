"""Named catalogues for experiment configs.

Potentials, interaction kernels and measure maps referenced by name from
experiment JSON files. Every callable works on a (n, d) array of points:
values return (n,), gradients and maps return (n, d), proximal maps take
(tau, points). Parameters define the accepted keys with their defaults.
"""

import numpy as np


def _shift(params):
    return np.asarray(params.get('a', 0.0), dtype=float)


def _quadratic(params):
    a = _shift(params)
    return {
        'value': lambda x: 0.5 * np.sum((x - a) ** 2, axis=1),
        'grad': lambda x: x - a,
        'prox': lambda tau, x: (x + tau * a) / (1.0 + tau),
    }


def _abs(params):
    a = _shift(params)

    def grad(x):
        r = x - a
        norms = np.linalg.norm(r, axis=1, keepdims=True)
        return np.where(norms > 0, r / np.where(norms > 0, norms, 1.0), 0.0)

    def prox(tau, x):
        r = x - a
        norms = np.linalg.norm(r, axis=1, keepdims=True)
        shrink = np.maximum(0.0, 1.0 - tau / np.where(norms > 0, norms, np.inf))
        return a + shrink * r

    return {
        'value': lambda x: np.linalg.norm(x - a, axis=1),
        'grad': grad,
        'prox': prox,
    }


def _linear(params):
    c = np.asarray(params['c'], dtype=float)
    return {
        'value': lambda x: x @ c,
        'grad': lambda x: np.broadcast_to(c, x.shape).copy(),
        'prox': lambda tau, x: x - tau * c,
    }


def _concave_test(params):
    def prox(tau, x):
        if tau >= 0.5:
            raise ValueError(f"-|x|^2 has no proximal point for tau={tau} >= 1/2")
        return x / (1.0 - 2.0 * tau)

    return {
        'value': lambda x: -np.sum(x * x, axis=1),
        'grad': lambda x: -2.0 * x,
        'prox': prox,
    }


def _zero(params):
    return {
        'value': lambda x: np.zeros(x.shape[0]),
        'grad': np.zeros_like,
        'prox': lambda tau, x: np.array(x, dtype=float),
    }


POTENTIAL_CATALOG = {
    'quadratic': {
        'description': '|x - a|^2 / 2',
        'parameters': [{'id': 'a', 'default': 0.0, 'required': False}],
        'convexity': {'geodesic': True, 'generalized_geodesic': True, 'eulerian_convex': True},
        'build': _quadratic,
    },
    'abs': {
        'description': '|x - a|',
        'parameters': [{'id': 'a', 'default': 0.0, 'required': False}],
        'convexity': {'geodesic': True, 'generalized_geodesic': True, 'eulerian_convex': True},
        'build': _abs,
    },
    'linear': {
        'description': '<c, x>',
        'parameters': [{'id': 'c', 'default': None, 'required': True}],
        'convexity': {'geodesic': True, 'generalized_geodesic': True, 'eulerian_convex': True},
        'build': _linear,
    },
    'concave_test': {
        'description': '-|x|^2 (detector sensitivity check, not convex)',
        'parameters': [],
        'convexity': {'geodesic': False, 'generalized_geodesic': False, 'eulerian_convex': True},
        'build': _concave_test,
    },
    'zero': {
        'description': '0',
        'parameters': [],
        'convexity': {'geodesic': True, 'generalized_geodesic': True, 'eulerian_convex': True},
        'build': _zero,
    },
}


def _quadratic_kernel(params):
    coef = float(params.get('coef', 0.5))
    return {
        'value': lambda z: coef * np.sum(z * z, axis=-1),
        'grad': lambda z: 2.0 * coef * z,
        'coef': coef,
    }


INTERACTION_CATALOG = {
    'quadratic': {
        'description': 'W(z) = coef * |z|^2',
        'parameters': [{'id': 'coef', 'default': 0.5, 'required': False}],
        'convexity': {'geodesic': True, 'generalized_geodesic': True, 'eulerian_convex': False},
        'build': _quadratic_kernel,
    },
}


# ---------------------------------------------------------------------------
# Maps on R^d for fixed-point iteration
# ---------------------------------------------------------------------------

def _contraction(params):
    c = float(params.get('c', 0.5))
    if abs(c) >= 1:
        raise ValueError(f"contraction factor must satisfy |c| < 1, got {c}")
    b = np.asarray(params.get('b', 0.0), dtype=float)
    return lambda x: c * x + b


def _contraction_fixed_point(params, dim):
    c = float(params.get('c', 0.5))
    b = np.broadcast_to(np.asarray(params.get('b', 0.0), dtype=float), (dim,))
    return b / (1.0 - c)


def _rotation(params):
    angle = float(params.get('angle', np.pi / 2.0))
    R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])

    def rotate(x):
        if x.shape[1] != 2:
            raise ValueError(f"planar rotation needs points in R^2, got R^{x.shape[1]}")
        return x @ R.T

    return rotate


def _box_projection(params):
    lower = np.asarray(params.get('lower', -1.0), dtype=float)
    upper = np.asarray(params.get('upper', 1.0), dtype=float)
    if np.any(lower > upper):
        raise ValueError("box projection needs lower <= upper")
    return lambda x: np.clip(x, lower, upper)


def _box_fixed_point(params, dim):
    lower = np.broadcast_to(np.asarray(params.get('lower', -1.0), dtype=float), (dim,))
    upper = np.broadcast_to(np.asarray(params.get('upper', 1.0), dtype=float), (dim,))
    return np.clip(np.zeros(dim), lower, upper)


MAP_CATALOG = {
    'contraction': {
        'description': 'x -> c x + b with |c| < 1',
        'parameters': [{'id': 'c', 'default': 0.5, 'required': False},
                       {'id': 'b', 'default': 0.0, 'required': False}],
        'build': _contraction,
        'fixed_point': _contraction_fixed_point,
    },
    'rotation': {
        'description': 'planar rotation by angle (radians) about the origin',
        'parameters': [{'id': 'angle', 'default': np.pi / 2.0, 'required': False}],
        'build': _rotation,
        'fixed_point': lambda params, dim: np.zeros(dim),
    },
    'box_projection': {
        'description': 'metric projection onto the box [lower, upper]',
        'parameters': [{'id': 'lower', 'default': -1.0, 'required': False},
                       {'id': 'upper', 'default': 1.0, 'required': False}],
        'build': _box_projection,
        'fixed_point': _box_fixed_point,
    },
    'identity': {
        'description': 'x -> x',
        'parameters': [],
        'build': lambda params: (lambda x: np.array(x, dtype=float)),
        'fixed_point': lambda params, dim: np.zeros(dim),
    },
}
