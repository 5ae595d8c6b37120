"""Random inputs shared by unit and acceptance tests."""

import numpy as np

from stslab.slab3d import reference_points


def random_affine(rng, cond_max=4.0):
    """Random orientation-preserving affine map with bounded condition number."""
    Q1, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    Q2, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    s = np.exp(rng.uniform(0, np.log(cond_max), size=3))
    A = Q1 @ np.diag(s) @ Q2
    if np.linalg.det(A) < 0:
        A[:, 0] *= -1
    return A, rng.normal(size=3)


def random_prism(rng, perturb):
    """Affine image of the reference prism; the top corners are then moved
    by up to ``perturb`` times the smallest singular value of the map."""
    A, b = random_affine(rng)
    R = reference_points()[:6] @ A.T + b
    smin = np.linalg.svd(A, compute_uv=False).min()
    R[3:] += rng.uniform(-perturb, perturb, size=(3, 3)) * smin
    return R
