"""Small fixed-dimension linear algebra for the magnetization model.

Vectors are float64 numpy arrays of shape (3,), matrices of shape (3, 3).
Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import numpy as np

Vec3 = np.ndarray
Mat3 = np.ndarray


def vec3(x1: float, x2: float, x3: float) -> Vec3:
    """Build a finite 3-vector; rejects NaN/Inf components."""
    v = np.array([x1, x2, x3], dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector components: {v}")
    return v


def as_vec3(v) -> Vec3:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector components: {v}")
    return v


def norm(v: Vec3) -> float:
    return float(np.sqrt(v @ v))


def normalize(v: Vec3) -> Vec3:
    n = norm(v)
    if n == 0.0:
        raise ZeroDivisionError("cannot normalize the zero vector")
    return v / n


def require_unit(v: Vec3, tol: float = 1e-9, name: str = "mu") -> None:
    """Entry check used by the drift/diffusion fields.

    A violation here means the caller let a state drift off the sphere,
    i.e. the integrator failed to renormalize.
    """
    n = norm(v)
    if abs(n - 1.0) > tol:
        raise ValueError(f"{name} must be a unit vector: |{name}| = {n!r}")


def cross(a: Vec3, b: Vec3) -> Vec3:
    """Cross product a ^ b, expanded componentwise."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def outer(a: Vec3, b: Vec3) -> Mat3:
    return np.outer(a, b)


def lmat(x: Vec3) -> Mat3:
    """Antisymmetric matrix of the cross product: lmat(x) @ y == cross(x, y)."""
    return np.array(
        [
            [0.0, -x[2], x[1]],
            [x[2], 0.0, -x[0]],
            [-x[1], x[0], 0.0],
        ]
    )


def amat(x: Vec3, alpha: float) -> Mat3:
    """The combined operator alpha*I - alpha*x x^T - L(x).

    Applied to a field vector it produces both the precession and the
    damping term in one matrix-vector product:
    amat(mu, alpha) @ u == -cross(mu, u) - alpha * cross(mu, cross(mu, u))
    for unit mu.
    """
    return alpha * np.eye(3) - alpha * outer(x, x) - lmat(x)
