"""Feature-space and score-space exports for plotting: 2-D PCA projection of
penultimate features and the score-triple scatter for 3-class runs."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError

PCA_TOL = 1e-9
PCA_MAX_ITER = 10000

# internal seed for the power-iteration start vector; fixed for determinism
_PCA_START_SEED = 0x5EED


@dataclass(frozen=True)
class Projection2D:
    points: np.ndarray            # (n, 2)
    groups: tuple | None          # one tag per point, carried through for export
    explained_variance: tuple     # two non-negative floats, descending


def _power_iteration(matvec, dim, tol, max_iter, rng):
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            return np.zeros(dim), 0.0  # operator annihilates the start vector
        w /= norm
        if np.linalg.norm(w - v) < tol:
            return w, float(w @ matvec(w))
        v = w
    raise NumericError("power iteration did not converge")


def _fix_sign(v: np.ndarray) -> np.ndarray:
    for x in v:
        if x != 0.0:
            return -v if x < 0 else v
    return v


def pca_2d(features: np.ndarray, groups=None, *, tol: float = PCA_TOL,
           max_iter: int = PCA_MAX_ITER) -> Projection2D:
    """Project rows onto the top two principal axes of the sample covariance.

    Eigenpairs come from power iteration with deflation; each eigenvector is
    normalized so its first nonzero coordinate is positive. Data of rank < 2
    yields a zeroed second component and a warning.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("features must be 2-D")
    n, d = x.shape
    if n < 3 or d < 2:
        raise ShapeError(f"need at least 3 rows and 2 columns, got {x.shape}")
    if groups is not None and len(groups) != n:
        raise ValueError("one group tag per row required")

    centered = x - x.mean(axis=0)
    total_var = float((centered * centered).sum()) / (n - 1)

    def cov_matvec(v):
        return centered.T @ (centered @ v) / (n - 1)

    rng = np.random.Generator(np.random.PCG64(_PCA_START_SEED))
    v1, lam1 = _power_iteration(cov_matvec, d, tol, max_iter, rng)
    if lam1 <= 0.0:
        warnings.warn("data has rank < 1; projection components zeroed")
        zeros = np.zeros((n, 2))
        return Projection2D(zeros, tuple(groups) if groups is not None else None, (0.0, 0.0))

    # variance unexplained by the first axis; at numerical rank < 2 this is
    # pure rounding noise and iterating the deflated operator would not settle
    residual_var = total_var - lam1
    if residual_var <= 1e-12 * total_var:
        warnings.warn("data has rank < 2; second projection component zeroed")
        v2, lam2 = np.zeros(d), 0.0
    else:
        def deflated(v):
            return cov_matvec(v) - lam1 * (v1 @ v) * v1

        v2, lam2 = _power_iteration(deflated, d, tol, max_iter, rng)
        lam2 = max(lam2, 0.0)

    v1 = _fix_sign(v1)
    v2 = _fix_sign(v2)
    points = np.column_stack([centered @ v1, centered @ v2])
    return Projection2D(
        points,
        tuple(groups) if groups is not None else None,
        (float(lam1), float(lam2)),
    )


@dataclass(frozen=True)
class SimplexScatter:
    """Per-sample class-score triples with an in/out-of-distribution tag.

    Softmax-based methods give simplex triples (sum 1); the fused OVA*AVA
    scores are unconstrained products, which is what pulls OOD points toward
    the origin.
    """

    triples: np.ndarray
    tags: tuple


def simplex_scatter(id_triples: np.ndarray, ood_triples: np.ndarray) -> SimplexScatter:
    id_triples = np.asarray(id_triples, dtype=np.float64)
    ood_triples = np.asarray(ood_triples, dtype=np.float64)
    for name, arr in (("id", id_triples), ("ood", ood_triples)):
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ShapeError(f"{name} scores must be (n, 3), got {arr.shape}")
    triples = np.vstack([id_triples, ood_triples])
    tags = ("id",) * len(id_triples) + ("ood",) * len(ood_triples)
    return SimplexScatter(triples, tags)


def write_projection_csv(projection: Projection2D, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "group"])
        groups = projection.groups or [""] * len(projection.points)
        for (px, py), g in zip(projection.points, groups):
            writer.writerow([repr(float(px)), repr(float(py)), g])


def write_simplex_csv(scatter: SimplexScatter, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p0", "p1", "p2", "tag"])
        for row, tag in zip(scatter.triples, scatter.tags):
            writer.writerow([repr(float(v)) for v in row] + [tag])
