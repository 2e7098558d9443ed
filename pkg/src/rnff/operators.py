"""Averaged operators on R^d and distributions over them.

Every instance maps the origin to itself and acts row-wise on arrays of
shape ``(..., d)``, so the same object serves single vectors and batches.

Families expose a two-stage sampling protocol: ``draw`` pulls a fixed number
of raw scalars per sample from an :class:`~rnff.linalg.RngStream`, and
``instance`` (or ``apply_batch``) turns those scalars into operators. Drawing
a block of ``n`` rows consumes exactly the same stream as ``n`` single draws,
which keeps batched and sequential runs on the same random sequence.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ValidationError
from .linalg import as_vector, gram_schmidt

ORTHONORMAL_TOL = 1e-10
UNIT_TOL = 1e-12
PROB_SUM_TOL = 1e-12


def _check_alpha(alpha, allow_one=False):
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0 or alpha > 1.0 or (alpha == 1.0 and not allow_one):
        if alpha == 1.0:
            raise ValidationError(
                "alpha=1 is the nonexpansive endpoint; averaged iterations need alpha in (0, 1) "
                "(the endpoint requires a strict contraction-in-mean assumption instead)"
            )
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


class OperatorInstance:
    """Base class for deterministic maps T: R^d -> R^d with T(0) = 0."""

    #: ``None`` for maps that act on any dimension.
    dim: Optional[int] = None
    linear = True

    def apply(self, u):
        raise NotImplementedError

    def __call__(self, u):
        return self.apply(u)

    def matrix(self, dim=None):
        """Dense matrix of a linear instance."""
        d = self.dim if self.dim is not None else dim
        if d is None:
            raise ValidationError(f"{type(self).__name__} needs an explicit dimension for matrix()")
        if not self.linear:
            raise ValidationError(f"{type(self).__name__} is not linear")
        return self.apply(np.eye(d)).T


@dataclass(frozen=True, eq=False)
class Identity(OperatorInstance):
    dim: Optional[int] = None

    def apply(self, u):
        return np.array(u, dtype=float)


@dataclass(frozen=True, eq=False)
class SoftThreshold(OperatorInstance):
    """Componentwise shrinkage ``sign(u) * max(|u| - lam, 0)``, the prox of ``lam * |.|_1``."""

    lam: float
    dim: Optional[int] = None
    linear = False

    def __post_init__(self):
        lam = float(self.lam)
        if not np.isfinite(lam) or lam < 0:
            raise ValidationError(f"soft-threshold level must be a nonnegative real, got {self.lam}")
        object.__setattr__(self, "lam", lam)

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        return np.sign(u) * np.maximum(np.abs(u) - self.lam, 0.0)


@dataclass(frozen=True, eq=False)
class OrthoProjection(OperatorInstance):
    """Orthogonal projection onto the span of an orthonormal ``basis`` (rows)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.array(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[None, :]
        if B.ndim != 2 or B.shape[0] == 0 or B.shape[1] == 0:
            raise ValidationError("projection basis must be a non-empty list of vectors")
        if not np.all(np.isfinite(B)):
            raise ValidationError("projection basis has non-finite entries")
        gram = B @ B.T
        if np.max(np.abs(gram - np.eye(B.shape[0]))) > ORTHONORMAL_TOL:
            raise ValidationError("projection basis is not orthonormal; use OrthoProjection.from_span")
        B.setflags(write=False)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "dim", B.shape[1])

    @classmethod
    def from_span(cls, vectors):
        return cls(gram_schmidt(vectors))

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        return (u @ self.basis.T) @ self.basis


@dataclass(frozen=True, eq=False)
class HyperplaneProjection(OperatorInstance):
    """Projection ``u - <a, u> a`` onto the hyperplane orthogonal to ``direction``.

    The direction is normalized at construction; a zero direction is rejected.
    """

    direction: np.ndarray

    def __post_init__(self):
        a = as_vector(self.direction, name="hyperplane direction").copy()
        nrm = np.linalg.norm(a)
        if nrm == 0.0:
            raise ValidationError("hyperplane direction must be nonzero")
        a /= nrm
        a.setflags(write=False)
        object.__setattr__(self, "direction", a)
        object.__setattr__(self, "dim", a.size)

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        return u - (u @ self.direction)[..., None] * self.direction


@dataclass(frozen=True, eq=False)
class Averaged(OperatorInstance):
    """The relaxation ``(1 - alpha) I + alpha N`` of a nonexpansive ``inner`` map."""

    alpha: float
    inner: OperatorInstance

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        if not isinstance(self.inner, OperatorInstance):
            raise ValidationError("Averaged.inner must be an OperatorInstance")
        object.__setattr__(self, "dim", self.inner.dim)

    @property
    def linear(self):
        return self.inner.linear

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        return (1.0 - self.alpha) * u + self.alpha * self.inner.apply(u)


def apply(op, u):
    """Evaluate ``op`` at the vector ``u``."""
    u = as_vector(u, dim=op.dim, name="input vector")
    return op.apply(u)


def averaged_wrap(alpha, inner):
    return Averaged(alpha, inner)


def check_lemma31(op, alpha, u):
    """Slack in ``|Tu|^2 + (1-alpha)/alpha |u - Tu|^2 <= |u|^2``.

    Nonnegative whenever ``op`` is ``alpha``-averaged and fixes the origin.
    """
    alpha = _check_alpha(alpha)
    u = as_vector(u, dim=op.dim, name="input vector")
    tu = op.apply(u)
    r = u - tu
    return float(u @ u - tu @ tu - (1.0 - alpha) / alpha * (r @ r))


# ---------------------------------------------------------------------------
# families


class OperatorFamily:
    """A probability distribution over operator instances on R^dim."""

    dim: int
    #: raw scalars consumed per sample
    width: int

    def draw(self, rng, n):
        """Raw scalars for ``n`` samples, shape ``(n, width)``."""
        raise NotImplementedError

    def instance(self, row):
        """Operator instance encoded by one row of :meth:`draw`."""
        raise NotImplementedError

    def apply_batch(self, rows, U):
        """Apply the instance of ``rows[i]`` to ``U[i]`` for every ``i``."""
        return np.array([self.instance(r).apply(u) for r, u in zip(rows, U)])

    def support(self):
        """``[(instance, prob), ...]`` for finitely supported families, else ``None``."""
        return None

    def sample(self, rng):
        return self.instance(self.draw(rng, 1)[0])


def sample(family, rng):
    return family.sample(rng)


@dataclass(frozen=True, eq=False)
class FiniteFamily(OperatorFamily):
    instances: tuple
    probs: np.ndarray
    dim: Optional[int] = None
    width = 1

    def __post_init__(self):
        instances = tuple(self.instances)
        if not instances:
            raise ValidationError("finite family needs at least one instance")
        for op in instances:
            if not isinstance(op, OperatorInstance):
                raise ValidationError(f"finite family member {op!r} is not an OperatorInstance")
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size != len(instances):
            raise ValidationError(f"need one probability per instance ({len(instances)}), got {p.size}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValidationError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
        dims = {op.dim for op in instances if op.dim is not None}
        if self.dim is not None:
            dims.add(int(self.dim))
        if len(dims) > 1:
            raise ValidationError(f"family members disagree on dimension: {sorted(dims)}")
        if not dims:
            raise ValidationError("dimension-free instances only; pass dim= explicitly")
        cum = np.cumsum(p)
        cum[int(np.flatnonzero(p > 0)[-1]):] = 1.0
        p.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "dim", dims.pop())
        object.__setattr__(self, "_cum", cum)

    def pick(self, uniforms):
        """Instance indices for uniforms in [0, 1) by inverse CDF."""
        return np.searchsorted(self._cum, uniforms, side="right")

    def draw(self, rng, n):
        return rng.random((n, 1))

    def instance(self, row):
        return self.instances[int(self.pick(row[0]))]

    def apply_batch(self, rows, U):
        idx = self.pick(rows[:, 0])
        out = np.empty_like(U, dtype=float)
        for j in np.unique(idx):
            mask = idx == j
            out[mask] = self.instances[j].apply(U[mask])
        return out

    def support(self):
        return list(zip(self.instances, self.probs.tolist()))


@dataclass(frozen=True, eq=False)
class GaussianHyperplane(OperatorFamily):
    """Hyperplane projections with isotropic directions ``a / |a|``, ``a ~ N(0, I)``."""

    dim: int

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))

    @property
    def width(self):
        return self.dim

    def draw(self, rng, n):
        return rng.standard_normal((n, self.dim))

    def instance(self, row):
        return HyperplaneProjection(row)

    def apply_batch(self, rows, U):
        A = _unit_rows(rows)
        return U - np.sum(U * A, axis=1)[:, None] * A


@dataclass(frozen=True, eq=False)
class UniformCoordinateProjection(OperatorFamily):
    """Projection onto a coordinate axis chosen uniformly at random."""

    dim: int
    width = 1

    def __post_init__(self):
        object.__setattr__(self, "dim", _check_dim(self.dim))

    def _axis(self, uniforms):
        return np.minimum((np.asarray(uniforms) * self.dim).astype(int), self.dim - 1)

    def draw(self, rng, n):
        return rng.random((n, 1))

    def instance(self, row):
        return OrthoProjection(np.eye(self.dim)[int(self._axis(row[0]))])

    def apply_batch(self, rows, U):
        ax = self._axis(rows[:, 0])
        out = np.zeros_like(U, dtype=float)
        r = np.arange(U.shape[0])
        out[r, ax] = U[r, ax]
        return out

    def support(self):
        eye = np.eye(self.dim)
        return [(OrthoProjection(eye[i]), 1.0 / self.dim) for i in range(self.dim)]


@dataclass(frozen=True, eq=False)
class AveragedFamily(OperatorFamily):
    """Every sample of ``base`` relaxed to ``(1 - alpha) I + alpha T``."""

    alpha: float
    base: OperatorFamily

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))
        if not isinstance(self.base, OperatorFamily):
            raise ValidationError("AveragedFamily.base must be an OperatorFamily")

    @property
    def dim(self):
        return self.base.dim

    @property
    def width(self):
        return self.base.width

    def draw(self, rng, n):
        return self.base.draw(rng, n)

    def instance(self, row):
        return Averaged(self.alpha, self.base.instance(row))

    def apply_batch(self, rows, U):
        return (1.0 - self.alpha) * U + self.alpha * self.base.apply_batch(rows, U)

    def support(self):
        inner = self.base.support()
        if inner is None:
            return None
        return [(Averaged(self.alpha, op), p) for op, p in inner]


DIRECTION_DISTRIBUTIONS = ("gaussian", "uniform-angle")
DIRECTION_TARGETS = ("hyperplane", "line")


@dataclass(frozen=True, eq=False)
class CustomDirection(OperatorFamily):
    """Projections built from a random direction ``a``.

    ``distribution`` is ``"gaussian"`` (``a = scales * z`` with ``z ~ N(0, I)``;
    unit scales give isotropic directions, zero scales confine ``a`` to a
    coordinate subspace) or ``"uniform-angle"`` (``a = (cos t, sin t)``,
    ``t`` uniform on ``[0, 2 pi)``; ``dim`` must be 2). ``target`` selects the
    projection onto the hyperplane ``a^perp`` or onto the line ``span(a)``.
    """

    dim: int
    distribution: str = "gaussian"
    scales: Optional[np.ndarray] = None
    target: str = "hyperplane"

    def __post_init__(self):
        d = _check_dim(self.dim)
        object.__setattr__(self, "dim", d)
        if self.distribution not in DIRECTION_DISTRIBUTIONS:
            raise ValidationError(f"unknown direction distribution {self.distribution!r}")
        if self.target not in DIRECTION_TARGETS:
            raise ValidationError(f"unknown projection target {self.target!r}")
        if self.distribution == "uniform-angle" and d != 2:
            raise ValidationError("uniform-angle directions are defined in dimension 2 only")
        if self.distribution == "gaussian":
            s = np.ones(d) if self.scales is None else as_vector(self.scales, dim=d, name="scales")
            if not np.any(s != 0):
                raise ValidationError("scales must not all be zero")
            s = np.array(s)
            s.setflags(write=False)
            object.__setattr__(self, "scales", s)

    @property
    def width(self):
        return self.dim if self.distribution == "gaussian" else 1

    def draw(self, rng, n):
        if self.distribution == "gaussian":
            return rng.standard_normal((n, self.dim))
        return rng.random((n, 1))

    def directions(self, rows):
        rows = np.asarray(rows, dtype=float)
        if self.distribution == "gaussian":
            return _unit_rows(rows * self.scales)
        t = 2.0 * np.pi * rows[:, 0]
        return np.column_stack([np.cos(t), np.sin(t)])

    def instance(self, row):
        a = self.directions(np.asarray(row)[None, :])[0]
        if self.target == "hyperplane":
            return HyperplaneProjection(a)
        return OrthoProjection(a)

    def apply_batch(self, rows, U):
        A = self.directions(rows)
        along = np.sum(U * A, axis=1)[:, None] * A
        return U - along if self.target == "hyperplane" else along


def _check_dim(d):
    if isinstance(d, bool) or int(d) != d or int(d) < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d!r}")
    return int(d)


def _unit_rows(rows):
    nrm = np.linalg.norm(rows, axis=1)
    if np.any(nrm == 0.0):
        raise ValidationError("drew a zero direction")
    return rows / nrm[:, None]
