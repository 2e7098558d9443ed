"""Randomized Kaczmarz for consistent linear systems ``A x = b``.

Two rates are reported and they govern different sequences:

* the residual rate ``gamma = 1/2 log(1 / (1 - C))`` with
  ``C = 1 - lambda_max(Sigma)`` controls the random-frame residuals ``R_n``
  (the normal components removed by hyperplane projections);
* ``solver_rate = 1 - lambda_min(Sigma)`` bounds the per-step mean-square
  contraction of the solver error ``x_k - x_true``.

They coincide only when ``Sigma`` is a multiple of the identity.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ValidationError
from .linalg import as_vector, sym_eig_extremes
from .operators import FiniteFamily, HyperplaneProjection

CONSISTENCY_TOL = 1e-10
SAMPLING_MODES = ("uniform", "row-norm")


@dataclass(frozen=True, eq=False)
class LinearSystem:
    rows: np.ndarray
    rhs: np.ndarray
    x_true: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.array(self.rows, dtype=float)
        if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
            raise ValidationError(f"rows must form a non-empty m x d matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("system matrix has non-finite entries")
        zero = np.flatnonzero(~np.any(A != 0.0, axis=1))
        if zero.size:
            raise ValidationError(f"row {int(zero[0])} of the system is zero")
        b = as_vector(self.rhs, dim=A.shape[0], name="right-hand side")
        A.setflags(write=False)
        object.__setattr__(self, "rows", A)
        object.__setattr__(self, "rhs", b)
        if self.x_true is not None:
            xt = as_vector(self.x_true, dim=A.shape[1], name="x_true")
            gap = np.abs(A @ xt - b)
            if np.any(gap > CONSISTENCY_TOL):
                i = int(np.argmax(gap))
                raise ValidationError(f"x_true violates row {i}: |<a_i, x_true> - b_i| = {gap[i]:.3e}")
            object.__setattr__(self, "x_true", xt)

    @property
    def dim(self):
        return self.rows.shape[1]

    @property
    def n_rows(self):
        return self.rows.shape[0]

    def check_consistent(self, tol=CONSISTENCY_TOL):
        """Raise unless ``A x = b`` has a solution (least-squares residual test)."""
        x, *_ = np.linalg.lstsq(self.rows, self.rhs, rcond=None)
        gap = np.abs(self.rows @ x - self.rhs)
        if np.any(gap > tol * (1.0 + np.abs(self.rhs))):
            raise ValidationError(f"system is inconsistent: least-squares residual {np.linalg.norm(gap):.3e}")

    def row_probs(self, sampling):
        if sampling == "uniform":
            return np.full(self.n_rows, 1.0 / self.n_rows)
        if sampling == "row-norm":
            w = np.sum(self.rows**2, axis=1)
            return w / w.sum()
        raise ValidationError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")

    def hyperplane_family(self, sampling="uniform"):
        """The random hyperplane projections the solver applies to its error."""
        p = self.row_probs(sampling)
        return FiniteFamily(tuple(HyperplaneProjection(a) for a in self.rows), p / p.sum())


def load_system(path):
    """Read a system file.

    Layout: a header line ``d m``, then ``m`` lines holding the ``d`` row
    entries followed by ``b_i``, then optionally the keyword ``x_true``
    followed by ``d`` numbers (same or next line). Blank lines and ``#``
    comments are ignored.
    """
    with open(path) as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValidationError(f"{path}: empty system file")
    try:
        d, m = (int(t) for t in lines[0].split())
    except ValueError:
        raise ValidationError(f"{path}:1: header must be two integers 'd m'") from None
    if d < 1 or m < 1:
        raise ValidationError(f"{path}:1: d and m must be positive")
    if len(lines) < 1 + m:
        raise ValidationError(f"{path}: expected {m} row lines, found {len(lines) - 1}")
    data = np.empty((m, d + 1))
    for i in range(m):
        toks = lines[1 + i].split()
        if len(toks) != d + 1:
            raise ValidationError(f"{path}: row {i + 1} has {len(toks)} numbers, expected {d + 1}")
        try:
            data[i] = [float(t) for t in toks]
        except ValueError:
            raise ValidationError(f"{path}: row {i + 1} is not numeric") from None
    rest = " ".join(lines[1 + m :]).split()
    x_true = None
    if rest:
        if rest[0] != "x_true" or len(rest) != d + 1:
            raise ValidationError(f"{path}: trailing content must be 'x_true' followed by {d} numbers")
        try:
            x_true = [float(t) for t in rest[1:]]
        except ValueError:
            raise ValidationError(f"{path}: x_true is not numeric") from None
    system = LinearSystem(data[:, :d], data[:, d], x_true)
    if x_true is None:
        system.check_consistent()
    return system


@dataclass
class SolveTrace:
    """Per-step history of one solve.

    ``error_norms[k] = |x_k - x_true|`` when ``x_true`` is known; otherwise
    ``|<a_i, x_k> - b_i|`` for the row ``i`` drawn at step ``k + 1``.
    """

    error_norms: np.ndarray
    rows_used: np.ndarray
    sampling: str
    kind: str
    master_seed: Optional[int] = None
    stream_index: Optional[int] = None


def solve_rkaczmarz(system, sampling="uniform", x_start=None, n_steps=100, rng=None):
    """Iterate ``x <- x + (b_i - <a_i, x>) / |a_i|^2 * a_i`` with random rows.

    One uniform scalar is drawn per step; row ``i`` is chosen by inverse CDF
    of the sampling distribution.
    """
    if rng is None:
        raise ValidationError("solve_rkaczmarz needs an rng stream")
    if isinstance(n_steps, bool) or int(n_steps) != n_steps or n_steps < 0:
        raise ValidationError(f"n_steps must be a nonnegative integer, got {n_steps!r}")
    n_steps = int(n_steps)
    A, b = system.rows, system.rhs
    x = np.zeros(system.dim) if x_start is None else np.array(as_vector(x_start, dim=system.dim, name="x_start"))
    cum = np.cumsum(system.row_probs(sampling))
    cum[-1] = 1.0
    picks = np.minimum(np.searchsorted(cum, rng.random(n_steps), side="right"), system.n_rows - 1)
    row_sq = np.sum(A**2, axis=1)
    known = system.x_true is not None
    errs = np.empty(n_steps + 1)
    if known:
        errs[0] = np.linalg.norm(x - system.x_true)
    for k, i in enumerate(picks):
        gap = b[i] - A[i] @ x
        if not known:
            errs[k] = abs(gap)
        x = x + (gap / row_sq[i]) * A[i]
        if known:
            errs[k + 1] = np.linalg.norm(x - system.x_true)
    if not known:
        errs = errs[:n_steps]
    trace = SolveTrace(
        error_norms=errs,
        rows_used=picks,
        sampling=sampling,
        kind="error" if known else "row-residual",
        master_seed=getattr(rng, "master_seed", None),
        stream_index=getattr(rng, "stream_index", None),
    )
    return x, trace


@dataclass(frozen=True)
class PredictedRates:
    C: float
    gamma: float
    solver_rate: float
    lambda_min: float
    lambda_max: float


def predicted_rates(system, sampling="uniform"):
    p = system.row_probs(sampling)
    U = system.rows / np.linalg.norm(system.rows, axis=1)[:, None]
    sigma = (U * p[:, None]).T @ U
    sigma = 0.5 * (sigma + sigma.T)
    lo, hi = sym_eig_extremes(sigma)
    C = min(max(1.0 - hi, 0.0), 1.0)
    gamma = 0.5 * math.log(1.0 / (1.0 - C)) if C < 1.0 else math.inf
    return PredictedRates(C=C, gamma=gamma, solver_rate=min(max(1.0 - lo, 0.0), 1.0), lambda_min=lo, lambda_max=hi)
