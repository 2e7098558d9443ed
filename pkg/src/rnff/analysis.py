"""Rate constants, coercivity estimators and bound verification.

Closed-form routes give the coercivity constant ``C`` (the largest ``C`` with
``E|T u|^2 >= C |u|^2``) for projection families: ``lambda_min(G)`` with
``G = E[P_V]``, ``1 - lambda_max(Sigma)`` for hyperplane projections and
``(1-a)^2 + (2a - a^2) lambda_min(G)`` for averaged projections. From ``C``
and the averaging parameter ``alpha`` follow the mean-square contraction
factor ``rho``, the almost-sure rate ``gamma`` and the upper frame-energy
constant ``U_alpha``.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import BudgetExceededError, CapabilityError, InadmissibleConstantsError, ValidationError
from .iteration import run_ensemble
from .linalg import as_vector, sym_eig_extremes
from .operators import (
    AveragedFamily,
    CustomDirection,
    FiniteFamily,
    GaussianHyperplane,
    HyperplaneProjection,
    OrthoProjection,
    UniformCoordinateProjection,
    _check_alpha,
)

ENUMERATION_BUDGET = 10**7
EXACT_TOL = 1e-9
MC_SIGMAS = 3.0
ENERGY_STOP_RTOL = 1e-12


@dataclass(frozen=True)
class RateConstants:
    alpha: float
    C: float
    rho: float
    gamma: Optional[float]
    U_alpha: Optional[float]
    admissible: bool


def rate_constants(alpha, C):
    """Constants of the random ``alpha``-averaged iteration with coercivity ``C``.

    ``C`` on the closed interval [0, 1] is accepted so that degenerate
    families can be reported; only ``0 < C < 1`` with ``rho < 1`` is
    admissible, and ``gamma``/``U_alpha`` are ``None`` otherwise.
    """
    alpha = _check_alpha(alpha)
    C = float(C)
    if not np.isfinite(C) or C < 0.0 or C > 1.0:
        raise ValidationError(f"coercivity constant must lie in [0, 1], got {C}")
    rho = alpha / (1.0 - alpha) * (1.0 - C)
    admissible = 0.0 < C < 1.0 and rho < 1.0
    if not admissible:
        return RateConstants(alpha, C, rho, None, None, False)
    gamma = -0.5 * math.log(rho)
    if alpha <= 0.5:
        upper = 1.0
    else:
        upper = 1.0 + (2.0 * alpha - 1.0) / alpha * rho / (1.0 - rho)
    return RateConstants(alpha, C, rho, gamma, upper, True)


def predicted_averaged_C(alpha, lambda_min_G):
    """Coercivity of ``(1 - alpha) I + alpha P_V`` given ``lambda_min(E[P_V])``."""
    alpha = _check_alpha(alpha, allow_one=True)
    lam = float(lambda_min_G)
    if not np.isfinite(lam) or lam < -EXACT_TOL or lam > 1.0 + EXACT_TOL:
        raise ValidationError(f"lambda_min(G) must lie in [0, 1], got {lam}")
    lam = min(max(lam, 0.0), 1.0)
    return (1.0 - alpha) ** 2 + (2.0 * alpha - alpha**2) * lam


# ---------------------------------------------------------------------------
# mean operators


@dataclass
class MeanOperatorEstimate:
    """``G = E[P_V]`` (kind ``"G"``) or ``Sigma = E[a a^T]`` (kind ``"Sigma"``).

    ``n_samples == 0`` marks an exact computation; ``std_error`` is then 0,
    otherwise it is the largest entrywise Monte Carlo standard error.
    """

    kind: str
    matrix: np.ndarray
    lambda_min: float
    lambda_max: float
    derived_C: float
    n_samples: int = 0
    std_error: float = 0.0
    entry_std_error: Optional[np.ndarray] = field(default=None, repr=False)


def _projection_matrix(op):
    if isinstance(op, OrthoProjection):
        return op.basis.T @ op.basis
    if isinstance(op, HyperplaneProjection):
        return np.eye(op.dim) - np.outer(op.direction, op.direction)
    raise CapabilityError(f"mean projection needs orthogonal projections, got {type(op).__name__}")


def _direction_outer(op):
    if isinstance(op, HyperplaneProjection):
        return np.outer(op.direction, op.direction)
    raise CapabilityError(f"second-moment estimate needs hyperplane projections, got {type(op).__name__}")


def _mean_matrix(family, n_samples, rng, to_matrix):
    if isinstance(n_samples, bool) or int(n_samples) != n_samples or n_samples < 0:
        raise ValidationError(f"n_samples must be a nonnegative integer, got {n_samples!r}")
    n_samples = int(n_samples)
    d = family.dim
    if n_samples == 0:
        support = family.support()
        if support is None:
            raise CapabilityError(f"{type(family).__name__} has no finite support; pass n_samples > 0")
        M = np.zeros((d, d))
        for op, p in support:
            M += p * to_matrix(op)
        return M, 0, None
    if rng is None:
        raise ValidationError("Monte Carlo estimate needs an rng stream")
    rows = family.draw(rng, n_samples)
    total = np.zeros((d, d))
    total_sq = np.zeros((d, d))
    for row in rows:
        P = to_matrix(family.instance(row))
        total += P
        total_sq += P * P
    mean = total / n_samples
    if n_samples > 1:
        var = np.maximum(total_sq / n_samples - mean * mean, 0.0) * n_samples / (n_samples - 1)
        se = np.sqrt(var / n_samples)
    else:
        se = np.zeros((d, d))
    return mean, n_samples, se


def _estimate(kind, family, n_samples, rng, to_matrix, c_from):
    M, n, se = _mean_matrix(family, n_samples, rng, to_matrix)
    M = 0.5 * (M + M.T)
    lo, hi = sym_eig_extremes(M)
    return MeanOperatorEstimate(
        kind=kind,
        matrix=M,
        lambda_min=lo,
        lambda_max=hi,
        derived_C=c_from(lo, hi),
        n_samples=n,
        std_error=float(se.max()) if se is not None else 0.0,
        entry_std_error=se,
    )


def estimate_mean_projection(family, n_samples=0, rng=None):
    """``G = E[P_V]`` and ``C = lambda_min(G)``; exact when ``n_samples == 0``."""
    return _estimate("G", family, n_samples, rng, _projection_matrix, lambda lo, hi: max(lo, 0.0))


def estimate_sigma(family, n_samples=0, rng=None):
    """``Sigma = E[a a^T / |a|^2]`` and ``C = 1 - lambda_max(Sigma)``."""
    return _estimate("Sigma", family, n_samples, rng, _direction_outer, lambda lo, hi: min(max(1.0 - hi, 0.0), 1.0))


# ---------------------------------------------------------------------------
# coercivity probe


@dataclass
class ProbeResult:
    """Smallest Monte Carlo ratio ``E|T u|^2 / |u|^2`` over the probes.

    This is a statistical upper estimate of the true infimum over all
    ``u`` and certifies nothing; ``rigorous`` is always ``False``.
    """

    empirical_C: float
    std_error: float
    worst_probe: np.ndarray
    n_probes: int
    n_samples: int
    rigorous: bool = False


def coercivity_probe(family, n_directions, n_samples, rng, probe_norm=1.0):
    """Probe along every coordinate axis plus ``n_directions`` random directions.

    Each probe is scaled to ``probe_norm``, which matters for nonlinear maps.
    """
    if int(n_directions) < 1 or int(n_samples) < 1:
        raise ValidationError("n_directions and n_samples must be at least 1")
    if not (np.isfinite(probe_norm) and probe_norm > 0):
        raise ValidationError(f"probe_norm must be positive, got {probe_norm}")
    d = family.dim
    rows = family.draw(rng, int(n_samples))
    rand = rng.standard_normal((int(n_directions), d))
    rand /= np.linalg.norm(rand, axis=1)[:, None]
    probes = np.vstack([np.eye(d), rand]) * probe_norm
    best = (math.inf, 0.0, None)
    for u in probes:
        U = np.tile(u, (rows.shape[0], 1))
        TU = family.apply_batch(rows, U)
        ratios = np.sum(TU * TU, axis=1) / np.sum(U * U, axis=1)
        mean = float(ratios.mean())
        se = float(ratios.std(ddof=1) / math.sqrt(ratios.size)) if ratios.size > 1 else 0.0
        if mean < best[0]:
            best = (mean, se, u)
    return ProbeResult(best[0], best[1], best[2], probes.shape[0], int(n_samples))


# ---------------------------------------------------------------------------
# choosing a route to C


def projection_kind(family):
    """``"hyperplane"``, ``"projection"`` or ``None`` for the instances a family emits."""
    if isinstance(family, GaussianHyperplane):
        return "hyperplane"
    if isinstance(family, CustomDirection):
        return "hyperplane" if family.target == "hyperplane" else "projection"
    if isinstance(family, UniformCoordinateProjection):
        return "projection"
    if isinstance(family, FiniteFamily):
        if all(isinstance(op, HyperplaneProjection) for op in family.instances):
            return "hyperplane"
        if all(isinstance(op, (OrthoProjection, HyperplaneProjection)) for op in family.instances):
            return "projection"
    return None


@dataclass
class CoercivityRoute:
    C: float
    route: str
    rigorous: bool
    estimate: object


def derive_coercivity(family, n_samples=100_000, rng=None, n_directions=32, probe_norm=1.0):
    """Pick the strongest available route to ``C`` for ``family``.

    Finitely supported families are computed exactly; other projection
    families by Monte Carlo over ``n_samples`` draws from ``rng``. Families
    with no projection structure fall back to :func:`coercivity_probe`.
    """
    exact = family.support() is not None
    ns = 0 if exact else n_samples
    kind = projection_kind(family)
    if kind == "hyperplane":
        est = estimate_sigma(family, ns, rng)
        return CoercivityRoute(est.derived_C, "sigma", exact, est)
    if kind == "projection":
        est = estimate_mean_projection(family, ns, rng)
        return CoercivityRoute(est.derived_C, "mean-projection", exact, est)
    if isinstance(family, AveragedFamily) and projection_kind(family.base) is not None:
        est = estimate_mean_projection(family.base, ns, rng)
        C = predicted_averaged_C(family.alpha, est.lambda_min)
        return CoercivityRoute(C, "averaged-projection", exact, est)
    if rng is None:
        raise ValidationError("probing coercivity needs an rng stream")
    probe = coercivity_probe(family, n_directions, min(n_samples, 10_000), rng, probe_norm)
    return CoercivityRoute(min(max(probe.empirical_C, 0.0), 1.0), "probe", False, probe)


# ---------------------------------------------------------------------------
# exact enumeration oracle


@dataclass
class EnumerationResult:
    """Exact ``E|R_k|^2`` (k = 0..n) and ``E|F_k|^2`` (k = 1..n)."""

    residual_sq: np.ndarray
    atom_sq: np.ndarray
    leaves: int

    @property
    def cumulative_energy(self):
        return np.cumsum(self.atom_sq)


def _check_budget(m, n, budget):
    total = 1
    for _ in range(n):
        total *= m
        if total > budget:
            raise BudgetExceededError(
                f"exact enumeration needs m^n = {m}^{n} leaf branches, over the limit of {budget}"
            )
    return total


def enumerate_expectation(family, x0, n, budget=ENUMERATION_BUDGET):
    """Walk all ``m^n`` operator sequences of a finitely supported family.

    Each branch is weighted by the product of its step probabilities.
    Zero-probability instances and branches whose residual is exactly zero
    are not expanded; both contribute nothing further.
    """
    support = family.support()
    if support is None:
        raise CapabilityError(f"{type(family).__name__} is not finitely supported; use Monte Carlo")
    x0 = as_vector(x0, dim=family.dim, name="x0")
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValidationError(f"n must be a nonnegative integer, got {n!r}")
    n = int(n)
    leaves = _check_budget(len(support), n, budget)
    live = [(op, p) for op, p in support if p > 0.0]
    res = np.zeros(n + 1)
    atom = np.zeros(n)
    stack = [(np.array(x0), 1.0, 0)]
    while stack:
        r, w, depth = stack.pop()
        rr = r @ r
        res[depth] += w * rr
        if depth == n or rr == 0.0:
            continue
        for op, p in reversed(live):
            f = op.apply(r)
            atom[depth] += w * p * (f @ f)
            stack.append((r - f, w * p, depth + 1))
    return EnumerationResult(res, atom, leaves)


# ---------------------------------------------------------------------------
# bound checks


@dataclass
class BoundCheck:
    """Margins ``rho^k |x0|^2 - E|R_k|^2`` against their tolerances."""

    margins: np.ndarray
    tolerances: np.ndarray
    method: str
    passes: bool
    tight: np.ndarray

    @property
    def worst_margin(self):
        return float(np.min(self.margins)) if self.margins.size else 0.0


def _require_admissible(constants):
    if not constants.admissible:
        raise InadmissibleConstantsError(
            f"constants are inadmissible (alpha={constants.alpha}, C={constants.C}, rho={constants.rho}); "
            "bounds need 0 < C < 1 and rho < 1"
        )


def _tolerances(std_errors, size, scale):
    if std_errors is None:
        return np.full(size, EXACT_TOL), "exact-enumeration"
    se = np.asarray(std_errors, dtype=float)
    if se.shape != (size,):
        raise ValidationError("std_errors must match expectations in length")
    # the floor absorbs summation roundoff in zero-variance steps
    return np.maximum(MC_SIGMAS * se, EXACT_TOL * max(scale, 1.0)), "monte-carlo"


def verify_mean_square_bound(expectations, constants, x0_norm_sq, std_errors=None):
    """Check ``E|R_k|^2 <= rho^k |x0|^2`` for k = 0, 1, ...

    Without ``std_errors`` the expectations are taken as exact and the
    tolerance is 1e-9; with them, three standard errors.
    """
    _require_admissible(constants)
    E = np.asarray(expectations, dtype=float)
    bound = constants.rho ** np.arange(E.size) * float(x0_norm_sq)
    margins = bound - E
    tol, method = _tolerances(std_errors, E.size, float(x0_norm_sq))
    return BoundCheck(
        margins=margins,
        tolerances=tol,
        method=method,
        passes=bool(np.all(margins >= -tol)),
        tight=np.abs(margins) <= tol,
    )


@dataclass
class FrameEnergyReport:
    x0_norm_sq: float
    cumulative_energy: np.ndarray
    lower_bound: float
    upper_bound: float
    method: str
    passes: bool
    lower_met_at_first_step: bool
    tolerance: float
    std_errors: Optional[np.ndarray] = None
    stopped_at: Optional[int] = None


def frame_energy_report(family, x0, n, constants, method="exact", n_trials=None, master_seed=None, n_jobs=1):
    """Cumulative expected atom energy against ``[C |x0|^2, U_alpha |x0|^2]``.

    The sum is cut early once an increment drops below ``1e-12 |x0|^2``;
    ``stopped_at`` records the last step kept.
    """
    _require_admissible(constants)
    x0 = as_vector(x0, dim=family.dim, name="x0")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    nsq = float(x0 @ x0)
    if method == "exact":
        incr = enumerate_expectation(family, x0, n).atom_sq
        se = None
        label = "exact-enumeration"
    elif method == "monte-carlo":
        if n_trials is None or master_seed is None:
            raise ValidationError("monte-carlo frame report needs n_trials and master_seed")
        ens = run_ensemble(family, x0, n, n_trials, master_seed, n_jobs=n_jobs)
        incr = ens.atom_norms_sq.mean(axis=0)
        _, se = ens.mean_cumulative_energy()
        label = "monte-carlo"
    else:
        raise ValidationError(f"method must be 'exact' or 'monte-carlo', got {method!r}")
    stop = None
    small = np.flatnonzero(incr < ENERGY_STOP_RTOL * nsq)
    if small.size:
        stop = int(small[0]) + 1
        incr = incr[:stop]
        se = se[:stop] if se is not None else None
    cum = np.cumsum(incr)
    if se is None:
        tol_first = tol_last = EXACT_TOL
    else:
        floor = EXACT_TOL * max(nsq, 1.0)
        tol_first = max(MC_SIGMAS * se[0], floor)
        tol_last = max(MC_SIGMAS * se[-1], floor)
    lower = constants.C * nsq
    upper = constants.U_alpha * nsq
    lower_ok = bool(cum[0] >= lower - tol_first)
    upper_ok = bool(cum[-1] <= upper + tol_last and cum[-1] >= lower - tol_last)
    return FrameEnergyReport(
        x0_norm_sq=nsq,
        cumulative_energy=cum,
        lower_bound=lower,
        upper_bound=upper,
        method=label,
        passes=lower_ok and upper_ok,
        lower_met_at_first_step=lower_ok,
        tolerance=max(tol_first, tol_last),
        std_errors=se,
        stopped_at=stop,
    )
