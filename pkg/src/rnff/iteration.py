"""Residual-driven random iterations and their synthesis.

Starting from ``R_0 = x``, each step draws ``T_n`` from a family and splits
the current residual into an atom and a new residual::

    F_n = T_n(R_{n-1}),    R_n = R_{n-1} - F_n,

so that ``x = F_1 + ... + F_n + R_n`` for every ``n``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .exceptions import CapabilityError, ValidationError
from .linalg import as_vector, substream

#: trials per work unit in :func:`run_ensemble`; fixed so results do not
#: depend on the number of workers
ENSEMBLE_CHUNK = 4096


@dataclass
class IterationTrace:
    x0: np.ndarray
    residual_norms_sq: np.ndarray
    atom_norms_sq: np.ndarray
    final_residual: np.ndarray
    atoms: Optional[np.ndarray] = None
    residuals: Optional[np.ndarray] = None
    master_seed: Optional[int] = None
    trial_index: Optional[int] = None

    @property
    def n_steps(self):
        return len(self.atom_norms_sq)

    @property
    def cumulative_energy(self):
        return np.cumsum(self.atom_norms_sq)


@dataclass
class TruncationCertificate:
    gamma: float
    epsilon: float
    theta: float
    first_index: Optional[int]
    horizon: int

    @property
    def reached(self):
        return self.first_index is not None


def run_iteration(family, x0, n_steps, rng, store_atoms=False):
    """Run one trajectory of ``n_steps`` i.i.d. draws from ``family``.

    All ``n_steps`` draws are taken from ``rng`` up front, so the stream
    position afterwards does not depend on when the residual hits zero.
    """
    x0 = as_vector(x0, dim=family.dim, name="x0")
    n_steps = _check_steps(n_steps)
    rows = family.draw(rng, n_steps)
    res_sq = np.zeros(n_steps + 1)
    atom_sq = np.zeros(n_steps)
    atoms = np.zeros((n_steps, x0.size)) if store_atoms else None
    residuals = np.zeros((n_steps + 1, x0.size)) if store_atoms else None
    r = np.array(x0)
    res_sq[0] = r @ r
    if store_atoms:
        residuals[0] = r
    for n in range(1, n_steps + 1):
        if res_sq[n - 1] == 0.0:
            # T(0) = 0 for every instance: the rest of the trajectory is zero
            break
        f = family.instance(rows[n - 1]).apply(r)
        r = r - f
        atom_sq[n - 1] = f @ f
        res_sq[n] = r @ r
        if store_atoms:
            atoms[n - 1] = f
            residuals[n] = r
    return IterationTrace(
        x0=x0,
        residual_norms_sq=res_sq,
        atom_norms_sq=atom_sq,
        final_residual=r,
        atoms=atoms,
        residuals=residuals,
        master_seed=getattr(rng, "master_seed", None),
        trial_index=getattr(rng, "stream_index", None),
    )


def synthesize(trace, n):
    """Partial sum ``F_1 + ... + F_n`` of a trace that stored its atoms."""
    if trace.atoms is None:
        raise CapabilityError("trace was recorded without atoms; rerun with store_atoms=True")
    if isinstance(n, bool) or int(n) != n or not 0 <= n <= trace.n_steps:
        raise ValidationError(f"n must be an integer in [0, {trace.n_steps}], got {n!r}")
    return np.sum(trace.atoms[: int(n)], axis=0) if n else np.zeros(trace.x0.size)


def telescoping_errors(trace):
    """``|x0 - S_n - R_n|`` for n = 0..N, using the stored residual vectors."""
    if trace.atoms is None or trace.residuals is None:
        raise CapabilityError("trace was recorded without atoms; rerun with store_atoms=True")
    return np.array(
        [np.linalg.norm(trace.x0 - synthesize(trace, n) - trace.residuals[n]) for n in range(trace.n_steps + 1)]
    )


def estimate_as_rate(traces, window):
    """Tail log-slope ``(1/w) log(|R_N| / |R_{N-w}|)`` for each trace.

    A residual that reaches exactly zero inside the window gives ``-inf``.
    """
    if isinstance(window, bool) or int(window) != window or window <= 0:
        raise ValidationError(f"window must be a positive integer, got {window!r}")
    window = int(window)
    slopes = []
    for tr in traces:
        rs = np.asarray(tr.residual_norms_sq, dtype=float)
        if rs.size < window + 1:
            raise ValidationError(f"trace has {rs.size - 1} steps, window needs at least {window}")
        end, start = rs[-1], rs[-1 - window]
        if end == 0.0 or start == 0.0:
            slopes.append(-math.inf)
        else:
            slopes.append(0.5 * (math.log(end) - math.log(start)) / window)
    return slopes


def certify_truncation(trace, gamma, epsilon, rtol=1e-12):
    """Smallest ``N`` with ``|R_n| <= theta^n |x0|`` for all ``N <= n <= horizon``.

    ``theta = exp(-(gamma - epsilon))``. The comparison is inclusive, with a
    relative slack ``rtol`` absorbing roundoff in ``theta^n``.
    """
    gamma = float(gamma)
    epsilon = float(epsilon)
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValidationError(f"gamma must be a positive real, got {gamma}")
    if not 0.0 < epsilon < gamma:
        raise ValidationError(f"epsilon must lie in (0, gamma) = (0, {gamma}), got {epsilon}")
    theta = math.exp(-(gamma - epsilon))
    rs = np.sqrt(np.asarray(trace.residual_norms_sq, dtype=float))
    horizon = rs.size - 1
    bound = theta ** np.arange(horizon + 1) * rs[0]
    bad = np.flatnonzero(rs > bound * (1.0 + rtol))
    if bad.size == 0:
        first = 0
    elif bad[-1] == horizon:
        first = None
    else:
        first = int(bad[-1]) + 1
    return TruncationCertificate(gamma=gamma, epsilon=epsilon, theta=theta, first_index=first, horizon=horizon)


@dataclass
class EnsembleResult:
    """Norm histories of many independent trajectories from a common ``x0``.

    Trial ``i`` uses ``substream(master_seed, first_trial + i)``.
    """

    x0: np.ndarray
    residual_norms_sq: np.ndarray  # (trials, n_steps + 1)
    atom_norms_sq: np.ndarray  # (trials, n_steps)
    final_residuals: np.ndarray  # (trials, d)
    master_seed: int
    first_trial: int = 0

    @property
    def n_trials(self):
        return self.residual_norms_sq.shape[0]

    def trace(self, i):
        return IterationTrace(
            x0=self.x0,
            residual_norms_sq=self.residual_norms_sq[i],
            atom_norms_sq=self.atom_norms_sq[i],
            final_residual=self.final_residuals[i],
            master_seed=self.master_seed,
            trial_index=self.first_trial + i,
        )

    def traces(self) -> List[IterationTrace]:
        return [self.trace(i) for i in range(self.n_trials)]

    def mean_residual_sq(self):
        """Monte Carlo mean and standard error of ``|R_n|^2`` for each n."""
        return _mean_se(self.residual_norms_sq)

    def mean_atom_sq(self):
        return _mean_se(self.atom_norms_sq)

    def mean_cumulative_energy(self):
        return _mean_se(np.cumsum(self.atom_norms_sq, axis=1))


def _mean_se(a):
    n = a.shape[0]
    mean = a.mean(axis=0)
    se = a.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def run_ensemble(family, x0, n_steps, n_trials, master_seed, first_trial=0, n_jobs=1):
    """Vectorized batch of independent trajectories, one substream per trial.

    Trial ``k`` sees the same random draws as
    ``run_iteration(family, x0, n_steps, substream(master_seed, k))``. Trials
    are processed in fixed chunks, so the output is bitwise identical for any
    ``n_jobs``.
    """
    x0 = as_vector(x0, dim=family.dim, name="x0")
    n_steps = _check_steps(n_steps)
    if isinstance(n_trials, bool) or int(n_trials) != n_trials or n_trials < 1:
        raise ValidationError(f"n_trials must be a positive integer, got {n_trials!r}")
    n_trials = int(n_trials)
    starts = list(range(first_trial, first_trial + n_trials, ENSEMBLE_CHUNK))

    def work(start):
        stop = min(start + ENSEMBLE_CHUNK, first_trial + n_trials)
        return _run_chunk(family, x0, n_steps, master_seed, start, stop)

    if n_jobs == 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            parts = list(pool.map(work, starts))
    res, atom, fin = (np.concatenate(p) for p in zip(*parts))
    return EnsembleResult(x0, res, atom, fin, int(master_seed), first_trial)


def _run_chunk(family, x0, n_steps, master_seed, start, stop):
    t = stop - start
    rows = np.empty((t, n_steps, family.width))
    for i, k in enumerate(range(start, stop)):
        rows[i] = family.draw(substream(master_seed, k), n_steps)
    R = np.tile(x0, (t, 1))
    res = np.zeros((t, n_steps + 1))
    atom = np.zeros((t, n_steps))
    res[:, 0] = np.sum(R * R, axis=1)
    for n in range(n_steps):
        F = family.apply_batch(rows[:, n, :], R)
        R = R - F
        atom[:, n] = np.sum(F * F, axis=1)
        res[:, n + 1] = np.sum(R * R, axis=1)
    return res, atom, R


def _check_steps(n_steps):
    if isinstance(n_steps, bool) or int(n_steps) != n_steps or n_steps < 0:
        raise ValidationError(f"n_steps must be a nonnegative integer, got {n_steps!r}")
    return int(n_steps)
