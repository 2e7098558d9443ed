import math

import numpy as np
import pytest

from rnff.analysis import rate_constants
from rnff.exceptions import CapabilityError, ValidationError
from rnff.iteration import (
    IterationTrace,
    certify_truncation,
    estimate_as_rate,
    run_ensemble,
    run_iteration,
    synthesize,
    telescoping_errors,
)
from rnff.linalg import substream
from rnff.operators import (
    Averaged,
    AveragedFamily,
    CustomDirection,
    FiniteFamily,
    GaussianHyperplane,
    HyperplaneProjection,
    OrthoProjection,
    SoftThreshold,
    UniformCoordinateProjection,
)

P1 = OrthoProjection([1.0, 0.0])
P2 = OrthoProjection([0.0, 1.0])
STALL = FiniteFamily((P1,), [1.0])
COORD = FiniteFamily((P1, P2), [0.5, 0.5])


def geometric_trace(norms):
    norms = np.asarray(norms, dtype=float)
    return IterationTrace(
        x0=np.array([norms[0]]),
        residual_norms_sq=norms**2,
        atom_norms_sq=np.zeros(norms.size - 1),
        final_residual=np.array([norms[-1]]),
    )


def first_seed_with_picks(family, picks):
    for seed in range(10_000):
        rows = family.draw(substream(seed, 0), len(picks))
        if all(family.instance(r) is p for r, p in zip(rows, picks)):
            return seed
    raise AssertionError("no seed found")


def test_zero_start_stays_zero():
    tr = run_iteration(GaussianHyperplane(3), np.zeros(3), 10, substream(1, 0), store_atoms=True)
    assert not tr.residual_norms_sq.any()
    assert not tr.atom_norms_sq.any()
    assert not tr.atoms.any()


def test_stalled_projection_trace():
    tr = run_iteration(STALL, [1.0, 1.0], 5, substream(0, 0), store_atoms=True)
    np.testing.assert_array_equal(tr.residual_norms_sq, [2, 1, 1, 1, 1, 1])
    np.testing.assert_array_equal(tr.final_residual, [0.0, 1.0])
    np.testing.assert_array_equal(synthesize(tr, 5), [1.0, 0.0])
    np.testing.assert_array_equal([1.0, 1.0] - synthesize(tr, 5), tr.final_residual)


def test_two_step_exact_synthesis():
    seed = first_seed_with_picks(COORD, [P1, P2])
    tr = run_iteration(COORD, [1.0, 1.0], 2, substream(seed, 0), store_atoms=True)
    np.testing.assert_array_equal(tr.atoms, [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(tr.final_residual, [0.0, 0.0])
    np.testing.assert_array_equal(synthesize(tr, 2), [1.0, 1.0])
    np.testing.assert_array_equal(synthesize(tr, 0), [0.0, 0.0])


def test_synthesize_needs_atoms():
    tr = run_iteration(COORD, [1.0, 1.0], 3, substream(0, 0))
    with pytest.raises(CapabilityError):
        synthesize(tr, 1)
    tr = run_iteration(COORD, [1.0, 1.0], 3, substream(0, 0), store_atoms=True)
    with pytest.raises(ValidationError):
        synthesize(tr, 4)


def test_run_iteration_validation():
    with pytest.raises(ValidationError):
        run_iteration(COORD, [1.0, 1.0, 1.0], 3, substream(0, 0))
    with pytest.raises(ValidationError):
        run_iteration(COORD, [1.0, 1.0], -1, substream(0, 0))


def test_trace_records_stream_key():
    tr = run_iteration(COORD, [1.0, 1.0], 3, substream(11, 4))
    assert (tr.master_seed, tr.trial_index) == (11, 4)


FAMILIES = [
    (COORD, 0.5),
    (GaussianHyperplane(4), 0.5),
    (UniformCoordinateProjection(3), 0.5),
    (AveragedFamily(0.25, GaussianHyperplane(3)), 0.25),
    (AveragedFamily(0.75, CustomDirection(3, target="line")), 0.75),
    (FiniteFamily((SoftThreshold(0.2), Averaged(0.9, HyperplaneProjection([1.0, 2.0]))), [0.5, 0.5]), 0.9),
]


@pytest.mark.parametrize("fam, alpha", FAMILIES, ids=lambda f: type(f).__name__)
def test_telescoping_and_energy_inequality(fam, alpha):
    rng = np.random.default_rng(0)
    for trial in range(20):
        x0 = rng.standard_normal(fam.dim) * 3
        tr = run_iteration(fam, x0, 40, substream(17, trial), store_atoms=True)
        assert telescoping_errors(tr).max() <= 1e-10 * (1 + np.linalg.norm(x0))
        # per step: |F_n|^2 + (1-a)/a |R_n|^2 <= |R_{n-1}|^2
        lhs = tr.atom_norms_sq + (1 - alpha) / alpha * tr.residual_norms_sq[1:]
        assert np.all(lhs <= tr.residual_norms_sq[:-1] + 1e-9)


@pytest.mark.parametrize("fam", [COORD, GaussianHyperplane(5), CustomDirection(2, "uniform-angle", target="line")])
def test_projection_residuals_monotone(fam):
    for trial in range(20):
        tr = run_iteration(fam, np.arange(1.0, fam.dim + 1), 30, substream(3, trial))
        r = np.sqrt(tr.residual_norms_sq)
        assert np.all(r[1:] <= r[:-1] + 1e-12)


def test_reproducible_regardless_of_order():
    fam = GaussianHyperplane(3)
    forward = [run_iteration(fam, [1.0, 2.0, 3.0], 20, substream(8, k)) for k in range(5)]
    backward = [run_iteration(fam, [1.0, 2.0, 3.0], 20, substream(8, k)) for k in reversed(range(5))][::-1]
    for a, b in zip(forward, backward):
        assert a.residual_norms_sq.tobytes() == b.residual_norms_sq.tobytes()


@pytest.mark.parametrize("fam, _", FAMILIES, ids=lambda f: type(f).__name__)
def test_ensemble_matches_single_runs(fam, _):
    x0 = np.linspace(-1.0, 2.0, fam.dim)
    ens = run_ensemble(fam, x0, 15, 12, 21, first_trial=3)
    for i in range(12):
        tr = run_iteration(fam, x0, 15, substream(21, 3 + i))
        np.testing.assert_allclose(ens.residual_norms_sq[i], tr.residual_norms_sq, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(ens.atom_norms_sq[i], tr.atom_norms_sq, rtol=1e-10, atol=1e-13)
        assert ens.trace(i).trial_index == 3 + i


def test_ensemble_parallel_is_bitwise_serial(monkeypatch):
    import rnff.iteration as it

    monkeypatch.setattr(it, "ENSEMBLE_CHUNK", 7)
    fam = GaussianHyperplane(3)
    a = run_ensemble(fam, [1.0, 0.0, 0.0], 10, 50, 4, n_jobs=1)
    b = run_ensemble(fam, [1.0, 0.0, 0.0], 10, 50, 4, n_jobs=4)
    assert a.residual_norms_sq.tobytes() == b.residual_norms_sq.tobytes()
    assert a.final_residuals.tobytes() == b.final_residuals.tobytes()


# -- rates ---------------------------------------------------------------------


def test_rate_of_geometric_sequence():
    tr = geometric_trace(3.0 * 2.0 ** -np.arange(41))
    assert estimate_as_rate([tr], 20)[0] == pytest.approx(-math.log(2), abs=1e-9)


def test_rate_of_stalled_trace_is_zero():
    tr = run_iteration(STALL, [1.0, 1.0], 30, substream(0, 0))
    assert estimate_as_rate([tr], 10) == [0.0]


def test_rate_sentinel_for_exact_zero():
    seed = first_seed_with_picks(COORD, [P1, P2])
    tr = run_iteration(COORD, [1.0, 1.0], 12, substream(seed, 0))
    assert estimate_as_rate([tr], 5) == [-math.inf]


def test_rate_validation():
    tr = geometric_trace([1.0, 0.5, 0.25])
    with pytest.raises(ValidationError):
        estimate_as_rate([tr], 0)
    with pytest.raises(ValidationError):
        estimate_as_rate([tr], 3)


def test_certificate_for_zero_trace():
    seed = first_seed_with_picks(COORD, [P1, P2])
    tr = run_iteration(COORD, [1.0, 1.0], 10, substream(seed, 0))
    # |R_1| = 1 > theta * sqrt(2) ~ 0.948, zero afterwards
    assert certify_truncation(tr, 0.5, 0.1).first_index == 2
    tr = run_iteration(COORD, [0.0, 0.0], 10, substream(seed, 0))
    assert certify_truncation(tr, 0.5, 0.1).first_index == 0


def test_certificate_boundary_inclusive():
    gamma, eps = 0.7, 0.2
    theta = math.exp(-(gamma - eps))
    tr = geometric_trace(2.0 * theta ** np.arange(30))
    cert = certify_truncation(tr, gamma, eps)
    assert cert.first_index == 0
    assert cert.theta == pytest.approx(theta)


def test_certificate_stalled_trace_not_reached():
    tr = run_iteration(STALL, [1.0, 1.0], 200, substream(0, 0))
    for gamma, eps in [(0.5, 0.1), (0.05, 0.04), (2.0, 1.9)]:
        cert = certify_truncation(tr, gamma, eps)
        assert cert.first_index is None and not cert.reached


def test_certificate_finds_last_violation():
    norms = np.array([1.0, 0.9, 0.95, 0.2, 0.05, 0.01])
    cert = certify_truncation(geometric_trace(norms), 0.5, 0.25)
    # theta^n: 1, .78, .61, .47, .37, .29 -> last violation at n = 2
    assert cert.first_index == 3


@pytest.mark.parametrize("eps", [0.0, 0.5, 0.6, -0.1])
def test_certificate_rejects_epsilon(eps):
    with pytest.raises(ValidationError):
        certify_truncation(geometric_trace([1.0, 0.5]), 0.5, eps)


def test_almost_sure_convergence_proxy():
    c = rate_constants(0.5, 0.5)
    n = math.ceil(40 / c.gamma)
    ens = run_ensemble(COORD, [1.0, 1.0], n, 1000, 99)
    alive = np.sqrt(ens.residual_norms_sq[:, n]) > 1e-6 * math.sqrt(2)
    assert alive.mean() <= 0.01
    c = rate_constants(0.5, 1 - 1 / 3)
    n = math.ceil(40 / c.gamma)
    ens = run_ensemble(GaussianHyperplane(3), [1.0, 1.0, 1.0], n, 1000, 99)
    alive = np.sqrt(ens.residual_norms_sq[:, n]) > 1e-6 * math.sqrt(3)
    assert alive.mean() <= 0.01
