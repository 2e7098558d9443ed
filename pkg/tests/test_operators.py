import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rnff.exceptions import ValidationError
from rnff.linalg import substream
from rnff.operators import (
    Averaged,
    AveragedFamily,
    CustomDirection,
    FiniteFamily,
    GaussianHyperplane,
    HyperplaneProjection,
    Identity,
    OrthoProjection,
    SoftThreshold,
    UniformCoordinateProjection,
    apply,
    averaged_wrap,
    check_lemma31,
    sample,
)

ALPHAS = [0.1, 0.25, 0.5, 0.75, 0.9]
E1 = OrthoProjection([1.0, 0.0])
E2 = OrthoProjection([0.0, 1.0])


def instances(d, rng):
    """One of each variant on R^d."""
    plane = OrthoProjection.from_span(rng.standard_normal((2, d)))
    return [
        Identity(),
        SoftThreshold(0.7),
        plane,
        HyperplaneProjection(rng.standard_normal(d)),
        Averaged(0.3, HyperplaneProjection(rng.standard_normal(d))),
        Averaged(0.8, SoftThreshold(1.5)),
        Averaged(0.5, Averaged(0.5, plane)),
    ]


# -- apply -----------------------------------------------------------------


def test_apply_examples():
    np.testing.assert_array_equal(apply(HyperplaneProjection([1.0, 0.0]), [3.0, 4.0]), [0.0, 4.0])
    np.testing.assert_allclose(apply(Averaged(0.5, E1), [2.0, 2.0]), [2.0, 1.0])
    np.testing.assert_array_equal(apply(SoftThreshold(1.0), [2.0, -0.5]), [1.0, 0.0])


def test_apply_dimension_mismatch():
    with pytest.raises(ValidationError):
        apply(E1, [1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        apply(E1, [np.nan, 0.0])


def test_hyperplane_normalizes_and_rejects_zero():
    op = HyperplaneProjection([3.0, 4.0])
    assert np.linalg.norm(op.direction) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValidationError):
        HyperplaneProjection([0.0, 0.0])


def test_ortho_projection_requires_orthonormal():
    with pytest.raises(ValidationError):
        OrthoProjection([[1.0, 0.0], [1.0, 1.0]])
    with pytest.raises(ValidationError):
        OrthoProjection([[0.0, 0.0]])


def test_soft_threshold_rejects_negative():
    with pytest.raises(ValidationError):
        SoftThreshold(-1.0)


def test_every_variant_fixes_origin():
    rng = np.random.default_rng(0)
    for op in instances(4, rng):
        np.testing.assert_array_equal(op.apply(np.zeros(4)), np.zeros(4))


def test_matrix_of_linear_instances():
    np.testing.assert_allclose(HyperplaneProjection([1.0, 1.0]).matrix(), 0.5 * np.array([[1, -1], [-1, 1]]))
    np.testing.assert_allclose(Averaged(0.25, E1).matrix(), np.diag([1.0, 0.75]))
    with pytest.raises(ValidationError):
        SoftThreshold(1.0).matrix(2)


# -- averaged_wrap / slack ---------------------------------------------------


def test_averaged_wrap_examples():
    u = np.array([0.3, -1.7])
    np.testing.assert_allclose(apply(averaged_wrap(0.5, Identity()), u), u)
    np.testing.assert_allclose(apply(averaged_wrap(0.25, E1), [4.0, 4.0]), [4.0, 3.0])


@pytest.mark.parametrize("alpha", [1.0, 0.0, -0.5, 1.5, np.nan])
def test_averaged_wrap_rejects_alpha(alpha):
    with pytest.raises(ValidationError):
        averaged_wrap(alpha, E1)


def test_alpha_one_message_names_endpoint():
    with pytest.raises(ValidationError, match="endpoint"):
        averaged_wrap(1.0, E1)


def test_slack_examples():
    assert check_lemma31(SoftThreshold(2.0), 0.5, [0.0, 0.0]) == 0.0
    assert check_lemma31(E1, 0.5, [1.0, 1.0]) == 0.0
    # 4 - 1 - 1
    assert check_lemma31(SoftThreshold(1.0), 0.5, [2.0, 0.0]) == pytest.approx(2.0, abs=1e-15)
    with pytest.raises(ValidationError):
        check_lemma31(E1, 1.0, [1.0, 1.0])


# -- properties ---------------------------------------------------------------


@pytest.mark.parametrize("d", [1, 3, 6])
def test_nonexpansive_random_pairs(d):
    rng = np.random.default_rng(d)
    for op in instances(d, rng):
        scale = rng.uniform(0.1, 5.0, size=(10_000, 1))
        U = rng.standard_normal((10_000, d)) * scale
        V = rng.standard_normal((10_000, d)) * scale
        lhs = np.linalg.norm(op.apply(U) - op.apply(V), axis=1)
        assert np.all(lhs <= np.linalg.norm(U - V, axis=1) + 1e-9), type(op).__name__


vectors = st.integers(1, 6).flatmap(
    lambda d: arrays(np.float64, d, elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False))
)


@settings(max_examples=200, deadline=None)
@given(u=vectors, seed=st.integers(0, 2**32 - 1), lam=st.floats(0, 10))
def test_firm_pythagoras(u, seed, lam):
    rng = np.random.default_rng(seed)
    d = u.size
    ops = [
        SoftThreshold(lam),
        HyperplaneProjection(rng.standard_normal(d)),
        OrthoProjection.from_span(rng.standard_normal((rng.integers(1, d + 1), d))),
    ]
    for op in ops:
        assert check_lemma31(op, 0.5, u) >= -1e-9 * (1.0 + u @ u)


@settings(max_examples=200, deadline=None)
@given(u=vectors, seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from(ALPHAS))
def test_slack_for_averaged_projections(u, seed, alpha):
    rng = np.random.default_rng(seed)
    d = u.size
    for inner in (HyperplaneProjection(rng.standard_normal(d)), OrthoProjection(np.eye(d)[:1])):
        assert check_lemma31(Averaged(alpha, inner), alpha, u) >= -1e-9 * (1.0 + u @ u)


@settings(max_examples=300, deadline=None)
@given(
    uv=st.integers(1, 5).flatmap(
        lambda d: st.tuples(
            arrays(np.float64, d, elements=st.floats(-100, 100)),
            arrays(np.float64, d, elements=st.floats(-100, 100)),
        )
    ),
    alpha=st.floats(0.001, 0.999),
)
def test_convex_combination_identity(uv, alpha):
    u, v = uv
    w = (1 - alpha) * u + alpha * v
    lhs = w @ w
    rhs = (1 - alpha) * (u @ u) + alpha * (v @ v) - alpha * (1 - alpha) * ((u - v) @ (u - v))
    scale = 1.0 + (u @ u) + (v @ v)
    assert abs(lhs - rhs) <= 1e-9 * scale


@settings(max_examples=100, deadline=None)
@given(u=vectors, seed=st.integers(0, 2**32 - 1))
def test_projection_idempotent(u, seed):
    rng = np.random.default_rng(seed)
    d = u.size
    for P in (HyperplaneProjection(rng.standard_normal(d)), OrthoProjection.from_span(rng.standard_normal((1, d)))):
        once = P.apply(u)
        np.testing.assert_allclose(P.apply(once), once, atol=1e-10 * (1 + np.abs(u).max()))


# -- families -----------------------------------------------------------------


def test_finite_family_validation():
    with pytest.raises(ValidationError):
        FiniteFamily((), [])
    with pytest.raises(ValidationError):
        FiniteFamily((E1, E2), [0.5, 0.6])
    with pytest.raises(ValidationError):
        FiniteFamily((E1, E2), [1.5, -0.5])
    with pytest.raises(ValidationError):
        FiniteFamily((E1, OrthoProjection([1.0, 0.0, 0.0])), [0.5, 0.5])
    with pytest.raises(ValidationError):
        FiniteFamily((SoftThreshold(1.0),), [1.0])
    assert FiniteFamily((SoftThreshold(1.0),), [1.0], dim=3).dim == 3


def test_degenerate_family_always_first():
    fam = FiniteFamily((E1, E2), [1.0, 0.0])
    rng = substream(5, 0)
    assert all(sample(fam, rng) is E1 for _ in range(500))
    fam = FiniteFamily((E1, E2), [0.0, 1.0])
    assert all(fam.instance([u]) is E2 for u in [0.0, 0.5, 1.0 - 1e-16])


def test_gaussian_sample_normalized():
    rng = substream(1, 2)
    for _ in range(100):
        op = sample(GaussianHyperplane(3), rng)
        assert abs(np.linalg.norm(op.direction) - 1.0) <= 1e-12


def test_finite_sample_reproducible():
    fam = FiniteFamily((E1, E2), [0.5, 0.5])
    r1, r2 = substream(42, 0), substream(42, 0)
    picks1 = [sample(fam, r1) is E1 for _ in range(200)]
    picks2 = [sample(fam, r2) is E1 for _ in range(200)]
    assert picks1 == picks2
    assert 0 < sum(picks1) < 200


def test_sample_consumes_fixed_width():
    # one block draw of n rows == n single draws
    for fam in (
        FiniteFamily((E1, E2), [0.3, 0.7]),
        GaussianHyperplane(4),
        UniformCoordinateProjection(3),
        CustomDirection(2, "uniform-angle", target="line"),
        AveragedFamily(0.5, GaussianHyperplane(2)),
    ):
        block = fam.draw(substream(9, 1), 25)
        rng = substream(9, 1)
        singles = np.vstack([fam.draw(rng, 1) for _ in range(25)])
        assert block.tobytes() == singles.tobytes()
        assert block.shape == (25, fam.width)


FAMILIES = [
    FiniteFamily((E1, E2, HyperplaneProjection([1.0, 1.0]), SoftThreshold(0.3)), [0.1, 0.2, 0.3, 0.4]),
    GaussianHyperplane(3),
    UniformCoordinateProjection(4),
    AveragedFamily(0.4, UniformCoordinateProjection(2)),
    CustomDirection(3, scales=[1.0, 2.0, 0.0]),
    CustomDirection(3, scales=[1.0, 1.0, 1.0], target="line"),
    CustomDirection(2, "uniform-angle"),
]


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: type(f).__name__)
def test_batch_apply_matches_instances(fam):
    rng = np.random.default_rng(1)
    rows = fam.draw(substream(3, 0), 200)
    U = rng.standard_normal((200, fam.dim))
    batch = fam.apply_batch(rows, U)
    single = np.array([fam.instance(r).apply(u) for r, u in zip(rows, U)])
    np.testing.assert_allclose(batch, single, atol=1e-13)


def test_coordinate_support():
    sup = UniformCoordinateProjection(3).support()
    assert [p for _, p in sup] == pytest.approx([1 / 3] * 3)
    np.testing.assert_array_equal(sup[1][0].apply([5.0, 6.0, 7.0]), [0.0, 6.0, 0.0])
    assert GaussianHyperplane(2).support() is None


def test_custom_direction_validation():
    with pytest.raises(ValidationError):
        CustomDirection(3, "uniform-angle")
    with pytest.raises(ValidationError):
        CustomDirection(2, scales=[0.0, 0.0])
    with pytest.raises(ValidationError):
        CustomDirection(2, target="plane")
    with pytest.raises(ValidationError):
        GaussianHyperplane(0)
