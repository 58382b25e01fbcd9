import math

import numpy as np
import pytest

from orbitsym.errors import DimensionError, DomainError
from orbitsym.models.tensor import Tensor
from orbitsym.services.group_service import GroupService
from orbitsym.services.invariant_service import InvariantService, power_sum_exponents
from orbitsym.utils.gradcheck import check_gradient

EXPECTED_K = {"o3": 9, "so3": 10, "lorentz13": 16, "sl3": 1, "gl2": 9, "sym2": 6, "sym3": 20, "sym4": 70}
ALL = ["so2", "so3", "o2", "lorentz13", "sl2", "gl2", "sym3"]


def invariant(name, seed=0):
    return InvariantService.for_group(GroupService.parse(name), witness_seed=seed)


@pytest.mark.parametrize("name,k", sorted(EXPECTED_K.items()))
def test_output_dimension(name, k):
    f = invariant(name)
    assert f.k == k
    assert InvariantService.evaluate(f, np.eye(f.group.n)).shape == (k,)


def test_so2_rotation_values():
    f = invariant("so2")
    for theta in (0.0, 0.4, 2.0, 5.5):
        h = GroupService.rotation2d(theta)
        np.testing.assert_allclose(InvariantService.evaluate(f, h).data, [1.0, 0.0, 0.0, 1.0, 1.0], atol=1e-15)


def test_lorentz_identity_gives_metric():
    f = invariant("lorentz13")
    np.testing.assert_array_equal(InvariantService.evaluate(f, np.eye(4)).data, np.diag([1.0, -1, -1, -1]).reshape(-1))


def test_power_sums_on_two_by_two():
    f = invariant("sym2")
    h = np.array([[1.0, 2.0], [3.0, 4.0]])
    exponents = [tuple(int(v) for v in row) for row in power_sum_exponents(2)]
    values = InvariantService.evaluate(f, h).data
    assert values[exponents.index((1, 0))] == 4.0
    assert values[exponents.index((0, 1))] == 6.0
    np.testing.assert_allclose(InvariantService.evaluate(f, h[::-1]).data, values)


def test_power_sum_exponents_are_lexicographic():
    rows = [tuple(r) for r in power_sum_exponents(3)]
    assert rows == sorted(rows)
    assert len(rows) == math.comb(6, 3)
    assert all(sum(r) <= 3 for r in rows)


def test_gl_identity_gives_squared_witness_determinants():
    f = invariant("gl2", seed=3)
    expected = np.linalg.det(f.witnesses) ** 2
    np.testing.assert_allclose(InvariantService.evaluate(f, np.eye(2)).data, expected, rtol=1e-12)


def test_gl_domain_error():
    with pytest.raises(DomainError):
        InvariantService.evaluate(invariant("gl2"), np.array([[1.0, 2.0], [2.0, 4.0]]))


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        InvariantService.evaluate(invariant("so3"), np.eye(2))


@pytest.mark.parametrize("name", ALL)
def test_invariance_under_group_action(name, rng):
    f = invariant(name)
    spec = f.group
    h = rng.standard_normal((100, spec.n, spec.n))
    g = GroupService.sample_elements(spec, rng, 100)
    base = InvariantService.evaluate(f, h).data
    moved = InvariantService.evaluate(f, g @ h).data
    scale = np.maximum(1.0, np.abs(base))
    assert np.max(np.abs(moved - base) / scale) <= 1e-9


def test_witnesses_are_frozen():
    f = invariant("gl2")
    with pytest.raises(ValueError):
        f.witnesses[0, 0, 0] = 1.0


# ================= PROJECTION =================


def test_projection_of_s4_power_sums(rng):
    f = invariant("sym4")
    projected = InvariantService.project(f, seed=11)
    assert f.k == 70 and projected.k == 33
    assert projected.projection.shape == (33, 70)

    spec = f.group
    h = rng.standard_normal((100, 4, 4))
    h2 = rng.standard_normal((100, 4, 4))
    g = GroupService.sample_elements(spec, rng, 100)
    intra = InvariantService.orbit_distance(projected, Tensor(h), Tensor(g @ h)).data
    scale = np.maximum(1.0, np.sum(np.abs(InvariantService.evaluate(projected, h).data), axis=-1))
    assert np.max(intra / scale) <= 1e-9
    inter = InvariantService.orbit_distance(projected, Tensor(h), Tensor(h2)).data
    assert np.min(inter) > 1e-6


def test_projection_is_seeded():
    f = invariant("sym4")
    a = InvariantService.project(f, seed=5)
    b = InvariantService.project(f, seed=5)
    np.testing.assert_array_equal(a.projection, b.projection)


def test_small_invariants_are_not_projected():
    f = invariant("so3")
    assert InvariantService.project(f, seed=1) is f


# ================= DISTANCE AND LOSS =================


def test_distance_examples(rng):
    f = invariant("so2")
    h = rng.standard_normal((2, 2))
    assert InvariantService.orbit_distance(f, h, h).item() == 0.0
    g = GroupService.rotation2d(1.1)
    assert InvariantService.orbit_distance(f, h, g @ h).item() <= 1e-9
    assert InvariantService.orbit_distance(f, np.diag([1.0, -1.0]), np.eye(2)).item() == pytest.approx(2.0)


def test_distance_is_bitwise_symmetric(rng):
    f = invariant("lorentz13")
    a = rng.standard_normal((50, 4, 4))
    b = rng.standard_normal((50, 4, 4))
    np.testing.assert_array_equal(InvariantService.orbit_distance(f, a, b).data,
                                  InvariantService.orbit_distance(f, b, a).data)


def test_loss_examples(rng):
    lorentz = invariant("lorentz13")
    g = GroupService.sample_elements(lorentz.group, rng, 1000)
    assert np.max(InvariantService.orbit_loss(lorentz, g).data) <= 1e-9
    assert InvariantService.orbit_loss(invariant("sl2"), 2.0 * np.eye(2)).item() == pytest.approx(3.0)


def test_l2_loss(rng):
    f = invariant("sl2")
    assert InvariantService.orbit_loss(f, 2.0 * np.eye(2), norm="l2").item() == pytest.approx(3.0)
    with pytest.raises(ValueError):
        InvariantService.orbit_loss(f, np.eye(2), norm="max")


def test_random_matrix_loss_band(rng):
    f = invariant("lorentz13")
    loss = InvariantService.orbit_loss(f, rng.standard_normal((1000, 4, 4))).data
    assert 10.0 <= np.median(loss) <= 200.0


@pytest.mark.parametrize("name", ["so3", "lorentz13", "sl2", "gl2", "sym3"])
def test_loss_gradient(name, well_conditioned):
    f = invariant(name)
    n = f.group.n
    for h in well_conditioned(20, n=n):
        assert check_gradient(lambda m: InvariantService.orbit_loss(f, m), h) <= 1e-5


def test_loss_gradient_l2(well_conditioned):
    f = invariant("so3")
    for h in well_conditioned(20, n=3):
        assert check_gradient(lambda m: InvariantService.orbit_loss(f, m, norm="l2"), h) <= 1e-5
