import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusns.spectral import (
    FieldFormatError,
    FourierVectorField,
    SpaceParams,
    canonical_point,
    curl,
    divergence,
    field_from_dict,
    field_to_dict,
    fractional_laplacian,
    fundamental_domain,
    inner_product,
    leray_project,
    permute,
    random_field,
    reflect,
    sobolev_norm,
)


def pair(d, M, k, c):
    """Field holding v_k = c and its conjugate at -k."""
    c = np.asarray(c, complex)
    return FourierVectorField.from_modes(d, M, {tuple(k): c, tuple(-x for x in k): np.conj(c)})


class TestSpaceParams:
    def test_dimension_at_least_two(self):
        with pytest.raises(ValueError):
            SpaceParams(1, 0.7)

    def test_admissibility_windows(self):
        assert SpaceParams(3, 0.7).solver_admissible
        assert not SpaceParams(3, 0.4).solver_admissible
        assert SpaceParams(3, 1.5).kernel_admissible
        assert not SpaceParams(4, 0.9).solver_admissible
        with pytest.raises(ValueError):
            SpaceParams(3, 0.4).require_kernel()


class TestSobolevNorm:
    def test_unit_mode_pair(self):
        v = pair(3, 2, (0, 0, 1), (1, 0, 0))
        assert sobolev_norm(v, 1) == pytest.approx(math.sqrt(2), rel=1e-15)

    def test_zero_field(self):
        assert sobolev_norm(FourierVectorField.zero(3, 3), 1.7) == 0.0

    def test_hand_evaluated_parseval_sum(self):
        v = pair(3, 2, (1, 1, 0), np.array([1, -1, 0]) / 2)
        assert sobolev_norm(v, 2) == pytest.approx(2.0, rel=1e-15)

    def test_parseval_is_plain_coefficient_sum(self):
        v = random_field(3, 4, 3, 1.0)
        assert sobolev_norm(v, 0) ** 2 == pytest.approx(np.sum(np.abs(v.coeffs) ** 2), rel=1e-13)

    @given(seed=st.integers(0, 10_000), n1=st.floats(-2, 3), n2=st.floats(-2, 3))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_exponent(self, seed, n1, n2):
        lo, hi = sorted((n1, n2))
        v = random_field(seed, 3, 3, 1.0)
        assert sobolev_norm(v, lo) <= sobolev_norm(v, hi) * (1 + 1e-13)

    def test_non_integer_exponent_matches_power(self):
        v = pair(3, 3, (1, 2, 0), (2, -1, 0))
        expected = math.sqrt(2 * 5**0.35 * 5)
        assert sobolev_norm(v, 0.35) == pytest.approx(expected, rel=1e-14)

    def test_inner_product_is_polarized_norm(self):
        v = random_field(5, 3, 3, 1.0)
        assert inner_product(v, v, 1) == pytest.approx(sobolev_norm(v, 1) ** 2, rel=1e-14)


class TestLeray:
    @pytest.mark.parametrize(
        "k, c, expected",
        [
            ((0, 0, 1), (1, 0, 0), (1, 0, 0)),
            ((0, 0, 1), (0, 0, 5), (0, 0, 0)),
            ((1, 1, 0), (1, 0, 0), (0.5, -0.5, 0)),
        ],
    )
    def test_examples(self, k, c, expected):
        v = leray_project(pair(3, 2, k, c))
        assert np.allclose(v.coefficient(k), expected, atol=1e-15)
        assert np.allclose(v.coefficient(tuple(-x for x in k)), expected, atol=1e-15)

    def test_output_divergence_free(self):
        v = leray_project(random_field(2, 4, 3, 1.0) + pair(3, 4, (1, 2, 0), (1, 1, 1)))
        assert np.max(np.abs(divergence(v))) < 1e-14

    def test_idempotent_and_contractive(self):
        v = pair(3, 3, (1, 2, 2), (1, 1, 1)) + random_field(9, 3, 3, 1.0)
        p = leray_project(v)
        assert np.max(np.abs(leray_project(p).coeffs - p.coeffs)) < 1e-15
        for n in (-1, 0, 0.5, 1, 2):
            assert sobolev_norm(p, n) <= sobolev_norm(v, n) * (1 + 1e-14)


class TestDivergenceCurl:
    def test_divergence_of_longitudinal_mode(self):
        v = pair(3, 2, (0, 0, 1), (0, 0, 1))
        div = divergence(v)
        assert div[2, 2, 3] == pytest.approx(1j)
        assert div[2, 2, 1] == pytest.approx(-1j)

    def test_zero_field(self):
        assert not np.any(divergence(FourierVectorField.zero(3, 2)))
        assert curl(FourierVectorField.zero(3, 2)).n_nonzero == 0

    def test_curl_kills_gradient_mode(self):
        v = pair(3, 2, (1, 1, 0), (2, 2, 0))
        assert np.max(np.abs(curl(v).coeffs)) == 0

    def test_curl_identity(self):
        v = random_field(11, 5, 3, 1.0)
        assert abs(sobolev_norm(curl(v), 0) - sobolev_norm(v, 1)) <= 1e-12 * sobolev_norm(v, 1)

    def test_curl_needs_three_dimensions(self):
        with pytest.raises(ValueError):
            curl(random_field(1, 3, 2, 1.0))


class TestFractionalLaplacian:
    def test_identity_and_group_law(self):
        v = random_field(4, 3, 3, 1.0)
        assert np.array_equal(fractional_laplacian(v, 0).coeffs, v.coeffs)
        back = fractional_laplacian(fractional_laplacian(v, 2), -2)
        assert np.allclose(back.coeffs, v.coeffs, rtol=0, atol=1e-15)

    def test_scaling_on_shell_two(self):
        v = pair(3, 2, (1, 1, 0), (1, -1, 0))
        w = fractional_laplacian(v, 1)
        assert np.allclose(w.coefficient((1, 1, 0)), math.sqrt(2) * np.array([1, -1, 0]))


class TestLatticeSymmetry:
    def test_reflection(self):
        assert reflect((1, 2, 3), 2) == (1, 2, -3)

    def test_permutation(self):
        assert permute((1, 2, 3), (1, 0, 2)) == (2, 1, 3)

    def test_canonical_point(self):
        assert canonical_point((-2, 0, 1)) == (0, 1, 2)

    def test_invalid_permutation(self):
        with pytest.raises(ValueError):
            permute((1, 2, 3), (0, 0, 1))

    @given(k=st.lists(st.integers(-50, 50), min_size=2, max_size=4), r=st.integers(0, 3))
    def test_norm_preserved(self, k, r):
        r = r % len(k)
        n2 = sum(x * x for x in k)
        assert sum(x * x for x in reflect(k, r)) == n2
        assert sum(x * x for x in permute(k, list(reversed(range(len(k)))))) == n2

    def test_fundamental_domain(self):
        assert fundamental_domain(3, 1) == [(0, 0, 1), (0, 1, 1), (1, 1, 1)]


class TestRandomField:
    def test_exact_norm(self):
        v = random_field(1, 4, 3, 0.3)
        assert sobolev_norm(v, 1) == pytest.approx(0.3, abs=1e-12)

    def test_deterministic(self):
        assert np.array_equal(random_field(7, 4).coeffs, random_field(7, 4).coeffs)

    def test_divergence_free_and_real(self):
        v = random_field(8, 5, 3, 1.0)
        assert np.max(np.abs(divergence(v))) < 1e-14
        FourierVectorField(v.coeffs, solenoidal=True)  # validation pass

    def test_no_modes_outside_ball(self):
        v = random_field(3, 4, 3, 1.0)
        assert all(sum(x * x for x in k) <= 16 for k, _ in v.modes())


class TestFieldInvariants:
    def test_reality_violation_rejected(self):
        c = np.zeros((3, 5, 5, 5), complex)
        c[0, 2, 2, 3] = 1.0
        with pytest.raises(FieldFormatError):
            FourierVectorField(c)

    def test_zero_mode_rejected(self):
        c = np.zeros((3, 3, 3, 3), complex)
        c[0, 1, 1, 1] = 5.0
        with pytest.raises(ValueError, match="outside the ball"):
            FourierVectorField(c)

    def test_immutable(self):
        v = random_field(1, 2)
        with pytest.raises(ValueError):
            v.coeffs[0, 0, 0, 0] = 1


class TestSerialization:
    def test_round_trip(self):
        v = random_field(12, 3, 3, 0.5)
        w = field_from_dict(json.loads(json.dumps(field_to_dict(v))))
        assert np.array_equal(v.coeffs, w.coeffs)
        assert w.solenoidal

    @pytest.mark.parametrize(
        "mutate, message",
        [
            (lambda d: d.update(version=99), "version"),
            (lambda d: d["modes"].append({"k": [0, 0, 0], "re": [0, 0, 0], "im": [0, 0, 0]}), "zero mode"),
            (lambda d: d["modes"].append(dict(d["modes"][0])), "duplicate"),
            (lambda d: d["modes"].pop(0), "conjugate partner"),
            (lambda d: d["modes"][0].update(k=[9, 9, 9]), "outside"),
        ],
    )
    def test_loader_rejects(self, mutate, message):
        doc = field_to_dict(random_field(2, 2, 3, 1.0))
        mutate(doc)
        with pytest.raises(FieldFormatError, match=message):
            field_from_dict(doc)

    def test_loader_rejects_fake_solenoidal_flag(self):
        doc = field_to_dict(pair(3, 2, (0, 0, 1), (0, 0, 1)))
        doc["solenoidal"] = True
        with pytest.raises(FieldFormatError, match="divergence"):
            field_from_dict(doc)
