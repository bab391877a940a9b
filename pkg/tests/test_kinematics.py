import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st
from mpmath import mp, mpf

from comjac import kinematics as kin
from comjac.kinematics import (
    ConfigPoint,
    DegenerateInputError,
    InconsistencyError,
    pair_invariants,
    precision,
)

from conftest import mpunit, mpvec
from oracle import post_collisional as boost_post

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(coord, coord, coord)
direction = st.tuples(coord, coord, coord).filter(lambda v: sum(x * x for x in v) > 1e-6)


def close(a, b, rel=mpf(2) ** -176):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1)


# -- precision plumbing --------------------------------------------------------


def test_precision_context_nests_and_restores():
    outer = mp.prec
    with precision(300):
        assert mp.prec == 300 and kin.current_precision() == 300
        with precision(120):
            assert mp.prec == 120
        assert mp.prec == 300
    assert mp.prec == outer


def test_precision_rejects_below_double():
    with pytest.raises(ValueError):
        with precision(40):
            pass


def test_prec_keyword_overrides_context():
    with precision(64):
        e = kin.energy((1, 2, 3), prec=300)
    with precision(300):
        assert abs(e - mpmath.sqrt(15)) < mpf(2) ** -290


def test_degeneracy_threshold_tracks_precision():
    assert kin.degeneracy_threshold(200) == mpf(2) ** -184
    assert kin.degeneracy_threshold(64) == mpf(2) ** -48


# -- scalar invariants ------------------------------------------------------


def test_energy_at_rest_is_one(prec200):
    assert kin.energy((0, 0, 0)) == 1


def test_relative_momentum_known_pair(prec200):
    # p = (1,0,0), q = (-1,0,0): p0 = q0 = sqrt 2, g^2 = 2(2 + 1 - 1) = 4
    assert close(kin.relative_momentum((1, 0, 0), (-1, 0, 0)), mpf(2))
    assert close(kin.total_energy_sq((1, 0, 0), (-1, 0, 0)), mpf(8))


def test_relative_momentum_vanishes_at_coincidence(prec200):
    assert kin.relative_momentum((1, 2, 3), (1, 2, 3)) == 0


def test_gamma_is_one_in_rest_frame(prec200):
    assert kin.lorentz_gamma((1, 2, 3), (-1, -2, -3)) == 1
    assert kin.gamma_minus_one((1, 2, 3), (-1, -2, -3)) == 0


def test_negative_g_squared_beyond_rounding_is_reported(prec200):
    # energies far below sqrt(1+|p|^2) make |p0 - q0| exceed |p - q|
    fake_sqrt = lambda x: mpmath.sqrt(x) / 10  # noqa: E731
    with pytest.raises(InconsistencyError):
        pair_invariants(mpvec(1, 0, 0), mpvec(0, 0, 0), fake_sqrt, tol=mpf(2) ** -176)


@given(vec3, vec3)
def test_s_equals_g_squared_plus_four(p, q):
    with precision(200):
        g = kin.relative_momentum(p, q)
        s = kin.total_energy_sq(p, q)
        assert abs(s - (g * g + 4)) <= mpf(2) ** -170 * s


@given(vec3, vec3)
def test_gamma_minus_one_matches_definition(p, q):
    with precision(200):
        if p[0] + q[0] == p[1] + q[1] == p[2] + q[2] == 0:
            return
        gm1 = kin.gamma_minus_one(p, q)
        assert gm1 >= 0
        assert abs((kin.lorentz_gamma(p, q) - 1) - gm1) <= mpf(2) ** -170 * (1 + gm1)


@given(vec3, vec3)
def test_g_bounds(p, q):
    with precision(200):
        g = kin.relative_momentum(p, q)
        d = kin.norm(kin.sub(mpvec(*p), mpvec(*q)))
        lo = d / mpmath.sqrt(kin.energy(p) * kin.energy(q))
        slack = 1 + mpf(2) ** -180
        assert lo <= g * slack
        assert g <= d * slack


def test_g_bounds_near_coincidence(prec200):
    p = mpvec("3.25", "-1.5", "0.75")
    for k in range(7, 40, 4):
        q = tuple(x + mpf(10) ** -k * c for x, c in zip(p, (1, -2, 2)))
        g = kin.relative_momentum(p, q)
        d = kin.norm(kin.sub(p, q))
        assert d / mpmath.sqrt(kin.energy(p) * kin.energy(q)) <= g <= d * (1 + mpf(2) ** -180)
        assert g > 0


def test_moller_velocity_head_on(prec200):
    # p = -q = (1,0,0): g = 2, s = 8, p0 q0 = 2
    assert close(kin.moller_velocity((1, 0, 0), (-1, 0, 0)), 2 * mpmath.sqrt(8) / 2)


# -- collision --------------------------------------------------------------


@given(vec3, vec3, direction)
def test_conservation(p, q, w):
    with precision(200):
        w = kin.unit(mpvec(*w))
        pp, qq = kin.post_collisional(p, q, w)
        P = kin.add(mpvec(*p), mpvec(*q))
        assert kin.norm(kin.sub(kin.add(pp, qq), P)) <= mpf(2) ** -176 * (1 + kin.norm(P))
        e_in = kin.energy(p) + kin.energy(q)
        assert abs(kin.energy(pp) + kin.energy(qq) - e_in) <= mpf(2) ** -176 * e_in


@given(vec3, vec3, direction)
def test_relative_momentum_preserved(p, q, w):
    with precision(200):
        w = kin.unit(mpvec(*w))
        pp, qq = kin.post_collisional(p, q, w)
        g0 = kin.relative_momentum(p, q)
        assert abs(kin.relative_momentum(pp, qq) - g0) <= mpf(2) ** -160 * (1 + g0)


def test_rest_frame_collision_is_back_to_back(prec200):
    w = mpunit(1, 2, 2)
    pp, qq = kin.post_collisional((0, 0, 3), (0, 0, -3), w)
    # g = 2|p| = 6 in the rest frame, so p' = 3 w
    for i in range(3):
        assert close(pp[i], 3 * w[i])
        assert close(qq[i], -3 * w[i])


@pytest.mark.parametrize(
    "p,q,w,expected",
    [
        # frozen from the boost-frame oracle in tests/oracle.py at 400 bits
        (
            (1, 2, 3),
            (-1, "0.5", 2),
            (0, 0, 1),
            ("0.0", "1.75147648979584463518293873037", "4.66106747425932406728792752174"),
        ),
        (
            ("0.3", "-0.7", "1.1"),
            (2, 1, "-0.5"),
            (2, -1, 2),
            ("2.29734128570717214832439665232", "-0.281641486641680544228746337613",
             "1.28082434394148980288517707954"),
        ),
    ],
)
def test_post_collisional_frozen_values(prec200, p, q, w, expected):
    pp, _ = kin.post_collisional(mpvec(*p), mpvec(*q), mpunit(*w))
    for got, want in zip(pp, expected):
        assert abs(got - mpf(want)) < mpf(10) ** -28


@given(vec3, vec3, direction)
def test_post_collisional_matches_boost_oracle(p, q, w):
    with precision(200):
        w = kin.unit(mpvec(*w))
        ours, _ = kin.post_collisional(p, q, w)
        ref = boost_post(mpvec(*p), mpvec(*q), w)
        scale = 1 + kin.norm(mpvec(*p)) + kin.norm(mpvec(*q))
        assert all(abs(a - b) <= mpf(2) ** -150 * scale for a, b in zip(ours, ref))


def test_u_map_endpoints(prec200):
    p, q, w = mpvec(1, -2, "0.5"), mpvec(3, 1, 1), mpunit(0, 1, 0)
    assert kin.u_map(0, p, q, w) == p
    pp, _ = kin.post_collisional(p, q, w)
    assert all(close(a, b) for a, b in zip(kin.u_map(1, p, q, w), pp))


def test_u_map_rejects_theta_outside_unit_interval(prec200):
    with pytest.raises(ValueError):
        kin.u_map(mpf("1.5"), (1, 0, 0), (0, 1, 0), (0, 0, 1))


def test_non_unit_w_rejected(prec200):
    with pytest.raises(ValueError):
        kin.post_collisional((1, 0, 0), (0, 1, 0), (0, 0, 2))


# -- scattering angle -------------------------------------------------------


def test_scattering_k_in_rest_frame_is_relative_momentum(prec200):
    # p + q = 0 removes both boost terms: k = p - q
    k = kin.scattering_k((1, 2, 3), (-1, -2, -3))
    assert k == mpvec(2, 4, 6)


def test_scattering_cos_sign(prec200):
    p, q = mpvec(1, 0, 0), mpvec(-1, 0, 0)
    assert close(kin.scattering_cos(p, q, (1, 0, 0)), mpf(1))
    assert close(kin.scattering_cos(p, q, (-1, 0, 0)), mpf(-1))
    assert kin.angle_condition(p, q, (0, 1, 0))


def test_scattering_cos_degenerate_pair(prec200):
    with pytest.raises(DegenerateInputError):
        kin.scattering_cos((1, 1, 1), (1, 1, 1), (0, 0, 1))


@given(vec3, vec3, direction)
def test_scattering_cos_is_a_cosine(p, q, w):
    with precision(200):
        if kin.norm(kin.sub(mpvec(*p), mpvec(*q))) < 1e-6:
            return
        c = kin.scattering_cos(p, q, kin.unit(mpvec(*w)))
        assert -1 - mpf(2) ** -180 <= c <= 1 + mpf(2) ** -180


def test_scattering_angle_is_angle_between_incoming_and_outgoing_in_rest_frame(prec200):
    # in the rest frame cos(angle) = (p - q).w / |p - q| = p.p' / |p||p'|
    p, q, w = mpvec(2, -1, "0.5"), mpvec(-2, 1, "-0.5"), mpunit(1, 1, 0)
    pp, _ = kin.post_collisional(p, q, w)
    cos_direct = kin.dot(p, pp) / (kin.norm(p) * kin.norm(pp))
    assert close(kin.scattering_cos(p, q, w), cos_direct)


def test_config_point_make_normalizes_on_request(prec200):
    pt = ConfigPoint.make("0.5", (1, 0, 0), (0, 1, 0), (0, 0, 2), normalize=True)
    assert pt.w == mpvec(0, 0, 1)
    with pytest.raises(ValueError):
        ConfigPoint.make("1.2", (1, 0, 0), (0, 1, 0), (0, 0, 1))
