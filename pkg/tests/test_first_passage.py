import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emitter_fpt import first_passage as fp
from emitter_fpt.first_passage import Interval01, QuadratureSpec, Scheme1D
from emitter_fpt.specfun import EULER_GAMMA, DomainError

HET, HOM = Scheme1D.HETERODYNE, Scheme1D.OPTIMAL_HOMODYNE
BOTH = [HET, HOM]


def A(z):
    return -z


def B2(z, sch):
    return sch.k_squared * z ** 3 * (1 - z)


def mp_q(z, sch):
    z = mpmath.mpf(z)
    if sch is HET:
        return mpmath.exp(-1 / z) * z / (1 - z)
    return mpmath.exp(-1 / (2 * z)) * mpmath.sqrt(z / (1 - z))


def mp_S(u, v, sch):
    return mpmath.quad(lambda z: mp_q(z, sch), [u, v])


def generator(f, y, sch, h=1e-2):
    """``A f' + B^2 f'' / 2`` by 5-point central differences."""
    f2, f1, f0, g1, g2 = (f(y + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (f2 - 8 * f1 + 8 * g1 - g2) / (12 * h)
    d2 = (-f2 + 16 * f1 - 30 * f0 + 16 * g1 - g2) / (12 * h * h)
    return A(y) * d1 + 0.5 * B2(y, sch) * d2


# Q and S


def test_q_weight_values():
    assert fp.q_weight(0.5, HET) == pytest.approx(math.exp(-2), rel=1e-15)
    assert fp.q_weight(0.5, HOM) == pytest.approx(math.exp(-1), rel=1e-15)
    assert fp.q_weight(1e-3, HET) == 0.0 and fp.q_weight(1e-3, HOM) < 1e-200
    for z in (0.0, 1.0):
        with pytest.raises(DomainError):
            fp.q_weight(z, HET)


@pytest.mark.parametrize("sch", BOTH)
@pytest.mark.parametrize("uv", [(0.0, 0.3), (0.1, 0.5), (0.2, 0.9), (0.5, 0.999), (0.0, 0.05)])
def test_scale_matches_quadrature(sch, uv):
    u, v = uv
    assert fp.scale_S(u, v, sch) == pytest.approx(float(mp_S(u, v, sch)), rel=1e-12)


def test_scale_limits():
    assert fp.scale_S(0.0, 1.0, HOM) == pytest.approx(math.sqrt(math.pi / (2 * math.e)), rel=1e-15)
    assert fp.scale_S(0.0, 1.0, HOM) == pytest.approx(float(mp_S(0, 1, HOM)), rel=1e-12)
    assert fp.S_HOMODYNE_TOTAL == pytest.approx(0.760173, abs=1e-6)
    assert fp.scale_S(0.3, 1.0, HET) == math.inf
    for sch in BOTH:
        assert fp.scale_S(0.4, 0.4, sch) == 0.0
    with pytest.raises(DomainError):
        fp.scale_S(0.6, 0.5, HET)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.02, 0.98), min_size=3, max_size=3), st.sampled_from(BOTH))
def test_scale_additive(pts, sch):
    u, v, w = sorted(pts)
    whole = fp.scale_S(u, w, sch)
    parts = fp.scale_S(u, v, sch) + fp.scale_S(v, w, sch)
    assert parts == pytest.approx(whole, rel=1e-12, abs=1e-300)


# hitting probabilities


@pytest.mark.parametrize("sch", BOTH)
def test_hit_prob_boundaries(sch):
    itv = Interval01(0.2, 0.8)
    assert fp.hit_prob_b_before_a(0.2, itv, sch) == 0.0
    assert fp.hit_prob_b_before_a(0.8, itv, sch) == 1.0
    assert 0.0 < fp.hit_prob_b_before_a(0.5, itv, sch) < 1.0
    exact = mp_S(0.2, 0.5, sch) / mp_S(0.2, 0.8, sch)
    assert fp.hit_prob_b_before_a(0.5, itv, sch) == pytest.approx(float(exact), rel=1e-12)
    with pytest.raises(DomainError):
        fp.hit_prob_b_before_a(0.9, itv, sch)


def test_interval_validation():
    with pytest.raises(DomainError):
        Interval01(0.5, 0.5)
    with pytest.raises(DomainError):
        Interval01(-0.1, 0.5)


def test_hit_prob_monotone_random_triples():
    rng = np.random.default_rng(3)
    for sch in BOTH:
        for _ in range(5000):
            a, b = np.sort(rng.uniform(0.001, 0.999, 2))
            if b - a < 1e-6:
                continue
            y1, y2 = np.sort(rng.uniform(a, b, 2))
            p1 = fp.hit_prob_b_before_a(y1, (a, b), sch)
            p2 = fp.hit_prob_b_before_a(y2, (a, b), sch)
            assert 0.0 <= p1 <= p2 <= 1.0


def test_excitation_prob_cases():
    for sch in BOTH:
        assert fp.excitation_prob(0.5, 0.5, sch) == 1.0
        assert fp.excitation_prob(0.3, 0.5, sch) == 1.0
    assert fp.excitation_prob(1.0, 0.5, HET) == 0.0
    hom1 = fp.excitation_prob(1.0, 0.5, HOM)
    assert hom1 == pytest.approx(fp.scale_S(0, 0.5, HOM) / math.sqrt(math.pi / (2 * math.e)), rel=1e-14)
    assert hom1 == pytest.approx(float(mp_S(0, 0.5, HOM) / mp_S(0, 1, HOM)), rel=1e-12)
    with pytest.raises(DomainError):
        fp.excitation_prob(0.5, 0.0, HET)


def test_excitation_prob_homodyne_dominates():
    for y in np.arange(0.05, 1.0, 0.05):
        for u in np.arange(y, 1.0001, 0.01):
            u = min(u, 1.0)
            assert fp.excitation_prob(u, y, HOM) >= fp.excitation_prob(u, y, HET)


def test_excitation_prob_tiny_start_no_underflow():
    # both S values underflow individually near 0; their ratio must not
    p = fp.excitation_prob(0.002, 0.001, HET)
    exact = mp_S(0, 0.001, HET) / mp_S(0, 0.002, HET)
    assert p == pytest.approx(float(exact), rel=1e-9)


def test_heterodyne_asymptotics():
    y = 0.5
    ratios = []
    for k in range(3, 15):
        u = 1 - 10.0 ** -k
        full = fp.excitation_prob(u, y, HET)
        asym = fp.excitation_prob_asymptotic_het(u, y)
        ratios.append(asym / full)
        # next-order term: e S(0,u) = -ln(1-u) - gamma_E - 1 + o(1)
        L = -math.log(1 - u)
        assert asym / full == pytest.approx((L - EULER_GAMMA - 1) / L, abs=2e-3)
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1) < 0.05
    assert abs(fp.excitation_prob_asymptotic_het(1 - 1e-8, y) / fp.excitation_prob(1 - 1e-8, y, HET) - 1) < 0.1
    assert fp.excitation_prob_asymptotic_het(1 - 2.0 ** -52, y) < 0.02
    with pytest.raises(DomainError):
        fp.excitation_prob_asymptotic_het(0.5, y)


# K, m, R


def test_speed_K_endpoints():
    assert fp.speed_K(1.0, HET) == pytest.approx(math.e, rel=1e-15)
    assert fp.speed_K(1.0, HOM) == 0.0
    with pytest.raises(DomainError):
        fp.speed_K(0.0, HET)


@pytest.mark.parametrize("sch", BOTH)
def test_speed_K_derivative(sch):
    for z in np.linspace(0.1, 0.95, 100):
        h = 1e-5
        fd = (fp.speed_K(z + h, sch) - fp.speed_K(z - h, sch)) / (2 * h)
        exact = -2.0 / (fp.q_weight(z, sch) * B2(z, sch))
        assert fd == pytest.approx(exact, rel=1e-6)
        assert fp.speed_density(z, sch) == pytest.approx(-exact, rel=1e-12)


def test_homodyne_K_closed_form():
    # printed form with erfi, evaluated in extended precision
    for z in (0.2, 0.5, 0.8):
        zz = mpmath.mpf(z)
        w = mpmath.sqrt((1 - zz) / (2 * zz))
        printed = (-mpmath.exp(1 / (2 * zz)) * mpmath.sqrt((1 - zz) / zz ** 3) * (2 * zz - 1)
                   + mpmath.sqrt(2 * mpmath.pi * mpmath.e) * mpmath.erfi(w))
        assert fp.speed_K(z, HOM) == pytest.approx(float(printed), rel=1e-12)


def test_homodyne_r_integrand_limits():
    assert fp.homodyne_r_integrand(1e-9) == pytest.approx(0.0, abs=1e-3)
    assert fp.homodyne_r_integrand(1 - 1e-12) == pytest.approx(2.0, rel=1e-5)
    assert fp.homodyne_r_integrand(1.0) == 2.0
    vals = [fp.homodyne_r_integrand(z) for z in np.linspace(1e-6, 1 - 1e-9, 2000)]
    assert max(vals) < 10.0


# the full [0.1, 0.9] comparison lives in the acceptance suite
@pytest.mark.parametrize("uv", [(0.1, 0.5), (0.3, 0.7)])
def test_homodyne_r_matches_nested_quadrature(uv):
    sch = HOM

    def K(z):
        # K(1) = 0, so K(z) = int_z^1 m
        return mpmath.quad(lambda t: 2 / (mp_q(t, sch) * 4 * t ** 3 * (1 - t)), [z, 1])

    brute = mpmath.quad(lambda z: mp_q(z, sch) * K(z), list(uv))
    assert fp.r_measure(*uv, sch) == pytest.approx(float(brute), rel=1e-6)


@pytest.mark.parametrize("uv", [(0.1, 0.9), (0.1, 0.5), (0.3, 0.7)])
def test_heterodyne_r_matches_quadrature_of_QK(uv):
    brute = mpmath.quad(lambda z: mp_q(z, HET) * mpmath.exp(1 / z) * (2 - 2 / z + 1 / z ** 2), list(uv))
    assert fp.r_measure(*uv, HET) == pytest.approx(float(brute), rel=1e-10)


def test_r_limits():
    assert fp.r_measure(0.0, 0.5, HET) == math.inf
    assert fp.r_measure(0.0, 0.5, HOM) == math.inf
    assert fp.r_measure(0.3, 1.0, HET) == math.inf
    assert math.isfinite(fp.r_measure(0.3, 1.0, HOM))
    # heterodyne R(0.3, b) grows like -ln(1 - b)
    d = [fp.r_measure(0.3, 1 - 10.0 ** -k, HET) for k in (4, 6, 8)]
    assert (d[2] - d[1]) == pytest.approx(2 * math.log(10), rel=1e-4)
    assert fp.r_measure(0.4, 0.4, HOM) == 0.0


def test_quadrature_error_raised():
    with pytest.raises(fp.QuadratureError):
        fp.r_measure(0.1, 0.9, HOM, QuadratureSpec(rel_tol=1e-13, max_subdivisions=1))
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=1e-16)


# mean times


@pytest.mark.parametrize("sch", BOTH)
def test_exit_time_boundaries(sch):
    itv = Interval01(0.2, 0.8)
    assert fp.mean_exit_time(0.2, itv, sch) == 0.0
    assert fp.mean_exit_time(0.8, itv, sch) == 0.0
    assert fp.mean_exit_time(0.5, itv, sch) > 0.0
    with pytest.raises(DomainError):
        fp.mean_exit_time(0.5, Interval01(0.0, 0.8), sch)
    with pytest.raises(DomainError):
        fp.mean_exit_time(0.5, Interval01(0.2, 1.0), sch)


@pytest.mark.parametrize("sch", BOTH)
def test_exit_time_green_function_oracle(sch):
    # T(y) = int_a^b G(y, z) m(z) dz with G = S(a, min) S(max, b) / S(a, b)
    a, b, y = 0.2, 0.8, 0.5
    m = lambda t: 2 / (mp_q(t, sch) * sch.k_squared * t ** 3 * (1 - t))  # noqa: E731
    sab = mp_S(a, b, sch)
    lo = mpmath.quad(lambda z: mp_S(a, z, sch) * mp_S(y, b, sch) * m(z), [a, y])
    hi = mpmath.quad(lambda z: mp_S(a, y, sch) * mp_S(z, b, sch) * m(z), [y, b])
    assert fp.mean_exit_time(y, (a, b), sch) == pytest.approx(float((lo + hi) / sab), rel=1e-7)


@pytest.mark.parametrize("sch", BOTH)
@pytest.mark.parametrize("residual", ["hit", "exit", "below"])
def test_ode_residuals(sch, residual):
    a, b = 0.2, 0.8
    if residual == "hit":
        ys, f, target = np.linspace(0.23, 0.77, 50), (lambda y: fp.hit_prob_b_before_a(y, (a, b), sch)), 0.0
    elif residual == "exit":
        ys, f, target = np.linspace(0.23, 0.77, 50), (lambda y: fp.mean_exit_time(y, (a, b), sch)), -1.0
    else:
        ys, f, target = np.linspace(0.13, 0.97, 50), (lambda y: fp.mean_first_passage_below(0.1, y, sch)), -1.0
    for y in ys:
        assert abs(generator(f, y, sch) - target) <= 1e-4


@pytest.mark.parametrize("sch", BOTH)
def test_first_passage_reflecting_at_one(sch):
    # C = 1 is reflecting: the derivative in the scale coordinate vanishes there.
    # In y itself the drift balance -T'(1) = -1 fixes the slope at 1/gamma.
    a = 0.25
    ds = []
    for h in (1e-2, 1e-4, 1e-6):
        y = 1 - h
        fd = (fp.mean_first_passage_below(a, y + h / 2, sch) - fp.mean_first_passage_below(a, y - h / 2, sch)) / h
        ds.append(abs(fd / fp.q_weight(y, sch)))
    # at least the sqrt(1 - y) rate of the homodyne case
    assert ds[1] < 0.15 * ds[0] and ds[2] < 0.15 * ds[1] and ds[2] < 1e-2
    h = 1e-4
    f = [fp.mean_first_passage_below(a, 1 - k * h, sch) for k in (0, 1, 2)]
    assert (3 * f[0] - 4 * f[1] + f[2]) / (2 * h) == pytest.approx(1.0, abs=1e-2)


def test_first_passage_special_values():
    for sch in BOTH:
        assert fp.mean_first_passage_below(0.3, 0.3, sch) == 0.0
        with pytest.raises(DomainError):
            fp.mean_first_passage_below(0.0, 0.5, sch)
        # a -> 0 diverges
        t = [fp.mean_first_passage_below(a, 0.5, sch) for a in (1e-1, 1e-2, 1e-3)]
        assert t[0] < t[1] < t[2]
    t_het_1 = fp.mean_first_passage_below(0.25, 1.0, HET)
    assert math.isfinite(t_het_1)
    assert t_het_1 == pytest.approx(fp.mean_first_passage_below(0.25, 1 - 1e-9, HET), rel=1e-5)


def test_first_passage_faster_than_exponential():
    for a in (0.1, 0.25):
        t_exp = fp.exponential_passage_time(a, 0.5)
        assert fp.mean_first_passage_below(a, 0.5, HOM) < fp.mean_first_passage_below(a, 0.5, HET) < t_exp
    assert fp.exponential_passage_time(0.25, 0.5) == pytest.approx(math.log(2))


def test_first_passage_homodyne_faster_on_grid():
    for y in (0.3, 0.5, 0.7, 0.9):
        for a in (0.05, 0.1, 0.2):
            if a < y:
                assert fp.mean_first_passage_below(a, y, HOM) <= fp.mean_first_passage_below(a, y, HET)


def test_excitation_time_endpoints_and_ordering():
    for sch in BOTH:
        assert fp.mean_excitation_time(0.0, sch) == 0.0
        assert fp.mean_excitation_time(1.0, sch) == 0.0
    for y in np.arange(0.01, 1.0, 0.01):
        assert fp.mean_excitation_time(y, HOM) >= fp.mean_excitation_time(y, HET) >= 0.0


def test_excitation_time_heterodyne_endpoint_behaviour():
    # S(0, y) ~ (L - gamma_E - 1)/e and K(y) - K(1) ~ e (1 - y), with L = -ln(1 - y)
    for eps in (1e-4, 1e-6, 1e-8):
        L = -math.log(eps)
        t = fp.mean_excitation_time(1 - eps, HET)
        assert t / (eps * L) == pytest.approx((L - EULER_GAMMA - 1) / L, abs=5e-3)
    eps = mpmath.mpf("1e-4")
    m = lambda t: 2 / (mp_q(t, HET) * 2 * t ** 3 * (1 - t))  # noqa: E731
    exact = mp_S(0, 1 - eps, HET) * mpmath.quad(m, [1 - eps, 1])
    assert fp.mean_excitation_time(1 - 1e-4, HET) == pytest.approx(float(exact), rel=1e-8)


@pytest.mark.parametrize("sch", BOTH)
def test_excitation_time_is_occupation_above_start(sch):
    for y in (0.2, 0.5, 0.8):
        assert fp.mean_occupation_time(y, y, 1.0, sch) == pytest.approx(fp.mean_excitation_time(y, sch), rel=1e-8)


@pytest.mark.parametrize("sch", BOTH)
def test_occupation_time_oracle(sch):
    y, ell, r = 0.5, 0.3, 0.7
    m = lambda t: 2 / (mp_q(t, sch) * sch.k_squared * t ** 3 * (1 - t))  # noqa: E731
    exact = (mpmath.quad(lambda z: m(z) * mp_S(0, z, sch), [ell, y])
             + mp_S(0, y, sch) * mpmath.quad(m, [y, r]))
    assert fp.mean_occupation_time(y, ell, r, sch) == pytest.approx(float(exact), rel=1e-8)
    assert fp.mean_occupation_time(y, 0.0, r, sch) == math.inf
    assert fp.mean_occupation_time(y, 0.4, 0.4, sch) == 0.0


def test_occupation_additive_over_intervals():
    for sch in BOTH:
        whole = fp.mean_occupation_time(0.5, 0.1, 0.9, sch)
        parts = fp.mean_occupation_time(0.5, 0.1, 0.4, sch) + fp.mean_occupation_time(0.5, 0.4, 0.9, sch)
        assert parts == pytest.approx(whole, rel=1e-8)


def test_scheme_lookup():
    assert fp.scale_S(0.1, 0.5, "heterodyne") == fp.scale_S(0.1, 0.5, HET)
    with pytest.raises(ValueError):
        fp.scale_S(0.1, 0.5, "homodyne")
