import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liftedmix.densities import arcsine_density, beta_density, target_f1_density, target_f2_density, uniform_density
from liftedmix.divergence import (
    beta_kl_closed_form,
    curvature_along_segment,
    distances,
    divergence_report,
    empirical_klh_objective,
    kl,
    klh,
    lifted_cross_entropy,
    lifted_entropy_constant,
    segment_density,
)
from liftedmix.mixture import MixtureParams, mixture_density
from liftedmix.numerics import DomainError, digamma

M = 10 ** 6
MID = (np.arange(M) + 0.5) / M


def riemann(fn):
    return float(np.sum(fn(MID)) / M)


def riemann_klh(f, g, h):
    fh, gh = f(MID) + h(MID), g(MID) + h(MID)
    return float(np.sum(fh * np.log(fh / gh)) / M)


def as_mixture(theta):
    return mixture_density(MixtureParams.from_arrays([1.0], [theta]))


def test_klh_identical_is_zero():
    f2 = target_f2_density()
    assert klh(f2, f2, uniform_density()) == 0.0
    # distinct handles describing the same density
    assert klh(target_f2_density(), target_f2_density(), uniform_density()) == pytest.approx(0.0, abs=1e-10)


def test_klh_matches_riemann_oracle():
    f2, u = target_f2_density(), uniform_density()
    g = as_mixture((1, 1))
    val = klh(f2, g, u)
    assert val > 0.0
    assert val == pytest.approx(riemann_klh(f2, g, u), abs=1e-6)


def test_klh_asymmetric():
    p, q, u = as_mixture((2, 5)), mixture_density(MixtureParams.from_arrays([0.5, 0.5], [(5, 2), (5, 2)])), uniform_density()
    pq, qp = klh(p, q, u), klh(q, p, u)
    assert pq == pytest.approx(riemann_klh(p, q, u), abs=1e-6)
    assert qp == pytest.approx(riemann_klh(q, p, u), abs=1e-6)
    # Beta(2,5) vs Beta(5,2) mirror each other, so asymmetry needs an asymmetric third density
    f1, g = target_f1_density(), as_mixture((2, 5))
    assert klh(f1, g, u) != pytest.approx(klh(g, f1, u), abs=1e-3)


def test_klh_with_arcsine_lifting():
    f2, a = target_f2_density(), arcsine_density()
    g = as_mixture((2, 3))
    # midpoints avoid the endpoint poles; tolerance reflects them
    assert klh(f2, g, a) == pytest.approx(riemann_klh(f2, g, a), abs=1e-5)


def test_distances_examples():
    f1, u, f2 = target_f1_density(), uniform_density(), target_f2_density()
    assert distances(f2, f2) == (0.0, 0.0, 0.0)
    l1, l2_sq, tv = distances(f1, u)
    # |5/4 - 1| on 4/5 of the interval plus |0 - 1| on the middle 1/5
    assert l1 == pytest.approx(0.25 * 0.8 + 1.0 * 0.2, abs=1e-12)
    assert l2_sq == pytest.approx(0.0625 * 0.8 + 1.0 * 0.2, abs=1e-12)
    assert tv == l1 / 2
    b22 = as_mixture((2, 2))
    _, l2_sq, _ = distances(u, b22)
    assert l2_sq == pytest.approx(riemann(lambda x: (1.0 - 6 * x * (1 - x)) ** 2), abs=1e-8)
    assert l2_sq == pytest.approx(0.2, abs=1e-12)


def test_report_invariants():
    f1, g, u = target_f1_density(), as_mixture((3, 2)), uniform_density()
    r = divergence_report(f1, g, u)
    assert r.tv == r.l1 / 2
    assert r.klh >= r.tv ** 2 - 1e-7
    assert r.klh <= r.l2_sq / u.inf_bound + 1e-7


def test_mixture_identity_and_bregman_generator():
    f, g, h = target_f2_density(), as_mixture((4, 7)), uniform_density()
    half_f = lambda x: (f(x) + h(x)) / 2
    half_g = lambda x: (g(x) + h(x)) / 2
    from liftedmix.densities import DensityHandle

    hf = DensityHandle("half", half_f, f.breakpoints)
    hg = DensityHandle("half", half_g, g.breakpoints)
    assert klh(f, g, h) == pytest.approx(2 * kl(hf, hg), abs=1e-7)
    # entropy constant plus cross entropy recovers the divergence
    const = lifted_entropy_constant(f, h)
    assert klh(f, g, h) == pytest.approx(const + lifted_cross_entropy(f, g, h), abs=1e-10)


def test_boundedness_where_f_vanishes():
    f1, u = target_f1_density(), uniform_density()
    g = as_mixture((50, 1))
    assert np.isfinite(klh(f1, g, u))
    assert np.isfinite(klh(g, f1, u))
    assert klh(g, f1, u) <= 2 * np.log(2) * (1 + g.sup_bound)


def test_beta_kl_closed_form_examples():
    assert beta_kl_closed_form((3, 4), (3, 4)) == pytest.approx(0.0, abs=1e-14)
    assert beta_kl_closed_form((2, 1), (1, 2)) == pytest.approx(digamma(2.0) - digamma(1.0), abs=1e-12)
    assert beta_kl_closed_form((2, 1), (1, 2)) == pytest.approx(1.0, abs=1e-12)
    assert beta_kl_closed_form((50, 1), (1, 50)) > beta_kl_closed_form((2, 1), (1, 2))
    with pytest.raises(DomainError):
        beta_kl_closed_form((0, 1), (1, 1))


@given(st.floats(1, 10), st.floats(1, 10), st.floats(1, 10), st.floats(1, 10))
@settings(max_examples=25, deadline=None)
def test_beta_kl_closed_form_vs_quadrature(ap, bp, aq, bq):
    quad = kl(beta_density((ap, bp)), beta_density((aq, bq)))
    closed = beta_kl_closed_form((ap, bp), (aq, bq))
    assert closed == pytest.approx(quad, rel=1e-6, abs=1e-12)


def test_empirical_objective_examples():
    u = uniform_density()
    psi = MixtureParams.from_arrays([1.0], [(1, 1)])
    rng = np.random.default_rng(0)
    xs, ys = rng.random(50), rng.random(50)
    assert empirical_klh_objective(psi, u, xs, ys) == pytest.approx(2 * np.log(2), abs=1e-14)
    psi2 = MixtureParams.from_arrays([0.4, 0.6], [(2, 5), (6, 2)])
    one = empirical_klh_objective(psi2, u, xs, ys)
    two = empirical_klh_objective(psi2, u, np.repeat(xs, 2), np.repeat(ys, 2))
    assert two == pytest.approx(one, abs=1e-14)
    with pytest.raises(ValueError):
        empirical_klh_objective(psi2, u, xs, ys[:-1])


def test_empirical_objective_law_of_large_numbers():
    f, h = target_f2_density(), uniform_density()
    psi = MixtureParams.from_arrays([0.5, 0.5], [(1, 4), (4, 1)])
    rng = np.random.default_rng(1)
    n = 10 ** 5
    val = empirical_klh_objective(psi, h, f.sample(rng, n), h.sample(rng, n))
    assert val == pytest.approx(-lifted_cross_entropy(f, mixture_density(psi), h), abs=0.02)


def klh_along(f, p, q, h, pi):
    return klh(f, segment_density(p, q, pi), h)


@pytest.mark.parametrize("pi", [0.25, 0.5, 0.75])
def test_curvature_matches_finite_difference(pi):
    f, h = target_f2_density(), uniform_density()
    p, q = as_mixture((2, 6)), as_mixture((7, 3))
    step = 1e-4
    fd = (klh_along(f, p, q, h, pi + step) - 2 * klh_along(f, p, q, h, pi) + klh_along(f, p, q, h, pi - step)) / step ** 2
    cur = curvature_along_segment(p, q, h, f, pi)
    assert cur == pytest.approx(fd, rel=1e-4)
    c = max(p.sup_bound, q.sup_bound)
    assert cur <= 2 * c ** 2 / h.inf_bound ** 2


def test_curvature_zero_for_equal_components():
    p, u = as_mixture((3, 3)), uniform_density()
    assert curvature_along_segment(p, p, u, target_f1_density(), 0.5) == 0.0
    with pytest.raises(ValueError):
        curvature_along_segment(p, p, u, u, 1.0)
