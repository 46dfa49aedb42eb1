import math

import numpy as np
import pytest

from critlab.concentration import (
    TRACE_COLUMNS,
    analyze,
    blow_up_rescale,
    bubble_fit_error,
    standard_bubble,
    synthetic_family,
    synthetic_trace,
    trace,
    write_trace_csv,
)
from critlab.errors import InvalidInput, ResolutionError
from critlab.functional import ProblemSpec, constraint_value
from critlab.manifold import build_radial_sphere, make_profile
from critlab.solver import SolveResult, continuation_in_q, normalize

MUS = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]


@pytest.fixture(scope="module")
def family(s6):
    return synthetic_family(s6, MUS)


@pytest.fixture(scope="module")
def synth(family):
    return synthetic_trace(family, delta=0.5)


@pytest.fixture(scope="module")
def blowup(s6):
    spec = ProblemSpec(s6, 6.5, make_profile(s6, "cos_poly(0.5, 0.5)"))
    results = continuation_in_q(spec, [2.8, 2.9, 2.95, 2.99])
    return trace(results, x0=0, delta=0.3)


def _result(M, u, lam=1.0, f=1.0):
    spec = ProblemSpec(M, 0.0, f)
    return SolveResult(u=u, lam=lam, residual=0.0, iters=0, q=spec.q, converged=True, manifold=M, problem=spec)


def test_constant_l2_ratio_is_cap_volume(s6, frozen):
    spec = ProblemSpec(s6, 6.0, 1.0)
    u = normalize(spec, np.ones(s6.size))
    s = analyze(_result(s6, u, lam=19.0), x0=0, delta=0.5)
    assert s.l2_ratio == pytest.approx(frozen["cap_fraction_S6_0.5"], rel=2e-3)
    assert s.speed_ratio == 0.0


def test_exact_family_scale(s6, family):
    n = 6
    for u, a, b, mu in zip(family.fields, family.a, family.b, MUS):
        measured = (u.max()) ** (-2 / (n - 2))
        assert measured == pytest.approx(a ** (-2 / (n - 2)) * (b - 1), rel=1e-12)
        assert measured == pytest.approx(mu, rel=1e-3)
        assert constraint_value(ProblemSpec(s6, 6.0, 1.0), u) == pytest.approx(1.0, abs=1e-12)


def test_sample_invariants(synth, family, s6):
    for s, u in zip(synth.samples, family.fields):
        assert s.mu > 0
        assert s.mass_in_ball <= constraint_value(ProblemSpec(s6, 6.0, 1.0), u) * (1 + 1e-8)
        assert 0 <= s.l2_ratio <= 1 + 1e-8


def test_synthetic_estimates(synth):
    weak, strong = synth.column("weak_sup"), synth.column("strong_sup")
    assert weak.max() / weak.min() <= 1.5
    assert strong.max() / strong.min() <= 2.0
    assert synth.samples[-1].l2_ratio >= 0.9
    assert np.all(synth.column("bubble_err") <= 0.05)
    assert np.all(synth.column("speed_ratio") == 0.0)


def test_synthetic_decay_off_peak(synth):
    outer = synth.column("outer_sup")
    assert np.all(np.diff(outer) < 0)


def test_speed_ratio_offsets(s6):
    same = synthetic_trace(synthetic_family(s6, MUS[:4], offsets=MUS[:4]), delta=0.5)
    assert np.allclose(same.column("speed_ratio"), 1.0, atol=0.05)
    counter = synthetic_trace(synthetic_family(s6, MUS, offsets=[math.sqrt(m) for m in MUS]), delta=0.5)
    ratio = counter.column("speed_ratio")
    assert np.all(np.diff(ratio) > 0)
    assert ratio[-1] > 10


def test_blow_up_profile_of_normalized_family(s6, family):
    n = 6
    res = family.results[-1]
    mu = res.u.max() ** (-2 / (n - 2))
    x, prof = blow_up_rescale(s6, res.u, 0, mu, 5.0)
    assert prof[0] == pytest.approx(1.0, rel=1e-12)
    limit = (1 + res.lam * x**2 / (n * (n - 2))) ** (-(n - 2) / 2)
    assert np.max(np.abs(prof - limit)) <= 0.02


def test_blow_up_profile_of_raw_family(s6):
    # unnormalized members solve the equation with multiplier n(n-2)(2 + mu^2)/4,
    # which puts the rescaled profile on (1 + x^2/2)^{-(n-2)/2}
    n, mu = 6, 1e-3
    raw = synthetic_family(s6, [mu], normalized=False)
    u = raw.fields[0]
    assert u.max() == pytest.approx(mu ** (-(n - 2) / 2), rel=1e-9)  # 1 + mu^2 - cos 0 cancels
    assert raw.results[0].lam == pytest.approx(n * (n - 2) * (2 + mu**2) / 4, rel=1e-3)
    x, prof = blow_up_rescale(s6, u, 0, mu, 5.0)
    assert np.max(np.abs(prof - (1 + x**2 / 2) ** (-(n - 2) / 2))) <= 0.02


def test_rescale_of_constant(s6):
    x, prof = blow_up_rescale(s6, np.full(s6.size, 3.0), 0, 0.1, 5.0)
    assert np.allclose(prof, 0.1**2 * 3.0)
    with pytest.raises(ResolutionError):
        blow_up_rescale(s6, np.ones(s6.size), 0, 1.0, 5.0)


def test_rescale_on_torus(t3):
    d = t3.distances_from(0)
    u = (1 + d**2 / 0.01) ** -0.5
    x, prof = blow_up_rescale(t3, u, 0, 0.1, 3.0)
    assert prof[0] == pytest.approx(0.1**0.5)
    assert np.all(np.diff(prof) <= 1e-12)


def test_standard_bubble_shape(s6):
    n, mu, lam, f0 = 6, 0.05, 19.0, 1.0
    B = standard_bubble(s6, 0, mu, lam, f0)
    assert B[0] == pytest.approx(mu ** (-(n - 2) / 2))
    assert np.all(np.diff(B) < 0)
    d_half = mu * math.sqrt(n * (n - 2) / (lam * f0))
    Bd = mu ** (-(n - 2) / 2) * (1 + lam * f0 * d_half**2 / (n * (n - 2) * mu**2)) ** (-(n - 2) / 2)
    assert Bd == pytest.approx(mu ** (-(n - 2) / 2) * 2 ** (-(n - 2) / 2), rel=1e-14)
    with pytest.raises(InvalidInput):
        standard_bubble(s6, 0, 0.0, lam, f0)
    with pytest.raises(InvalidInput):
        standard_bubble(s6, 0, mu, -1.0, f0)


def test_bubble_fit_error(s6):
    B = standard_bubble(s6, 0, 0.05, 19.0, 1.0)
    assert bubble_fit_error(s6, B, B, 0, 0.25) == 0.0
    assert bubble_fit_error(s6, 1.05 * B, B, 0, 0.25) == pytest.approx(0.05, abs=1e-12)
    assert bubble_fit_error(s6, B, B, 0, 0.0) == 0.0  # the center alone
    with pytest.raises(ResolutionError):
        bubble_fit_error(s6, B, B, 0, -1.0)


def test_exact_family_matches_bubble_at_small_mu(synth):
    assert synth.samples[-1].bubble_err <= 0.05


def test_analyze_guards(s6, family):
    res = family.results[0]
    with pytest.raises(ResolutionError):
        analyze(res, 0, delta=1e-7)
    with pytest.raises(InvalidInput):
        analyze(res, 0, delta=0.5, nu=4.5)


def test_resolution_guard_for_family():
    M = build_radial_sphere(6, 256, 1.0)
    with pytest.raises(ResolutionError):
        synthetic_family(M, [1e-3])


def test_blowup_trace(blowup, s6):
    sup = blowup.column("sup_u")
    mass = blowup.column("mass_in_ball")
    assert np.all(np.diff(sup) > 0)
    assert np.all(np.diff(mass) >= 0)
    last = blowup.samples[-1]
    spacing = s6.nodes[1] - s6.nodes[0]
    assert last.peak_r <= 2 * spacing
    assert last.mass_in_ball >= 0.9
    assert last.bubble_err <= 0.1
    # peak stays on the maximum of f, so the speed ratio does not grow
    assert np.all(blowup.column("speed_ratio") <= 2 * blowup.column("speed_ratio")[0] + 1e-12)


def test_blowup_decay_once_concentrated(blowup):
    # away from the peak u decays once the mass has localized in the ball
    tail = [s for s in blowup.samples if s.mass_in_ball >= 0.5]
    assert len(tail) >= 2
    outer = [s.outer_sup for s in tail]
    assert all(b < a for a, b in zip(outer, outer[1:]))


def test_trace_csv(tmp_path, synth):
    path = tmp_path / "trace.csv"
    write_trace_csv(path, synth.samples)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 1 + len(MUS)
