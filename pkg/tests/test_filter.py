import itertools
import math

import numpy as np
import pytest

from curvetrack.errors import DegenerateInputError, FilterDegeneracyError, ParameterError
from curvetrack.filter import (FilterConfig, Particle, ParticlePool, band_energy, effective_sample_size,
                               estimate, init_ensemble, log_likelihood, offspring_counts, step,
                               systematic_resample, _normalize_log)
from curvetrack.grid import ScalarField, VectorField
from curvetrack.levelset import extract_contour, identity_correspondence
from curvetrack.sde import SdeParams

from conftest import disk_phi

SHAPE = (48, 48)


def two_tone(phi, a=0.3, b=0.7):
    return ScalarField(np.where(phi.values <= 0, a, b))


def test_config_validation():
    for kw in ({"n_particles": 0}, {"likelihood_temp": 0}, {"resample_threshold": 0},
               {"resample_threshold": 1.5}, {"master_seed": -1}, {"band_radius": 0}):
        with pytest.raises(ParameterError):
            FilterConfig(**kw)


@pytest.mark.parametrize("n", [1, 200])
def test_init_ensemble(n):
    phi = disk_phi(SHAPE, (24, 24), 8)
    psi = identity_correspondence(*SHAPE)
    ens = init_ensemble(phi, psi, FilterConfig(n_particles=n))
    assert len(ens) == n
    assert all(p.weight == pytest.approx(1 / n) for p in ens)
    assert all(np.array_equal(p.phi.values, phi.values) for p in ens)


def test_particle_weight_nonnegative():
    phi = disk_phi(SHAPE, (24, 24), 8)
    with pytest.raises(ParameterError):
        Particle(phi, identity_correspondence(*SHAPE), -0.1)


def test_likelihood_perfect_fit_is_zero():
    phi = disk_phi(SHAPE, (24, 24), 8)
    z = two_tone(phi)
    p = Particle(phi, identity_correspondence(*SHAPE), 1.0)
    assert log_likelihood(p, z, 0.0025) == pytest.approx(0.0, abs=1e-12)


def test_likelihood_prefers_matched_contour():
    phi = disk_phi(SHAPE, (24, 24), 8)
    z = two_tone(phi)
    psi = identity_correspondence(*SHAPE)
    matched = log_likelihood(Particle(phi, psi, 1.0), z, 0.0025)
    shifted = log_likelihood(Particle(disk_phi(SHAPE, (27, 24), 8), psi, 1.0), z, 0.0025)
    assert shifted < matched


def test_likelihood_tempering_limit():
    phi = disk_phi(SHAPE, (24, 24), 8)
    z = two_tone(disk_phi(SHAPE, (26, 24), 8))
    p = Particle(phi, identity_correspondence(*SHAPE), 1.0)
    assert abs(log_likelihood(p, z, 1e12)) < 1e-10


def test_band_energy_penalizes_contour_in_uniform_region():
    truth = disk_phi(SHAPE, (24, 24), 6)
    z = two_tone(truth).values
    lost = disk_phi(SHAPE, (24, 24), 16).values  # band lies entirely outside the object
    # with band-local means this band would be a perfect fit
    assert band_energy(lost, z, 3.0) > band_energy(truth.values, z, 3.0) + 1e-3


def test_likelihood_empty_band():
    phi = ScalarField(np.full(SHAPE, 10.0))
    with pytest.raises(DegenerateInputError):
        log_likelihood(Particle(phi, identity_correspondence(*SHAPE), 1.0), ScalarField(np.zeros(SHAPE)), 1.0)


def test_ess_examples():
    assert effective_sample_size(np.full(200, 1 / 200)) == pytest.approx(200)
    assert effective_sample_size([1.0, 0.0, 0.0]) == 1.0
    assert effective_sample_size([0.5, 0.25, 0.25]) == pytest.approx(8 / 3)


def _breakpoints(w):
    n = len(w)
    cdf = np.cumsum(w) / np.sum(w)
    cuts = {0.0}
    for c in cdf:
        for k in range(n):
            u = n * c - k
            if 0 <= u < 1:
                cuts.add(float(u))
    cuts = sorted(cuts) + [1.0]
    # every constant piece of counts(u): its left end and its midpoint
    return [u for a, b in zip(cuts, cuts[1:]) for u in (a, 0.5 * (a + b))]


CRAFTED = [
    np.full(8, 1 / 8),
    np.array([1, 0, 0, 0, 0, 0, 0, 0.0]),
    np.array([0.5, 0.5, 0, 0, 0, 0, 0, 0]),
    np.array([0.3, 0.2, 0.15, 0.1, 0.1, 0.1, 0.05, 0.0]),
    np.array([1, 2, 3, 4, 5, 6, 7, 8.0]) / 36,
    np.array([0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.93]),
    np.array([1 / 3, 1 / 3, 1 / 3, 0, 0, 0, 0, 0]),
]


@pytest.mark.parametrize("w", CRAFTED)
def test_systematic_counts_within_one(w):
    for u in _breakpoints(w):
        c = offspring_counts(w, u)
        assert c.sum() == 8
        assert np.all(np.abs(c - 8 * w) < 1 + 1e-12), (u, c)
        assert np.all(c[w == 0] == 0)


def test_systematic_uniform_weights_one_each():
    for u in (0.0, 0.3, 0.999):
        np.testing.assert_array_equal(offspring_counts(np.full(8, 1 / 8), u), np.ones(8))


def test_systematic_exhaustive_random_weights():
    rng = np.random.default_rng(3)
    for _ in range(200):
        w = rng.dirichlet(np.full(8, 0.5))
        for u in _breakpoints(w):
            c = offspring_counts(w, u)
            assert np.all(np.abs(c - 8 * w) < 1 + 1e-9)


def test_systematic_unbiased():
    # counts averaged over u in [0, 1) equal N w exactly; integrate piecewise
    w = CRAFTED[3]
    cuts = sorted(set(_breakpoints(w)[::2]) | {1.0})
    mean = sum((b - a) * offspring_counts(w, a) for a, b in zip(cuts, cuts[1:]))
    np.testing.assert_allclose(mean, 8 * w, atol=1e-9)


def test_resample_offset_range():
    with pytest.raises(ParameterError):
        systematic_resample([0.5, 0.5], 1.0)
    with pytest.raises(ParameterError):
        systematic_resample([0.0, 0.0], 0.5)


def test_trailing_zero_weight_never_drawn():
    # the rounded cumulative sum ends just below 1 before the zero entry
    w = [6.599572010144468e-09, 9.106526899435385e-06, 8.680405727458447e-13, 0.9976118303078307,
         8.185610738511807e-05, 1.262638842099625e-08, 0.002297187831056196, 0.0]
    for u in (0.9999999999999996, np.nextafter(1.0, 0.0)):
        assert offspring_counts(w, u)[-1] == 0


def test_normalize_log_degeneracy():
    with pytest.raises(FilterDegeneracyError) as info:
        _normalize_log(np.array([-np.inf, np.nan]), 4, -np.inf)
    assert info.value.frame == 4
    w = _normalize_log(np.array([-1e6, -1e6 - 1]), 0, -1e6)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def _ens(phis, weights):
    psi = identity_correspondence(*SHAPE)
    return [Particle(p, psi, w) for p, w in zip(phis, weights)]


def test_estimate_identical_particles():
    phi = disk_phi(SHAPE, (24, 24), 8)
    est, _ = estimate(_ens([phi] * 3, [1 / 3] * 3))
    band = np.abs(phi.values) <= 2
    assert np.abs(est.values - phi.values)[band].max() < 0.25


def test_estimate_degenerate_weights():
    a, b = disk_phi(SHAPE, (20, 24), 8), disk_phi(SHAPE, (28, 24), 8)
    est, psi = estimate(_ens([a, b], [1.0, 0.0]))
    assert est is a


def test_estimate_two_offset_disks():
    a, b = disk_phi(SHAPE, (23, 24), 9), disk_phi(SHAPE, (25, 24), 9)
    est, _ = estimate(_ens([a, b], [0.5, 0.5]))
    (c,) = extract_contour(est)
    r = np.hypot(c.points[:, 0] - 24, c.points[:, 1] - 24)
    assert np.abs(r - 9).max() < 0.2


def test_estimate_psi_from_heaviest():
    phi = disk_phi(SHAPE, (24, 24), 8)
    psis = [identity_correspondence(*SHAPE), VectorField(np.zeros((2,) + SHAPE))]
    ens = [Particle(phi, psis[0], 0.3), Particle(phi, psis[1], 0.7)]
    assert estimate(ens)[1] is psis[1]


def _scene():
    phi = disk_phi(SHAPE, (22, 24), 8)
    z = two_tone(disk_phi(SHAPE, (23, 24), 8))
    w = VectorField(np.stack([np.ones(SHAPE), np.zeros(SHAPE)]))
    return phi, z, w


def test_step_single_particle_keeps_weight():
    phi, z, w = _scene()
    cfg = FilterConfig(n_particles=1, sde=SdeParams(substeps=10))
    res = step(init_ensemble(phi, identity_correspondence(*SHAPE), cfg), w, z, 1, cfg)
    assert len(res.ensemble) == 1 and res.ensemble[0].weight == 1.0
    assert res.phi is res.ensemble[0].phi


def test_step_noise_free_particles_identical():
    phi, z, w = _scene()
    cfg = FilterConfig(n_particles=4, sde=SdeParams(sigma_n=0, sigma_t=0, substeps=10), resample_threshold=1.0)
    res = step(init_ensemble(phi, identity_correspondence(*SHAPE), cfg), w, z, 1, cfg)
    for p in res.ensemble[1:]:
        np.testing.assert_array_equal(p.phi.values, res.ensemble[0].phi.values)
    assert sum(p.weight for p in res.ensemble) == pytest.approx(1.0, abs=1e-9)
    band = np.abs(res.ensemble[0].phi.values) <= 2
    assert np.abs(res.phi.values - res.ensemble[0].phi.values)[band].max() < 0.25


def test_step_weights_normalized_and_diagnostics():
    phi, z, w = _scene()
    cfg = FilterConfig(n_particles=6, sde=SdeParams(substeps=10), resample_threshold=0.5, master_seed=9)
    res = step(init_ensemble(phi, identity_correspondence(*SHAPE), cfg), w, z, 3, cfg)
    assert math.fsum(p.weight for p in res.ensemble) == pytest.approx(1.0, abs=1e-9)
    d = res.diagnostics
    assert d.frame == 3 and 1.0 <= d.ess <= 6.0 and d.max_log_likelihood <= 0
    if d.resampled:
        assert all(p.weight == pytest.approx(1 / 6) for p in res.ensemble)


def test_step_ensemble_size_mismatch():
    phi, z, w = _scene()
    cfg = FilterConfig(n_particles=3)
    with pytest.raises(ParameterError):
        step(init_ensemble(phi, identity_correspondence(*SHAPE), FilterConfig(n_particles=2)), w, z, 1, cfg)


def test_step_identical_across_worker_counts():
    phi, z, w = _scene()
    cfg = FilterConfig(n_particles=5, sde=SdeParams(substeps=10), resample_threshold=1.0, master_seed=21)
    ens0 = init_ensemble(phi, identity_correspondence(*SHAPE), cfg)
    outs = []
    for workers in (1, 2):
        with ParticlePool(workers) as pool:
            ens = ens0
            for t in (1, 2):
                res = step(ens, w, z, t, cfg, pool)
                ens = res.ensemble
        outs.append((res.phi.values, [p.phi.values for p in ens], [p.weight for p in ens]))
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    for a, b in zip(outs[0][1], outs[1][1]):
        np.testing.assert_array_equal(a, b)
    assert outs[0][2] == outs[1][2]


def test_pool_rejects_zero_workers():
    with pytest.raises(ParameterError):
        ParticlePool(0)
