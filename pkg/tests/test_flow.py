import numpy as np
import pytest

from curvetrack.errors import ParameterError
from curvetrack.flow import FlowParams, horn_schunck, hs_derivatives, hs_energy
from curvetrack.grid import ScalarField, sample_array


def blob(shape, cx, cy, s=6.0, amp=0.5):
    ys, xs = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    return ScalarField(0.25 + amp * np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2 * s * s)))


def test_params_validation():
    for kw in ({"alpha": 0}, {"max_iterations": 0}, {"tolerance": -1}, {"intensity_scale": 0}):
        with pytest.raises(ParameterError):
            FlowParams(**kw)


def test_derivatives_of_linear_ramp():
    ys, xs = np.mgrid[0:6, 0:7].astype(float)
    a = 0.01 * xs + 0.02 * ys
    ix, iy, it = hs_derivatives(a, a + 0.03)
    np.testing.assert_allclose(ix[:-1, :-1], 0.01)
    np.testing.assert_allclose(iy[:-1, :-1], 0.02)
    np.testing.assert_allclose(it, 0.03)


def test_constant_images_give_zero_flow():
    f = ScalarField(np.full((16, 16), 0.4))
    w = horn_schunck(f, f)
    assert np.abs(w.data).max() == 0


def test_translation_recovered():
    a, b = blob((48, 48), 23, 24), blob((48, 48), 24, 24)
    w = horn_schunck(a, b)
    mask = np.abs(a.values - 0.25) > 0.05
    assert w.u[mask].mean() == pytest.approx(1.0, abs=0.25)
    assert abs(w.v[mask].mean()) < 0.25


def test_warp_residual_small():
    a, b = blob((48, 48), 23, 24), blob((48, 48), 24, 24)
    w = horn_schunck(a, b)
    ys, xs = np.mgrid[0:48, 0:48].astype(float)
    warped = sample_array(b.values, xs + w.u, ys + w.v)
    assert np.sqrt(np.mean((warped - a.values)[4:-4, 4:-4] ** 2)) < 0.02


def test_energy_decreases_monotonically():
    a, b = blob((32, 32), 15, 16), blob((32, 32), 16, 15.5)
    p = FlowParams(max_iterations=60, tolerance=0)
    ix, iy, it = hs_derivatives(a.values, b.values, p.intensity_scale)
    energies = []
    horn_schunck(a, b, p, callback=lambda k, u, v: energies.append(hs_energy(u, v, ix, iy, it, p.alpha)))
    assert len(energies) == 60
    assert all(e1 <= e0 + 1e-9 * abs(e0) for e0, e1 in zip(energies, energies[1:]))


def test_smoothness_term_decreases_with_alpha():
    # for exact minimizers the regularizer value is non-increasing in its weight
    a, b = blob((24, 24), 11, 12), blob((24, 24), 12, 12)

    def smoothness(alpha):
        w = horn_schunck(a, b, FlowParams(alpha=alpha, max_iterations=20000, tolerance=1e-9))
        return sum(np.sum(np.diff(c, axis=ax) ** 2) for c in (w.u, w.v) for ax in (0, 1))

    values = [smoothness(al) for al in (2.0, 7.0, 30.0)]
    assert values[0] >= values[1] >= values[2]


def test_shape_mismatch():
    with pytest.raises(ParameterError):
        horn_schunck(ScalarField(np.zeros((4, 4))), ScalarField(np.zeros((4, 5))))
