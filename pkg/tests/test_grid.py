import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from curvetrack.errors import DecodeError, ParameterError
from curvetrack.grid import (LabelMap, ScalarField, VectorField, bilinear_sample, central_gradient,
                             gaussian_smooth, load_image, load_labels, read_ctf, read_scalar, read_vector,
                             save_image, save_labels, write_ctf)


def test_scalar_field_is_readonly_copy():
    a = np.zeros((3, 4))
    f = ScalarField(a)
    a[0, 0] = 5
    assert f.values[0, 0] == 0
    assert (f.width, f.height, f.shape) == (4, 3, (3, 4))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1


@pytest.mark.parametrize("bad", [np.zeros((1, 5)), np.zeros(4), np.full((3, 3), np.nan)])
def test_scalar_field_rejects(bad):
    with pytest.raises(ParameterError):
        ScalarField(bad)


def test_vector_field_components():
    w = VectorField.from_components(np.ones((3, 3)), 2 * np.ones((3, 3)))
    assert w.shape == (3, 3)
    np.testing.assert_allclose(w.magnitude(), np.sqrt(5))
    with pytest.raises(ParameterError):
        VectorField(np.zeros((3, 4, 4)))


def test_label_map_checks():
    lab = LabelMap(np.array([[0, 1], [2, 1]]))
    assert lab.n_classes == 3
    assert lab.mask(1).sum() == 2
    with pytest.raises(ParameterError):
        LabelMap(np.array([[0, 3], [1, 1]]), n_classes=2)
    with pytest.raises(ParameterError):
        LabelMap(np.array([[0, -1], [1, 1]]))


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_round_trip(tmp_path, rng, bits):
    img = ScalarField(rng.random((7, 9)))
    save_image(img, tmp_path / "a.pgm", bits)
    back = load_image(tmp_path / "a.pgm")
    assert back.shape == (7, 9)
    np.testing.assert_allclose(back.values, img.values, atol=0.5 / (2 ** bits - 1) + 1e-12)


def test_pgm_header_comments(tmp_path):
    data = b"P5\n# made by hand\n3 2\n# another\n255\n" + bytes([0, 128, 255, 10, 20, 30])
    (tmp_path / "c.pgm").write_bytes(data)
    img = load_image(tmp_path / "c.pgm")
    np.testing.assert_allclose(img.values[0], [0, 128 / 255, 1])


def test_png_input(tmp_path):
    arr = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
    Image.fromarray(arr, mode="L").save(tmp_path / "a.png")
    np.testing.assert_allclose(load_image(tmp_path / "a.png").values, arr / 255)


@pytest.mark.parametrize("payload", [
    b"P6\n2 2\n255\n" + bytes(12),
    b"P5\n2 2\n255\n" + bytes(3),
    b"P5\n0 2\n255\n",
    b"P5\nx 2\n255\n" + bytes(4),
    b"GIF89a",
])
def test_decode_errors(tmp_path, payload):
    (tmp_path / "bad.pgm").write_bytes(payload)
    with pytest.raises(DecodeError):
        load_image(tmp_path / "bad.pgm")


def test_missing_file_is_decode_error(tmp_path):
    with pytest.raises(DecodeError):
        load_image(tmp_path / "nope.pgm")


def test_labels_round_trip(tmp_path):
    lab = LabelMap(np.array([[0, 1, 2], [2, 2, 1]]))
    save_labels(lab, tmp_path / "l.pgm")
    np.testing.assert_array_equal(load_labels(tmp_path / "l.pgm").labels, lab.labels)


def test_ctf_round_trip(tmp_path, rng):
    s = ScalarField(rng.normal(size=(5, 6)))
    v = VectorField(rng.normal(size=(2, 5, 6)))
    write_ctf(s, tmp_path / "s.ctf")
    write_ctf(v, tmp_path / "v.ctf")
    np.testing.assert_allclose(read_scalar(tmp_path / "s.ctf").values, s.values, rtol=1e-6)
    np.testing.assert_allclose(read_vector(tmp_path / "v.ctf").data, v.data, rtol=1e-6)
    raw = (tmp_path / "v.ctf").read_bytes()
    assert struct.unpack_from("<4sIII", raw) == (b"CTF1", 6, 5, 2)
    with pytest.raises(DecodeError):
        read_scalar(tmp_path / "v.ctf")
    (tmp_path / "t.ctf").write_bytes(raw[:-4])
    with pytest.raises(DecodeError):
        read_ctf(tmp_path / "t.ctf")


def test_bilinear_sample_exact_on_linear_field():
    ys, xs = np.mgrid[0:5, 0:6].astype(float)
    f = ScalarField(2 * xs - 3 * ys + 1)
    assert bilinear_sample(f, (2.25, 1.5)) == pytest.approx(2 * 2.25 - 3 * 1.5 + 1)
    # clamped outside
    assert bilinear_sample(f, (-3, 0)) == pytest.approx(1)


def test_central_gradient_linear():
    ys, xs = np.mgrid[0:5, 0:6].astype(float)
    g = central_gradient(ScalarField(2 * xs - 3 * ys))
    np.testing.assert_allclose(g.u, 2)
    np.testing.assert_allclose(g.v, -3)


def test_smooth_sigma_zero_and_negative(rng):
    f = ScalarField(rng.random((6, 6)))
    assert gaussian_smooth(f, 0) is f
    with pytest.raises(ParameterError):
        gaussian_smooth(f, -1)


def test_smooth_preserves_constant():
    f = ScalarField(np.full((20, 20), 0.3))
    np.testing.assert_allclose(gaussian_smooth(f, 2.0).values, 0.3, atol=1e-14)


def test_masked_smoothing_keeps_step_edge(rng):
    lab = np.zeros((30, 30), dtype=int)
    lab[:, 15:] = 1
    mask = LabelMap(lab)
    vals = np.where(lab == 0, 0.2, 0.8)
    out = gaussian_smooth(ScalarField(vals), 3.0, mask).values
    np.testing.assert_allclose(out, vals, atol=1e-12)
    noisy = vals + 0.05 * rng.standard_normal(vals.shape)
    sm = gaussian_smooth(ScalarField(noisy), 2.0, mask).values
    # no intermediate values leak across the boundary
    assert sm[:, :15].max() < 0.5 < sm[:, 15:].min()
    for c in (0, 1):
        assert sm[lab == c].mean() == pytest.approx(noisy[lab == c].mean(), abs=1e-12)


def test_smoothing_reduces_variance(rng):
    f = ScalarField(rng.standard_normal((64, 64)))
    assert gaussian_smooth(f, 2.0).values.std() < 0.3


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 4.0), st.integers(0, 2 ** 32 - 1))
def test_smoothing_class_means_conserved(sigma, seed):
    r = np.random.default_rng(seed)
    lab = (r.random((16, 16)) < 0.5).astype(int)
    lab[0, 0], lab[0, 1] = 0, 1
    vals = r.random((16, 16))
    out = gaussian_smooth(ScalarField(vals), sigma, LabelMap(lab)).values
    for c in (0, 1):
        assert out[lab == c].mean() == pytest.approx(vals[lab == c].mean(), abs=1e-12)
