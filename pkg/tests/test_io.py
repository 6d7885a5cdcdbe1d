import os
import tempfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from h2sketch import generate_points, load_h2, read_dense, read_points, save_h2, write_dense, write_points


def test_grid_examples():
    corners = generate_points(8, 3, "grid")
    assert {tuple(p) for p in corners} == {(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)}
    lattice = generate_points(27, 3, "grid")
    assert sorted(set(lattice.ravel())) == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        generate_points(10, 3, "grid")
    with pytest.raises(ValueError):
        generate_points(10, 3, "spiral")


def test_random_points_reproducible():
    a = generate_points(1000, 3, "uniform-random", 11)
    np.testing.assert_array_equal(a, generate_points(1000, 3, "random", 11))
    assert a.min() >= 0 and a.max() < 1
    assert not np.array_equal(a, generate_points(1000, 3, "random", 12))


@given(st.integers(1, 50), st.integers(1, 3), st.integers(0, 100))
def test_point_file_roundtrip(n, dim, seed):
    pts = np.random.default_rng(seed).random((n, dim))
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "p.bin")
        write_points(path, pts)
        np.testing.assert_array_equal(read_points(path), pts)


def test_point_file_errors(tmp_path):
    path = tmp_path / "p.bin"
    write_points(path, np.array([[0.0, np.inf]]))
    with pytest.raises(ValueError):
        read_points(path)
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(ValueError):
        read_points(path)


def test_dense_file_roundtrip(tmp_path, rng):
    m = rng.standard_normal((7, 7))
    write_dense(tmp_path / "m.bin", m)
    np.testing.assert_array_equal(read_dense(tmp_path / "m.bin"), m)
    (tmp_path / "x.bin").write_bytes(b"nonsense")
    with pytest.raises(ValueError):
        read_dense(tmp_path / "x.bin")


def test_h2_roundtrip(h2_1024, tmp_path, rng):
    h2, _ = h2_1024
    save_h2(tmp_path / "a.h2", h2)
    back = load_h2(tmp_path / "a.h2")
    x = rng.standard_normal((h2.n, 3))
    np.testing.assert_array_equal(back.matvec(x), h2.matvec(x))
    assert back.memory_report() == h2.memory_report()
    save_h2(tmp_path / "b.h2", back)
    assert (tmp_path / "a.h2").read_bytes() == (tmp_path / "b.h2").read_bytes()


def test_h2_bad_file(tmp_path):
    (tmp_path / "x.h2").write_bytes(b"H2SKETCH" + b"\x09\x00\x00\x00\x00\x00\x00\x00")
    with pytest.raises(ValueError, match="version"):
        load_h2(tmp_path / "x.h2")
    (tmp_path / "y.h2").write_bytes(b"garbage!")
    with pytest.raises(ValueError):
        load_h2(tmp_path / "y.h2")
