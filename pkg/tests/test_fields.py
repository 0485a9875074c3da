import numpy as np
import pytest
from hypothesis import given, strategies as st

from micropolar_lab.errors import InvalidParameterError, UnsupportedRepresentationError
from micropolar_lab.fields import CubeSet, LatticeGrid, SpectralField, read_field, write_field
from micropolar_lab.illposedness import build_initial_data

from conftest import philox


def test_lattice_frequencies(grid8):
    assert grid8.h == (1.0, 1.0, 1.0)
    assert grid8.xi[:, 1, 2, 3].tolist() == [1.0, 2.0, 3.0]
    assert grid8.xi[:, 7, 4, 0].tolist() == [-1.0, -4.0, 0.0]


@pytest.mark.parametrize("n", [(3, 4, 4), (4, 4, 0)])
def test_lattice_rejects_bad_points(n):
    with pytest.raises(InvalidParameterError):
        LatticeGrid(n, (1.0, 1.0, 1.0))


def test_cube_rejects_bad_width():
    with pytest.raises(InvalidParameterError):
        CubeSet([[0.0, 0.0, 0.0]], [[1.0, 0.0, 1.0]])


def test_field_needs_one_support(grid8):
    with pytest.raises(InvalidParameterError):
        SpectralField(np.zeros((6,) + grid8.shape))
    with pytest.raises(InvalidParameterError):
        SpectralField(np.zeros((5,) + grid8.shape), grid=grid8)


def test_different_lattices_do_not_add(grid8, grid16):
    with pytest.raises(InvalidParameterError):
        SpectralField.zeros_like_grid(grid8) + SpectralField.zeros_like_grid(grid16)


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_real_transform_roundtrip(seed):
    grid = LatticeGrid((8, 6, 4), (0.5, 1.0, 2.0))
    phys = philox(seed).standard_normal((6,) + grid.shape)
    spec = grid.to_spectral_real(phys)
    f = SpectralField(spec, grid=grid)
    assert f.hermitian_residual() < 1e-13
    np.testing.assert_allclose(grid.to_physical_real(spec), phys, atol=1e-12)
    np.testing.assert_allclose(grid.to_physical(spec).real, phys, atol=1e-12)


def test_mirror_of_cube_data_is_conjugate():
    _, f = build_initial_data(3, 0.05, order=4)
    assert f.hermitian_residual() < 1e-14


def test_asymmetric_cubes_have_no_mirror():
    cubes = CubeSet([[5.0, 0.0, 0.0]], [[1.0, 1.0, 1.0]], order=2)
    f = SpectralField(np.ones((6, cubes.nodes.shape[1])), cubes=cubes)
    with pytest.raises(UnsupportedRepresentationError):
        f.hermitian_residual()


def test_lattice_file_roundtrip(tmp_path, smooth_field):
    g = smooth_field.with_values(smooth_field.values, meta={"t": 0.5})
    path = write_field(tmp_path / "f.txt", g)
    back = read_field(path)
    assert back.grid == g.grid
    assert back.real_valued and back.divergence_free
    assert back.meta == {"t": 0.5}
    np.testing.assert_array_equal(back.values, g.values)


def test_cube_file_roundtrip(tmp_path):
    _, f = build_initial_data(2, 0.05, order=2)
    back = read_field(write_field(tmp_path / "c.txt", f))
    np.testing.assert_array_equal(back.values, f.values)
    np.testing.assert_array_equal(back.cubes.centers, f.cubes.centers)


def test_file_with_wrong_columns_is_rejected(tmp_path, grid8):
    path = write_field(tmp_path / "f.txt", SpectralField.zeros_like_grid(grid8))
    lines = path.read_text().splitlines()
    lines[2] = "9 " + lines[2].split(" ", 1)[1]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvalidParameterError):
        read_field(path)


def test_file_without_header_is_rejected(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(InvalidParameterError):
        read_field(path)


@pytest.mark.parametrize("cut", ["row", "column"])
def test_truncated_file_is_rejected(tmp_path, grid8, cut):
    path = write_field(tmp_path / "f.txt", SpectralField.zeros_like_grid(grid8))
    lines = path.read_text().splitlines()
    if cut == "row":
        lines = lines[:-1]
    else:
        lines = lines[:2] + [line.rsplit(" ", 1)[0] for line in lines[2:]]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(InvalidParameterError):
        read_field(path)
