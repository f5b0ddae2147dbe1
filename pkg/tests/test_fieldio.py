import numpy as np
import pytest

from anisoheat.fieldio import field_from_bytes, field_to_bytes, field_to_csv, read_field, write_field
from anisoheat.propagator import Field, SpatialGrid


@pytest.mark.parametrize("dim,points", [(1, 8), (2, 4), (3, 2)])
def test_binary_roundtrip(tmp_path, rng, dim, points):
    grid = SpatialGrid(dim, points, 1.5)
    u = Field(grid, rng.standard_normal(grid.shape))
    path = tmp_path / "u.bin"
    write_field(path, u)
    back = read_field(path)
    assert back.grid == grid
    assert np.array_equal(back.values, u.values)
    assert len(path.read_bytes()) == 24 + 8 * points ** dim


def test_truncated_rejected():
    grid = SpatialGrid(1, 4, 1.0)
    data = field_to_bytes(Field(grid, np.arange(4.0)))
    with pytest.raises(ValueError):
        field_from_bytes(data[:-8])


def test_csv_layout():
    grid = SpatialGrid(1, 2, 1.0)
    text = field_to_csv(Field(grid, np.array([0.25, 1.0])))
    assert text.splitlines() == ["i0,x0,value", "0,-1.0,0.25", "1,0.0,1.0"]
