import struct

import numpy as np
import pytest

from conftest import random_kruskal
from fcpd import DenseTensor, KruskalTensor, read_kruskal, read_tensor, write_kruskal, write_tensor
from fcpd.io import FormatError, dump_kruskal, dump_tensor, load_kruskal, load_tensor


def test_tensor_bytes_layout():
    t = DenseTensor.from_vec([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], (2, 3))
    expected = b"FCPT" + bytes([1, 2]) + struct.pack("<QQ", 2, 3)
    expected += struct.pack("<6d", 1, 2, 3, 4, 5, 6)
    assert dump_tensor(t) == expected


def test_kruskal_bytes_layout():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0, 6.0]])
    k_bytes = dump_kruskal(KruskalTensor([0.5, 0.25], [a, b]))
    expected = b"FCPK" + bytes([1, 2]) + struct.pack("<I", 2) + struct.pack("<QQ", 2, 1)
    expected += struct.pack("<2d", 0.5, 0.25)
    expected += struct.pack("<4d", 1, 3, 2, 4) + struct.pack("<2d", 5, 6)
    assert k_bytes == expected


def test_roundtrip_files(tmp_path, rng):
    t = DenseTensor(rng.standard_normal((3, 1, 4, 2)))
    k = random_kruskal(rng, (3, 4, 5), 2)
    write_tensor(tmp_path / "a.fcpt", t)
    write_kruskal(tmp_path / "a.fcpk", k)
    assert read_tensor(tmp_path / "a.fcpt") == t
    back = read_kruskal(tmp_path / "a.fcpk")
    np.testing.assert_array_equal(back.weights, k.weights)
    for x, y in zip(back.factors, k.factors):
        np.testing.assert_array_equal(x, y)
    assert not list(tmp_path.glob("*.tmp"))


@pytest.mark.parametrize(
    "mangle",
    [
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:4] + bytes([9]) + b[5:],
        lambda b: b[:-3],
        lambda b: b + b"\0",
    ],
)
def test_malformed_tensor(rng, mangle):
    data = dump_tensor(DenseTensor(rng.standard_normal((2, 2))))
    with pytest.raises(FormatError):
        load_tensor(mangle(data))


def test_malformed_kruskal(rng):
    data = dump_kruskal(random_kruskal(rng, (2, 3), 2))
    with pytest.raises(FormatError):
        load_kruskal(data[:-1])
    with pytest.raises(FormatError):
        load_kruskal(b"FCPT" + data[4:])


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_tensor(tmp_path / "none.fcpt")
