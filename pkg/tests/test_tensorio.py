import numpy as np
import pytest

from sedpipe.tensorio import TensorFormatError, load_matrix, load_tensor, save_tensor


def test_roundtrip_2d(tmp_path):
    x = np.arange(12, dtype=np.float64).reshape(3, 4)
    path = tmp_path / "x.tns"
    save_tensor(path, x)
    assert np.array_equal(load_tensor(path), x)


def test_roundtrip_3d(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 5, 7))
    path = tmp_path / "x.tns"
    save_tensor(path, x)
    assert np.array_equal(load_tensor(path), x)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.tns"
    path.write_bytes(b"NOTATNSR" + b"\x00" * 16)
    with pytest.raises(TensorFormatError, match="magic"):
        load_tensor(path)


def test_truncated_payload(tmp_path):
    x = np.ones((4, 4))
    path = tmp_path / "x.tns"
    save_tensor(path, x)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TensorFormatError, match="size"):
        load_tensor(path)


def test_csv_fallback(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1.0,2.0\n3.0,4.0\n")
    assert np.array_equal(load_matrix(path), [[1.0, 2.0], [3.0, 4.0]])
