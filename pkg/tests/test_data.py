import numpy as np
import pytest

from iboss import data as iodata
from iboss.data import DataMatrix, load_binary, load_csv, save_binary
from iboss.errors import (
    DimensionMismatch,
    MissingResponse,
    NonPositiveForLog,
    ParseError,
)


class TestDataMatrix:
    def test_basic_shape(self):
        d = DataMatrix(z=np.array([[0.0], [1.0], [2.0]]), y=np.array([1.0, 3.0, 5.0]))
        assert d.n == 3 and d.p == 1
        assert d.names == ["z1", "y"]
        assert d.z.flags["F_CONTIGUOUS"]

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            DataMatrix(z=np.array([[np.nan]]), y=np.array([1.0]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            DataMatrix(z=np.zeros((3, 1)), y=np.zeros(2))

    def test_design_has_intercept(self):
        d = DataMatrix(z=np.array([[2.0], [3.0]]), y=np.zeros(2))
        np.testing.assert_allclose(d.design(), [[1, 2], [1, 3]])


class TestCsvLoading:
    def test_three_row_example(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("z,y\n0,1\n1,3\n2,5\n")
        d = load_csv(path, response="y")
        assert d.n == 3 and d.p == 1
        np.testing.assert_allclose(d.z[:, 0], [0, 1, 2])
        np.testing.assert_allclose(d.y, [1, 3, 5])
        assert d.names == ["z", "y"]

    def test_missing_response(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(MissingResponse):
            load_csv(path, response="y")

    def test_parse_error_carries_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("z,y\n0,1\nbad,3\n2,5\n")
        with pytest.raises(ParseError) as exc:
            load_csv(path, response="y")
        assert exc.value.line == 3

    def test_field_count_mismatch(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("z,y\n0,1\n1\n")
        with pytest.raises(ParseError) as exc:
            load_csv(path, response="y")
        assert exc.value.line == 3

    def test_log_transform(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("z,y\n1,1\n2,4\n")
        d = load_csv(path, response="y", transform="log")
        np.testing.assert_allclose(d.z[:, 0], np.log([1.0, 2.0]))
        np.testing.assert_allclose(d.y, np.log([1.0, 4.0]))

    def test_log_rejects_nonpositive(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("z,y\n1,1\n0,4\n")
        with pytest.raises(NonPositiveForLog) as exc:
            load_csv(path, response="y", transform="log")
        assert exc.value.column == "z"
        assert exc.value.line == 3

    def test_log_excluding(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("z,t,y\n1,-5,1\n2,3,4\n")
        d = load_csv(path, response="y", transform="log-excluding",
                     exclude_from_transform=("t",))
        np.testing.assert_allclose(d.z[:, 0], np.log([1.0, 2.0]))
        np.testing.assert_allclose(d.z[:, 1], [-5.0, 3.0])

    def test_chunk_boundary(self, tmp_path, monkeypatch):
        # force multiple chunks to cover the streaming path
        monkeypatch.setattr(iodata, "_CSV_CHUNK_ROWS", 7)
        rows = "\n".join(f"{i},{2 * i}" for i in range(25))
        path = tmp_path / "d.csv"
        path.write_text("z,y\n" + rows + "\n")
        d = load_csv(path, response="y")
        assert d.n == 25
        np.testing.assert_allclose(d.y, 2.0 * d.z[:, 0])

    def test_chunked_log_error_line(self, tmp_path, monkeypatch):
        monkeypatch.setattr(iodata, "_CSV_CHUNK_ROWS", 4)
        lines = [f"{i + 1},{i + 1}" for i in range(10)]
        lines[6] = "-3,1"  # data row 7 sits at file line 8 (header is line 1)
        path = tmp_path / "d.csv"
        path.write_text("z,y\n" + "\n".join(lines) + "\n")
        with pytest.raises(NonPositiveForLog) as exc:
            load_csv(path, response="y", transform="log")
        assert exc.value.line == 8


class TestBinaryFormat:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        z = rng.standard_normal((57, 4))
        d = DataMatrix(z=z, y=rng.standard_normal(57))
        path = tmp_path / "d.ibs"
        save_binary(d, path)
        back = load_binary(path)
        assert back.n == 57 and back.p == 4
        np.testing.assert_array_equal(back.z, d.z)
        np.testing.assert_array_equal(back.y, d.y)
        # second save is byte-identical
        path2 = tmp_path / "d2.ibs"
        save_binary(back, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ibs"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(ParseError):
            load_binary(path)

    def test_truncated_payload(self, tmp_path, rng):
        d = DataMatrix(z=rng.standard_normal((10, 2)), y=rng.standard_normal(10))
        path = tmp_path / "d.ibs"
        save_binary(d, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(ParseError):
            load_binary(path)
