import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shdr.ensemble import (
    DriverSignal,
    IngestOptions,
    ResponseEnsemble,
    load_csv,
    load_driver,
    save_csv,
    save_driver,
    zscore,
)
from shdr.errors import EmptyInput, ParseError, ShortSeries


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_basic(tmp_path):
    ens = load_csv(_write(tmp_path, "1,4\n2,5\n3,6\n"))
    assert (ens.T, ens.N) == (3, 2)
    np.testing.assert_array_equal(ens.channel(0), [1, 2, 3])
    np.testing.assert_array_equal(ens.channel(1), [4, 5, 6])


def test_empty_cell_is_missing(tmp_path):
    ens = load_csv(_write(tmp_path, "1,4\n,5\n3,6\n"))
    assert ens.T == 3
    assert np.isnan(ens.values[1, 0])
    assert ens.n_missing == 1


def test_nan_token_is_missing(tmp_path):
    ens = load_csv(_write(tmp_path, "1,NaN\n2,5\n"))
    assert np.isnan(ens.values[0, 1])


def test_single_row_is_short(tmp_path):
    with pytest.raises(ShortSeries):
        load_csv(_write(tmp_path, "7\n"))


def test_empty_file(tmp_path):
    with pytest.raises(EmptyInput):
        load_csv(_write(tmp_path, ""))


def test_ragged_row_reports_line(tmp_path):
    with pytest.raises(ParseError) as info:
        load_csv(_write(tmp_path, "1,2\n3\n4,5\n"))
    assert info.value.row == 2
    assert info.value.exit_code == 2


def test_non_numeric_reports_cell(tmp_path):
    with pytest.raises(ParseError) as info:
        load_csv(_write(tmp_path, "a,b\n1,2\n3,x\n"), IngestOptions(header=True))
    assert (info.value.row, info.value.column) == (3, 2)


def test_header_labels(tmp_path):
    ens = load_csv(_write(tmp_path, "u;v\n1;2\n3;4\n"), IngestOptions(header=True, delimiter=";"))
    assert ens.labels == ("u", "v")


def test_zscore_examples():
    ens = ResponseEnsemble.from_channels([[1, 2, 3], [5, 5, 5], [1, np.nan, 3]])
    z = zscore(ens).values
    np.testing.assert_allclose(z[:, 0], [-1.224744871391589, 0, 1.224744871391589])
    np.testing.assert_array_equal(z[:, 1], [0, 0, 0])
    np.testing.assert_allclose(z[[0, 2], 2], [-1, 1])
    assert np.isnan(z[1, 2])


@given(arrays(np.float64, (30, 3), elements=st.floats(-1e3, 1e3)))
def test_zscore_moments(values):
    ens = ResponseEnsemble(values)
    z = zscore(ens).values
    for k in range(3):
        if np.ptp(values[:, k]) > 1e-6 * max(1.0, np.abs(values[:, k]).max()):
            assert abs(z[:, k].mean()) < 1e-9
            assert abs(z[:, k].std() - 1) < 1e-9


def test_csv_round_trip(tmp_path, rng):
    values = rng.normal(size=(20, 3))
    values[4, 1] = np.nan
    path = tmp_path / "rt.csv"
    save_csv(ResponseEnsemble(values), path)
    back = load_csv(path).values
    np.testing.assert_array_equal(np.isnan(back), np.isnan(values))
    np.testing.assert_array_equal(back[~np.isnan(back)], values[~np.isnan(values)])


def test_driver_round_trip(tmp_path):
    sig = DriverSignal([0, 1, 1, 2], "discrete", 3)
    save_driver(sig, tmp_path / "d.csv", {"mode": "exact"})
    back = load_driver(tmp_path / "d.csv")
    assert back.mode == "discrete" and back.time_offset == 3
    np.testing.assert_array_equal(back.values, [0, 1, 1, 2])


def test_discrete_labels_must_be_contiguous():
    with pytest.raises(ValueError):
        DriverSignal([0, 2], "discrete")


def test_ensemble_is_immutable():
    ens = ResponseEnsemble(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        ens.values[0, 0] = 1.0
