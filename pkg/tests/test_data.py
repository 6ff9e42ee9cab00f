"""Cell data model, CSV round trips and observed end of life."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plrsoh.data import (SECONDS_PER_DAY, CellSeries, export_csv, ingest_csv, ingest_dir,
                         series_equal, true_eol, try_true_eol)
from plrsoh.errors import CensoredCellError, DataError, ParseError, SchemaError

DAY = SECONDS_PER_DAY


def make_cell(cid="c0", n=10, cap_days=(0.0, 10.0, 20.0), caps=(1.1, 0.9, 0.8), nominal=1.1):
    t = np.arange(n) * 60.0
    return CellSeries(cid, t, np.linspace(-1, 1, n), np.linspace(3.0, 3.5, n), np.full(n, 25.0),
                      np.asarray(cap_days) * DAY, caps, nominal)


def write_pair(tmp_path, sample_rows, capacity_rows,
               sample_header="cell_id,time_s,current_a,voltage_v,temperature_c",
               capacity_header="cell_id,time_s,capacity_ah,nominal_ah"):
    s = tmp_path / "samples.csv"
    c = tmp_path / "capacity.csv"
    s.write_text("\n".join([sample_header, *sample_rows]) + "\n")
    c.write_text("\n".join([capacity_header, *capacity_rows]) + "\n")
    return s, c


class TestIngest:
    def test_two_cells_ten_rows_each(self, tmp_path):
        rows = [f"{cid},{i * 10.0},0.5,3.3,25" for cid in ("a", "b") for i in range(10)]
        caps = [f"{cid},{t},1.0,1.1" for cid in ("a", "b") for t in (0, 100)]
        s, c = write_pair(tmp_path, rows, caps)
        cells = ingest_csv(s, c)
        assert [x.cell_id for x in cells] == ["a", "b"]
        assert all(x.n_samples == 10 for x in cells)

    def test_non_monotonic_time_names_cell(self, tmp_path):
        rows = ["bad,0,0,3.3,25", "bad,5,0,3.3,25", "bad,3,0,3.3,25"]
        s, c = write_pair(tmp_path, rows, ["bad,0,1.0,1.1", "bad,5,1.0,1.1"])
        with pytest.raises(DataError, match="non-monotonic time") as exc:
            ingest_csv(s, c)
        assert "bad" in str(exc.value)

    def test_missing_capacity_column(self, tmp_path):
        s, c = write_pair(tmp_path, ["a,0,0,3.3,25", "a,1,0,3.3,25"], ["a,0,1.1", "a,1,1.1"],
                          capacity_header="cell_id,time_s,nominal_ah")
        with pytest.raises(SchemaError):
            ingest_csv(s, c)

    def test_missing_nominal_value(self, tmp_path):
        s, c = write_pair(tmp_path, ["a,0,0,3.3,25", "a,1,0,3.3,25"], ["a,0,1.0,", "a,1,1.0,"])
        with pytest.raises(SchemaError, match="nominal"):
            ingest_csv(s, c)

    def test_parse_error_carries_line(self, tmp_path):
        s, c = write_pair(tmp_path, ["a,0,0,3.3,25", "a,1,zero,3.3,25"], ["a,0,1.0,1.1", "a,1,1.0,1.1"])
        with pytest.raises(ParseError) as exc:
            ingest_csv(s, c)
        assert exc.value.line == 3

    def test_round_trip_is_lossless(self, tmp_path, small_fleet):
        cells = small_fleet[0][:3]
        export_csv(cells, tmp_path / "samples.csv")
        back = ingest_dir(tmp_path)
        assert len(back) == 3
        assert all(series_equal(a, b) for a, b in zip(cells, back))

    def test_arrays_are_read_only(self):
        cell = make_cell()
        with pytest.raises(ValueError):
            cell.voltage[0] = 1.0


class TestCellSeries:
    def test_variables_order_and_power(self):
        cell = make_cell()
        v = cell.variables()
        assert v.shape == (6, 10)
        assert np.allclose(v[3], cell.current * cell.voltage)
        assert np.allclose(v[4], np.abs(cell.current))
        assert np.allclose(v[5], np.abs(v[3]))

    def test_last_sample_holds_zero_time(self):
        d = make_cell().durations()
        assert d[-1] == 0.0 and np.all(d[:-1] == 60.0)

    def test_capacity_at_nearest_with_earlier_tie(self):
        cell = make_cell()
        q = cell.capacity_at(np.array([0.0, 4.0, 5.0, 6.0, 25.0]) * DAY)
        assert q.tolist() == [1.1, 1.1, 1.1, 0.9, 0.8]

    def test_rejects_nonpositive_voltage(self):
        with pytest.raises(DataError):
            CellSeries("x", [0, 1], [0, 0], [3.0, 0.0], [25, 25], [0, 1], [1, 1], 1.0)


class TestTrueEol:
    def test_interpolated_crossing_twelve_days(self):
        # 0.88 Ah threshold crossed between (10 d, 0.90) and (20 d, 0.80)
        assert abs(true_eol(make_cell()) - 12.0) < 1e-12

    def test_crossing_before_second_observation(self):
        # (0, 1.1) -> (10, 0.85): 0.88 is reached at 10 * 0.22 / 0.25 = 8.8 d
        cell = make_cell(caps=(1.1, 0.85, 0.84))
        assert abs(true_eol(cell) - 8.8) < 1e-12

    def test_constant_capacity_is_censored(self):
        cell = make_cell(caps=(1.1, 1.1, 1.1))
        with pytest.raises(CensoredCellError):
            true_eol(cell)
        assert try_true_eol(cell) is None

    def test_exact_threshold_observation(self):
        cell = make_cell(caps=(1.1, 0.88, 0.8))
        assert true_eol(cell) == 10.0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 0.05), min_size=4, max_size=12), st.floats(1e-4, 0.2))
    def test_lowering_capacities_never_delays_eol(self, drops, eps):
        caps = 1.1 - np.cumsum([0.0] + drops) - np.linspace(0, 0.3, len(drops) + 1)
        caps = np.maximum(caps, 0.05)
        days = np.arange(caps.size, dtype=float)
        a = make_cell(cap_days=days, caps=caps)
        b = make_cell(cap_days=days, caps=np.maximum(caps - eps, 0.01))
        ta, tb = try_true_eol(a), try_true_eol(b)
        if ta is not None:
            assert tb is not None and tb <= ta + 1e-12
