import numpy as np
import pytest

from uqss.data import (
    DataError,
    Dataset,
    SplitSpec,
    gen_dataset1,
    gen_dataset3,
    ingest_csv,
    load_csv,
    normalize,
    split,
    write_csv,
)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadCsv:
    def test_drops_rows_with_missing_cells(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,t\n1,2\n3,\n5,6\n7,8\n")
        d, stats = ingest_csv(p, "t")
        assert d.n_samples == 3
        assert stats.dropped == 1

    def test_constant_target_is_degenerate(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,t\n1,5\n2,5\n3,5\n")
        with pytest.raises(DataError, match="degenerate target range"):
            load_csv(p, "t")

    def test_constant_feature_column_rejected(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,y,t\n1,2,1\n1,3,2\n1,4,3\n")
        with pytest.raises(DataError, match="zero-range column"):
            load_csv(p, "x")

    def test_who_style_row_counts(self, tmp_path):
        # 2938 rows of which 1649 are complete, like the WHO life table file
        rng = np.random.default_rng(0)
        total, complete = 2938, 1649
        rows = []
        for i in range(total):
            vals = [f"{v:.6f}" for v in rng.uniform(0, 10, 4)]
            if i >= complete:
                vals[int(rng.integers(0, 4))] = ""
            rows.append(",".join(vals))
        p = _write(tmp_path, "who.csv", "a,b,c,life\n" + "\n".join(rows) + "\n")
        d, stats = ingest_csv(p, "life")
        assert d.n_samples == 1649
        assert stats.dropped == total - complete

    def test_non_numeric_cell_reports_position(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,t\n1,2\n3,oops\n")
        with pytest.raises(DataError, match=r"row 3.*'t'"):
            load_csv(p, "t")

    def test_unknown_target_column(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,t\n1,2\n")
        with pytest.raises(DataError, match="unknown target column"):
            load_csv(p, "z")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DataError, match="unreadable"):
            load_csv(tmp_path / "missing.csv", "t")

    def test_zero_usable_rows(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,t\n,\n,\n")
        with pytest.raises(DataError, match="zero usable rows"):
            load_csv(p, "t")

    def test_target_column_by_index_and_crlf(self, tmp_path):
        p = _write(tmp_path, "a.csv", "x,t\r\n1,2\r\n3,4\r\n")
        d = load_csv(p, 1)
        assert d.target_name == "t"
        assert list(d.targets) == [2.0, 4.0]

    def test_write_read_round_trip(self, tmp_path):
        d = gen_dataset3(50, 1)
        p = tmp_path / "d.csv"
        write_csv(d, p)
        d2 = load_csv(p, "t")
        assert np.array_equal(d.features, d2.features)
        assert np.array_equal(d.targets, d2.targets)
        assert d.column_names == d2.column_names


class TestNormalize:
    def test_linear_map_endpoints(self):
        d = Dataset(np.array([[2.0], [4.0], [6.0]]), np.array([1.0, 2.0, 3.0]), ("x", "t"))
        nd, _ = normalize(d)
        assert np.allclose(nd.features[:, 0], [0.0, 0.5, 1.0])

    def test_already_unit_column_unchanged(self):
        x = np.array([[0.0], [0.25], [1.0]])
        d = Dataset(x, np.array([0.0, 0.5, 1.0]), ("x", "t"))
        nd, _ = normalize(d)
        assert np.array_equal(nd.features, x)
        assert np.array_equal(nd.targets, d.targets)

    def test_round_trip_error_below_1e12(self):
        rng = np.random.default_rng(3)
        d = Dataset(rng.uniform(-5, 9, (200, 4)), rng.uniform(10, 30, 200), tuple("abcd") + ("t",))
        nd, norm = normalize(d)
        back = norm.inverse(nd)
        scale = np.abs(d.features).max()
        assert np.max(np.abs(back.features - d.features)) / scale < 1e-12
        assert np.max(np.abs(back.targets - d.targets)) / np.abs(d.targets).max() < 1e-12

    def test_idempotent_on_normalized_data(self):
        rng = np.random.default_rng(4)
        d = Dataset(rng.uniform(0, 1, (50, 2)), rng.uniform(0, 1, 50), ("a", "b", "t"))
        nd, _ = normalize(d)
        nd2, _ = normalize(nd)
        assert np.max(np.abs(nd2.features - nd.features)) < 1e-12
        assert np.max(np.abs(nd2.targets - nd.targets)) < 1e-12

    def test_values_in_unit_interval(self):
        d = gen_dataset3(100, 2)
        nd, _ = normalize(d)
        assert nd.features.min() >= 0.0 and nd.features.max() <= 1.0
        assert nd.targets.min() >= 0.0 and nd.targets.max() <= 1.0


class TestGenerators:
    def test_dataset1_deterministic(self):
        a = gen_dataset1(100, 42)
        b = gen_dataset1(100, 42)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.targets, b.targets)

    def test_dataset1_residual_band(self):
        d = gen_dataset1(2000, 9)
        resid = d.targets - (0.5 + 0.35 * np.sin(4 * np.pi * d.features[:, 0]))
        assert np.all(np.abs(resid) <= 0.08 + 1e-12)

    def test_dataset1_homoscedastic(self):
        d = gen_dataset1(5000, 11)
        x = d.features[:, 0]
        resid = d.targets - (0.5 + 0.35 * np.sin(4 * np.pi * x))
        s_left = resid[x < 0.5].std()
        s_right = resid[x >= 0.5].std()
        assert abs(s_left - s_right) / s_right < 0.20

    def test_dataset1_minimum_size(self):
        with pytest.raises(DataError):
            gen_dataset1(5, 0)

    def test_dataset3_third_input_uncorrelated(self):
        d = gen_dataset3(5000, 13)
        r = np.corrcoef(d.features[:, 2], d.targets)[0, 1]
        assert abs(r) < 0.05

    def test_dataset3_noise_width_strata(self):
        d = gen_dataset3(5000, 17)
        x2 = d.features[:, 1]
        resid = d.targets - np.sin(np.pi * d.features[:, 0] / 2.0)
        low = resid[x2 <= 1.0]
        high = resid[x2 >= 3.0]
        w_low = low.max() - low.min()
        w_high = high.max() - high.min()
        assert abs(w_low - 0.1) / 0.1 < 0.15
        assert abs(w_high - 0.45) / 0.45 < 0.15

    def test_dataset3_one_sided_noise(self):
        d = gen_dataset3(3000, 19)
        assert np.all(d.targets <= np.sin(np.pi * d.features[:, 0] / 2.0) + 1e-9)

    def test_dataset3_deterministic(self):
        a = gen_dataset3(60, 5)
        b = gen_dataset3(60, 5)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.targets, b.targets)


class TestSplit:
    def test_counts(self):
        d = gen_dataset1(10, 1)
        tr, te = split(d, SplitSpec(0.8, 0))
        assert tr.n_samples == 8 and te.n_samples == 2

    def test_same_seed_same_partition(self):
        d = gen_dataset1(50, 2)
        a = split(d, SplitSpec(0.7, 5))
        b = split(d, SplitSpec(0.7, 5))
        assert np.array_equal(a[0].features, b[0].features)
        assert np.array_equal(a[1].targets, b[1].targets)

    def test_no_shuffle_takes_leading_rows(self):
        d = gen_dataset1(10, 3)
        tr, te = split(d, SplitSpec(0.8, 0, shuffle=False))
        assert np.array_equal(tr.features, d.features[:8])
        assert np.array_equal(te.features, d.features[8:])

    def test_row_conservation_and_disjointness(self):
        d = gen_dataset1(37, 4)
        tr, te = split(d, SplitSpec(0.6, 9))
        assert tr.n_samples + te.n_samples == 37
        combined = np.vstack([tr.features, te.features])
        assert np.array_equal(np.sort(combined[:, 0]), np.sort(d.features[:, 0]))

    def test_empty_part_rejected(self):
        d = gen_dataset1(10, 1)
        with pytest.raises(DataError):
            split(d, SplitSpec(0.05, 0))


class TestDataset:
    def test_ranges_recomputed_from_values(self):
        d = Dataset(np.array([[1.0, 0.0], [3.0, 10.0]]), np.array([2.0, 8.0]), ("a", "b", "t"))
        assert np.allclose(d.input_ranges, [2.0, 10.0])
        assert d.target_range == 6.0

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            Dataset(np.array([[np.nan]]), np.array([1.0]), ("x", "t"))

    def test_immutable_arrays(self):
        d = gen_dataset1(20, 0)
        with pytest.raises(ValueError):
            d.features[0, 0] = 99.0
