import numpy as np
import pytest

from igcf.datasets import (
    DataError,
    exclude_users,
    filter_records,
    from_records,
    ingest,
    most_active_users,
    read_id_maps,
    sample_mask,
    write_id_maps,
)


class TestIngestCsvTriplets:
    def test_two_line_fixture(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("user,item,value\n10,7,4.0\n20,9,2.0\n")
        data = ingest(path, "csv_triplets")
        assert len(data) == 2
        assert data.num_users == 2 and data.num_items == 2
        assert data.users.tolist() == [0, 1]

    def test_timestamp_column(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("user,item,value,timestamp\n1,1,5,100\n1,2,3,50\n")
        data = ingest(path, "csv_triplets")
        assert data.timestamps.tolist() == [100.0, 50.0]

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(DataError, match="line 1"):
            ingest(path, "csv_triplets")

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("user,item,value\n1,2,3\n1,x,3\n")
        with pytest.raises(DataError, match="line 3"):
            ingest(path, "csv_triplets")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataError):
            ingest(path, "csv_triplets")


class TestIngestMovielens:
    def test_parse(self, tmp_path):
        path = tmp_path / "ratings.dat"
        path.write_text("1::1193::5::978300760\n1::661::3::978302109\n")
        data = ingest(path, "movielens_dat")
        assert len(data) == 2
        assert data.feedback_kind == "rating"
        assert data.values.tolist() == [5.0, 3.0]

    def test_malformed(self, tmp_path):
        path = tmp_path / "ratings.dat"
        path.write_text("1::2::3::4\n1::2::3\n")
        with pytest.raises(DataError, match="line 2"):
            ingest(path, "movielens_dat")


class TestIngestKuairec:
    def test_parse_watch_ratio(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text(
            "user_id,video_id,play_duration,video_duration,timestamp,watch_ratio\n"
            "14,148,4381,11,1593878903,2.3\n"
            "14,183,4479,11,1593878904,0.6\n"
        )
        data = ingest(path, "kuairec_csv")
        assert data.feedback_kind == "watch_ratio"
        assert data.values.tolist() == [2.3, 0.6]
        assert data.satisfied.tolist() == [True, False]

    def test_missing_ratio_column(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("user_id,video_id\n1,2\n")
        with pytest.raises(DataError, match="watch_ratio"):
            ingest(path, "kuairec_csv")


class TestSatisfaction:
    def test_rating_threshold_boundary(self):
        data = from_records([1, 2], [1, 1], [4.0, 3.9])
        assert data.satisfied.tolist() == [True, False]

    def test_watch_ratio_threshold(self):
        data = from_records([1, 2], [1, 1], [2.0, 1.99], feedback_kind="watch_ratio")
        assert data.satisfied.tolist() == [True, False]

    def test_per_user_counts(self):
        data = from_records([0, 0, 1], [0, 1, 0], [5, 1, 4])
        assert data.satisfied_counts().tolist() == [1, 1]


class TestReindex:
    def test_bijection_roundtrip(self, tmp_path):
        data = from_records([30, 10, 30], [9, 5, 7], [1, 2, 3])
        path = tmp_path / "ids.csv"
        write_id_maps(data, path)
        users, items = read_id_maps(path)
        assert users.astype(int).tolist() == data.user_ids.tolist()
        assert items.astype(int).tolist() == data.item_ids.tolist()
        # dense index recovers the original id
        assert data.user_ids[data.users].tolist() == [30, 10, 30]
        assert data.item_ids[data.items].tolist() == [9, 5, 7]


class TestSplits:
    def test_sample_mask_deterministic(self):
        first = sample_mask(100, 0.5, seed=9)
        second = sample_mask(100, 0.5, seed=9)
        assert np.array_equal(first, second)
        assert first.sum() == 50

    def test_filter_keeps_index_space(self):
        data = from_records([0, 1, 2], [0, 1, 2], [1, 2, 3])
        subset = filter_records(data, np.array([True, False, True]))
        assert len(subset) == 2
        assert subset.num_users == 3 and subset.num_items == 3

    def test_exclude_users(self):
        data = from_records([0, 1, 2, 1], [0, 1, 2, 0], [1, 2, 3, 4])
        out = exclude_users(data, [1])
        assert sorted(out.users.tolist()) == [0, 2]

    def test_most_active_tie_breaks_by_index(self):
        data = from_records([0, 1, 1, 2], [0, 0, 1, 1], [1, 1, 1, 1])
        top = most_active_users(data, 2)
        assert top.tolist() == [1, 0]
