import io
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import T0, make_record
from driftcast.ingest import (AEGEAN_BOX, REASON_COURSE_UNAVAILABLE, REASON_DUPLICATE, REASON_OUT_OF_RANGE,
                              REASON_OUTSIDE_BOX, REASON_POSITION_UNAVAILABLE, REASON_SPEED_UNAVAILABLE,
                              REASON_TOO_FAST, AisRecord, FilterRules, SchemaError, filter_records,
                              format_timestamp, group_sort, merge_streams, parse_ais_csv, parse_timestamp,
                              write_ais_csv)

HEADER = "mmsi,timestamp,lat,lon,sog,cog\n"
ROW = "239923000,2014-11-01T00:00:07Z,37.94321,23.61002,11.3,187.0\n"


class TestParse:
    def test_one_valid_line(self):
        res = parse_ais_csv((HEADER + ROW).encode())
        assert len(res.records) == 1 and res.errors == []
        rec = res.records[0]
        assert (rec.mmsi, rec.lat, rec.lon, rec.sog, rec.cog) == (239923000, 37.94321, 23.61002, 11.3, 187.0)
        assert format_timestamp(rec.timestamp) == "2014-11-01T00:00:07Z"

    def test_header_only(self):
        res = parse_ais_csv(HEADER.encode())
        assert res.records == [] and res.errors == []

    def test_bad_middle_line_reports_line_3(self):
        body = HEADER + ROW + ROW.replace("37.94321", "abc") + ROW.replace(":07Z", ":09Z")
        res = parse_ais_csv(io.BytesIO(body.encode()))
        assert len(res.records) == 2
        assert len(res.errors) == 1 and res.errors[0].line == 3 and "lat" in res.errors[0].reason

    def test_text_stream_and_order(self):
        body = HEADER + ROW.replace(":07Z", ":09Z") + ROW
        res = parse_ais_csv(io.StringIO(body))
        assert [r.timestamp for r in res.records] == [T0 + 9, T0 + 7]

    @pytest.mark.parametrize("text", ["", "mmsi,time,lat,lon,sog,cog\n", "lat,lon\n"])
    def test_schema_errors(self, text):
        with pytest.raises(SchemaError):
            parse_ais_csv(text.encode())

    def test_wrong_field_count_and_bad_timestamp(self):
        body = HEADER + "1,2,3\n" + ROW.replace("2014-11-01T00:00:07Z", "yesterday")
        res = parse_ais_csv(body.encode())
        assert [e.line for e in res.errors] == [2, 3]

    def test_write_then_parse_round_trip(self):
        recs = [make_record(i, lat=37.0 + i * 1e-7, sog=0.1 * i) for i in range(5)]
        buf = io.StringIO()
        write_ais_csv(recs, buf)
        assert parse_ais_csv(buf.getvalue().encode()).records == recs

    def test_timestamp_offsets(self):
        assert parse_timestamp("2014-11-01T02:00:00+02:00") == T0
        assert parse_timestamp("2014-11-01T00:00:00") == T0


class TestFilter:
    @pytest.mark.parametrize("field, value, reason", [
        ("lat", 91.0, REASON_POSITION_UNAVAILABLE),
        ("lon", 181.0, REASON_POSITION_UNAVAILABLE),
        ("sog", 102.3, REASON_SPEED_UNAVAILABLE),
        ("cog", 360.0, REASON_COURSE_UNAVAILABLE),
        ("lat", -95.0, REASON_OUT_OF_RANGE),
        ("mmsi", 12345, REASON_OUT_OF_RANGE),
        ("cog", -1.0, REASON_OUT_OF_RANGE),
    ])
    def test_drop_reasons(self, field, value, reason):
        kept, dropped = filter_records([make_record(0, **{field: value})])
        assert kept == [] and dropped == Counter({reason: 1})

    def test_speed_limit(self):
        kept, dropped = filter_records([make_record(0, sog=50.0)], FilterRules(max_sog=40.0))
        assert kept == [] and dropped[REASON_TOO_FAST] == 1

    def test_duplicate_keeps_first(self):
        a, b = make_record(0, lat=37.0), make_record(0, lat=38.0)
        kept, dropped = filter_records([a, b])
        assert kept == [a] and dropped == Counter({REASON_DUPLICATE: 1})

    def test_aegean_box(self):
        rules = FilterRules(bounding_box=AEGEAN_BOX)
        inside = make_record(0, lat=37.5, lon=25.5)
        outside = make_record(1, lat=37.5, lon=23.6)
        kept, dropped = filter_records([inside, outside], rules)
        assert kept == [inside] and dropped[REASON_OUTSIDE_BOX] == 1
        assert AEGEAN_BOX[:2] == (36.08462, 39.48708)

    def test_degenerate_box(self):
        with pytest.raises(ValueError):
            FilterRules(bounding_box=(38, 37, 24, 26))

    def test_sentinels_kept_when_marker_check_disabled_but_still_out_of_range(self):
        kept, dropped = filter_records([make_record(0, lat=91.0)], FilterRules(drop_unavailable_markers=False))
        assert kept == [] and dropped[REASON_OUT_OF_RANGE] == 1


records_st = st.lists(st.builds(
    AisRecord,
    st.sampled_from([239923000, 237000001, 12]),
    st.integers(T0, T0 + 50),
    st.sampled_from([37.5, 91.0, 95.0, 20.0]),
    st.sampled_from([25.0, 181.0, 23.0]),
    st.sampled_from([10.0, 102.3, 150.0]),
    st.sampled_from([90.0, 360.0]),
), max_size=40)


class TestFilterProperties:
    @given(records_st)
    def test_counts_add_up_and_idempotent(self, recs):
        rules = FilterRules(bounding_box=AEGEAN_BOX)
        kept, dropped = filter_records(recs, rules)
        assert len(kept) + sum(dropped.values()) == len(recs)
        again, dropped_again = filter_records(kept, rules)
        assert again == kept and sum(dropped_again.values()) == 0


class TestGroupSort:
    def test_interleaved_vessels(self):
        recs = [make_record(t, mmsi=m) for t, m in [(5, 1_0000_0001), (1, 2_0000_0002), (3, 1_0000_0001),
                                                    (2, 2_0000_0002)]]
        streams = group_sort(recs)
        assert list(streams) == [1_0000_0001, 2_0000_0002]
        assert [r.timestamp - T0 for r in streams[1_0000_0001]] == [3, 5]

    def test_reverse_order(self):
        recs = [make_record(t) for t in (30, 20, 10)]
        assert [r.timestamp - T0 for r in group_sort(recs)[239923000]] == [10, 20, 30]

    def test_empty(self):
        assert group_sort([]) == {}

    @given(st.lists(st.tuples(st.sampled_from([111111111, 222222222, 333333333]), st.integers(0, 10_000)),
                    unique=True))
    def test_permutation_and_strictly_increasing(self, keys):
        recs = [make_record(t, mmsi=m) for m, t in keys]
        streams = group_sort(recs)
        flat = [r for s in streams.values() for r in s]
        assert sorted(flat, key=lambda r: (r.mmsi, r.timestamp)) == sorted(recs, key=lambda r: (r.mmsi, r.timestamp))
        for s in streams.values():
            assert all(a.timestamp < b.timestamp for a, b in zip(s, s[1:]))
        assert merge_streams(streams) == sorted(recs, key=lambda r: (r.timestamp, r.mmsi))
