import io
import json

import pytest

from cascadekit.ingest import (
    IngestError,
    PostRecord,
    canonicalize_image_url,
    filter_nsfw,
    parse_posts,
    record_to_obj,
    validate_and_dedupe,
    write_posts_jsonl,
)


def make_record(i, ts, **kw):
    return PostRecord(id=f"p{i}", created_utc=ts, **kw)


def jsonl_bytes(*objs):
    return io.BytesIO(b"".join(json.dumps(o).encode() + b"\n" for o in objs))


class TestCanonicalizeImageUrl:
    def test_lowercases_scheme_and_host(self):
        assert canonicalize_image_url("HTTPS://I.Redd.it/a.jpg") == "https://i.redd.it/a.jpg"

    def test_strips_query_and_fragment(self):
        got = canonicalize_image_url("https://i.redd.it/a.jpg?utm_source=share#top")
        assert got == "https://i.redd.it/a.jpg"

    def test_strips_trailing_slash(self):
        assert canonicalize_image_url("https://i.redd.it/a.jpg/") == "https://i.redd.it/a.jpg"

    def test_path_case_preserved(self):
        got = canonicalize_image_url("https://example.com/Path/Img.PNG")
        assert got == "https://example.com/Path/Img.PNG"

    def test_schemeless_string(self):
        assert canonicalize_image_url("i.redd.it/x.png?a=1") == "i.redd.it/x.png"

    def test_idempotent(self):
        url = "HTTPS://Host.COM/A/b.jpg?q=1#f"
        once = canonicalize_image_url(url)
        assert canonicalize_image_url(once) == once


class TestParsePosts:
    def test_single_wellformed_line_round_trips(self):
        obj = {
            "id": "abc", "created_utc": 1700000000, "subreddit": "pics",
            "author": "alice", "title": "hello", "score": 10,
            "total_comments": 3, "image_url": "https://i.redd.it/a.jpg",
        }
        records, issues = parse_posts(jsonl_bytes(obj), fmt="jsonl")
        assert issues == []
        assert len(records) == 1
        r = records[0]
        assert (r.id, r.created_utc, r.subreddit, r.author) == ("abc", 1700000000, "pics", "alice")
        assert r.score == 10 and r.total_comments == 3
        assert r.image_url == "https://i.redd.it/a.jpg"

    def test_empty_stream(self):
        records, issues = parse_posts(io.BytesIO(b""), fmt="jsonl")
        assert records == [] and issues == []

    def test_truncated_middle_line_lenient(self):
        # 3 lines, middle one truncated: expect 2 records and 1 issue at line 2
        good1 = json.dumps({"id": "a", "created_utc": 1}).encode()
        good2 = json.dumps({"id": "b", "created_utc": 2}).encode()
        stream = io.BytesIO(good1 + b"\n" + good2[: len(good2) // 2] + b"\n" + good2 + b"\n")
        records, issues = parse_posts(stream, fmt="jsonl")
        assert [r.id for r in records] == ["a", "b"]
        assert len(issues) == 1
        assert issues[0].line == 2

    def test_strict_mode_aborts_on_first_error(self):
        stream = io.BytesIO(b'{"id": "a", "created_utc": 1}\nnot json\n')
        with pytest.raises(IngestError, match="line 2"):
            parse_posts(stream, fmt="jsonl", strict=True)

    def test_missing_id_is_an_issue(self):
        records, issues = parse_posts(jsonl_bytes({"created_utc": 5}), fmt="jsonl")
        assert records == [] and len(issues) == 1

    def test_unknown_format_raises(self):
        with pytest.raises(IngestError, match="format"):
            parse_posts(io.BytesIO(b""), fmt="parquet")

    def test_format_inferred_from_extension(self, tmp_path):
        p = tmp_path / "posts.jsonl"
        p.write_text('{"id": "a", "created_utc": 1}\n')
        records, issues = parse_posts(p)
        assert len(records) == 1 and not issues

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(IngestError, match="cannot read"):
            parse_posts(tmp_path / "nope.jsonl")

    def test_csv_parsing(self, tmp_path):
        p = tmp_path / "posts.csv"
        p.write_text(
            "id,created_utc,subreddit,score,nsfw,upvote_ratio,image_url\n"
            "a,100,pics,5,true,0.9,https://i.redd.it/a.jpg?x=1\n"
            "b,200,funny,0,false,,\n"
        )
        records, issues = parse_posts(p)
        assert not issues
        a, b = records
        assert a.nsfw is True and a.upvote_ratio == 0.9
        assert a.image_url == "https://i.redd.it/a.jpg"
        assert b.nsfw is False and b.upvote_ratio is None and b.image_url is None

    def test_tsv_parsing(self, tmp_path):
        p = tmp_path / "posts.tsv"
        p.write_text("id\tcreated_utc\ttitle\na\t100\thello world\n")
        records, _ = parse_posts(p)
        assert records[0].title == "hello world"

    def test_csv_bad_int_cell_reported_with_line(self, tmp_path):
        p = tmp_path / "posts.csv"
        p.write_text("id,created_utc\na,100\nb,oops\nc,300\n")
        records, issues = parse_posts(p)
        assert [r.id for r in records] == ["a", "c"]
        assert len(issues) == 1 and issues[0].line == 3

    def test_url_canonicalized_on_parse(self):
        obj = {"id": "a", "created_utc": 1, "image_url": "HTTPS://X.com/i.jpg?t=9"}
        records, _ = parse_posts(jsonl_bytes(obj), fmt="jsonl")
        assert records[0].image_url == "https://x.com/i.jpg"

    def test_bool_fields_reject_strings_in_jsonl(self):
        obj = {"id": "a", "created_utc": 1, "nsfw": "yes"}
        records, issues = parse_posts(jsonl_bytes(obj), fmt="jsonl")
        assert records == [] and len(issues) == 1


class TestValidateAndDedupe:
    def test_duplicate_id_first_wins(self):
        r1 = make_record(1, 100, score=5)
        r2 = PostRecord(id="p1", created_utc=200, score=9)
        kept, report = validate_and_dedupe([r1, r2])
        assert len(kept) == 1 and kept[0].score == 5
        assert report.duplicates == 1

    def test_negative_score_dropped(self):
        bad = PostRecord(id="x", created_utc=100, score=-5)
        kept, report = validate_and_dedupe([bad])
        assert kept == [] and report.invalid == 1
        assert report.invalid_reasons["negative_score"] == 1

    def test_shuffled_timestamps_sorted(self):
        records = [make_record(i, ts) for i, ts in [(1, 400), (2, 100), (3, 300), (4, 200)]]
        kept, _ = validate_and_dedupe(records)
        assert [r.created_utc for r in kept] == [100, 200, 300, 400]

    def test_tie_broken_by_id(self):
        kept, _ = validate_and_dedupe([make_record(2, 100), make_record(1, 100)])
        assert [r.id for r in kept] == ["p1", "p2"]

    def test_nonpositive_timestamp_dropped(self):
        kept, report = validate_and_dedupe([PostRecord(id="x", created_utc=0)])
        assert kept == [] and report.invalid == 1

    def test_self_crosspost_dropped(self):
        bad = PostRecord(id="x", created_utc=1, crosspost_parent_id="x")
        kept, report = validate_and_dedupe([bad])
        assert kept == [] and report.invalid_reasons["self_crosspost"] == 1

    def test_upvote_ratio_out_of_range_dropped(self):
        bad = PostRecord(id="x", created_utc=1, upvote_ratio=1.5)
        _, report = validate_and_dedupe([bad])
        assert report.invalid == 1

    def test_idempotent(self):
        records = [
            make_record(1, 300), make_record(2, 100),
            PostRecord(id="p1", created_utc=50),
            PostRecord(id="bad", created_utc=-1),
        ]
        once, _ = validate_and_dedupe(records)
        twice, report2 = validate_and_dedupe(once)
        assert twice == once
        assert report2.duplicates == 0 and report2.invalid == 0

    def test_report_totals_add_up(self):
        records = [
            make_record(1, 100), make_record(1, 100),
            PostRecord(id="z", created_utc=1, score=-1),
        ]
        kept, report = validate_and_dedupe(records)
        assert report.total == 3
        assert report.kept + report.duplicates + report.invalid == report.total


class TestFilterNsfw:
    def test_mixed(self):
        records = [
            make_record(1, 1, nsfw=False),
            make_record(2, 2, nsfw=True),
            make_record(3, 3, nsfw=False),
        ]
        out = filter_nsfw(records)
        assert [r.id for r in out] == ["p1", "p3"]

    def test_all_nsfw(self):
        assert filter_nsfw([make_record(1, 1, nsfw=True)]) == []

    def test_none_nsfw_identity(self):
        records = [make_record(1, 1), make_record(2, 2)]
        assert filter_nsfw(records) == records

    def test_no_nsfw_in_output(self):
        records = [make_record(i, i, nsfw=bool(i % 2)) for i in range(1, 20)]
        assert all(not r.nsfw for r in filter_nsfw(records))


class TestRoundTrip:
    def test_serialize_reparse_equal(self):
        records = [
            PostRecord(id="a", created_utc=100, subreddit="pics", author="u1",
                       title="Title One", image_url="https://i.redd.it/a.jpg",
                       score=5, total_comments=2, upvote_ratio=0.97,
                       sentiment_compound=-0.5, thumbnail_width=140,
                       thumbnail_height=105, misinfo_flag=True),
            PostRecord(id="b", created_utc=200, crosspost_parent_id="a",
                       num_crossposts=3, is_original_content=True),
        ]
        buf = io.StringIO()
        write_posts_jsonl(records, buf)
        reparsed, issues = parse_posts(io.BytesIO(buf.getvalue().encode()), fmt="jsonl")
        assert not issues
        assert reparsed == records

    def test_file_round_trip(self, tmp_path):
        records = [make_record(1, 10, title="x"), make_record(2, 20)]
        dest = tmp_path / "out.jsonl"
        write_posts_jsonl(records, dest)
        reparsed, _ = parse_posts(dest)
        assert reparsed == records

    def test_record_to_obj_omits_absent_optionals(self):
        obj = record_to_obj(make_record(1, 10))
        assert "image_url" not in obj and "upvote_ratio" not in obj
