import math

import pytest

from oracle_values import BMD_RATIOS
from varmeta.datasets import Arm, bmd_groups, bmd_table, pool_arms
from varmeta.ingest import IngestError, ingest, parse_rows, table_to_csv


def test_pool_arms_matches_raw_union():
    import numpy as np

    rng = np.random.default_rng(0)
    a, b = rng.normal(1.0, 0.2, 17), rng.normal(1.3, 0.1, 9)
    pooled = pool_arms(Arm(17, a.mean(), a.std(ddof=1)), Arm(9, b.mean(), b.std(ddof=1)))
    both = np.r_[a, b]
    assert pooled.n == 26
    assert pooled.mean == pytest.approx(both.mean(), rel=1e-14)
    assert pooled.sd == pytest.approx(both.std(ddof=1), rel=1e-13)


def test_bmd_fixture():
    table = bmd_table()
    assert len(table) == 13
    ratios = [r.ratio for r in table.rows]
    assert [round(r, 2) for r in ratios[:4]] == [0.79, 0.01, 0.64, 1.46]
    assert ratios == pytest.approx(BMD_RATIOS, rel=1e-13)
    assert [(r.n1, r.n2) for r in table.rows][:2] == [(7, 69), (2, 21)]


def test_bmd_pooled_arm_agrees_with_printed_combined_column():
    for entry in bmd_groups():
        pooled = pool_arms(entry["Bb"], entry["bb"])
        printed = entry["Bbbb"]
        assert pooled.n == printed.n
        assert abs(pooled.mean - printed.mean) <= 0.0015
        assert abs(pooled.sd - printed.sd) <= 0.0015


def write(tmp_path, text, name="t.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_ingest_summary_layout(tmp_path):
    path = write(tmp_path, "study_id,n1,mean1,sd1,n2,mean2,sd2\nA,10,1.0,0.3,12,1.1,0.2\nB,8,,0.5,9,,0.5\n")
    table = ingest(path)
    assert table.study_ids == ["A", "B"]
    assert table.rows[0].ratio == pytest.approx(0.09 / 0.04)
    assert table.rows[1].mean1 is None
    st = table.studies()[0]
    assert (st.nu1, st.nu2) == (9, 11)


def test_ingest_direct_f_layout_with_tabs(tmp_path):
    path = write(tmp_path, "study_id\tf\tnu1\tnu2\ns1\t1.5\t9\t11\n")
    table = ingest(path)
    assert table.rows[0].ratio == 1.5
    assert (table.rows[0].n1, table.rows[0].n2) == (10, 12)


def test_ingest_semicolon(tmp_path):
    path = write(tmp_path, "study_id;n1;mean1;sd1;n2;mean2;sd2\nx;5;1;1;5;1;2\n")
    assert ingest(path).rows[0].ratio == 0.25


@pytest.mark.parametrize(
    "body, fragment",
    [
        ("A,10,1,0.3,12,1,0\n", "row 2: sd2 must be positive"),
        ("A,10,1,abc,12,1,0.2\n", "row 2: non-numeric sd1"),
        ("A,1,1,0.3,12,1,0.2\n", "row 2: n1 = 1 is below 2"),
        ("A,10,1,0.3,12,1,0.2\nA,11,1,0.3,12,1,0.2\n", "row 3: duplicate study_id 'A'"),
        ("A,10.5,1,0.3,12,1,0.2\n", "row 2: n1 must be an integer"),
        ("A,10,1,0.3,12\n", "row 2: expected 7 fields"),
    ],
)
def test_ingest_row_errors(tmp_path, body, fragment):
    path = write(tmp_path, "study_id,n1,mean1,sd1,n2,mean2,sd2\n" + body)
    with pytest.raises(IngestError) as info:
        ingest(path)
    assert any(fragment in msg for msg in info.value.diagnostics), info.value.diagnostics


def test_ingest_reports_every_bad_row(tmp_path):
    path = write(tmp_path, "study_id,n1,mean1,sd1,n2,mean2,sd2\na,5,1,0,5,1,1\nb,5,1,1,1,1,1\nc,5,1,1,5,1,1\n")
    with pytest.raises(IngestError) as info:
        ingest(path)
    assert len(info.value.diagnostics) == 2


@pytest.mark.parametrize("text", ["", "\n\n", "study_id,n1,mean1,sd1,n2,mean2,sd2\n"])
def test_ingest_no_data_rows(tmp_path, text):
    with pytest.raises(IngestError, match="no data rows"):
        ingest(write(tmp_path, text))


def test_ingest_bad_header(tmp_path):
    with pytest.raises(IngestError, match="header"):
        ingest(write(tmp_path, "id,a,b\n1,2,3\n"))


def test_ingest_missing_file(tmp_path):
    with pytest.raises(IngestError, match="not found"):
        ingest(tmp_path / "nope.csv")


def test_table_csv_round_trip():
    table = bmd_table()
    back = parse_rows(table_to_csv(table).splitlines())
    assert back == table
    assert all(math.isfinite(r.ratio) for r in back.rows)
