"""Result-file round trips, merging rules, best-row selection, and renders."""

import pytest

from clapadapt.datastore import SyntheticSpec, make_synthetic
from clapadapt.errors import DataError, ManifestError, MissingCounterpart
from clapadapt.experiments import sweep
from clapadapt.reporting import (
    COLUMNS,
    RESULT_FORMAT,
    ResultRow,
    best_rows,
    compute_curves,
    compute_deltas,
    config_hash,
    main_table_data,
    merge_results,
    read_results,
    render_appendix_tables,
    render_delta_table,
    render_main_table,
    render_report,
    rows_from_table,
    write_curves,
    write_deltas,
    write_results,
    write_table_text,
)

# (language, best macro, best accuracy, best shot) per setting, all with the
# projection-head strategy; means over these land at 77.18 and 76.99
TABLE_ROWS = {
    "crosslingual": [
        ("Bengali", 76.34, 77.03, 25),
        ("Bhojpuri", 71.31, 73.51, 0),
        ("Gujarati", 75.52, 78.73, 0),
        ("Haryanvi", 80.23, 80.33, 25),
        ("Hindi", 77.76, 77.78, 10),
        ("Kannada", 76.67, 78.59, 25),
        ("Malayalam", 78.18, 81.18, 50),
        ("Odia", 79.67, 80.27, 25),
        ("Punjabi", 83.65, 83.65, 5),
        ("Tamil", 72.50, 76.82, 10),
    ],
    "lolo": [
        ("Bengali", 75.96, 76.22, 1),
        ("Bhojpuri", 71.48, 73.81, 0),
        ("Gujarati", 74.77, 78.18, 25),
        ("Haryanvi", 78.28, 78.42, 0),
        ("Hindi", 77.49, 77.51, 10),
        ("Kannada", 77.04, 78.59, 10),
        ("Malayalam", 78.28, 81.18, 50),
        ("Odia", 79.51, 80.55, 50),
        ("Punjabi", 82.83, 82.83, 1),
        ("Tamil", 74.27, 78.71, 10),
    ],
}


def handwritten_results(path):
    lines = ["setting,language,strategy,shot,macro_f1,accuracy"]
    for setting, rows in TABLE_ROWS.items():
        for lang, macro, acc, shot in rows:
            lines.append(f"{setting},{lang},projection_only,{shot},{macro},{acc}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def small_table():
    store = make_synthetic(SyntheticSpec(languages=2, dim=6, per_class_train=5,
                                         per_class_test=3, separation=6.0, seed=21))
    return sweep(store, shots=(0, 1), settings=("crosslingual", "lolo"),
                 config_overrides={"epochs": 2, "learning_rate": 1e-3})


class TestConfigHash:
    def test_stable_and_order_free(self):
        a = config_hash({"x": 1, "y": "z"})
        b = config_hash({"y": "z", "x": 1})
        assert a == b
        assert len(a) == 16
        assert int(a, 16) >= 0

    def test_value_sensitivity(self):
        assert config_hash({"x": 1}) != config_hash({"x": 2})


class TestRowModel:
    def test_candidates_prefer_breakdown(self):
        row = ResultRow(setting="lolo", language="aa", strategy="frozen", shot=0,
                        macro_f1=50.0, accuracy=50.0, svm_macro_f1=60.0,
                        svm_accuracy=61.0, mlp_macro_f1=59.0, mlp_accuracy=58.0)
        assert row.candidates() == [(60.0, 61.0, "svm"), (59.0, 58.0, "mlp")]

    def test_candidates_fall_back_to_headline(self):
        row = ResultRow(setting="lolo", language="aa", strategy="frozen", shot=0,
                        macro_f1=70.0, chosen_classifier="svm")
        assert row.candidates() == [(70.0, 0.0, "svm")]

    def test_rows_from_table_carry_cells(self):
        table = small_table()
        rows = rows_from_table(table)
        assert len(rows) == len(table.cells)
        ok = [r for r in rows if r.status == "ok"]
        assert ok and all(r.seed and len(r.seed) == 16 for r in ok)
        assert all(r.svm_macro_f1 is not None and r.mlp_macro_f1 is not None
                   for r in ok)
        assert sum(r.best for r in ok) == len({r.group() for r in ok})


class TestFileRoundTrip:
    def test_write_read_identity(self, tmp_path):
        table = small_table()
        rows = rows_from_table(table)
        path = tmp_path / "results.csv"
        write_results(rows, str(path), {"store_hash": table.store_hash, "k": "v"})
        text = path.read_text(encoding="utf-8")
        assert text.startswith(f"# {RESULT_FORMAT}\n")
        assert f"# store_hash={table.store_hash}\n" in text
        back, meta = read_results(str(path))
        assert meta["store_hash"] == table.store_hash
        assert meta["k"] == "v"
        assert len(back) == len(rows)
        for a, b in zip(rows, back):
            for col in COLUMNS:
                # empty strings and absent cells both mean "no value"
                va = getattr(a, col)
                vb = getattr(b, col)
                assert (va or None) == (vb or None), col
        # floats must round-trip exactly, not approximately
        assert [r.macro_f1 for r in back] == [r.macro_f1 for r in rows]

    def test_rewrite_is_byte_identical(self, tmp_path):
        table = small_table()
        rows = rows_from_table(table)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results(rows, str(p1), {"store_hash": table.store_hash})
        back, meta = read_results(str(p1))
        write_results(back, str(p2), meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_handwritten_minimal_file(self, tmp_path):
        rows, meta = read_results(handwritten_results(tmp_path / "hand.csv"))
        assert meta == {}
        assert len(rows) == 20
        assert all(r.status == "ok" for r in rows)
        assert rows[0].shot == 25 and rows[0].macro_f1 == 76.34

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("# only a comment\n", encoding="utf-8")
        with pytest.raises(ManifestError):
            read_results(str(p))

    def test_missing_required_column_rejected(self, tmp_path):
        p = tmp_path / "short.csv"
        p.write_text("setting,language,strategy\na,b,c\n", encoding="utf-8")
        with pytest.raises(ManifestError):
            read_results(str(p))

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("setting,language,strategy,shot,macro_f1\n"
                     "lolo,aa,frozen,zero,50.0\n", encoding="utf-8")
        with pytest.raises(ManifestError):
            read_results(str(p))


class TestMerge:
    def test_same_store_merges(self, tmp_path):
        table = small_table()
        rows = rows_from_table(table)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results(rows[:3], str(p1), {"store_hash": table.store_hash})
        write_results(rows[3:], str(p2), {"store_hash": table.store_hash})
        merged = merge_results([read_results(str(p1)), read_results(str(p2))])
        assert len(merged) == len(rows)

    def test_mismatched_stores_refused(self, tmp_path):
        table = small_table()
        rows = rows_from_table(table)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_results(rows, str(p1), {"store_hash": "a" * 16})
        write_results(rows, str(p2), {"store_hash": "b" * 16})
        with pytest.raises(DataError):
            merge_results([read_results(str(p1)), read_results(str(p2))])

    def test_hashless_files_merge(self, tmp_path):
        p1 = handwritten_results(tmp_path / "hand.csv")
        table = small_table()
        p2 = tmp_path / "b.csv"
        write_results(rows_from_table(table), str(p2),
                      {"store_hash": table.store_hash})
        merged = merge_results([read_results(p1), read_results(str(p2))])
        assert len(merged) == 20 + len(table.cells)


class TestBestRows:
    def test_joint_max_over_shots_and_classifiers(self):
        rows = [
            ResultRow(setting="lolo", language="aa", strategy="frozen", shot=0,
                      status="ok", macro_f1=50.0, accuracy=50.0,
                      svm_macro_f1=50.0, svm_accuracy=50.0,
                      mlp_macro_f1=72.0, mlp_accuracy=70.0),
            ResultRow(setting="lolo", language="aa", strategy="frozen", shot=5,
                      status="ok", macro_f1=71.0, accuracy=71.0,
                      svm_macro_f1=71.0, svm_accuracy=71.0,
                      mlp_macro_f1=64.0, mlp_accuracy=64.0),
        ]
        best = best_rows(rows)
        row, macro, acc, name, shot = best[("lolo", "aa", "frozen")]
        assert (macro, acc, name, shot) == (72.0, 70.0, "mlp", 0)

    def test_error_rows_skipped(self):
        rows = [
            ResultRow(setting="lolo", language="aa", strategy="frozen", shot=0,
                      status="error", macro_f1=99.0),
            ResultRow(setting="lolo", language="aa", strategy="frozen", shot=5,
                      status="ok", macro_f1=40.0, accuracy=40.0),
        ]
        best = best_rows(rows)
        assert best[("lolo", "aa", "frozen")][1] == 40.0


class TestDeltasAndCurves:
    def test_handwritten_deltas(self, tmp_path):
        rows, _ = read_results(handwritten_results(tmp_path / "hand.csv"))
        deltas = {d.language: d.delta for d in compute_deltas(rows)}
        assert deltas["Bhojpuri"] == pytest.approx(0.17, abs=1e-9)
        assert deltas["Punjabi"] == pytest.approx(-0.82, abs=1e-9)
        assert deltas["Tamil"] == pytest.approx(1.77, abs=1e-9)

    def test_missing_counterpart(self):
        rows = [ResultRow(setting="lolo", language="aa", strategy="frozen",
                          shot=0, status="ok", macro_f1=50.0, accuracy=50.0)]
        with pytest.raises(MissingCounterpart):
            compute_deltas(rows)

    def test_curves_mean_and_counts(self):
        rows = [
            ResultRow(setting="lolo", language="aa", strategy="frozen", shot=0,
                      status="ok", macro_f1=60.0),
            ResultRow(setting="lolo", language="bb", strategy="frozen", shot=0,
                      status="ok", macro_f1=70.0),
            ResultRow(setting="lolo", language="aa", strategy="frozen", shot=5,
                      status="ok", macro_f1=80.0),
        ]
        curves = compute_curves(rows)
        by_shot = {c.shot: c for c in curves}
        assert by_shot[0].mean_macro_f1 == pytest.approx(65.0)
        assert by_shot[0].n_languages == 2
        assert by_shot[5].mean_macro_f1 == pytest.approx(80.0)
        assert by_shot[5].n_languages == 1


class TestRenders:
    def test_main_table_headline_values(self, tmp_path):
        rows, _ = read_results(handwritten_results(tmp_path / "hand.csv"))
        text = render_main_table(rows)
        assert "== crosslingual: best macro-F1 across shots ==" in text
        punjabi = next(l for l in text.splitlines()
                       if l.startswith("Punjabi") and "83.65" in l)
        assert "83.65 (5-shot)" in punjabi
        data = main_table_data(rows)
        assert data["crosslingual"]["means"]["projection_only"] == pytest.approx(
            77.183, abs=1e-9)
        assert data["lolo"]["means"]["projection_only"] == pytest.approx(
            76.991, abs=1e-9)
        mean_lines = [l for l in text.splitlines() if l.startswith("Mean")]
        assert any("77.18" in l for l in mean_lines)
        assert any("76.99" in l for l in mean_lines)

    def test_appendix_layout(self, tmp_path):
        rows, _ = read_results(handwritten_results(tmp_path / "hand.csv"))
        text = render_appendix_tables(rows)
        assert "== crosslingual / projection_only: best per language ==" in text
        header = next(l for l in text.splitlines() if l.startswith("Language"))
        assert header.split() == ["Language", "Macro-F1", "Accuracy", "Best", "shot"]
        punjabi = next(l for l in text.splitlines()
                       if l.startswith("Punjabi") and "83.65" in l)
        assert punjabi.split() == ["Punjabi", "83.65", "83.65", "5-shot"]

    def test_delta_table_sign_format(self, tmp_path):
        rows, _ = read_results(handwritten_results(tmp_path / "hand.csv"))
        text = render_delta_table(compute_deltas(rows))
        assert "+0.17" in text
        assert "-0.82" in text

    def test_report_includes_deltas_only_when_both_settings(self, tmp_path):
        rows, _ = read_results(handwritten_results(tmp_path / "hand.csv"))
        assert "lolo minus crosslingual" in render_report(rows)
        assert "lolo minus crosslingual" not in render_report(
            rows, include_deltas=False)
        cross_only = [r for r in rows if r.setting == "crosslingual"]
        assert "lolo minus crosslingual" not in render_report(cross_only)

    def test_report_from_live_sweep(self):
        table = small_table()
        rows = rows_from_table(table)
        text = render_report(rows)
        for section in ("best macro-F1 across shots", "best per language",
                        "lolo minus crosslingual", "mean macro-F1 across languages"):
            assert section in text


class TestPlotFiles:
    def test_deltas_and_curves_files(self, tmp_path):
        rows, _ = read_results(handwritten_results(tmp_path / "hand.csv"))
        dpath = tmp_path / "deltas.csv"
        cpath = tmp_path / "curves.csv"
        write_deltas(compute_deltas(rows), str(dpath), {"config_hash": "c" * 16})
        write_curves(compute_curves(rows), str(cpath), {"config_hash": "c" * 16})
        for p, header in ((dpath, "language,strategy"), (cpath, "setting,strategy")):
            lines = p.read_text(encoding="utf-8").splitlines()
            assert lines[0] == f"# {RESULT_FORMAT}"
            assert lines[1] == "# config_hash=" + "c" * 16
            assert lines[2].startswith(header)

    def test_table_text_file(self, tmp_path):
        path = tmp_path / "table.txt"
        write_table_text("body\n", str(path), {"config_hash": "c" * 16})
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == f"# {RESULT_FORMAT}"
        assert lines[-1] == "body"
