import json

import numpy as np
import pytest

from gmmadapt.errors import LengthMismatch
from gmmadapt.gmm_stream import GaussianMixtureStream
from gmmadapt.metrics import (
    CSV_COLUMNS,
    BatchCounts,
    MemoryModelInputs,
    RunRecord,
    h_score,
    memory_report,
    rates_from_counts,
    read_jsonl,
    score_batch,
    summarize,
    write_csv,
    write_jsonl,
)
from gmmadapt.ood_gate import DISCARDED


class TestHScore:
    def test_direct_value(self):
        assert h_score(0.8, 0.6) == pytest.approx(0.6857142857142857, rel=1e-12)

    def test_equal_arguments_fixed_point(self):
        for x in (0.0, 0.3, 1.0):
            assert h_score(x, x) == pytest.approx(x)

    def test_zero_annihilates(self):
        assert h_score(1.0, 0.0) == 0.0

    def test_bounded_by_twice_min(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = rng.uniform(0, 1, size=2)
            h = h_score(a, b)
            assert 0.0 <= h <= 2 * min(a, b) + 1e-12


class TestMemoryReport:
    def test_paper_scale_ratios(self):
        rep = memory_report(MemoryModelInputs(fd=256, fd_r=64, n_classes=345,
                                              queue_len=55388, teacher_params=24_000_000))
        assert rep.n_gmm == 740025
        assert rep.n_queue == 33_288_188
        assert rep.ratio_queue == pytest.approx(0.0222, abs=5e-4)
        assert rep.ratio_teacher == pytest.approx(0.0308, abs=5e-4)

    def test_twelve_class_case(self):
        rep = memory_report(MemoryModelInputs(256, 64, 12, 55388, 24_000_000))
        assert rep.n_gmm == 25740

    def test_minimal_case(self):
        rep = memory_report(MemoryModelInputs(1, 1, 1, 1, 1))
        assert rep.n_gmm == 3
        assert rep.n_queue == 2

    def test_matches_gmm_stream_footprint(self):
        for fd_r, n_classes in ((64, 12), (16, 3), (8, 345)):
            rep = memory_report(MemoryModelInputs(256, fd_r, n_classes, 10, 10))
            assert rep.n_gmm == GaussianMixtureStream(n_classes, fd_r).memory_footprint()

    def test_positivity_validated(self):
        with pytest.raises(ValueError):
            MemoryModelInputs(0, 64, 12, 10, 10)


class TestScoreBatch:
    def test_all_correct(self):
        true = np.array([0, 1, 4, 4])
        preds = np.array([0, 1, 4, 4])
        pls = np.array([0, 1, 4, 4])
        counts, rates = score_batch(true, preds, pls, n_classes=4)
        assert rates["acc_known"] == 1.0
        assert rates["acc_unknown"] == 1.0
        assert rates["h_score"] == 1.0
        assert rates["adapt_ratio"] == 1.0

    def test_all_discarded_null_precision(self):
        true = np.array([0, 1])
        preds = np.array([0, 1])
        pls = np.array([DISCARDED, DISCARDED])
        _, rates = score_batch(true, preds, pls, n_classes=4)
        assert rates["adapt_ratio"] == 0.0
        assert rates["pl_precision_known"] is None

    def test_mixed_batch_arithmetic(self):
        # 32 known (24 correct), 32 unknown (16 correct)
        true = np.array([0] * 32 + [4] * 32)
        preds = np.array([0] * 24 + [1] * 8 + [4] * 16 + [2] * 16)
        pls = np.full(64, DISCARDED)
        _, rates = score_batch(true, preds, pls, n_classes=4)
        assert rates["acc_known"] == pytest.approx(0.75)
        assert rates["acc_unknown"] == pytest.approx(0.5)
        assert rates["h_score"] == pytest.approx(0.6)

    def test_no_unknowns_gives_null(self):
        true = np.array([0, 1])
        _, rates = score_batch(true, true, true, n_classes=4)
        assert rates["acc_unknown"] is None
        assert rates["h_score"] is None

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            score_batch(np.zeros(3), np.zeros(2), np.zeros(3), 2)


def make_record(batch, n_known=32, k_corr=16, n_unk=32, u_corr=16,
                adapted=40, pl_known=20, pl_corr=15):
    counts = BatchCounts(
        n_known=n_known, n_known_correct=k_corr, n_unknown=n_unk,
        n_unknown_correct=u_corr, n_adapted=adapted, n_total=n_known + n_unk,
        n_pl_known=pl_known, n_pl_known_correct=pl_corr,
    )
    rates = rates_from_counts(counts)
    return RunRecord(batch=batch, tau_k=0.1, tau_u=0.4, loss_c=0.5, loss_kld=-0.2,
                     counts=counts, **rates)


class TestEmitters:
    def test_jsonl_round_trip_and_key_order(self, tmp_path):
        records = [make_record(1), make_record(2, k_corr=0, u_corr=0)]
        path = tmp_path / "metrics.jsonl"
        write_jsonl(records, path)
        lines = path.read_text().splitlines()
        first = json.loads(lines[0])
        assert list(first)[:10] == list(CSV_COLUMNS)
        assert "counts" in first
        restored = read_jsonl(path)
        assert restored == records

    def test_csv_fixed_columns_and_nulls(self, tmp_path):
        rec = make_record(1, pl_known=0, pl_corr=0)
        path = tmp_path / "metrics.csv"
        write_csv([rec], path)
        header, row = path.read_text().splitlines()
        assert header == ",".join(CSV_COLUMNS)
        cells = row.split(",")
        assert cells[0] == "1"
        assert cells[CSV_COLUMNS.index("pl_precision_known")] == ""

    def test_null_h_score_serialized_as_json_null(self, tmp_path):
        rec = make_record(1, n_unk=0, u_corr=0)
        path = tmp_path / "m.jsonl"
        write_jsonl([rec], path)
        assert json.loads(path.read_text())["h_score"] is None


class TestSummarize:
    def test_pooling_and_windows(self):
        records = [make_record(k) for k in range(1, 61)]
        s = summarize(records, kind="OPDA", n_init=30)
        assert s["thresholds_frozen"] is True
        assert s["warnings"] == []
        assert s["full_run"]["n_batches"] == 60
        assert s["post_calibration"]["n_batches"] == 30
        assert s["full_run"]["acc_known"] == pytest.approx(0.5)
        assert s["full_run"]["h_score"] == pytest.approx(0.5)
        assert s["full_run"]["primary_metric"] == s["full_run"]["h_score"]

    def test_pda_primary_is_accuracy(self):
        records = [make_record(k, n_unk=0, u_corr=0) for k in range(1, 11)]
        s = summarize(records, kind="PDA", n_init=5)
        assert s["full_run"]["primary_metric"] == pytest.approx(0.5)
        assert s["full_run"]["h_score"] is None

    def test_never_frozen_warning(self):
        records = [make_record(k) for k in range(1, 11)]
        s = summarize(records, kind="OPDA", n_init=30)
        assert s["thresholds_frozen"] is False
        assert s["warnings"]

    def test_deterministic_under_round_trip(self, tmp_path):
        records = [make_record(k, k_corr=(k * 7) % 32) for k in range(1, 41)]
        path = tmp_path / "m.jsonl"
        write_jsonl(records, path)
        again = read_jsonl(path)
        a = summarize(records, "OPDA", 30)
        b = summarize(again, "OPDA", 30)
        assert json.dumps(a) == json.dumps(b)
