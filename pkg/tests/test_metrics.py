"""Metrics tests: the reconstruction-vs-direct oracle and frozen arithmetic."""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, strategies as st

from critic_loop.corpus import GoldLabel, Phase
from critic_loop.exceptions import IntegrityError, ValidationError
from critic_loop.metrics import (
    AgreementMetrics,
    ConfusionCounts,
    PrevalenceEstimates,
    basic_metrics,
    confusion,
    corrected_metrics,
    estimate_ppv,
    estimate_prevalence,
    pooled_ppv,
    reconstruct,
    stage_comparison,
)


def brute_force_metrics(tp: int, fp: int, fn: int, tn: int) -> dict:
    """Independent oracle: exact-rational confusion arithmetic."""
    n = tp + fp + fn + tn
    out: dict = {}
    out["precision"] = Fraction(tp, tp + fp) if tp + fp else None
    out["recall"] = Fraction(tp, tp + fn) if tp + fn else None
    if out["precision"] is None or out["recall"] is None or out["precision"] + out["recall"] == 0:
        out["f1"] = None
    else:
        out["f1"] = 2 * out["precision"] * out["recall"] / (out["precision"] + out["recall"])
    po = Fraction(tp + tn, n)
    r = Fraction(tp + fp, n)
    pi = Fraction(tp + fn, n)
    pe = r * pi + (1 - r) * (1 - pi)
    out["kappa"] = (po - pe) / (1 - pe) if pe != 1 else None
    out["po"], out["pe"], out["rate"] = po, pe, r
    return out


def assert_close(actual: float, expected, tol: float = 1e-9) -> None:
    if expected is None:
        assert math.isnan(actual)
    else:
        assert actual == pytest.approx(float(expected), abs=tol)


def estimates_from_counts(c: ConfusionCounts, stage: str = "s1") -> PrevalenceEstimates:
    n = c.total
    pi = (c.tp + c.fn) / n
    r = (c.tp + c.fp) / n
    ppv = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    return PrevalenceEstimates(prevalence=pi, positive_rate=r, ppv=ppv, stage=stage)


class TestConfusion:
    def test_identity_has_no_errors(self):
        keys = {f"k{i}" for i in range(20)}
        gold = {k for k in keys if k.endswith(("1", "3"))}
        c = confusion(gold, gold, keys)
        assert (c.fp, c.fn) == (0, 0)
        assert c.tp == len(gold)

    def test_enumerated_cells(self):
        universe = {"a", "b", "c", "d"}
        gold = {"a", "b"}
        pred = {"a", "c"}
        c = confusion(gold, pred, universe)
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)

    def test_empty_universe_rejected(self):
        with pytest.raises(IntegrityError):
            confusion(set(), set(), set())

    def test_stray_key_rejected(self):
        with pytest.raises(IntegrityError):
            confusion({"x"}, set(), {"a"})


class TestBasicMetrics:
    def test_frozen_example(self):
        # oracle: brute_force_metrics(5, 1, 2, 12)
        m = basic_metrics(ConfusionCounts(5, 1, 2, 12))
        assert m.precision == pytest.approx(0.8333, abs=5e-5)
        assert m.recall == pytest.approx(0.7143, abs=5e-5)
        assert m.f1 == pytest.approx(0.7692, abs=5e-5)
        assert m.kappa == pytest.approx(0.6591, abs=5e-5)

    def test_perfect_classifier(self):
        m = basic_metrics(ConfusionCounts(7, 0, 0, 13))
        assert m.precision == m.recall == m.f1 == 1.0
        assert m.kappa == pytest.approx(1.0)

    def test_all_negative_predictions_flag_precision(self):
        m = basic_metrics(ConfusionCounts(0, 0, 3, 7))
        assert m.recall == 0.0
        assert math.isnan(m.precision)
        assert m.flags["precision"] == "no_predicted_positives"
        assert math.isnan(m.f1)

    def test_zero_total_rejected(self):
        with pytest.raises(ValidationError):
            basic_metrics(ConfusionCounts(0, 0, 0, 0))

    @given(
        st.integers(0, 30), st.integers(0, 30), st.integers(0, 30), st.integers(0, 30)
    )
    def test_matches_brute_force(self, tp, fp, fn, tn):
        if tp + fp + fn + tn == 0:
            return
        m = basic_metrics(ConfusionCounts(tp, fp, fn, tn))
        oracle = brute_force_metrics(tp, fp, fn, tn)
        assert_close(m.precision, oracle["precision"])
        assert_close(m.recall, oracle["recall"])
        assert_close(m.f1, oracle["f1"])
        assert_close(m.kappa, oracle["kappa"])

    def test_kappa_is_one_iff_perfect_agreement(self):
        for tp, fp, fn, tn in product(range(5), repeat=4):
            if tp + fp + fn + tn == 0:
                continue
            m = basic_metrics(ConfusionCounts(tp, fp, fn, tn))
            if math.isnan(m.kappa):
                continue
            assert -1.0 - 1e-12 <= m.kappa <= 1.0 + 1e-12
            assert (abs(m.kappa - 1.0) < 1e-12) == (m.observed_agreement == 1.0)

    @given(
        st.integers(0, 20), st.integers(0, 20), st.integers(0, 20), st.integers(0, 20)
    )
    def test_kappa_class_swap_invariance(self, tp, fp, fn, tn):
        if tp + fp + fn + tn == 0:
            return
        m = basic_metrics(ConfusionCounts(tp, fp, fn, tn))
        swapped = basic_metrics(ConfusionCounts(tn, fn, fp, tp))
        if math.isnan(m.kappa):
            assert math.isnan(swapped.kappa)
        else:
            assert m.kappa == pytest.approx(swapped.kappa, abs=1e-12)


class TestReconstruction:
    def test_spot_check(self):
        est = PrevalenceEstimates(prevalence=0.2, positive_rate=0.25, ppv=0.8, stage="s1")
        rc = reconstruct(est)
        assert not rc.clamped
        assert (rc.tp, rc.fp, rc.fn, rc.tn) == pytest.approx((0.20, 0.05, 0.00, 0.75))
        m = corrected_metrics(rc, est)
        assert m.precision == pytest.approx(0.8)
        assert m.recall == pytest.approx(1.0)
        assert round(m.f1, 4) == 0.8889
        assert m.observed_agreement == pytest.approx(0.95)
        assert m.chance_agreement == pytest.approx(0.65)
        assert round(m.kappa, 4) == 0.8571

    def test_perfect_classifier(self):
        est = PrevalenceEstimates(prevalence=0.3, positive_rate=0.3, ppv=1.0, stage="s2")
        rc = reconstruct(est)
        assert (rc.tp, rc.fp, rc.fn, rc.tn) == pytest.approx((0.3, 0.0, 0.0, 0.7))
        m = corrected_metrics(rc, est)
        assert m.kappa == pytest.approx(1.0)
        assert m.f1 == pytest.approx(1.0)

    def test_expected_counts_scale_by_corpus_size(self):
        est = PrevalenceEstimates(prevalence=0.2, positive_rate=0.25, ppv=0.8, stage="s1")
        counts = reconstruct(est).expected_counts(3000)
        assert counts == pytest.approx({"tp": 600.0, "fp": 150.0, "fn": 0.0, "tn": 2250.0})
        assert sum(counts.values()) == pytest.approx(3000.0)
        with pytest.raises(ValidationError):
            reconstruct(est).expected_counts(0)

    def test_clamped_case(self):
        est = PrevalenceEstimates(prevalence=0.1, positive_rate=0.2, ppv=0.8, stage="s1")
        with pytest.warns(UserWarning, match="clamped"):
            rc = reconstruct(est)
        assert rc.clamped
        assert (rc.tp, rc.fp, rc.fn, rc.tn) == pytest.approx((0.10, 0.10, 0.0, 0.80))
        m = corrected_metrics(rc, est)
        assert m.precision == pytest.approx(0.5)
        assert m.recall == pytest.approx(1.0)
        assert round(m.f1, 4) == 0.6667
        assert round(m.kappa, 4) == 0.6154

    @given(
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.0, 1.0, allow_nan=False),
    )
    def test_cells_sum_to_one(self, prevalence, rate, ppv):
        import warnings as _w

        est = PrevalenceEstimates(prevalence=prevalence, positive_rate=rate, ppv=ppv, stage="s1")
        with _w.catch_warnings():
            _w.simplefilter("ignore")
            rc = reconstruct(est)
        assert rc.tp + rc.fp + rc.fn + rc.tn == pytest.approx(1.0, abs=1e-12)
        for cell in (rc.tp, rc.fp, rc.fn, rc.tn):
            assert cell >= -1e-12
        if not rc.clamped:
            assert rc.tp == pytest.approx(rate * ppv, abs=1e-9)

    @given(
        st.floats(0.001, 1.0, allow_nan=False),
        st.floats(0.0, 1.0, allow_nan=False),
        st.floats(0.0, 1.0, allow_nan=False),
    )
    def test_corrected_recall_in_unit_interval(self, prevalence, rate, ppv):
        est = PrevalenceEstimates(prevalence=prevalence, positive_rate=rate, ppv=ppv, stage="s1")
        import warnings as _w

        with _w.catch_warnings():
            _w.simplefilter("ignore")
            rc = reconstruct(est)
            m = corrected_metrics(rc, est)
        assert -1e-12 <= m.recall <= 1.0 + 1e-12

    @given(
        st.floats(0.05, 0.95, allow_nan=False),
        st.floats(0.05, 0.95, allow_nan=False),
        st.floats(0.01, 1.0, allow_nan=False),
        st.floats(0.01, 1.0, allow_nan=False),
    )
    def test_f1_and_kappa_nondecreasing_in_ppv(self, prevalence, rate, ppv_a, ppv_b):
        low, high = sorted((ppv_a, ppv_b))
        import warnings as _w

        results = []
        for ppv in (low, high):
            est = PrevalenceEstimates(prevalence=prevalence, positive_rate=rate, ppv=ppv, stage="s1")
            with _w.catch_warnings():
                _w.simplefilter("ignore")
                rc = reconstruct(est)
                results.append(corrected_metrics(rc, est))
        assert results[1].f1 >= results[0].f1 - 1e-9
        assert results[1].kappa >= results[0].kappa - 1e-9


def _nullcontext():
    import contextlib

    return contextlib.nullcontext()


class TestOracleEquivalence:
    """Reconstructing from (prevalence, rate, ppv) must reproduce the direct
    metrics exactly, for every confusion table with cells in 0..6."""

    def test_exhaustive_small_tables(self):
        checked = 0
        for tp, fp, fn, tn in product(range(7), repeat=4):
            n = tp + fp + fn + tn
            if n == 0:
                continue
            pi = (tp + fn) / n
            if pi in (0.0, 1.0):
                continue
            c = ConfusionCounts(tp, fp, fn, tn)
            direct = basic_metrics(c)
            est = estimates_from_counts(c)
            rc = reconstruct(est)
            assert not rc.clamped, (tp, fp, fn, tn)
            corrected = corrected_metrics(rc, est)
            for name in ("precision", "recall", "f1", "kappa"):
                d, r = getattr(direct, name), getattr(corrected, name)
                if math.isnan(d) or math.isnan(r):
                    assert math.isnan(d) and math.isnan(r), (name, tp, fp, fn, tn)
                else:
                    assert abs(d - r) <= 1e-9, (name, tp, fp, fn, tn)
            checked += 1
        assert checked > 1000


class TestPrevalenceAndPpv:
    def _gold(self, code_id: str, positives: int, total: int) -> list[GoldLabel]:
        return [
            GoldLabel(passage_id=f"p{i}", code_id=code_id, label=i < positives, phase=Phase.NATURAL)
            for i in range(total)
        ]

    def test_rare_code_prevalence(self):
        gold = self._gold("mentor_engagement", 6, 150)
        assert estimate_prevalence(gold, "mentor_engagement") == pytest.approx(0.04)

    def test_common_code_prevalence(self):
        gold = self._gold("policy_compliance", 43, 150)
        assert estimate_prevalence(gold, "policy_compliance") == pytest.approx(0.2867, abs=5e-5)

    def test_all_negative_prevalence(self):
        gold = self._gold("x", 0, 30)
        assert estimate_prevalence(gold, "x") == 0.0

    def test_missing_code_rejected(self):
        with pytest.raises(ValidationError):
            estimate_prevalence([], "nope")

    def test_ppv_matches_one_minus_error_rate(self):
        pool = [True] * 28 + [False] * 32  # audit with invalid fraction 32/60
        assert estimate_ppv(pool) == pytest.approx(1 - 0.5333, abs=5e-5)

    def test_ppv_trivials(self):
        assert estimate_ppv([True] * 10) == 1.0
        assert estimate_ppv([True] * 2 + [False] * 6) == 0.25

    def test_empty_pool_flagged(self):
        with pytest.warns(UserWarning):
            assert math.isnan(estimate_ppv([]))

    def test_pooled_ppv_is_unweighted(self):
        assert pooled_ppv([True] * 6 + [False], [True] * 28 + [False] * 32) == pytest.approx(34 / 67)

    def test_pooled_reconstruction_reproduces_benchmark_row(self):
        # 60 audited positives (28 valid) pooled with 7 naturalistic
        # positives (6 valid); prevalence 6/150 and rate 7/150.
        ppv = pooled_ppv([True] * 6 + [False], [True] * 28 + [False] * 32)
        est = PrevalenceEstimates(prevalence=6 / 150, positive_rate=7 / 150, ppv=ppv, stage="s1")
        m = corrected_metrics(reconstruct(est), est)
        assert round(m.kappa, 4) == 0.5261
        assert round(m.f1, 4) == 0.5465


class TestStageComparison:
    def _metrics(self, kappa: float, f1: float, rate: float) -> AgreementMetrics:
        return AgreementMetrics(
            precision=0.0, recall=0.0, f1=f1, kappa=kappa,
            observed_agreement=0.0, chance_agreement=0.0,
            detected_positive_rate=rate,
        )

    def test_deltas_are_s2_minus_s1(self):
        row = stage_comparison(
            "mentor_engagement",
            s1=self._metrics(0.5261, 0.5465, 0.0467),
            s2=self._metrics(0.7839, 0.7918, 0.0333),
            gold_rate=0.04,
        )
        assert row.delta_kappa == pytest.approx(0.2578, abs=5e-5)
        assert row.delta_f1 == pytest.approx(0.2453, abs=5e-5)

    def test_identical_stages_have_zero_delta(self):
        m = self._metrics(0.8, 0.9, 0.2)
        row = stage_comparison("x", s1=m, s2=m, gold_rate=0.2)
        assert row.delta_kappa == 0.0
        assert row.delta_f1 == 0.0
