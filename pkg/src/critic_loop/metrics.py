"""Agreement metrics, both direct and prevalence-corrected.

Two routes produce the same metric set:

* direct: a 2x2 confusion matrix counted over a shared key universe
  (``confusion`` + ``basic_metrics``);
* corrected: a normalized confusion matrix reconstructed from three
  estimated rates -- prevalence from a naturalistic sample, the stage's
  predicted-positive rate on that same sample, and PPV from pooled
  adjudicated predicted positives (``reconstruct`` + ``corrected_metrics``).

When the three rates are computed from an actual confusion matrix the two
routes agree exactly; that equivalence is the module's main test oracle.

Zero-denominator metrics are carried as NaN with a machine-readable reason
in ``AgreementMetrics.flags`` -- never silently coerced to 0 or 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .exceptions import IntegrityError, ValidationError

# fn may come out a hair below zero when the input rates were themselves
# computed in floating point; only a genuinely negative fn triggers clamping.
_FN_EPSILON = 1e-12


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts of a binary contingency table."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValidationError(f"confusion count {name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class PrevalenceEstimates:
    """The three rates driving the corrected reconstruction.

    prevalence: positive fraction of a naturalistic sample.
    positive_rate: fraction of that sample the stage labels positive.
    ppv: valid fraction among pooled adjudicated predicted positives.
    """

    prevalence: float
    positive_rate: float
    ppv: float
    stage: str  # "s1" or "s2"

    def __post_init__(self) -> None:
        for name in ("prevalence", "positive_rate", "ppv"):
            value = getattr(self, name)
            if math.isnan(value) or not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be a fraction in [0, 1], got {value!r}")
        if self.stage not in ("s1", "s2"):
            raise ValidationError(f"stage must be 's1' or 's2', got {self.stage!r}")


@dataclass(frozen=True)
class ReconstructedConfusion:
    """Normalized confusion rates; the four cells sum to 1."""

    tp: float
    fp: float
    fn: float
    tn: float
    clamped: bool = False

    def expected_counts(self, corpus_size: int) -> dict[str, float]:
        """Expected cell counts for a corpus of ``corpus_size`` items."""
        if corpus_size <= 0:
            raise ValidationError("corpus size must be positive")
        return {
            "tp": self.tp * corpus_size,
            "fp": self.fp * corpus_size,
            "fn": self.fn * corpus_size,
            "tn": self.tn * corpus_size,
        }


@dataclass(frozen=True)
class AgreementMetrics:
    """Precision/recall/F1 plus Cohen's kappa and its agreement rates.

    Undefined metrics are NaN, with the reason keyed by metric name in
    ``flags``.
    """

    precision: float
    recall: float
    f1: float
    kappa: float
    observed_agreement: float
    chance_agreement: float
    detected_positive_rate: float
    flags: Mapping[str, str] = field(default_factory=dict)

    def defined(self, name: str) -> bool:
        return name not in self.flags

    def to_dict(self) -> dict:
        """JSON-safe dict: flagged values become None, flags ride along."""
        out = {}
        for name in (
            "precision",
            "recall",
            "f1",
            "kappa",
            "observed_agreement",
            "chance_agreement",
            "detected_positive_rate",
        ):
            value = getattr(self, name)
            out[name] = None if math.isnan(value) else value
        out["flags"] = dict(self.flags)
        return out


def confusion(gold: set, predicted: set, universe: set) -> ConfusionCounts:
    """Count the 2x2 table of ``predicted`` against ``gold`` over ``universe``.

    ``gold`` and ``predicted`` are the positive key sets.
    """
    if not universe:
        raise IntegrityError("confusion universe is empty")
    stray = (gold | predicted) - universe
    if stray:
        raise IntegrityError(f"keys outside the universe: {sorted(stray)[:5]}")
    tp = len(gold & predicted)
    fp = len(predicted - gold)
    fn = len(gold - predicted)
    tn = len(universe) - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _f1(precision: float, recall: float, flags: dict) -> float:
    if math.isnan(precision) or math.isnan(recall):
        flags["f1"] = "undefined_component"
        return math.nan
    if precision + recall == 0.0:
        flags["f1"] = "zero_precision_and_recall"
        return math.nan
    return 2.0 * precision * recall / (precision + recall)


def _kappa(po: float, pe: float, flags: dict) -> float:
    if pe >= 1.0:
        flags["kappa"] = "degenerate_chance_agreement"
        return math.nan
    return (po - pe) / (1.0 - pe)


def basic_metrics(c: ConfusionCounts) -> AgreementMetrics:
    """Direct metrics from confusion counts.

    kappa uses observed agreement (tp+tn)/N against the chance agreement of
    two raters with marginal positive rates r = (tp+fp)/N and
    pi = (tp+fn)/N.
    """
    n = c.total
    if n == 0:
        raise ValidationError("cannot compute metrics over zero items")
    flags: dict[str, str] = {}

    if c.tp + c.fp == 0:
        flags["precision"] = "no_predicted_positives"
        precision = math.nan
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        flags["recall"] = "no_gold_positives"
        recall = math.nan
    else:
        recall = c.tp / (c.tp + c.fn)
    f1 = _f1(precision, recall, flags)

    po = (c.tp + c.tn) / n
    r = (c.tp + c.fp) / n
    pi = (c.tp + c.fn) / n
    pe = r * pi + (1.0 - r) * (1.0 - pi)
    kappa = _kappa(po, pe, flags)

    return AgreementMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        kappa=kappa,
        observed_agreement=po,
        chance_agreement=pe,
        detected_positive_rate=r,
        flags=flags,
    )


def estimate_prevalence(gold, code_id: str) -> float:
    """Positive fraction for ``code_id`` in a naturalistic gold sample."""
    labels = [g.label for g in gold if g.code_id == code_id]
    if not labels:
        raise ValidationError(f"no gold labels for code {code_id!r}")
    return sum(labels) / len(labels)


def estimate_ppv(pool: Sequence[bool]) -> float:
    """Valid fraction over a pool of adjudicated predicted positives.

    Empty pool yields NaN (flagged downstream); the pool is unweighted.
    """
    if not pool:
        warnings.warn("empty PPV pool; estimate is undefined", stacklevel=2)
        return math.nan
    return sum(pool) / len(pool)


def pooled_ppv(natural: Iterable[bool], audited: Iterable[bool]) -> float:
    """PPV over naturalistic-sample positives pooled with audited positives."""
    return estimate_ppv([*natural, *audited])


def reconstruct(est: PrevalenceEstimates) -> ReconstructedConfusion:
    """Rebuild normalized confusion rates from (prevalence, rate, ppv).

    tp = rate*ppv and fp = rate*(1-ppv); fn takes whatever prevalence is left
    and tn the remainder. The pooled PPV can be inconsistent with the
    naturalistic marginals: rate*ppv above prevalence would push fn negative,
    and a PPV too low for high prevalence-plus-rate would push tn negative.
    In either case the marginals win: tp is clamped into its feasible
    interval [max(0, prevalence+rate-1), prevalence], the other cells follow,
    and the result is flagged.
    """
    raw_tp = est.positive_rate * est.ppv
    lower = max(0.0, est.prevalence + est.positive_rate - 1.0)
    upper = est.prevalence
    tp = min(max(raw_tp, lower), upper)
    clamped = raw_tp > upper + _FN_EPSILON or raw_tp < lower - _FN_EPSILON
    if clamped:
        effective = tp / est.positive_rate if est.positive_rate else math.nan
        warnings.warn(
            f"pooled PPV {est.ppv:.4f} inconsistent with prevalence "
            f"{est.prevalence:.4f} at positive rate {est.positive_rate:.4f}; "
            f"clamped (effective precision {effective:.4f})",
            stacklevel=2,
        )
    fp = max(est.positive_rate - tp, 0.0)
    fn = max(est.prevalence - tp, 0.0)
    tn = 1.0 - tp - fp - fn
    return ReconstructedConfusion(tp=tp, fp=fp, fn=fn, tn=tn, clamped=clamped)


def corrected_metrics(rc: ReconstructedConfusion, est: PrevalenceEstimates) -> AgreementMetrics:
    """Metrics over reconstructed rates; mirrors ``basic_metrics`` exactly.

    recall is tp/prevalence and precision tp/positive_rate (which equals the
    input PPV whenever the reconstruction was not clamped).
    """
    flags: dict[str, str] = {}

    if est.positive_rate == 0.0:
        flags["precision"] = "no_predicted_positives"
        precision = math.nan
    else:
        precision = rc.tp / est.positive_rate
    if est.prevalence == 0.0:
        flags["recall"] = "no_gold_positives"
        recall = math.nan
    else:
        recall = rc.tp / est.prevalence
    f1 = _f1(precision, recall, flags)

    po = rc.tp + rc.tn
    pe = est.positive_rate * est.prevalence + (1.0 - est.positive_rate) * (1.0 - est.prevalence)
    kappa = _kappa(po, pe, flags)

    return AgreementMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        kappa=kappa,
        observed_agreement=po,
        chance_agreement=pe,
        detected_positive_rate=est.positive_rate,
        flags=flags,
    )


@dataclass(frozen=True)
class ComparisonRow:
    """One code's before/after row: detected rates, kappa, F1, and deltas."""

    code_id: str
    gold_rate: float
    s1_rate: float
    s2_rate: float
    s1_kappa: float
    s2_kappa: float
    delta_kappa: float
    s1_f1: float
    s2_f1: float
    delta_f1: float

    def to_dict(self) -> dict:
        def clean(v: float):
            return None if math.isnan(v) else v

        return {
            "code_id": self.code_id,
            "gold_rate": clean(self.gold_rate),
            "s1_rate": clean(self.s1_rate),
            "s2_rate": clean(self.s2_rate),
            "s1_kappa": clean(self.s1_kappa),
            "s2_kappa": clean(self.s2_kappa),
            "delta_kappa": clean(self.delta_kappa),
            "s1_f1": clean(self.s1_f1),
            "s2_f1": clean(self.s2_f1),
            "delta_f1": clean(self.delta_f1),
        }


def stage_comparison(
    code_id: str,
    s1: AgreementMetrics,
    s2: AgreementMetrics,
    gold_rate: float,
) -> ComparisonRow:
    """Side-by-side row for one code; deltas are s2 minus s1."""
    delta_kappa = s2.kappa - s1.kappa
    delta_f1 = s2.f1 - s1.f1
    return ComparisonRow(
        code_id=code_id,
        gold_rate=gold_rate,
        s1_rate=s1.detected_positive_rate,
        s2_rate=s2.detected_positive_rate,
        s1_kappa=s1.kappa,
        s2_kappa=s2.kappa,
        delta_kappa=delta_kappa,
        s1_f1=s1.f1,
        s2_f1=s2.f1,
        delta_f1=delta_f1,
    )
