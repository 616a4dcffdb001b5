"""The weighted classification cascade and its supporting tooling.

Each cascade round alternates two steps: train a cost-sensitive classifier
under the current dual weight u, then move u to the closed-form minimizer
of the dual risk for that classifier's confusion summary.  Because the
dual risk at fixed u is (up to constants) a weighted classification error,
any round that strictly reduces that error is guaranteed to strictly
increase the training significance; ``monotonicity_audit`` checks this
chain on recorded traces.

Two variants are provided.  The fresh variant trains a new model every
round, watches validation significance for a stall, runs a fixed number of
extra rounds afterwards, and returns the best round's model.  The
warm-start variant grows one persistent boosted model by a single tree per
round and always runs the full budget.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from .data import WeightedDataset
from .errors import CascadeError, ConfigError
from .learner import (
    LearnerConfig,
    Model,
    boost_one_round,
    classify,
    make_cost_vector,
    predict_scores,
    train,
    weighted_error,
)
from .significance import (
    U_MAX,
    U_MIN,
    ConfusionSummary,
    SignificanceMeasure,
    clamp_dual,
    confusion_summary,
    optimal_u,
    resolve_measure,
    significance,
    significance_curve,
)

__all__ = [
    "CascadeConfig",
    "RoundRecord",
    "CascadeTrace",
    "AuditReport",
    "Ensemble",
    "default_u0",
    "run_cascade",
    "run_cascade_fresh",
    "run_cascade_warmstart",
    "rerun_cascade",
    "monotonicity_audit",
    "ensemble_average",
    "ensemble_scores",
    "select_threshold",
    "write_trace_csv",
    "parse_cascade_config",
    "format_cascade_config",
]

_VARIANTS = ("fresh", "warmstart")
_VALIDATION_SOURCES = ("held-out", "training")


@dataclass(frozen=True)
class CascadeConfig:
    """Full specification of one cascade run.

    ``u0 = None`` means "use the dual optimum of the constant all-positive
    classifier on the training set", a natural first linearization.
    ``validation_source`` chooses which dataset's confusion summary drives
    the dual updates; None picks the variant's default (held-out for
    fresh, training for warmstart).  ``update_duals = False`` freezes u at
    u0 for the whole run, which reduces the warm-start variant to plain
    cost-weighted boosting.
    """

    measure: Union[str, SignificanceMeasure] = "ams2"
    u0: Optional[float] = None
    T: int = 10
    variant: str = "fresh"
    extra_rounds_after_stall: int = 10
    b_reg: float = 0.0
    learner: LearnerConfig = LearnerConfig()
    seed: int = 0
    validation_source: Optional[str] = None
    update_duals: bool = True

    def __post_init__(self) -> None:
        if isinstance(self.measure, str):
            resolve_measure(self.measure)  # raises on unknown names
        if self.u0 is not None and not self.u0 > 0.0:
            raise ConfigError(f"u0 must be > 0, got {self.u0!r}")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigError(f"T must be an integer >= 1, got {self.T!r}")
        if self.variant not in _VARIANTS:
            raise ConfigError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if not isinstance(self.extra_rounds_after_stall, int) or self.extra_rounds_after_stall < 0:
            raise ConfigError(
                "extra_rounds_after_stall must be an integer >= 0, got "
                f"{self.extra_rounds_after_stall!r}"
            )
        if self.b_reg < 0.0:
            raise ConfigError(f"b_reg must be >= 0, got {self.b_reg!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.validation_source is not None and self.validation_source not in _VALIDATION_SOURCES:
            raise ConfigError(
                f"validation_source must be one of {_VALIDATION_SOURCES}, "
                f"got {self.validation_source!r}"
            )

    @property
    def effective_validation_source(self) -> str:
        if self.validation_source is not None:
            return self.validation_source
        return "held-out" if self.variant == "fresh" else "training"


@dataclass(frozen=True)
class RoundRecord:
    """One cascade round: the dual it ran under and what it achieved."""

    round_index: int  # 1-based
    u_prev: float
    weighted_err: float  # training weighted error of this round's model under u_prev
    train_sig: float
    val_sig: float
    u_next: float
    train_summary: ConfusionSummary
    val_summary: ConfusionSummary


@dataclass(frozen=True)
class CascadeTrace:
    """Complete record of a cascade run."""

    records: tuple[RoundRecord, ...]
    chosen_round: int  # 1-based index of the returned model's round
    variant: str
    validation_source: str
    measure_kind: str
    stall_round: Optional[int] = None  # first round whose val sig failed to increase


@dataclass(frozen=True)
class AuditReport:
    """Result of checking conditional monotonicity on a trace.

    For every consecutive round pair where the new model strictly reduced
    the training weighted error under the incumbent dual weight, training
    significance must strictly increase.  ``violations`` lists pairs where
    it instead dropped by more than the 1e-9 slack.
    """

    pairs_checked: int
    pairs_conditional: int
    violations: tuple[tuple[int, float, float], ...]  # (round t, sig_t, sig_{t+1})

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class Ensemble:
    """Rank-averaged model mixture with optional score threshold."""

    models: tuple[Model, ...]
    weights: tuple[float, ...]
    threshold: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.models:
            raise ValueError("ensemble requires at least one model")
        if len(self.weights) != len(self.models):
            raise ValueError("one mixing weight per model required")
        if any(w < 0.0 for w in self.weights):
            raise ValueError("mixing weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("mixing weights must sum to 1")


def default_u0(
    train_data: WeightedDataset, b_reg: float, measure: SignificanceMeasure
) -> float:
    """Dual optimum of the constant all-positive classifier."""
    denominator = train_data.background_total + b_reg
    if denominator <= 0.0:
        raise CascadeError("training set has no background weight and b_reg = 0")
    return clamp_dual(float(measure.f_prime(train_data.signal_total / denominator)))


def _safe_significance(summary: ConfusionSummary, measure: SignificanceMeasure) -> float:
    # s = 0 scores 0; a selection with zero background is a supremum, not
    # an error, when ranking rounds
    if summary.s == 0.0:
        return 0.0
    if summary.b <= 0.0:
        return math.inf
    return significance(summary, measure)


def _next_dual(summary: ConfusionSummary, measure: SignificanceMeasure) -> float:
    # degenerate summaries floor/ceiling the dual instead of aborting the run
    if summary.b <= 0.0:
        return U_MIN if summary.s == 0.0 else U_MAX
    return optimal_u(summary, measure)


def _round_seed(cascade_seed: int, round_index: int) -> int:
    # independent learner stream per fresh-variant round, reproducible from
    # the single cascade seed
    return int(
        np.random.SeedSequence([cascade_seed, round_index]).generate_state(1)[0]
    )


def _derived_seed(cascade_seed: int, repeat_index: int) -> int:
    return int(
        np.random.SeedSequence([cascade_seed, 7919, repeat_index]).generate_state(1)[0]
    )


def run_cascade_fresh(
    train_data: WeightedDataset,
    validation: WeightedDataset,
    config: CascadeConfig,
) -> tuple[Model, CascadeTrace]:
    """Fresh-model cascade: returns the round with the best validation score.

    Each round trains a new model under the incumbent dual weight, then
    moves the dual to the closed-form optimum of the designated summary.
    After validation significance first fails to increase, the loop runs
    ``extra_rounds_after_stall`` more rounds and stops (never past T).
    """
    if config.variant != "fresh":
        raise ConfigError(f"run_cascade_fresh requires variant 'fresh', got {config.variant!r}")
    measure = resolve_measure(config.measure)
    source = config.effective_validation_source
    u = clamp_dual(config.u0) if config.u0 is not None else default_u0(
        train_data, config.b_reg, measure
    )

    records: list[RoundRecord] = []
    models: list[Model] = []
    stall_round: Optional[int] = None
    stop_after: Optional[int] = None
    prev_val_sig: Optional[float] = None

    for t in range(1, config.T + 1):
        costs = make_cost_vector(train_data, u, measure)
        learner_config = replace(config.learner, seed=_round_seed(config.seed, t))
        model = train(train_data, costs, learner_config)

        train_preds = classify(model, train_data)
        val_preds = classify(model, validation)
        train_summary = confusion_summary(train_data, train_preds, config.b_reg)
        val_summary = confusion_summary(validation, val_preds, config.b_reg)
        designated = train_summary if source == "training" else val_summary

        train_sig = _safe_significance(train_summary, measure)
        val_sig = _safe_significance(val_summary, measure)
        u_next = _next_dual(designated, measure) if config.update_duals else u

        records.append(
            RoundRecord(
                round_index=t,
                u_prev=u,
                weighted_err=weighted_error(train_data, costs, train_preds),
                train_sig=train_sig,
                val_sig=val_sig,
                u_next=u_next,
                train_summary=train_summary,
                val_summary=val_summary,
            )
        )
        models.append(model)

        if stall_round is None and prev_val_sig is not None and val_sig <= prev_val_sig:
            stall_round = t
            stop_after = min(config.T, t + config.extra_rounds_after_stall)
        prev_val_sig = val_sig
        if stop_after is not None and t >= stop_after:
            break
        u = u_next

    val_sigs = [r.val_sig for r in records]
    if max(val_sigs) <= 0.0:
        raise CascadeError(
            "every round selected zero validation signal; no usable model"
        )
    chosen = int(np.argmax(val_sigs))  # first maximum on ties
    trace = CascadeTrace(
        records=tuple(records),
        chosen_round=chosen + 1,
        variant="fresh",
        validation_source=source,
        measure_kind=measure.name,
        stall_round=stall_round,
    )
    return models[chosen], trace


def run_cascade_warmstart(
    train_data: WeightedDataset,
    validation: WeightedDataset,
    config: CascadeConfig,
) -> tuple[Model, CascadeTrace]:
    """Persistent-model cascade: one new tree per round, full T rounds.

    With ``update_duals`` off this is exactly plain cost-weighted boosting
    for T rounds (same seed, same scores bit for bit).
    """
    if config.variant != "warmstart":
        raise ConfigError(
            f"run_cascade_warmstart requires variant 'warmstart', got {config.variant!r}"
        )
    if config.learner.kind == "logistic":
        raise ConfigError("the warm-start variant requires a boosting learner kind")
    measure = resolve_measure(config.measure)
    source = config.effective_validation_source
    u = clamp_dual(config.u0) if config.u0 is not None else default_u0(
        train_data, config.b_reg, measure
    )

    learner_config = replace(config.learner, seed=config.seed)
    records: list[RoundRecord] = []
    model: Optional[Model] = None

    for t in range(1, config.T + 1):
        costs = make_cost_vector(train_data, u, measure)
        if model is None:
            model = train(train_data, costs, replace(learner_config, rounds=1))
        else:
            model = boost_one_round(model, train_data, costs, learner_config)

        train_preds = classify(model, train_data)
        val_preds = classify(model, validation)
        train_summary = confusion_summary(train_data, train_preds, config.b_reg)
        val_summary = confusion_summary(validation, val_preds, config.b_reg)
        designated = train_summary if source == "training" else val_summary

        u_next = _next_dual(designated, measure) if config.update_duals else u
        records.append(
            RoundRecord(
                round_index=t,
                u_prev=u,
                weighted_err=weighted_error(train_data, costs, train_preds),
                train_sig=_safe_significance(train_summary, measure),
                val_sig=_safe_significance(val_summary, measure),
                u_next=u_next,
                train_summary=train_summary,
                val_summary=val_summary,
            )
        )
        u = u_next

    if max(r.val_sig for r in records) <= 0.0:
        raise CascadeError(
            "every round selected zero validation signal; no usable model"
        )
    trace = CascadeTrace(
        records=tuple(records),
        chosen_round=config.T,
        variant="warmstart",
        validation_source=source,
        measure_kind=measure.name,
    )
    return model, trace


def run_cascade(
    train_data: WeightedDataset,
    validation: WeightedDataset,
    config: CascadeConfig,
) -> tuple[Model, CascadeTrace]:
    """Dispatch on config.variant."""
    if config.variant == "fresh":
        return run_cascade_fresh(train_data, validation, config)
    return run_cascade_warmstart(train_data, validation, config)


def rerun_cascade(
    train_data: WeightedDataset,
    validation: WeightedDataset,
    config: CascadeConfig,
    repeats: int,
    top_k: Optional[int] = None,
) -> list[tuple[Model, CascadeTrace]]:
    """Run the cascade ``repeats`` times under derived seeds.

    Results come back sorted by best validation significance, best first,
    truncated to ``top_k`` when given.  Rerun r uses a seed derived from
    (config.seed, r), so the whole batch is reproducible from one seed.
    """
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats!r}")
    if top_k is not None and top_k < 1:
        raise ConfigError(f"top_k must be >= 1, got {top_k!r}")
    results = []
    for r in range(repeats):
        run_config = replace(config, seed=_derived_seed(config.seed, r))
        results.append(run_cascade(train_data, validation, run_config))
    results.sort(key=lambda pair: -max(rec.val_sig for rec in pair[1].records))
    return results[: top_k if top_k is not None else len(results)]


def _werr_from_summary(summary: ConfusionSummary, u: float, measure: SignificanceMeasure) -> float:
    # weighted error of a classifier under dual u, reconstructed from its
    # confusion summary: false positives cost w f*(u), false negatives w u
    return summary.raw_background * float(measure.f_conjugate(u)) + summary.s_tilde * u


def monotonicity_audit(
    trace: CascadeTrace, measure: Optional[SignificanceMeasure] = None
) -> AuditReport:
    """Check the cascade's conditional improvement guarantee on a trace.

    For rounds t and t+1: if the round-(t+1) model has strictly smaller
    training weighted error than the round-t model when both are costed at
    u_t, the round-(t+1) training significance must strictly exceed round
    t's.  Drops larger than 1e-9 are violations.
    """
    if measure is None:
        measure = resolve_measure(trace.measure_kind)
    violations = []
    conditional = 0
    records = trace.records
    for prev, new in zip(records, records[1:]):
        u_t = prev.u_next
        err_prev = _werr_from_summary(prev.train_summary, u_t, measure)
        err_new = _werr_from_summary(new.train_summary, u_t, measure)
        if err_new < err_prev:
            conditional += 1
            if new.train_sig <= prev.train_sig - 1e-9:
                violations.append((prev.round_index, prev.train_sig, new.train_sig))
    return AuditReport(
        pairs_checked=max(len(records) - 1, 0),
        pairs_conditional=conditional,
        violations=tuple(violations),
    )


def _rank_normalize(scores: np.ndarray) -> np.ndarray:
    n = scores.shape[0]
    if n == 1:
        return np.array([0.5])
    ranks = rankdata(scores, method="average")
    return (ranks - 1.0) / (n - 1.0)


def ensemble_average(
    models: Sequence[Model], weights: Optional[Sequence[float]] = None
) -> Ensemble:
    """Mix models with normalized nonnegative weights (uniform by default)."""
    if len(models) == 0:
        raise ValueError("ensemble_average requires at least one model")
    if weights is None:
        weights = [1.0] * len(models)
    raw = [float(w) for w in weights]
    if len(raw) != len(models):
        raise ValueError("one mixing weight per model required")
    if any(w < 0.0 for w in raw):
        raise ValueError("mixing weights must be nonnegative")
    total = sum(raw)
    if total <= 0.0:
        raise ValueError("mixing weights must have positive sum")
    return Ensemble(models=tuple(models), weights=tuple(w / total for w in raw))


def ensemble_scores(
    ensemble: Ensemble, data: Union[WeightedDataset, np.ndarray]
) -> np.ndarray:
    """Weighted mean of per-model rank-normalized scores.

    Members' raw score scales are incommensurable, so each model's scores
    are first mapped to average ranks scaled into [0, 1].
    """
    out = None
    for model, weight in zip(ensemble.models, ensemble.weights):
        contribution = weight * _rank_normalize(predict_scores(model, data))
        out = contribution if out is None else out + contribution
    return out


def select_threshold(
    scores: np.ndarray,
    dataset: WeightedDataset,
    measure: Union[str, SignificanceMeasure],
    b_reg: float = 0.0,
) -> float:
    """Significance-maximizing decision cut for given margin scores.

    Scans every realizable selection (descending score order, cutting only
    where the score strictly drops) with an incremental summary, and
    returns a threshold such that ``score > threshold`` reproduces the best
    selection.  Ties prefer fewer selected events.  Selecting nothing
    returns the maximum score; selecting everything returns -inf.
    """
    measure = resolve_measure(measure)
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (dataset.n,):
        raise ValueError(f"scores shape {scores.shape} does not match dataset ({dataset.n},)")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if dataset.n == 0:
        raise ValueError("dataset is empty")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    labels = dataset.labels[order]
    weights = dataset.weights[order]

    signal_cum = np.cumsum(np.where(labels == 1, weights, 0.0))
    background_cum = np.cumsum(np.where(labels == -1, weights, 0.0))

    # k = number selected; realizable k are 0, n, and strict-drop boundaries
    interior = np.flatnonzero(sorted_scores[:-1] > sorted_scores[1:]) + 1
    ks = np.concatenate([[0], interior, [dataset.n]])
    s = np.where(ks > 0, signal_cum[ks - 1], 0.0)
    b = np.where(ks > 0, background_cum[ks - 1], 0.0) + b_reg
    sig = significance_curve(s, b, measure)

    best = int(np.argmax(sig))  # first max wins: fewest selected on ties
    k = int(ks[best])
    if k == 0:
        return float(sorted_scores[0])
    if k == dataset.n:
        return -math.inf
    return float(sorted_scores[k])


def write_trace_csv(trace: CascadeTrace, path: str) -> None:
    """One row per round, full-precision floats, LF line endings."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["round", "u_prev", "weighted_error", "train_sig", "val_sig", "u_next"])
        for r in trace.records:
            writer.writerow(
                [
                    str(r.round_index),
                    repr(r.u_prev),
                    repr(r.weighted_err),
                    repr(r.train_sig),
                    repr(r.val_sig),
                    repr(r.u_next),
                ]
            )


_CASCADE_KEYS = {
    "measure": str,
    "u0": float,
    "T": int,
    "variant": str,
    "extra_rounds_after_stall": int,
    "b_reg": float,
    "seed": int,
    "validation_source": str,
    "update_duals": bool,
}
_LEARNER_KEYS = {
    "kind": str,
    "rounds": int,
    "learning_rate": float,
    "max_depth": int,
    "min_child_weight": float,
    "seed": int,
    "subsample": float,
}


def _parse_value(raw: str, target, key: str):
    if target is bool:
        if raw in ("true", "on", "1", "yes"):
            return True
        if raw in ("false", "off", "0", "no"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        return target(raw)
    except ValueError:
        raise ConfigError(
            f"config key {key!r}: cannot parse {raw!r} as {target.__name__}"
        ) from None


def parse_cascade_config(text: str, base: Optional[CascadeConfig] = None) -> CascadeConfig:
    """Parse the flat key-value config format.

    One ``key = value`` pair per line; ``#`` starts a comment; learner
    fields use the ``learner.`` prefix.  Unknown keys are errors.
    """
    cascade_fields: dict = {}
    learner_fields: dict = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {line_no}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key.startswith("learner."):
            sub = key[len("learner.") :]
            if sub not in _LEARNER_KEYS:
                raise ConfigError(f"config line {line_no}: unknown key {key!r}")
            learner_fields[sub] = _parse_value(raw, _LEARNER_KEYS[sub], key)
        elif key in _CASCADE_KEYS:
            cascade_fields[key] = _parse_value(raw, _CASCADE_KEYS[key], key)
        else:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
    config = base if base is not None else CascadeConfig()
    if learner_fields:
        cascade_fields["learner"] = replace(config.learner, **learner_fields)
    return replace(config, **cascade_fields)


def format_cascade_config(config: CascadeConfig) -> str:
    """Render a config in the same flat key-value format parse reads."""
    measure = config.measure if isinstance(config.measure, str) else config.measure.name
    lines = [
        f"measure = {measure}",
        f"T = {config.T}",
        f"variant = {config.variant}",
        f"extra_rounds_after_stall = {config.extra_rounds_after_stall}",
        f"b_reg = {config.b_reg!r}",
        f"seed = {config.seed}",
        f"update_duals = {'true' if config.update_duals else 'false'}",
    ]
    if config.u0 is not None:
        lines.insert(1, f"u0 = {config.u0!r}")
    if config.validation_source is not None:
        lines.append(f"validation_source = {config.validation_source}")
    learner = config.learner
    lines.extend(
        [
            f"learner.kind = {learner.kind}",
            f"learner.rounds = {learner.rounds}",
            f"learner.learning_rate = {learner.learning_rate!r}",
            f"learner.max_depth = {learner.max_depth}",
            f"learner.min_child_weight = {learner.min_child_weight!r}",
            f"learner.seed = {learner.seed}",
            f"learner.subsample = {learner.subsample!r}",
        ]
    )
    return "\n".join(lines) + "\n"
