"""Cost-sensitive base learners for the cascade.

The 0-1 weighted classification error that the cascade wants minimized is
non-differentiable, so training optimizes a cost-weighted logistic
surrogate instead and ``weighted_error`` stays the reported metric.  Two
learner families are provided: gradient-boosted regression trees (depth-1
stumps or depth-k trees, with exact greedy split search and warm-start
support) and a weighted logistic baseline fit by Newton iterations.

Asymmetric class costs enter as per-example multipliers on the surrogate,
never by resampling, so training is deterministic given a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from .data import WeightedDataset
from .errors import ConfigError, DataError, TrainingError
from .significance import U_MIN, SignificanceMeasure

__all__ = [
    "CostVector",
    "LearnerConfig",
    "Tree",
    "Model",
    "make_cost_vector",
    "weighted_error",
    "surrogate_loss",
    "surrogate_gradient",
    "surrogate_hessian",
    "train",
    "boost_one_round",
    "empty_model",
    "predict_scores",
    "classify",
    "save_model",
    "load_model",
]

_LEARNER_KINDS = ("stump-boost", "tree-boost", "logistic")
_BOOSTING_KINDS = ("stump-boost", "tree-boost")


@dataclass(frozen=True)
class CostVector:
    """Per-example misclassification costs generated by one dual weight."""

    costs: np.ndarray
    round_dual: float

    def __post_init__(self) -> None:
        costs = np.ascontiguousarray(self.costs, dtype=float)
        costs.setflags(write=False)
        object.__setattr__(self, "costs", costs)
        if costs.ndim != 1:
            raise ValueError("costs must be 1-D")
        if not np.all(costs >= 0.0):
            raise ValueError("costs must be nonnegative")
        if not np.any(costs > 0.0):
            raise ValueError("at least one cost must be positive")

    @property
    def n(self) -> int:
        return self.costs.shape[0]


@dataclass(frozen=True)
class LearnerConfig:
    """Base-learner hyperparameters.

    learning_rate 0 is allowed (it freezes scores, useful for structural
    tests); subsample < 1 row-samples each boosting round without
    replacement.
    """

    kind: str = "tree-boost"
    rounds: int = 50
    learning_rate: float = 0.1
    max_depth: int = 3
    min_child_weight: float = 1.0
    seed: int = 0
    subsample: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _LEARNER_KINDS:
            raise ConfigError(
                f"learner kind must be one of {_LEARNER_KINDS}, got {self.kind!r}"
            )
        if not isinstance(self.rounds, int) or self.rounds < 1:
            raise ConfigError(f"rounds must be an integer >= 1, got {self.rounds!r}")
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ConfigError(
                f"learning_rate must lie in [0, 1], got {self.learning_rate!r}"
            )
        if not isinstance(self.max_depth, int) or self.max_depth < 1:
            raise ConfigError(f"max_depth must be an integer >= 1, got {self.max_depth!r}")
        if self.min_child_weight < 0.0:
            raise ConfigError(
                f"min_child_weight must be >= 0, got {self.min_child_weight!r}"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not 0.0 < self.subsample <= 1.0:
            raise ConfigError(f"subsample must lie in (0, 1], got {self.subsample!r}")

    @property
    def depth(self) -> int:
        return 1 if self.kind == "stump-boost" else self.max_depth


@dataclass(frozen=True)
class Tree:
    """One regression tree as flat node arrays.

    Internal nodes carry (feature, threshold, left, right, missing_left);
    leaves have feature -1 and carry value.  Routing: x < threshold goes
    left, x >= threshold goes right, NaN follows missing_left.  Thresholds
    are realized feature values (the smallest value of the right child), so
    the partition is exact in floating point.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    value: np.ndarray

    def __post_init__(self) -> None:
        for name, dtype in (
            ("feature", np.int64),
            ("threshold", float),
            ("left", np.int64),
            ("right", np.int64),
            ("missing_left", bool),
            ("value", float),
        ):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def predict(self, features: np.ndarray) -> np.ndarray:
        out = np.empty(features.shape[0], dtype=float)
        stack = [(0, np.arange(features.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            col = features[idx, self.feature[node]]
            nan = np.isnan(col)
            go_left = np.where(nan, self.missing_left[node], col < self.threshold[node])
            stack.append((int(self.left[node]), idx[go_left]))
            stack.append((int(self.right[node]), idx[~go_left]))
        return out


@dataclass(frozen=True)
class Model:
    """A trained scorer plus its decision threshold.

    classify() returns +1 exactly when the margin score exceeds
    ``threshold``.  Boosted models score as base_score plus the ordered sum
    of tree outputs; the trees tuple only ever grows under warm-start
    boosting.  Logistic models score as base_score + x @ coefficients after
    median imputation of missing values.
    """

    kind: str
    n_features: int
    base_score: float
    threshold: float = 0.0
    trees: tuple[Tree, ...] = ()
    coefficients: Optional[np.ndarray] = None
    impute_values: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.kind not in _LEARNER_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        for name in ("coefficients", "impute_values"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.ascontiguousarray(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    def with_threshold(self, threshold: float) -> "Model":
        return Model(
            kind=self.kind,
            n_features=self.n_features,
            base_score=self.base_score,
            threshold=threshold,
            trees=self.trees,
            coefficients=self.coefficients,
            impute_values=self.impute_values,
        )

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def make_cost_vector(
    dataset: WeightedDataset, u: float, measure: SignificanceMeasure
) -> CostVector:
    """Per-example costs for one round: signal w*u, background w*f*(u)."""
    if not math.isfinite(u) or u < U_MIN:
        raise ValueError(f"dual weight must be >= {U_MIN}, got {u!r}")
    background_rate = float(measure.f_conjugate(u))
    costs = np.where(dataset.labels == 1, dataset.weights * u, dataset.weights * background_rate)
    return CostVector(costs=costs, round_dual=u)


def weighted_error(
    dataset: WeightedDataset, costs: CostVector, predictions: np.ndarray
) -> float:
    """Total cost of the misclassified examples."""
    preds = np.asarray(predictions)
    if preds.shape != dataset.labels.shape:
        raise ValueError(
            f"predictions shape {preds.shape} does not match dataset ({dataset.n},)"
        )
    if costs.n != dataset.n:
        raise ValueError("cost vector length does not match dataset")
    return float(costs.costs[preds != dataset.labels].sum())


def surrogate_loss(costs: np.ndarray, labels: np.ndarray, scores: np.ndarray) -> float:
    """Cost-weighted logistic loss sum c_i * ln(1 + exp(-y_i F_i))."""
    margin = labels * scores
    return float(np.sum(costs * np.logaddexp(0.0, -margin)))


def surrogate_gradient(
    costs: np.ndarray, labels: np.ndarray, scores: np.ndarray
) -> np.ndarray:
    """d loss / d scores: -c * y * sigmoid(-y F)."""
    return -costs * labels * expit(-labels * scores)


def surrogate_hessian(
    costs: np.ndarray, labels: np.ndarray, scores: np.ndarray
) -> np.ndarray:
    """Diagonal second derivative: c * sigmoid(-yF) * sigmoid(yF)."""
    margin = labels * scores
    return costs * expit(-margin) * expit(margin)


def _safe_ratio(g: float, h: float) -> float:
    return g * g / h if h > 0.0 else 0.0


def _build_tree(
    features: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    costs: np.ndarray,
    learning_rate: float,
    max_depth: int,
    min_child_weight: float,
) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    missing_left: list[bool] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        missing_left.append(True)
        value.append(0.0)
        return len(feature) - 1

    def leaf_value(idx: np.ndarray) -> float:
        G = float(g[idx].sum())
        H = float(h[idx].sum())
        return -learning_rate * G / H if H > 0.0 else 0.0

    def best_split(idx: np.ndarray):
        # returns (gain, feature, threshold, missing_left, left_idx, right_idx)
        # or None; ties resolved by scan order: feature index ascending,
        # threshold ascending, missing-to-left before missing-to-right
        G = float(g[idx].sum())
        H = float(h[idx].sum())
        parent = _safe_ratio(G, H)
        best = None
        for j in range(features.shape[1]):
            col = features[idx, j]
            nan_mask = np.isnan(col)
            present = idx[~nan_mask]
            if present.size < 2:
                continue
            missing = idx[nan_mask]
            order = np.argsort(col[~nan_mask], kind="stable")
            sorted_idx = present[order]
            v = col[~nan_mask][order]
            boundaries = np.flatnonzero(v[1:] > v[:-1]) + 1
            if boundaries.size == 0:
                continue
            g_cum = np.cumsum(g[sorted_idx])
            h_cum = np.cumsum(h[sorted_idx])
            c_cum = np.cumsum(costs[sorted_idx])
            g_tot, h_tot, c_tot = g_cum[-1], h_cum[-1], c_cum[-1]
            g_miss = float(g[missing].sum())
            h_miss = float(h[missing].sum())
            c_miss = float(costs[missing].sum())
            for k in boundaries:
                gl, hl, cl = g_cum[k - 1], h_cum[k - 1], c_cum[k - 1]
                gr, hr, cr = g_tot - gl, h_tot - hl, c_tot - cl
                for miss_goes_left in (True, False):
                    if miss_goes_left:
                        GL, HL, CL = gl + g_miss, hl + h_miss, cl + c_miss
                        GR, HR, CR = gr, hr, cr
                    else:
                        GL, HL, CL = gl, hl, cl
                        GR, HR, CR = gr + g_miss, hr + h_miss, cr + c_miss
                    if CL < min_child_weight or CR < min_child_weight:
                        continue
                    gain = _safe_ratio(GL, HL) + _safe_ratio(GR, HR) - parent
                    if gain <= 0.0:
                        continue
                    if best is None or gain > best[0]:
                        cut = float(v[k])
                        crit = col < cut
                        go_left = np.where(nan_mask, miss_goes_left, crit)
                        best = (gain, j, cut, miss_goes_left, idx[go_left], idx[~go_left])
        return best

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        split = None if depth >= max_depth or idx.size < 2 else best_split(idx)
        if split is None:
            value[node] = leaf_value(idx)
            return node
        _, j, cut, miss_left, idx_l, idx_r = split
        feature[node] = j
        threshold[node] = cut
        missing_left[node] = miss_left
        left[node] = build(idx_l, depth + 1)
        right[node] = build(idx_r, depth + 1)
        return node

    build(np.arange(features.shape[0]), 0)
    return Tree(
        feature=np.asarray(feature),
        threshold=np.asarray(threshold),
        left=np.asarray(left),
        right=np.asarray(right),
        missing_left=np.asarray(missing_left),
        value=np.asarray(value),
    )


def _check_training_inputs(dataset: WeightedDataset, costs: CostVector) -> None:
    if dataset.n == 0:
        raise TrainingError("cannot train on an empty dataset")
    if costs.n != dataset.n:
        raise ValueError("cost vector length does not match dataset")
    if not (np.any(dataset.labels == 1) and np.any(dataset.labels == -1)):
        raise TrainingError("training requires both classes present")


def _base_score(costs: np.ndarray, labels: np.ndarray) -> float:
    pos = float(costs[labels == 1].sum())
    neg = float(costs[labels == -1].sum())
    if pos <= 0.0 or neg <= 0.0:
        return 0.0
    return math.log(pos / neg)


def _round_rng(seed: int, round_index: int) -> np.random.Generator:
    # one independent stream per boosting round so warm starts replay
    # train() exactly regardless of how rounds are interleaved
    return np.random.default_rng([seed, round_index])


def _fit_round(
    features: np.ndarray,
    labels: np.ndarray,
    cost_arr: np.ndarray,
    scores: np.ndarray,
    config: LearnerConfig,
    round_index: int,
) -> Tree:
    g = surrogate_gradient(cost_arr, labels, scores)
    h = surrogate_hessian(cost_arr, labels, scores)
    n = features.shape[0]
    if config.subsample < 1.0:
        rng = _round_rng(config.seed, round_index)
        m = max(1, int(round(config.subsample * n)))
        rows = np.sort(rng.permutation(n)[:m])
    else:
        rows = np.arange(n)
    return _build_tree(
        features[rows],
        g[rows],
        h[rows],
        cost_arr[rows],
        config.learning_rate,
        config.depth,
        config.min_child_weight,
    )


def train(dataset: WeightedDataset, costs: CostVector, config: LearnerConfig) -> Model:
    """Fit a model minimizing the cost-weighted logistic surrogate.

    Boosting kinds run ``config.rounds`` rounds of Newton-step regression
    trees; the logistic kind ignores rounds and fits by damped Newton
    iterations.  Deterministic given ``config.seed``.
    """
    _check_training_inputs(dataset, costs)
    if config.kind == "logistic":
        return _train_logistic(dataset, costs)
    base = _base_score(costs.costs, dataset.labels)
    scores = np.full(dataset.n, base, dtype=float)
    trees: list[Tree] = []
    for t in range(config.rounds):
        tree = _fit_round(
            dataset.features, dataset.labels, costs.costs, scores, config, t
        )
        scores = scores + tree.predict(dataset.features)
        trees.append(tree)
    return Model(
        kind=config.kind,
        n_features=dataset.d,
        base_score=base,
        threshold=0.0,
        trees=tuple(trees),
    )


def boost_one_round(
    model: Model, dataset: WeightedDataset, costs: CostVector, config: LearnerConfig
) -> Model:
    """Append exactly one tree fit to the current surrogate gradient.

    Prior trees are untouched, so k calls starting from an empty model
    reproduce train(rounds=k) bit-exactly for equal seeds.
    """
    if model.kind not in _BOOSTING_KINDS:
        raise TrainingError(f"model kind {model.kind!r} does not support boosting")
    if model.kind != config.kind:
        raise TrainingError(
            f"learner kind mismatch: model is {model.kind!r}, config is {config.kind!r}"
        )
    _check_training_inputs(dataset, costs)
    if dataset.d != model.n_features:
        raise DataError(
            f"dataset has {dataset.d} features, model expects {model.n_features}"
        )
    scores = predict_scores(model, dataset)
    tree = _fit_round(
        dataset.features, dataset.labels, costs.costs, scores, config, model.n_trees
    )
    return Model(
        kind=model.kind,
        n_features=model.n_features,
        base_score=model.base_score,
        threshold=model.threshold,
        trees=model.trees + (tree,),
        coefficients=model.coefficients,
        impute_values=model.impute_values,
    )


def empty_model(kind: str, n_features: int, base_score: float = 0.0) -> Model:
    """A treeless boosting model, the warm-start zero point."""
    if kind not in _BOOSTING_KINDS:
        raise ValueError(f"empty_model requires a boosting kind, got {kind!r}")
    return Model(kind=kind, n_features=n_features, base_score=base_score)


def _weighted_median(values: np.ndarray, weights: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    if cum[-1] <= 0.0:
        return float(np.median(values))
    pos = np.searchsorted(cum, 0.5 * cum[-1])
    return float(values[order][min(pos, values.size - 1)])


def _train_logistic(dataset: WeightedDataset, costs: CostVector) -> Model:
    x = dataset.features.copy()
    impute = np.zeros(dataset.d)
    for j in range(dataset.d):
        col = x[:, j]
        present = ~np.isnan(col)
        impute[j] = (
            _weighted_median(col[present], costs.costs[present]) if present.any() else 0.0
        )
        col[~present] = impute[j]
    y = dataset.labels.astype(float)
    c = costs.costs
    design = np.hstack([np.ones((dataset.n, 1)), x])
    beta = np.zeros(design.shape[1])
    ridge = 1e-8 * np.eye(design.shape[1])
    for _ in range(100):
        f = design @ beta
        grad = design.T @ (-c * y * expit(-y * f))
        hess = (design * (c * expit(-y * f) * expit(y * f))[:, None]).T @ design
        step = np.linalg.solve(hess + ridge, grad)
        beta = beta - step
        if float(np.max(np.abs(step))) < 1e-10:
            break
    return Model(
        kind="logistic",
        n_features=dataset.d,
        base_score=float(beta[0]),
        threshold=0.0,
        coefficients=beta[1:],
        impute_values=impute,
    )


def _features_of(data: Union[WeightedDataset, np.ndarray]) -> np.ndarray:
    if isinstance(data, WeightedDataset):
        return data.features
    return np.asarray(data, dtype=float)


def predict_scores(model: Model, data: Union[WeightedDataset, np.ndarray]) -> np.ndarray:
    """Margin scores: base_score plus the ordered sum of tree outputs."""
    features = _features_of(data)
    if features.ndim != 2 or features.shape[1] != model.n_features:
        raise DataError(
            f"feature matrix shape {features.shape} does not match model "
            f"({model.n_features} features)"
        )
    if model.kind == "logistic":
        x = features.copy()
        for j in range(model.n_features):
            nan = np.isnan(x[:, j])
            x[nan, j] = model.impute_values[j]
        return model.base_score + x @ model.coefficients
    scores = np.full(features.shape[0], model.base_score, dtype=float)
    for tree in model.trees:
        scores += tree.predict(features)
    return scores


def classify(model: Model, data: Union[WeightedDataset, np.ndarray]) -> np.ndarray:
    """Hard labels: +1 where the score strictly exceeds the threshold."""
    scores = predict_scores(model, data)
    return np.where(scores > model.threshold, 1, -1).astype(np.int64)


_FORMAT_HEADER = "amscascade model format 1"


def save_model(model: Model, path: str) -> None:
    """Serialize to the versioned text format; exact float round-trip."""
    lines = [
        _FORMAT_HEADER,
        f"kind {model.kind}",
        f"features {model.n_features}",
        f"base_score {model.base_score!r}",
        f"threshold {model.threshold!r}",
    ]
    if model.kind == "logistic":
        lines.append(f"coefficients {model.n_features}")
        for j in range(model.n_features):
            lines.append(f"c {j} {float(model.coefficients[j])!r}")
        lines.append(f"impute {model.n_features}")
        for j in range(model.n_features):
            lines.append(f"i {j} {float(model.impute_values[j])!r}")
    else:
        lines.append(f"trees {model.n_trees}")
        for t, tree in enumerate(model.trees):
            lines.append(f"tree {t} nodes {tree.n_nodes}")
            for k in range(tree.n_nodes):
                if tree.feature[k] < 0:
                    lines.append(f"node {k} leaf {float(tree.value[k])!r}")
                else:
                    side = "left" if tree.missing_left[k] else "right"
                    lines.append(
                        f"node {k} split {int(tree.feature[k])} "
                        f"{float(tree.threshold[k])!r} "
                        f"{int(tree.left[k])} {int(tree.right[k])} {side}"
                    )
    lines.append("end")
    with open(path, "w", newline="") as handle:
        handle.write("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, lines: list[str]):
        self.lines = lines
        self.pos = 0

    def next(self) -> str:
        if self.pos >= len(self.lines):
            raise DataError("model file truncated")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect(self, prefix: str) -> list[str]:
        line = self.next()
        parts = line.split()
        if not line.startswith(prefix + " ") and line != prefix:
            raise DataError(f"model file: expected {prefix!r}, got {line!r}")
        return parts


def load_model(path: str) -> Model:
    """Parse a model saved by save_model."""
    with open(path, "r") as handle:
        lines = [line.rstrip("\n") for line in handle]
    reader = _LineReader(lines)
    if reader.next() != _FORMAT_HEADER:
        raise DataError(f"{path!r} is not a model file (bad header)")
    kind = reader.expect("kind")[1]
    n_features = int(reader.expect("features")[1])
    base_score = float(reader.expect("base_score")[1])
    threshold = float(reader.expect("threshold")[1])
    if kind == "logistic":
        count = int(reader.expect("coefficients")[1])
        coefficients = np.zeros(count)
        for _ in range(count):
            parts = reader.expect("c")
            coefficients[int(parts[1])] = float(parts[2])
        count = int(reader.expect("impute")[1])
        impute = np.zeros(count)
        for _ in range(count):
            parts = reader.expect("i")
            impute[int(parts[1])] = float(parts[2])
        model = Model(
            kind=kind,
            n_features=n_features,
            base_score=base_score,
            threshold=threshold,
            coefficients=coefficients,
            impute_values=impute,
        )
    else:
        n_trees = int(reader.expect("trees")[1])
        trees = []
        for _ in range(n_trees):
            header = reader.expect("tree")
            n_nodes = int(header[3])
            feature = np.full(n_nodes, -1, dtype=np.int64)
            threshold_arr = np.full(n_nodes, math.nan)
            left = np.full(n_nodes, -1, dtype=np.int64)
            right = np.full(n_nodes, -1, dtype=np.int64)
            missing = np.ones(n_nodes, dtype=bool)
            value = np.zeros(n_nodes)
            for _ in range(n_nodes):
                parts = reader.expect("node")
                k = int(parts[1])
                if parts[2] == "leaf":
                    value[k] = float(parts[3])
                elif parts[2] == "split":
                    feature[k] = int(parts[3])
                    threshold_arr[k] = float(parts[4])
                    left[k] = int(parts[5])
                    right[k] = int(parts[6])
                    missing[k] = parts[7] == "left"
                else:
                    raise DataError(f"model file: bad node line {parts!r}")
            trees.append(
                Tree(
                    feature=feature,
                    threshold=threshold_arr,
                    left=left,
                    right=right,
                    missing_left=missing,
                    value=value,
                )
            )
        model = Model(
            kind=kind,
            n_features=n_features,
            base_score=base_score,
            threshold=threshold,
            trees=tuple(trees),
        )
    if reader.expect("end") != ["end"]:
        raise DataError("model file: missing end marker")
    return model
