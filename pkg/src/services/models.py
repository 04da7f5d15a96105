from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..exceptions import DataError

logger = logging.getLogger(__name__)

UserId = int

MAX_USER_ID = 2**64 - 1
PROB_FLOOR = 1e-10
SCHEMA_VERSION = 1


class EventType(Enum):
    CALL = "call"
    SMS = "sms"


class SubscriptionLabel(IntEnum):
    PREPAID = 0
    POSTPAID = 1

    @classmethod
    def coerce(cls, v) -> "SubscriptionLabel":
        """Accept 0/1, enum members, or names/values as text (case-insensitive)."""
        if isinstance(v, cls):
            return v
        s = str(v).strip().lower()
        for item in cls:
            if s == str(int(item)) or s == item.name.lower():
                return item
        raise DataError(f"unknown subscription label {v!r}")


class BaseConfigModel(BaseModel):
    model_config = ConfigDict(
        populate_by_name=True,
        str_strip_whitespace=True,
        extra="forbid",
    )


# --- CDR layer ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CdrRecord:
    timestamp: int
    event_type: EventType
    duration: int
    caller: UserId
    callee: UserId

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("negative duration")
        if self.event_type is EventType.SMS and self.duration != 0:
            raise ValueError("sms events carry no duration")
        if self.caller == self.callee:
            raise ValueError("caller equals callee")
        if not (0 <= self.caller <= MAX_USER_ID and 0 <= self.callee <= MAX_USER_ID):
            raise ValueError("user id outside unsigned 64-bit range")

    @property
    def is_call(self) -> bool:
        return self.event_type is EventType.CALL


class CdrFormat(BaseConfigModel):
    name: Literal["csv-v1"] = "csv-v1"
    has_header: bool = False
    window: Optional[tuple[int, int]] = None

    @field_validator("window")
    @classmethod
    def _ordered_window(cls, v):
        if v is not None and v[0] > v[1]:
            raise ValueError("observation window start must not exceed its end")
        return v


class FilterPolicy(BaseConfigModel):
    min_total_call_seconds: int = Field(default=10, ge=0)
    max_total_call_seconds: int = Field(default=100_000)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.min_total_call_seconds < self.max_total_call_seconds:
            raise ValueError("filter policy needs min < max")
        return self

    def keeps(self, total_seconds: int) -> bool:
        return self.min_total_call_seconds <= total_seconds <= self.max_total_call_seconds


@dataclass
class ParseReport:
    lines_read: int = 0
    records: int = 0
    malformed: list[tuple[int, str]] = field(default_factory=list)

    @property
    def malformed_fraction(self) -> float:
        return len(self.malformed) / self.lines_read if self.lines_read else 0.0


@dataclass(slots=True)
class EdgeStats:
    call_count: int = 0
    total_call_seconds: int = 0
    sms_count: int = 0
    sum_sq_call_seconds: int = 0

    def add(self, record: CdrRecord) -> None:
        if record.is_call:
            self.call_count += 1
            self.total_call_seconds += record.duration
            self.sum_sq_call_seconds += record.duration * record.duration
        else:
            self.sms_count += 1

    def merge(self, other: "EdgeStats") -> None:
        self.call_count += other.call_count
        self.total_call_seconds += other.total_call_seconds
        self.sms_count += other.sms_count
        self.sum_sq_call_seconds += other.sum_sq_call_seconds

    def as_attrs(self) -> dict[str, int]:
        return {
            "call_count": self.call_count,
            "total_call_seconds": self.total_call_seconds,
            "sms_count": self.sms_count,
            "sum_sq_call_seconds": self.sum_sq_call_seconds,
        }


# --- Features ----------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class UserAttributes:
    n_calls_out: int
    total_dur_out: int
    mean_dur_out: float
    std_dur_out: float
    k_out: int


@dataclass(frozen=True, slots=True)
class PortionAttributes:
    """Postpaid shares of callees, calls and call seconds; None where the denominator is zero."""
    f_n: Optional[float]
    f_c: Optional[float]
    f_d: Optional[float]

    @property
    def undefined(self) -> bool:
        return self.f_n is None or self.f_c is None or self.f_d is None

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.f_n or 0.0, self.f_c or 0.0, self.f_d or 0.0)


# --- Classifiers -------------------------------------------------------------


class GaussianNbModel(BaseConfigModel):
    schema_version: int = SCHEMA_VERSION
    kind: Literal["gaussian_nb"] = "gaussian_nb"
    class_prior: list[float] = Field(..., min_length=2, max_length=2)
    feature_mean: list[list[float]] = Field(..., min_length=2, max_length=2)
    feature_var: list[list[float]] = Field(..., min_length=2, max_length=2)
    var_floor: float = Field(default=1e-6, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not all(0.0 < p < 1.0 for p in self.class_prior):
            raise ValueError("class priors must lie in (0, 1)")
        if abs(sum(self.class_prior) - 1.0) > 1e-9:
            raise ValueError("class priors must sum to 1")
        dims = {len(row) for row in self.feature_mean} | {len(row) for row in self.feature_var}
        if len(dims) != 1:
            raise ValueError("means and variances must share one dimensionality")
        if any(v < self.var_floor for row in self.feature_var for v in row):
            raise ValueError("variance below floor")
        return self

    @property
    def n_features(self) -> int:
        return len(self.feature_mean[0])


class Stump(BaseConfigModel):
    feature: int = Field(..., ge=0)
    threshold: float
    polarity: int
    weight: float

    @field_validator("polarity")
    @classmethod
    def _sign(cls, v: int) -> int:
        if v not in (-1, 1):
            raise ValueError("polarity must be +1 or -1")
        return v

    @field_validator("weight", "threshold")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("stump parameters must be finite")
        return v


class StumpEnsemble(BaseConfigModel):
    schema_version: int = SCHEMA_VERSION
    kind: Literal["adaboost_stumps"] = "adaboost_stumps"
    stumps: list[Stump] = Field(..., min_length=1)
    rounds: int = Field(..., ge=1)


class ConfusionMatrix(BaseConfigModel):
    """Counts indexed (actual, predicted) by label value: row 0 prepaid, row 1 postpaid."""
    counts: list[list[int]] = Field(default_factory=lambda: [[0, 0], [0, 0]])

    @field_validator("counts")
    @classmethod
    def _shape(cls, v: list[list[int]]) -> list[list[int]]:
        if len(v) != 2 or any(len(row) != 2 for row in v):
            raise ValueError("confusion matrix must be 2x2")
        if any(c < 0 for row in v for c in row):
            raise ValueError("confusion counts must be non-negative")
        return v

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    @property
    def accuracy(self) -> float:
        total = self.total
        return (self.counts[0][0] + self.counts[1][1]) / total if total else 0.0

    @property
    def rates(self) -> list[list[float]]:
        out: list[list[float]] = []
        for row in self.counts:
            n = sum(row)
            out.append([c / n for c in row] if n else [0.0, 0.0])
        return out

    def summary(self) -> dict:
        return {"counts": self.counts, "rates": self.rates, "accuracy": self.accuracy, "total": self.total}


class TrainTestSplit(BaseConfigModel):
    train: list[UserId]
    test: list[UserId]
    seed: int

    @model_validator(mode="after")
    def _disjoint(self):
        if set(self.train) & set(self.test):
            raise ValueError("train and test sets overlap")
        return self


# --- Labeling ----------------------------------------------------------------


@dataclass
class LabelingProblem:
    """Energy model: per-node data costs plus lambda-weighted social disagreement costs.

    Nodes are addressed by index; `nodes[i]` is the user id. `k_out[i]` is the
    smoothness normalizer of node i (its out-degree unless another weight is chosen).
    """
    nodes: list[UserId]
    data_cost: list[tuple[float, float]]
    social_edges: list[tuple[int, int]]
    k_out: list[float]
    lam: float
    fixed: dict[int, SubscriptionLabel] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.nodes)
        if len(self.data_cost) != n or len(self.k_out) != n:
            raise DataError("labeling problem tables disagree on node count")
        if not (self.lam >= 0.0):
            raise DataError("lambda must be non-negative")
        for d0, d1 in self.data_cost:
            if not (math.isfinite(d0) and math.isfinite(d1)) or d0 < 0 or d1 < 0:
                raise DataError("data costs must be finite and non-negative")
        for u, v in self.social_edges:
            if not (0 <= u < n and 0 <= v < n) or u == v:
                raise DataError(f"bad social edge ({u}, {v})")
            if self.k_out[u] <= 0:
                raise DataError(f"node {self.nodes[u]} has an outgoing social edge but k_out = 0")
        if any(not 0 <= i < n for i in self.fixed):
            raise DataError("fixed labels reference unknown nodes")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "nodes": list(self.nodes),
            "data_cost": [list(c) for c in self.data_cost],
            "social_edges": [list(e) for e in self.social_edges],
            "k_out": list(self.k_out),
            "lambda": self.lam if math.isfinite(self.lam) else "inf",
            "fixed": {str(i): int(lbl) for i, lbl in sorted(self.fixed.items())},
        }

    @classmethod
    def from_document(cls, doc: dict) -> "LabelingProblem":
        lam = doc["lambda"]
        return cls(
            nodes=[int(u) for u in doc["nodes"]],
            data_cost=[(float(a), float(b)) for a, b in doc["data_cost"]],
            social_edges=[(int(u), int(v)) for u, v in doc["social_edges"]],
            k_out=[float(k) for k in doc["k_out"]],
            lam=math.inf if lam == "inf" else float(lam),
            fixed={int(i): SubscriptionLabel(int(v)) for i, v in doc.get("fixed", {}).items()},
        )


@dataclass
class FlowNetwork:
    """s-t network as flat arc arrays; `infinity` is the sentinel capacity when fixed labels are used."""
    n_nodes: int
    source: int
    sink: int
    tails: list[int] = field(default_factory=list)
    heads: list[int] = field(default_factory=list)
    caps: list[float] = field(default_factory=list)
    infinity: Optional[float] = None

    def add_arc(self, u: int, v: int, cap: float) -> None:
        if cap < 0:
            raise DataError(f"negative capacity on arc ({u}, {v})")
        self.tails.append(u)
        self.heads.append(v)
        self.caps.append(float(cap))

    @property
    def n_arcs(self) -> int:
        return len(self.caps)

    def arcs(self):
        return zip(self.tails, self.heads, self.caps)


@dataclass
class LabelingSolution:
    labels: list[SubscriptionLabel]
    energy: float
    flow_value: float
    source_side: list[bool] = field(default_factory=list)


# --- Cross-network -----------------------------------------------------------


@dataclass(frozen=True)
class BipartiteGraph:
    side_a: dict[UserId, SubscriptionLabel]
    side_b: frozenset[UserId]
    edges: tuple[tuple[UserId, UserId], ...]

    def __post_init__(self) -> None:
        overlap = self.side_b.intersection(self.side_a)
        if overlap:
            raise DataError(f"{len(overlap)} users declared on both sides")
        for u, v in self.edges:
            u_in_a, v_in_a = u in self.side_a, v in self.side_a
            u_in_b, v_in_b = u in self.side_b, v in self.side_b
            if not ((u_in_a and v_in_b) or (u_in_b and v_in_a)):
                raise DataError(f"edge ({u}, {v}) does not cross the two sides")

    @property
    def a_to_b(self) -> list[tuple[UserId, UserId]]:
        return [(u, v) for u, v in self.edges if u in self.side_a]

    @property
    def b_to_a(self) -> list[tuple[UserId, UserId]]:
        return [(u, v) for u, v in self.edges if u in self.side_b]


class PropagationResult(BaseConfigModel):
    schema_version: int = SCHEMA_VERSION
    b_labels: dict[UserId, int] = Field(default_factory=dict)
    a_recovered: dict[UserId, int] = Field(default_factory=dict)
    a_accuracy: float = Field(..., ge=0.0, le=1.0)
    accuracy_std: float = Field(..., ge=0.0)
    realizations: int = Field(..., ge=1)
    accuracies: list[float] = Field(default_factory=list)
    confusion_rates: list[list[float]] = Field(default_factory=lambda: [[0.0, 0.0], [0.0, 0.0]])
    scored_users: int = 0
    randomized: bool = False
    diagnostics: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _averaged(self):
        if self.accuracies and len(self.accuracies) != self.realizations:
            raise ValueError("one accuracy per realization expected")
        return self

    def report(self) -> dict:
        """Metrics view without the per-user label maps."""
        return self.model_dump(mode="json", exclude={"b_labels", "a_recovered"})


# --- Synthetic data ----------------------------------------------------------


class BipartiteConfig(BaseConfigModel):
    n_b_users: Optional[int] = Field(default=None, ge=2)
    mean_b_in_degree: float = Field(default=2.593, gt=0)
    bidirectional_fraction: float = Field(default=0.89, ge=0.0, le=1.0)


class SynthConfig(BaseConfigModel):
    n_users: int = Field(default=10_000, ge=4)
    postpaid_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    homophily: list[list[float]] = Field(default_factory=lambda: [[0.791, 0.209], [0.173, 0.827]])
    call_rate_ratio: float = Field(default=2.9, gt=0)
    degree_ratio: float = Field(default=2.5, gt=0)
    prepaid_mean_calls: float = Field(default=12.0, gt=0)
    prepaid_mean_degree: float = Field(default=3.0, gt=0)
    duration_lognormal: list[tuple[float, float]] = Field(default_factory=lambda: [(3.4, 1.0), (3.9, 1.0)])
    degree_shape: Literal["geometric", "poisson"] = "geometric"
    sms_rate: float = Field(default=0.3, ge=0.0)
    window_start: int = Field(default=1_400_000_000, ge=0)
    window_days: int = Field(default=30, ge=1)
    bipartite: Optional[BipartiteConfig] = Field(default_factory=BipartiteConfig)
    seed: int = Field(default=0, ge=0)

    @field_validator("homophily")
    @classmethod
    def _row_stochastic(cls, v: list[list[float]]) -> list[list[float]]:
        if len(v) != 2 or any(len(row) != 2 for row in v):
            raise ValueError("homophily must be a 2x2 matrix")
        for row in v:
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-9:
                raise ValueError("homophily rows must be probability vectors")
        return v

    @field_validator("duration_lognormal")
    @classmethod
    def _two_labels(cls, v):
        if len(v) != 2 or any(sigma <= 0 for _, sigma in v):
            raise ValueError("duration_lognormal needs one (mu, sigma>0) pair per label")
        return v

    def mean_calls(self, label: int) -> float:
        return self.prepaid_mean_calls * (self.call_rate_ratio if label == SubscriptionLabel.POSTPAID else 1.0)

    def mean_degree(self, label: int) -> float:
        return self.prepaid_mean_degree * (self.degree_ratio if label == SubscriptionLabel.POSTPAID else 1.0)

    @property
    def window(self) -> tuple[int, int]:
        return self.window_start, self.window_start + self.window_days * 86_400
