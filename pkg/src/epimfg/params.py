"""Disease states, transition rates, running costs, and closed-form state values.

Everything downstream (single-agent solvers, population transport, Monte
Carlo) reads its constants from :class:`ModelParams`.  The closed forms
``phi_bar_i`` / ``phi_bar_a`` are the stationary values of the two states an
agent can identify with certainty; they act as boundary data for every other
solver in the package.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path


class EpiState(Enum):
    """Five-state disease course. R and D are absorbing for cost purposes."""

    S = "s"  # susceptible
    A = "a"  # infected, asymptomatic (agent may not know)
    I = "i"  # infected, symptomatic
    R = "r"  # recovered
    D = "d"  # dead


RATE_FIELDS = ("lambda_sa", "lambda_ai", "lambda_ar", "lambda_ir", "lambda_id")

# Exact JSON schema for scenario files; anything else is rejected.
PARAM_JSON_FIELDS = RATE_FIELDS + ("eta", "gamma", "alpha", "phi_r", "phi_d", "attributes")

_ATTR_JSON_FIELDS = ("id", "prob", "overrides")


@dataclass(frozen=True)
class Attribute:
    """One agent type: identifier, population weight, per-type rate overrides."""

    id: str
    prob: float
    overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for key in self.overrides:
            if key not in RATE_FIELDS:
                raise ValueError(f"attribute {self.id!r}: cannot override {key!r}; "
                                 f"only {RATE_FIELDS} vary by attribute")


@dataclass(frozen=True)
class ModelParams:
    """All rates, cost constants, and terminal values of the model.

    Defaults are the package-wide reference parameter set: discount small
    relative to the transition rates, activity reward alpha < 1, and a basic
    reproduction number of 2.
    """

    lambda_sa: float = 0.6   # transmissibility multiplier on S -> A
    lambda_ai: float = 0.2   # asymptomatic -> symptomatic
    lambda_ar: float = 0.1   # asymptomatic -> recovered
    lambda_ir: float = 0.1   # symptomatic -> recovered
    lambda_id: float = 0.02  # symptomatic -> dead
    eta: float = 0.01        # baseline S -> A rate
    gamma: float = 0.01      # discount rate
    alpha: float = 0.9       # economic reward per unit time of activity
    c_h_i: float = 1.0       # health cost while symptomatic
    c_h_a: float = 0.0       # health cost while asymptomatic
    c_a: float = 1.0         # altruistic cost of activity while infected
    phi_r: float = 0.0       # terminal value on recovery
    phi_d: float = 50.0      # terminal value on death
    attributes: tuple[Attribute, ...] = (Attribute("base", 1.0),)

    def __post_init__(self):
        for name in RATE_FIELDS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        # eta > 0 in the model statement; 0 is accepted for limit checks.
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must satisfy 0 <= alpha < 1")
        total = sum(a.prob for a in self.attributes)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"attribute probabilities sum to {total!r}, not 1")
        if any(a.prob < 0 for a in self.attributes):
            raise ValueError("attribute probabilities must be >= 0")

    def for_attribute(self, theta: str | Attribute) -> "ModelParams":
        """Parameters seen by one agent type, with its rate overrides applied."""
        attr = theta if isinstance(theta, Attribute) else self.attribute(theta)
        return replace(self, attributes=(Attribute(attr.id, 1.0),), **attr.overrides)

    def attribute(self, theta_id: str) -> Attribute:
        for a in self.attributes:
            if a.id == theta_id:
                return a
        raise KeyError(f"unknown attribute {theta_id!r}")

    # -- JSON scenario interface ------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        unknown = set(data) - set(PARAM_JSON_FIELDS)
        if unknown:
            raise ValueError(f"unknown parameter fields: {sorted(unknown)}")
        kwargs = {k: float(v) for k, v in data.items() if k != "attributes"}
        if "attributes" in data:
            attrs = []
            for entry in data["attributes"]:
                bad = set(entry) - set(_ATTR_JSON_FIELDS)
                if bad:
                    raise ValueError(f"unknown attribute fields: {sorted(bad)}")
                attrs.append(Attribute(str(entry["id"]), float(entry["prob"]),
                                       {k: float(v) for k, v in entry.get("overrides", {}).items()}))
            kwargs["attributes"] = tuple(attrs)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        out = {name: getattr(self, name) for name in PARAM_JSON_FIELDS if name != "attributes"}
        out["attributes"] = [{"id": a.id, "prob": a.prob, "overrides": dict(a.overrides)}
                             for a in self.attributes]
        return out


@dataclass(frozen=True)
class CostTable:
    """Per-state health cost, altruistic cost, and activity reward.

    The running cost is ``c(x, u) = health(x) + (altruism(x) - reward(x)) * u``
    for activity u in [0, 1]; it is only defined before the stopping time,
    i.e. for x in {S, A, I}.
    """

    health: dict[EpiState, float]
    altruism: dict[EpiState, float]
    reward: dict[EpiState, float]

    @classmethod
    def from_params(cls, params: ModelParams) -> "CostTable":
        return cls(
            health={EpiState.S: 0.0, EpiState.A: params.c_h_a, EpiState.I: params.c_h_i},
            altruism={EpiState.S: 0.0, EpiState.A: params.c_a, EpiState.I: params.c_a},
            reward={EpiState.S: params.alpha, EpiState.A: params.alpha, EpiState.I: params.alpha},
        )

    def running_cost(self, x: EpiState, u: float) -> float:
        if x not in self.health:
            raise ValueError(f"running cost undefined in absorbing state {x}")
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"activity u={u!r} outside [0, 1]")
        return self.health[x] + (self.altruism[x] - self.reward[x]) * u


def running_cost(x: EpiState, u: float, params: ModelParams) -> float:
    """Running cost c(x, u) for x in {S, A, I}; raises for absorbing states."""
    return CostTable.from_params(params).running_cost(x, u)


def phi_bar_i(params: ModelParams) -> float:
    """Stationary value of the symptomatic state (the agent isolates)."""
    denom = params.gamma + params.lambda_ir + params.lambda_id
    if denom <= 0:
        raise ValueError("gamma + lambda_ir + lambda_id must be > 0")
    return (params.c_h_i + params.lambda_ir * params.phi_r
            + params.lambda_id * params.phi_d) / denom


def phi_bar_a(params: ModelParams) -> float:
    """Stationary value of a *known* asymptomatic state (the agent isolates)."""
    denom = params.gamma + params.lambda_ai + params.lambda_ar
    if denom <= 0:
        raise ValueError("gamma + lambda_ai + lambda_ar must be > 0")
    return (params.c_h_a + params.lambda_ai * phi_bar_i(params)
            + params.lambda_ar * params.phi_r) / denom


def r_nought(params: ModelParams) -> float:
    """Basic reproduction number: transmissibility over mean removal rate."""
    denom = params.lambda_ai + params.lambda_ar
    if denom <= 0:
        raise ValueError("lambda_ai + lambda_ar must be > 0")
    return params.lambda_sa / denom


DEFAULT_PARAMS = ModelParams()
