"""Dyadic Chernoff iteration engine.

Given a one-step operator family I(t) with declared boundedness and Lipschitz
envelopes alpha(R, t) and beta(R, t), the engine iterates I(2^-n) along the
dyadic partition of [0, t] and detects convergence of the iterates

    u_n = I(2^-n)^(t 2^n) x

by a successive-distance Cauchy test.  A full-sequence test is used: if the
distances d(u_n, u_{n-1}) do not fall below tolerance by n_max the engine
reports non-convergence instead of hunting for convergent subsequences.

Only dyadic times t = k 2^-n are accepted; these are exactly representable
in binary floating point, so the partition arithmetic is exact.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .state_space import GridFunction, NormSpec, VectorState, distance as grid_distance

__all__ = [
    "DyadicPartition",
    "GeneratingFamilyDescriptor",
    "ConvergenceReport",
    "NonFiniteStateError",
    "NonDyadicTimeError",
    "dyadic_partition",
    "smallest_dyadic_level",
    "apply_partition",
    "chernoff_limit",
    "semigroup_defect",
    "discrete_semigroup_identity_residual",
    "evolve_path",
]

DEFAULT_TOL = 1e-4
DEFAULT_N_MIN = 4
DEFAULT_N_MAX = 14
_MAX_LEVEL_SEARCH = 60


class NonDyadicTimeError(ValueError):
    """Raised when a time is not representable as k * 2^-n at the given level."""


class NonFiniteStateError(RuntimeError):
    """Raised when a step produces non-finite values; carries the step index."""

    def __init__(self, step_index: int, message: str = ""):
        self.step_index = step_index
        super().__init__(message or f"non-finite state after step {step_index}")


def smallest_dyadic_level(t: float, max_level: int = _MAX_LEVEL_SEARCH) -> int | None:
    """Smallest n with t == k * 2^-n exactly, or None if there is none."""
    for n in range(max_level + 1):
        k = t * 2.0**n
        if k == math.floor(k) and math.floor(k) * 2.0**-n == t:
            return n
    return None


@dataclass(frozen=True)
class DyadicPartition:
    """The level-n dyadic partition of [0, t]: step size exactly 2^-n."""

    t: float
    level: int
    step_count: int

    @property
    def step(self) -> float:
        return 2.0 ** -self.level


def dyadic_partition(t: float, n: int) -> DyadicPartition:
    if t < 0:
        raise ValueError("t must be nonnegative")
    if n < 0:
        raise ValueError("level must be nonnegative")
    k = t * 2.0**n
    if k != math.floor(k) or math.floor(k) * 2.0**-n != t:
        smallest = smallest_dyadic_level(t)
        hint = (
            f"; smallest admissible level is {smallest}"
            if smallest is not None
            else "; t is not dyadic at any level <= 60"
        )
        raise NonDyadicTimeError(
            f"t={t!r} is not representable as k*2^-{n} (t*2^n={k!r}){hint}"
        )
    return DyadicPartition(t=float(t), level=int(n), step_count=int(k))


@dataclass
class GeneratingFamilyDescriptor:
    """A one-step operator I(t) with its declared envelopes.

    step(t, x) realizes I(t); alpha and beta are the declared bound and
    Lipschitz envelopes of the family (alpha(R, t) maps the ball radius, beta
    the Lipschitz constant on B(x0, R)).  lip_growth is the optional
    Lipschitz-seminorm growth rho(c, t), analytic_generator the optional
    closed-form generator.  minus_conjugate marks families for which the
    order-conjugate family f -> -I(t)(-f) is meaningful.
    """

    name: str
    state_kind: str  # "grid" or "vector"
    step: Callable
    alpha: Callable[[float, float], float]
    beta: Callable[[float, float], float]
    zero_state: object
    norm: NormSpec | None = None
    lip_growth: Callable[[float, float], float] | None = None
    analytic_generator: Callable | None = None
    minus_conjugate: bool = False
    comparison_mask: np.ndarray | None = None
    kernel_sigma_max: float = 0.0
    params: dict = field(default_factory=dict)

    def distance(self, x, y) -> float:
        if self.state_kind == "vector":
            return float(np.linalg.norm(x.coordinates - y.coordinates))
        return grid_distance(x, y, self.norm, mask=self.comparison_mask)

    def norm_of(self, x) -> float:
        return self.distance(x, self.zero_state)


def _state_finite(state) -> bool:
    arr = state.coordinates if isinstance(state, VectorState) else state.values
    return bool(np.all(np.isfinite(arr)))


_ENVELOPE_TRIPLES = (
    (0.0, 0.25, 0.5),
    (0.5, 0.25, 0.25),
    (1.0, 0.5, 1.0),
    (2.0, 1.0, 2.0),
    (4.0, 0.125, 0.875),
)


def check_family_contract(family: GeneratingFamilyDescriptor, probe_states=()):
    """Validate I(0) = id on probes and the composition laws of alpha, beta.

    alpha must satisfy alpha(alpha(R,s),t) <= alpha(R,s+t) and beta must
    satisfy beta(R,s)beta(R,t) <= beta(R,s+t) on sampled triples.
    """
    for x in probe_states:
        y = family.step(0.0, x)
        if family.distance(x, y) != 0.0:
            raise ValueError(f"{family.name}: step(0, x) != x")
    tol = 1e-9
    for R, s, t in _ENVELOPE_TRIPLES:
        a_comp = family.alpha(family.alpha(R, s), t)
        a_direct = family.alpha(R, s + t)
        if a_comp > a_direct * (1 + tol) + tol:
            raise ValueError(
                f"{family.name}: alpha composition law fails at (R,s,t)=({R},{s},{t})"
            )
        b_comp = family.beta(R, s) * family.beta(R, t)
        b_direct = family.beta(R, s + t)
        if b_comp > b_direct * (1 + tol) + tol:
            raise ValueError(
                f"{family.name}: beta composition law fails at (R,s,t)=({R},{s},{t})"
            )


@dataclass(frozen=True)
class ConvergenceReport:
    """Successive-distance record for the dyadic Chernoff iteration."""

    t: float
    n_min: int
    n_last: int
    tol: float
    deltas: tuple[float, ...]
    converged: bool
    steps_total: int

    def to_json_dict(self) -> dict:
        return {
            "t": self.t,
            "n_min": self.n_min,
            "n_last": self.n_last,
            "tol": self.tol,
            "deltas": list(self.deltas),
            "converged": self.converged,
            "steps_total": self.steps_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def apply_partition(family: GeneratingFamilyDescriptor,
                    partition: DyadicPartition, state):
    """k-fold composition of I(2^-n); k = 0 returns the input unchanged."""
    dt = partition.step
    x = state
    for i in range(partition.step_count):
        try:
            x = family.step(dt, x)
        except ValueError as e:
            # state constructors reject non-finite values at construction
            if "finite" in str(e):
                raise NonFiniteStateError(i) from e
            raise
        if not _state_finite(x):
            raise NonFiniteStateError(i)
    return x


def chernoff_limit(family: GeneratingFamilyDescriptor, t: float, state,
                   tol: float = DEFAULT_TOL, n_min: int = DEFAULT_N_MIN,
                   n_max: int = DEFAULT_N_MAX):
    """Iterate levels n_min, n_min+1, ... until d(u_n, u_{n-1}) <= tol.

    Returns (state, ConvergenceReport).  Reaching n_max without meeting the
    criterion returns u_{n_max} flagged as non-converged.  The per-step cost
    doubles with each level (2^n steps at level n for t = 1).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n_min > n_max:
        raise ValueError("n_min must be <= n_max")
    if t == 0.0:
        report = ConvergenceReport(t=0.0, n_min=n_min, n_last=n_min, tol=tol,
                                   deltas=(), converged=True, steps_total=0)
        return state, report
    dyadic_partition(t, n_min)  # validates representability at the base level

    steps_total = 0
    deltas: list[float] = []
    u_prev = apply_partition(family, dyadic_partition(t, n_min), state)
    steps_total += dyadic_partition(t, n_min).step_count
    for n in range(n_min + 1, n_max + 1):
        part = dyadic_partition(t, n)
        u = apply_partition(family, part, state)
        steps_total += part.step_count
        delta = family.distance(u, u_prev)
        deltas.append(delta)
        if delta <= tol:
            report = ConvergenceReport(t=t, n_min=n_min, n_last=n, tol=tol,
                                       deltas=tuple(deltas), converged=True,
                                       steps_total=steps_total)
            return u, report
        u_prev = u
    report = ConvergenceReport(t=t, n_min=n_min, n_last=n_max, tol=tol,
                               deltas=tuple(deltas), converged=False,
                               steps_total=steps_total)
    return u_prev, report


def semigroup_defect(family: GeneratingFamilyDescriptor, s: float, t: float,
                     state, tol: float = DEFAULT_TOL,
                     n_min: int = DEFAULT_N_MIN, n_max: int = DEFAULT_N_MAX) -> float:
    """d( S(s+t)x, S(s)S(t)x ) with every S evaluated by chernoff_limit.

    Non-convergence of any of the three runs is reported as a warning; the
    defect value is still returned.
    """
    u_joint, rep_joint = chernoff_limit(family, s + t, state, tol, n_min, n_max)
    u_t, rep_t = chernoff_limit(family, t, state, tol, n_min, n_max)
    u_st, rep_s = chernoff_limit(family, s, u_t, tol, n_min, n_max)
    if not (rep_joint.converged and rep_t.converged and rep_s.converged):
        warnings.warn(
            f"{family.name}: semigroup_defect computed from non-converged limits",
            stacklevel=2,
        )
    return family.distance(u_joint, u_st)


def discrete_semigroup_identity_residual(family: GeneratingFamilyDescriptor,
                                         s: float, t: float, n: int, state) -> float:
    """d( I(pi_n^{s+t})x, I(pi_n^s) I(pi_n^t) x ).

    Mathematically zero (both sides compose the same one-step operator the
    same number of times); measures only floating-point non-associativity.
    """
    lhs = apply_partition(family, dyadic_partition(s + t, n), state)
    rhs = apply_partition(family, dyadic_partition(s, n),
                          apply_partition(family, dyadic_partition(t, n), state))
    return family.distance(lhs, rhs)


def evolve_path(family: GeneratingFamilyDescriptor, t_list, state,
                tol: float = DEFAULT_TOL, n_min: int = DEFAULT_N_MIN,
                n_max: int = DEFAULT_N_MAX, collect_reports: bool = False):
    """States at the strictly increasing dyadic times t_list.

    Computed incrementally through the semigroup property: each increment is
    one chernoff_limit from the previous state.
    """
    ts = [float(t) for t in t_list]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_list must be strictly increasing")
    states = []
    reports = []
    current = state
    prev_t = 0.0
    for t in ts:
        inc = t - prev_t
        if inc > 0:
            dyadic_partition(inc, n_min)
            current, rep = chernoff_limit(family, inc, current, tol, n_min, n_max)
            reports.append(rep)
        else:
            reports.append(ConvergenceReport(t=0.0, n_min=n_min, n_last=n_min,
                                             tol=tol, deltas=(), converged=True,
                                             steps_total=0))
        states.append(current)
        prev_t = t
    if collect_reports:
        return states, reports
    return states
