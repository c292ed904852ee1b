"""Step acceptance: funnel and filter globalization.

Both strategies are pure decision functions over a trial point: decide()
never mutates state, commit() applies the updates a verdict carries. All
tests against the funnel width (or filter) use the value held BEFORE the
step; the width shrinks only through the verdict.

A restoration-phase trial whose elastic subproblem came back clean and whose
violation clears the re-entry bound is routed through the regular optimality
assessment; the bound implies both the funnel test and the h-type condition,
so such a trial can only be rejected by a failed objective Armijo test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import FilterParams, FunnelParams
from .subproblems import Phase

LABEL_INITIAL = "initial point"
LABEL_F_TYPE = "f-type step"
LABEL_H_TYPE = "h-type step"
LABEL_RESTORATION = "restoration step"
LABEL_REJ_FUNNEL = "rejected (funnel)"
LABEL_REJ_FILTER = "rejected (filter)"
LABEL_REJ_ARMIJO = "rejected (Armijo)"
LABEL_REJ_EVAL = "rejected (evaluation)"
LABEL_OPTIMAL = "eps-optimal"
LABEL_INFEASIBLE = "infeasible stationary"


@dataclass
class ProgressModels:
    """Linear/quadratic model reductions for the full step d."""
    pred_f: float        # - 1/2 d^T W d - g^T d
    pred_h: float        # h - |c + J^T d|_1
    m_h: float           # |c + J^T d|_1


def progress_models(d, W, grad_f, c, J) -> ProgressModels:
    m_h = float(np.sum(np.abs(c + J.T @ d))) if c.size else 0.0
    h = float(np.sum(np.abs(c)))
    pred_f = float(-0.5 * d @ W @ d - grad_f @ d)
    return ProgressModels(pred_f=pred_f, pred_h=h - m_h, m_h=m_h)


@dataclass
class TrialData:
    """Everything a strategy needs to judge one trial point."""
    phase: Phase
    f_k: float
    h_k: float
    f_t: float
    h_t: float
    models: ProgressModels
    alpha: float = 1.0            # step fraction actually applied (1 for TR)
    full_step_norm: float = 0.0   # |d|_inf of the unscaled direction
    step_norm: float = 0.0        # |alpha d|_inf, what the trace shows
    subproblem_feasible: bool = True
    h_resto: Optional[float] = None


@dataclass
class StepVerdict:
    accepted: bool
    label: str
    step_type: Optional[str] = None      # 'f-type'|'h-type'|'restoration'|'kkt-zero'
    new_phase: Optional[Phase] = None
    new_tau: Optional[float] = None      # funnel only
    filter_add: Optional[tuple] = None   # filter only: entry (h_k, f_k)


# ------------------ funnel ------------------

@dataclass
class FunnelState:
    tau: float


class FunnelStrategy:
    """Admissible infeasibility shrinks along a funnel tau."""

    name = "funnel"

    def __init__(self, params: FunnelParams, zero_step_tol: float = 1e-14):
        self.params = params
        self.zero_step_tol = zero_step_tol

    def init_state(self, h0: float) -> FunnelState:
        p = self.params
        return FunnelState(tau=max(p.tau_bar, p.kappa_bar * h0))

    def trace_value(self, state: FunnelState) -> float:
        return state.tau

    def decide(self, state: FunnelState, trial: TrialData) -> StepVerdict:
        p = self.params
        if trial.full_step_norm <= self.zero_step_tol:
            return StepVerdict(True, LABEL_F_TYPE, step_type="kkt-zero")
        exiting = (trial.phase is Phase.RESTORATION
                   and trial.subproblem_feasible
                   and trial.h_resto is not None
                   and trial.h_t <= p.beta * min(state.tau, trial.h_resto))
        if trial.phase is Phase.RESTORATION and not exiting:
            # pure restoration progress: Armijo on the violation model
            if trial.h_k - trial.h_t >= \
                    p.sigma * trial.alpha * trial.models.pred_h:
                return StepVerdict(True, LABEL_RESTORATION,
                                   step_type="restoration")
            return StepVerdict(False, LABEL_REJ_ARMIJO)
        new_phase = Phase.OPTIMALITY if exiting else None
        if trial.h_t > state.tau:
            return StepVerdict(False, LABEL_REJ_FUNNEL)
        if trial.models.pred_f >= p.delta * trial.h_k ** 2:
            if trial.f_k - trial.f_t >= \
                    p.sigma * trial.alpha * trial.models.pred_f:
                return StepVerdict(True, LABEL_F_TYPE, step_type="f-type",
                                   new_phase=new_phase)
            return StepVerdict(False, LABEL_REJ_ARMIJO)
        if trial.h_t <= p.beta * state.tau:
            if p.gould_update:
                new_tau = max(p.beta * state.tau,
                              (1.0 - p.kappa) * trial.h_t
                              + p.kappa * trial.h_k)
            else:
                new_tau = (1.0 - p.kappa) * trial.h_t + p.kappa * state.tau
            return StepVerdict(True, LABEL_H_TYPE, step_type="h-type",
                               new_phase=new_phase, new_tau=new_tau)
        return StepVerdict(False, LABEL_REJ_FUNNEL)

    def commit(self, state: FunnelState, verdict: StepVerdict) -> FunnelState:
        if verdict.accepted and verdict.new_tau is not None:
            return FunnelState(tau=verdict.new_tau)
        return state


# ------------------ filter ------------------

@dataclass
class FilterState:
    entries: list = field(default_factory=list)   # (h, f) pairs
    h_max: float = np.inf


class FilterStrategy:
    """Classic (h, f) filter with a hard infeasibility cap."""

    name = "filter"

    def __init__(self, params: FilterParams, zero_step_tol: float = 1e-14):
        self.params = params
        self.zero_step_tol = zero_step_tol

    def init_state(self, h0: float) -> FilterState:
        p = self.params
        return FilterState(entries=[], h_max=max(p.tau_bar, p.kappa_bar * h0))

    def trace_value(self, state: FilterState) -> float:
        return float(len(state.entries))

    def acceptable(self, state: FilterState, h_t: float, f_t: float) -> bool:
        p = self.params
        if h_t > p.beta * state.h_max:
            return False
        for hp, fp in state.entries:
            if not (h_t <= p.beta * hp or f_t <= fp - p.gamma * h_t):
                return False
        return True

    def decide(self, state: FilterState, trial: TrialData) -> StepVerdict:
        p = self.params
        if trial.full_step_norm <= self.zero_step_tol:
            return StepVerdict(True, LABEL_F_TYPE, step_type="kkt-zero")
        exiting = (trial.phase is Phase.RESTORATION
                   and trial.subproblem_feasible
                   and self.acceptable(state, trial.h_t, trial.f_t))
        if trial.phase is Phase.RESTORATION and not exiting:
            if trial.h_k - trial.h_t >= \
                    p.sigma * trial.alpha * trial.models.pred_h:
                return StepVerdict(True, LABEL_RESTORATION,
                                   step_type="restoration")
            return StepVerdict(False, LABEL_REJ_ARMIJO)
        new_phase = Phase.OPTIMALITY if exiting else None
        if not self.acceptable(state, trial.h_t, trial.f_t):
            return StepVerdict(False, LABEL_REJ_FILTER)
        if trial.models.pred_f >= p.delta * trial.h_k ** 2:
            if trial.f_k - trial.f_t >= \
                    p.sigma * trial.alpha * trial.models.pred_f:
                return StepVerdict(True, LABEL_F_TYPE, step_type="f-type",
                                   new_phase=new_phase)
            return StepVerdict(False, LABEL_REJ_ARMIJO)
        # h-type: must also be acceptable to the current pair (h_k, f_k)
        if trial.h_t <= p.beta * trial.h_k or \
                trial.f_t <= trial.f_k - p.gamma * trial.h_t:
            return StepVerdict(True, LABEL_H_TYPE, step_type="h-type",
                               new_phase=new_phase,
                               filter_add=(trial.h_k, trial.f_k))
        return StepVerdict(False, LABEL_REJ_FILTER)

    def commit(self, state: FilterState, verdict: StepVerdict) -> FilterState:
        if not (verdict.accepted and verdict.filter_add is not None):
            return state
        hk, fk = verdict.filter_add
        entries = [(hp, fp) for hp, fp in state.entries
                   if not (hk <= hp and fk <= fp)]
        entries.append((hk, fk))
        h_max = state.h_max
        if len(entries) > self.params.capacity:
            worst = max(range(len(entries)), key=lambda i: entries[i][0])
            h_max = entries[worst][0]
            entries.pop(worst)
        return FilterState(entries=entries, h_max=h_max)
