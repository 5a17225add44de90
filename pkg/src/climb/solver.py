"""
CLIMB / BCLIMB: alternating accelerated block gradient for coupled LMN fusion.

    min  1/2 w_H ||Y_H - sum_r D_r x1 P1 A_r x2 P2 B_r x3 C_r||^2
       + 1/2 w_M ||Y_M - sum_r D_r x1 A_r x2 B_r x3 PM C_r||^2
       + lam sum_r (phi(H1 A_r) + phi(H2 B_r) + ||H3 C_r||^2) + eta sum_r 1/2 ||D_r||^2

In the semi-blind problem (BCLIMB) the products P1 A_r, P2 B_r are replaced by free
factors A~_r, B~_r, so only PM has to be known.

Each block takes one gradient step of length 1/L from its extrapolated point. The
nonconvex phi is handled through its quadratic majorizer anchored at the current iterate.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from time import monotonic
from typing import NamedTuple

import numpy as np
import pandas as pd
import scipy.linalg
from joblib import Parallel, delayed

from tensorkit.core import (
    MODES,
    frobenius_norm,
    gram_sigma_max,
    kron,
    mode_product,
    multi_mode_product,
    sigma_max,
    top_singular_triplets,
    unfold,
)
from tensorkit.errors import DIM_MISMATCH, INVALID_ARGUMENT, INVALID_CONFIG, INVALID_RANK, SOLVER_DIVERGED
from tensorkit.utils import ConfigError, SolverError, TensorError, as_matrix, as_tensor3

from .degradation import DegradationSet
from .metrics import hsi_sam_proxy
from .model import LmnModel, LmnTerm, SemiBlindModel, reconstruct
from .regularization import (
    RegConfig,
    build_H3,
    core_penalty,
    diff_rows,
    difference_norm_sq,
    majorizer,
    majorizer_weights,
    smoothness_penalty,
    tikhonov,
    tv_curvature,
    tv_majorizer_grad,
)

log = logging.getLogger("climb.solver")
log.setLevel(logging.INFO)

BLOCKS = ("A", "B", "C", "D")
BLIND_BLOCKS = ("A_tilde", "A", "B_tilde", "B", "C", "D")

TINY = np.finfo(np.float64).tiny
EPS = np.finfo(np.float64).eps
LSTSQ_COND = 1e-10
PERTURBATION = 1e-2


class UpdateOrder(str, Enum):
    PER_TERM = "per_term"
    PER_BLOCK = "per_block"


class StepMode(str, Enum):
    EXACT_SIGMA = "exact_sigma"
    UPPER_BOUND = "upper_bound"


@dataclass
class SolverConfig:
    max_iter: int = 1000
    rel_tol: float = 1e-8
    extrapolation: bool = True
    update_order: UpdateOrder = UpdateOrder.PER_TERM
    step_mode: StepMode = StepMode.EXACT_SIGMA
    reg: RegConfig = field(default_factory=RegConfig)
    seed: int | None = None
    # reset gamma to 1 when the extrapolated step points against progress
    restart: bool = True
    time_limit: float | None = None
    n_jobs: int = 1

    def __post_init__(self):
        if isinstance(self.reg, dict):
            self.reg = RegConfig(**self.reg)
        try:
            self.update_order = UpdateOrder(self.update_order)
            self.step_mode = StepMode(self.step_mode)
        except ValueError as e:
            raise ConfigError(INVALID_CONFIG, str(e)) from e
        if self.max_iter < 0:
            raise ConfigError(INVALID_CONFIG, f"max_iter={self.max_iter} must be >= 0")
        if not self.rel_tol > 0:
            raise ConfigError(INVALID_CONFIG, f"rel_tol={self.rel_tol} must be > 0")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ConfigError(INVALID_CONFIG, f"time_limit={self.time_limit} must be > 0")
        if self.n_jobs == 0:
            raise ConfigError(INVALID_CONFIG, "n_jobs must be nonzero")


class Timer:
    """Wall clock of one run; `expired` turns True after time_limit seconds."""

    def __init__(self, time_limit: float | None = None):
        self.time_limit = time_limit
        self.start_time = monotonic()
        self.stop_time = None

    def __enter__(self):
        self.start_time = monotonic()
        self.stop_time = None
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        self.stop_time = monotonic()

    def elapsed(self) -> float:
        end = self.stop_time if self.stop_time is not None else monotonic()
        return end - self.start_time

    @property
    def expired(self) -> bool:
        return self.time_limit is not None and self.elapsed() > self.time_limit


########################################
### Problem data


@dataclass
class CoupledProblem:
    """Observations, operators and regularization of one fusion problem."""

    Y_H: np.ndarray
    Y_M: np.ndarray
    P1: np.ndarray | None
    P2: np.ndarray | None
    PM: np.ndarray
    reg: RegConfig = field(default_factory=RegConfig)
    weight_H: float = 1.0
    weight_M: float = 1.0
    blind: bool = False

    def __post_init__(self):
        self.Y_H = as_tensor3(self.Y_H, "Y_H")
        self.Y_M = as_tensor3(self.Y_M, "Y_M")
        self.PM = as_matrix(self.PM, "PM")
        if self.PM.shape != (self.Y_M.shape[2], self.Y_H.shape[2]):
            raise TensorError(
                DIM_MISMATCH, f"PM {self.PM.shape} does not map HSI bands {self.Y_H.shape[2]} to MSI bands {self.Y_M.shape[2]}"
            )
        if not self.blind:
            self.P1 = as_matrix(self.P1, "P1")
            self.P2 = as_matrix(self.P2, "P2")
            if self.P1.shape != (self.Y_H.shape[0], self.Y_M.shape[0]) or self.P2.shape != (
                self.Y_H.shape[1],
                self.Y_M.shape[1],
            ):
                raise TensorError(
                    DIM_MISMATCH,
                    f"P1 {self.P1.shape}, P2 {self.P2.shape} vs HSI {self.Y_H.shape} and MSI {self.Y_M.shape}",
                )
        I, J, K = self.dims_sri
        self.H3 = build_H3(K) if K >= 3 else None
        self.h1_sq = difference_norm_sq(I) if I >= 2 else 0.0
        self.h2_sq = difference_norm_sq(J) if J >= 2 else 0.0
        self.h3_sq = sigma_max(self.H3) ** 2 if self.H3 is not None else 0.0
        self.pm_sq = sigma_max(self.PM) ** 2
        self.p1_sq = sigma_max(self.P1) ** 2 if not self.blind else 0.0
        self.p2_sq = sigma_max(self.P2) ** 2 if not self.blind else 0.0

    @property
    def dims_sri(self) -> tuple[int, int, int]:
        return (self.Y_M.shape[0], self.Y_M.shape[1], self.PM.shape[1])

    def check_model(self, model) -> None:
        base = _base(model)
        if base.dims != self.dims_sri:
            raise TensorError(DIM_MISMATCH, f"model dims {base.dims}, data implies {self.dims_sri}")
        if self.blind:
            if not isinstance(model, SemiBlindModel):
                raise TensorError(INVALID_ARGUMENT, "the semi-blind problem needs a SemiBlindModel")
            if model.hsi_dims != self.Y_H.shape[:2]:
                raise TensorError(DIM_MISMATCH, f"HSI factors {model.hsi_dims} vs Y_H {self.Y_H.shape}")


def make_problem(data_H, data_M, degradation, reg: RegConfig | None = None, blind: bool = False) -> CoupledProblem:
    """`degradation` is a DegradationSet, or for the semi-blind problem a bare PM matrix."""
    reg = reg or RegConfig()
    if isinstance(degradation, DegradationSet):
        P1, P2, PM = degradation.P1, degradation.P2, degradation.PM
    elif blind:
        P1, P2, PM = None, None, degradation
    else:
        raise TensorError(INVALID_ARGUMENT, "known-operator fusion needs a DegradationSet")
    if blind:
        P1 = P2 = None
    return CoupledProblem(data_H, data_M, P1, P2, PM, reg=reg, blind=blind)


########################################
### Block access


def _base(model) -> LmnModel:
    return model.base if isinstance(model, SemiBlindModel) else model


def get_block(model, block: str, r: int) -> np.ndarray:
    if block == "A_tilde":
        return model.A_tilde[r]
    if block == "B_tilde":
        return model.B_tilde[r]
    return getattr(_base(model).terms[r], block)


def set_block(model, block: str, r: int, value: np.ndarray) -> None:
    if block == "A_tilde":
        model.A_tilde[r] = value
    elif block == "B_tilde":
        model.B_tilde[r] = value
    else:
        setattr(_base(model).terms[r], block, value)


def _factors(model, r: int, block: str | None = None, point=None) -> dict:
    term = _base(model).terms[r]
    f = {"D": term.D, "A": term.A, "B": term.B, "C": term.C}
    if isinstance(model, SemiBlindModel):
        f["A_tilde"] = model.A_tilde[r]
        f["B_tilde"] = model.B_tilde[r]
    if block is not None and point is not None:
        f[block] = np.asarray(point, dtype=np.float64)
    return f


class DataTerm(NamedTuple):
    name: str
    weight: float
    target: np.ndarray
    factors: tuple
    # block -> (mode, left operator or None, sigma_max(operator)^2)
    lifts: dict


def _data_terms(prob: CoupledProblem, f: dict) -> list[DataTerm]:
    terms = []
    if prob.weight_H:
        if prob.blind:
            factors = (f["A_tilde"], f["B_tilde"], f["C"])
            lifts = {"A_tilde": (1, None, 1.0), "B_tilde": (2, None, 1.0), "C": (3, None, 1.0)}
        else:
            factors = (prob.P1 @ f["A"], prob.P2 @ f["B"], f["C"])
            lifts = {"A": (1, prob.P1, prob.p1_sq), "B": (2, prob.P2, prob.p2_sq), "C": (3, None, 1.0)}
        terms.append(DataTerm("H", prob.weight_H, prob.Y_H, factors, lifts))
    if prob.weight_M:
        factors = (f["A"], f["B"], prob.PM @ f["C"])
        lifts = {"A": (1, None, 1.0), "B": (2, None, 1.0), "C": (3, prob.PM, prob.pm_sq)}
        terms.append(DataTerm("M", prob.weight_M, prob.Y_M, factors, lifts))
    return terms


def _partial(D, factors, mode: int) -> np.ndarray:
    """Mode-n unfolding of D multiplied by every factor except the n-th."""
    others = [None if n == mode else u for n, u in zip(MODES, factors)]
    return unfold(multi_mode_product(D, others), mode)


def reconstruct_hsi(prob: CoupledProblem, model) -> np.ndarray:
    if prob.blind:
        return model.reconstruct_hsi()
    return sum(multi_mode_product(t.D, (prob.P1 @ t.A, prob.P2 @ t.B, t.C)) for t in _base(model).terms)


def reconstruct_msi(prob: CoupledProblem, model) -> np.ndarray:
    return sum(multi_mode_product(t.D, (t.A, t.B, prob.PM @ t.C)) for t in _base(model).terms)


def residuals(prob: CoupledProblem, model, r: int) -> dict:
    """Y~ per data term: the observation minus every term except r."""
    out = {dt.name: dt.target for dt in _data_terms(prob, _factors(model, r))}
    for s in range(_base(model).R):
        if s == r:
            continue
        f = _factors(model, s)
        for dt in _data_terms(prob, f):
            out[dt.name] = out[dt.name] - multi_mode_product(f["D"], dt.factors)
    return out


########################################
### Objective, gradients, step sizes


def objective(prob: CoupledProblem, model) -> float:
    """Full objective with the true phi_{p,eps}, not the majorizer."""
    val = 0.0
    if prob.weight_H:
        val += 0.5 * prob.weight_H * float(np.sum((prob.Y_H - reconstruct_hsi(prob, model)) ** 2))
    if prob.weight_M:
        val += 0.5 * prob.weight_M * float(np.sum((prob.Y_M - reconstruct_msi(prob, model)) ** 2))
    base = _base(model)
    if prob.reg.lam:
        val += prob.reg.lam * smoothness_penalty(base, prob.reg, prob.H3)
    if prob.reg.eta:
        val += prob.reg.eta * core_penalty(base)
    return val


def _tv_rows(prob: CoupledProblem, block: str, x: np.ndarray) -> bool:
    return block in ("A", "B") and bool(prob.reg.lam) and x.shape[0] >= 2


def tv_weights(prob: CoupledProblem, model, block: str, r: int) -> np.ndarray:
    """Majorizer diagonal W anchored at the current iterate of A_r or B_r."""
    return majorizer_weights(diff_rows(get_block(model, block, r)), prob.reg.p, prob.reg.epsilon)


def block_objective(prob: CoupledProblem, model, block: str, r: int, point=None, resid=None) -> float:
    """Majorized objective of one block as a function of its value `point`, others held fixed."""
    f = _factors(model, r, block, point)
    resid = resid if resid is not None else residuals(prob, model, r)
    x = f[block]
    val = 0.0
    for dt in _data_terms(prob, f):
        E = multi_mode_product(f["D"], dt.factors) - resid[dt.name]
        val += 0.5 * dt.weight * float(np.sum(E**2))
    reg = prob.reg
    if _tv_rows(prob, block, x):
        anchor = diff_rows(get_block(model, block, r))
        val += reg.lam * majorizer(diff_rows(x), anchor, reg.p, reg.epsilon)
    elif block == "C" and reg.lam and prob.H3 is not None:
        val += reg.lam * tikhonov(x, prob.H3)
    elif block == "D" and reg.eta:
        val += reg.eta * 0.5 * float(np.sum(x**2))
    return val


def block_gradient(prob: CoupledProblem, model, block: str, r: int, point=None, weights=None, resid=None) -> np.ndarray:
    """Gradient of the majorized block objective at `point` (default: the current value)."""
    f = _factors(model, r, block, point)
    resid = resid if resid is not None else residuals(prob, model, r)
    x = f[block]
    D = f["D"]
    g = np.zeros_like(x)
    for dt in _data_terms(prob, f):
        E = multi_mode_product(D, dt.factors) - resid[dt.name]
        if block == "D":
            g += dt.weight * multi_mode_product(E, [u.T for u in dt.factors])
        elif block in dt.lifts:
            mode, lift, _ = dt.lifts[block]
            part = dt.weight * (unfold(E, mode) @ _partial(D, dt.factors, mode).T)
            g += part if lift is None else lift.T @ part
    reg = prob.reg
    if _tv_rows(prob, block, x):
        if weights is None:
            weights = tv_weights(prob, model, block, r)
        g += reg.lam * tv_majorizer_grad(x, weights)
    elif block == "C" and reg.lam and prob.H3 is not None:
        g += 2.0 * reg.lam * (prob.H3.T @ (prob.H3 @ x))
    elif block == "D" and reg.eta:
        g += reg.eta * x
    return g


def grad_A(prob, model, r, point=None, resid=None):
    return block_gradient(prob, model, "A", r, point, resid=resid)


def grad_B(prob, model, r, point=None, resid=None):
    return block_gradient(prob, model, "B", r, point, resid=resid)


def grad_C(prob, model, r, point=None, resid=None):
    return block_gradient(prob, model, "C", r, point, resid=resid)


def grad_D(prob, model, r, point=None, resid=None):
    return block_gradient(prob, model, "D", r, point, resid=resid)


def grad_Atilde(prob, model, r, point=None, resid=None):
    return block_gradient(prob, model, "A_tilde", r, point, resid=resid)


def grad_Btilde(prob, model, r, point=None, resid=None):
    return block_gradient(prob, model, "B_tilde", r, point, resid=resid)


def lipschitz_bound(prob: CoupledProblem, model, block: str, r: int, mode=StepMode.EXACT_SIGMA, weights=None) -> float:
    """
    Bound on the Lipschitz constant of block_gradient in `block`. Data terms contribute
    sigma_max(lift)^2 sigma_max(V V^T); the TV term contributes 2 lam sigma_max(H~^T W H~)
    (exact_sigma) or 2 lam sigma_max(H)^2 max(W) (upper_bound).
    """
    mode = StepMode(mode)
    f = _factors(model, r)
    x = f[block]
    D = f["D"]
    total = 0.0
    for dt in _data_terms(prob, f):
        if block == "D":
            total += dt.weight * math.prod(sigma_max(u) ** 2 for u in dt.factors)
        elif block in dt.lifts:
            n, _, lift_sq = dt.lifts[block]
            total += dt.weight * lift_sq * gram_sigma_max(_partial(D, dt.factors, n))
    reg = prob.reg
    if _tv_rows(prob, block, x):
        if weights is None:
            weights = tv_weights(prob, model, block, r)
        if mode == StepMode.EXACT_SIGMA:
            total += 2.0 * reg.lam * tv_curvature(weights)
        else:
            h_sq = prob.h1_sq if block == "A" else prob.h2_sq
            total += 2.0 * reg.lam * h_sq * float(np.max(weights))
    elif block == "C" and reg.lam:
        total += 2.0 * reg.lam * prob.h3_sq
    elif block == "D":
        total += reg.eta
    return total


def extrapolation_next(gamma: float) -> tuple[float, float]:
    """Nesterov recursion: gamma' = (1 + sqrt(1 + 4 gamma^2)) / 2, mu = (gamma - 1) / gamma'."""
    if gamma < 1:
        raise TensorError(INVALID_ARGUMENT, f"gamma={gamma} must be >= 1")
    nxt = (1.0 + math.sqrt(1.0 + 4.0 * gamma * gamma)) / 2.0
    return nxt, (gamma - 1.0) / nxt


########################################
### Solver state and driver


@dataclass
class SolverState:
    model: LmnModel | SemiBlindModel
    # (block, r) -> extrapolated iterate, gamma, last step bound
    extrapolated: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)
    lipschitz: dict = field(default_factory=dict)
    # data term -> per-term contributions and their running sum
    parts: dict = field(default_factory=dict)
    totals: dict = field(default_factory=dict)
    trace: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    iteration: int = 0


@dataclass
class FitReport:
    iterations: int
    final_objective: float
    trace: list[float]
    wall_ms: list[float]
    wall_time: float
    stop_reason: str
    nre: float | None = None
    sam_proxy: float | None = None
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"iteration": np.arange(len(self.trace)), "objective": self.trace, "wall_ms": self.wall_ms}
        )


class Update(NamedTuple):
    block: str
    r: int
    value: np.ndarray
    extrapolated: np.ndarray
    gamma: float
    lipschitz: float


class Climb:
    """One CLIMB (known P1, P2) or BCLIMB (SemiBlindModel) run; owns its state."""

    def __init__(self, problem: CoupledProblem, model0, config: SolverConfig | None = None):
        problem.check_model(model0)
        self.problem = problem
        self.config = config or SolverConfig()
        self.blocks = BLIND_BLOCKS if problem.blind else BLOCKS
        self.state = SolverState(model0.copy())
        model = self.state.model
        for r in range(_base(model).R):
            for block in self.blocks:
                if self.active(block, r):
                    self.state.extrapolated[(block, r)] = get_block(model, block, r).copy()
                    self.state.gamma[(block, r)] = 1.0
        self._refresh_parts()

    @property
    def model(self):
        return self.state.model

    def active(self, block: str, r: int) -> bool:
        return not (block == "D" and _base(self.state.model).terms[r].core_frozen)

    def _term_parts(self, r: int) -> dict:
        f = _factors(self.state.model, r)
        return {dt.name: multi_mode_product(f["D"], dt.factors) for dt in _data_terms(self.problem, f)}

    def _refresh_parts(self) -> None:
        per_term = [self._term_parts(r) for r in range(_base(self.state.model).R)]
        names = per_term[0].keys()
        self.state.parts = {name: [p[name] for p in per_term] for name in names}
        self.state.totals = {name: sum(self.state.parts[name]) for name in names}

    def _resid(self, r: int) -> dict:
        targets = {"H": self.problem.Y_H, "M": self.problem.Y_M}
        return {
            name: targets[name] - self.state.totals[name] + self.state.parts[name][r]
            for name in self.state.parts
        }

    def compute_update(self, block: str, r: int, resid: dict) -> Update | None:
        prob, cfg, state = self.problem, self.config, self.state
        x = get_block(state.model, block, r)
        weights = tv_weights(prob, state.model, block, r) if _tv_rows(prob, block, x) else None
        L = lipschitz_bound(prob, state.model, block, r, cfg.step_mode, weights)
        if not L > 0:
            return None
        key = (block, r)
        y = state.extrapolated[key] if cfg.extrapolation else x
        g = block_gradient(prob, state.model, block, r, point=y, weights=weights, resid=resid)
        x_new = y - g / L
        gamma = state.gamma[key]
        if not cfg.extrapolation:
            return Update(block, r, x_new, x_new, gamma, L)
        if cfg.restart and float(np.vdot(y - x_new, x_new - x)) > 0:
            gamma = 1.0
        gamma_next, mu = extrapolation_next(gamma)
        return Update(block, r, x_new, x_new + mu * (x_new - x), gamma_next, L)

    def apply(self, u: Update) -> None:
        if not np.all(np.isfinite(u.value)):
            raise SolverError(
                SOLVER_DIVERGED, f"block {u.block} of term {u.r} at iteration {self.state.iteration + 1}"
            )
        state = self.state
        set_block(state.model, u.block, u.r, u.value)
        key = (u.block, u.r)
        state.extrapolated[key] = u.extrapolated
        state.gamma[key] = u.gamma
        state.lipschitz[key] = u.lipschitz
        for name, part in self._term_parts(u.r).items():
            state.totals[name] = state.totals[name] + part - state.parts[name][u.r]
            state.parts[name][u.r] = part

    def step_block(self, block: str, r: int) -> bool:
        """One gradient step on a single block; False when the block is frozen or skipped."""
        if not self.active(block, r):
            return False
        u = self.compute_update(block, r, self._resid(r))
        if u is None:
            log.debug(f"zero Lipschitz bound, skipping {block}[{r}]")
            return False
        self.apply(u)
        return True

    def iterate(self) -> None:
        R = _base(self.state.model).R
        if self.config.update_order == UpdateOrder.PER_TERM:
            for r in range(R):
                for block in self.blocks:
                    self.step_block(block, r)
        else:
            for block in self.blocks:
                terms = [r for r in range(R) if self.active(block, r)]
                # every update of this block reads the same pre-block snapshot
                resid = [self._resid(r) for r in terms]
                if self.config.n_jobs != 1 and len(terms) > 1:
                    updates = Parallel(n_jobs=self.config.n_jobs, prefer="threads")(
                        delayed(self.compute_update)(block, r, res) for r, res in zip(terms, resid)
                    )
                else:
                    updates = [self.compute_update(block, r, res) for r, res in zip(terms, resid)]
                for u in updates:
                    if u is not None:
                        self.apply(u)
        self.state.totals = {name: sum(parts) for name, parts in self.state.parts.items()}

    def run(self, reference=None) -> tuple:
        prob, cfg, state = self.problem, self.config, self.state
        kind = "BCLIMB" if prob.blind else "CLIMB"
        with Timer(cfg.time_limit) as timer:
            state.trace.append(objective(prob, state.model))
            state.wall_ms.append(1000.0 * timer.elapsed())
            log.info(
                f"Start {kind}: R={_base(state.model).R}, ranks {_base(state.model).ranks}, objective {state.trace[0]:.6e}"
            )
            # changes below rounding of the data energy count as converged
            energy = prob.weight_H * frobenius_norm(prob.Y_H) ** 2 + prob.weight_M * frobenius_norm(prob.Y_M) ** 2
            floor = EPS * 0.5 * energy
            stop = "max_iter"
            while state.iteration < cfg.max_iter:
                self.iterate()
                state.iteration += 1
                cur = objective(prob, state.model)
                if not math.isfinite(cur):
                    raise SolverError(SOLVER_DIVERGED, f"objective at iteration {state.iteration}")
                prev = state.trace[-1]
                state.trace.append(cur)
                state.wall_ms.append(1000.0 * timer.elapsed())
                log.debug(f"{kind} iteration {state.iteration}: objective {cur:.10e}")
                if abs(prev - cur) / max(abs(prev), floor, TINY) < cfg.rel_tol:
                    stop = "rel_tol"
                    break
                if timer.expired:
                    stop = "time_limit"
                    break
        report = FitReport(
            iterations=state.iteration,
            final_objective=state.trace[-1],
            trace=list(state.trace),
            wall_ms=list(state.wall_ms),
            wall_time=timer.elapsed(),
            stop_reason=stop,
        )
        if reference is not None:
            ref = as_tensor3(reference, "reference")
            report.nre = frobenius_norm(reconstruct(_base(state.model)) - ref) / frobenius_norm(ref)
        if prob.weight_H:
            report.sam_proxy = hsi_sam_proxy(prob.Y_H, reconstruct_hsi(prob, state.model))
        log.info(
            f"Stop {kind} ({stop}) after {state.iteration} iterations: objective {report.final_objective:.6e}"
            + (f", NRE {report.nre:.3e}" if report.nre is not None else "")
        )
        return state.model, report


def fit(data_H, data_M, degradation, model0, config: SolverConfig | None = None, reference=None):
    """CLIMB for an LmnModel start, BCLIMB for a SemiBlindModel start."""
    config = config or SolverConfig()
    problem = make_problem(data_H, data_M, degradation, config.reg, blind=isinstance(model0, SemiBlindModel))
    return Climb(problem, model0, config).run(reference)


def fit_single(data, model0: LmnModel, config: SolverConfig | None = None, reference=None):
    """
    Fit one tensor: 1/2 ||Y - reconstruct(theta)||^2 plus regularizers, run as CLIMB with
    identity operators and a zero-weight HSI term.
    """
    config = config or SolverConfig()
    data = as_tensor3(data, "data")
    I, J, K = data.shape
    problem = CoupledProblem(data, data, np.eye(I), np.eye(J), np.eye(K), reg=config.reg, weight_H=0.0)
    return Climb(problem, model0, config).run(data if reference is None else reference)


########################################
### Initialization


def _spread_columns(basis: np.ndarray, widths, rng) -> list[np.ndarray]:
    """
    Partition the columns of `basis` across terms. When the terms need more columns than
    the basis has, columns are reused with a seeded perturbation.
    """
    need = int(sum(widths))
    k = basis.shape[1]
    cols = basis[:, np.arange(need) % k].copy()
    if need > k:
        cols[:, k:] += PERTURBATION * rng.standard_normal((basis.shape[0], need - k))
    return np.split(cols, np.cumsum(widths)[:-1], axis=1)


def _leading_left(t: np.ndarray, mode: int, count: int) -> np.ndarray:
    m = unfold(t, mode)
    u, _, _ = top_singular_triplets(m, min(count, min(m.shape)))
    return u


def pure_pixel_basis(X, count: int, rng=None) -> np.ndarray:
    """
    Successive selection of the pixel with the largest residual norm from X (bands x pixels),
    deflating the residual after each pick. Once the residual is exhausted the rest is
    padded with leading left singular vectors. Columns are normalized.
    """
    X = as_matrix(X, "pixels")
    rng = rng if rng is not None else np.random.default_rng(0)
    residual = X.copy()
    norms = np.linalg.norm(residual, axis=0)
    scale = float(norms.max()) if norms.size else 0.0
    chosen = []
    while len(chosen) < min(count, X.shape[0]):
        j = int(np.argmax(norms))
        if norms[j] <= 1e-10 * scale or scale == 0.0:
            break
        chosen.append(X[:, j] / np.linalg.norm(X[:, j]))
        q = residual[:, j] / norms[j]
        residual -= np.outer(q, q @ residual)
        norms = np.linalg.norm(residual, axis=0)
    if len(chosen) < count:
        # singular directions past the picked span first
        u, _, _ = top_singular_triplets(X, min(X.shape))
        rest = u[:, len(chosen) :] if len(chosen) < u.shape[1] else u
        pad = _spread_columns(rest, [count - len(chosen)], rng)[0]
        chosen.extend(pad.T)
    C = np.column_stack(chosen)
    lengths = np.linalg.norm(C, axis=0)
    lengths[lengths == 0] = 1.0
    return C / lengths


def _fit_cores(Y_H, hsi_factors, ranks, frozen, cores, rng) -> list[np.ndarray]:
    """Joint least-squares fit of every free core to Y_H; vec(T_r) = (C kron B kron A) vec(D_r)."""
    y = np.ravel(Y_H, order="F").copy()
    free = [r for r in range(len(ranks)) if not frozen[r]]
    for r in range(len(ranks)):
        if frozen[r]:
            y -= np.ravel(multi_mode_product(cores[r], hsi_factors[r]), order="F")
    if not free:
        return cores
    Ah, Bh, C = zip(*(hsi_factors[r] for r in free))
    system = np.hstack([kron(c, kron(b, a)) for a, b, c in zip(Ah, Bh, C)])
    try:
        sol, _, rank, _ = scipy.linalg.lstsq(system, y, cond=LSTSQ_COND)
    except np.linalg.LinAlgError:
        rank = -1
    if rank < system.shape[1]:
        rms = float(np.sqrt(np.mean(Y_H**2)))
        log.debug(f"core system rank {rank} < {system.shape[1]}, drawing Gaussian cores")
        for r in free:
            cores[r] = rms * rng.standard_normal(ranks[r])
        return cores
    offsets = np.cumsum([0] + [math.prod(ranks[r]) for r in free])
    for i, r in enumerate(free):
        cores[r] = np.reshape(sol[offsets[i] : offsets[i + 1]], ranks[r], order="F")
    return cores


def _term_basis(G: np.ndarray, width: int, rng) -> np.ndarray | None:
    """
    Basis P of the mode-1 space of the joint core G such that G x1 inv(P) is block
    diagonal over modes 1 and 2, with blocks of `width`. Mode-3 pencils M_w = G x3 w share
    that structure, so the eigenvectors of M_w1 inv(M_w0) fall into the blocks and a third
    pencil only couples eigenvectors of the same block. None when no clean split exists.
    """
    Lt, Mt, Nt = G.shape
    if Lt != Mt or Lt % width:
        return None
    pencils = [np.tensordot(G, w, axes=([2], [0])) for w in rng.standard_normal((3, Nt))]
    if np.linalg.cond(pencils[0]) > 1 / LSTSQ_COND:
        return None
    base_inv = np.linalg.inv(pencils[0])
    _, V = np.linalg.eig(pencils[1] @ base_inv)
    if np.linalg.cond(V) > 1 / LSTSQ_COND:
        return None
    link = np.abs(np.linalg.solve(V, pencils[2] @ base_inv @ V))
    link = link + link.T
    groups = [[i] for i in range(Lt)]
    while True:
        best, pair = 0.0, None
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                if len(groups[a]) + len(groups[b]) > width:
                    continue
                score = link[np.ix_(groups[a], groups[b])].max()
                if score > best:
                    best, pair = score, (a, b)
        if pair is None:
            break
        a, b = pair
        groups[a] += groups.pop(b)
    if any(len(g) != width for g in groups):
        return None
    blocks = []
    for g in groups:
        # conjugate eigenvectors share a group, so the real span has `width` columns
        u, _, _ = top_singular_triplets(np.hstack([V[:, g].real, V[:, g].imag]), width)
        blocks.append(u)
    return np.hstack(blocks)


def _hsi_gauge(D_M: np.ndarray, D_H: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """
    (X, Y) with D_H = D_M x1 X x2 Y. Every frontal slice gives P D_H_k = D_M_k Y^T with
    P = inv(X); the stacked system is homogeneous and its null vector fixes P and Y up to
    a common scale.
    """
    L, M, N = D_M.shape
    if N * L * M < L * L + M * M:
        return None
    system = np.vstack(
        [np.hstack([kron(D_H[:, :, k].T, np.eye(L)), -kron(np.eye(M), D_M[:, :, k])]) for k in range(N)]
    )
    _, _, vt = scipy.linalg.svd(system)
    z = vt[-1]
    P = np.reshape(z[: L * L], (L, L), order="F")
    if np.linalg.cond(P) > 1 / LSTSQ_COND:
        return None
    Yt = np.reshape(z[L * L :], (M, M), order="F")
    return np.linalg.inv(P), Yt.T


def _aligned_start(problem: CoupledProblem, ranks, rng):
    """
    Algebraic start for terms of one shared rank triple. The MSI is taken to the span of
    pure-pixel spectra, reduced to a joint core on the leading MSI subspaces, and the core
    is split into terms with `_term_basis`. D_r is fitted to the HSI. In the semi-blind case
    D_r is read off the MSI and A~_r, B~_r are aligned to it by `_hsi_gauge`.
    """
    if len(set(ranks)) != 1:
        return None
    (L, M, N), R = ranks[0], len(ranks)
    Lt, Mt, Nt = L * R, M * R, N * R
    Y_H, Y_M, PM = problem.Y_H, problem.Y_M, problem.PM
    I, J, K = problem.dims_sri
    if Lt > I or Mt > J or Nt > min(K, PM.shape[0]):
        return None
    U_C, _ = np.linalg.qr(pure_pixel_basis(unfold(Y_H, 3), Nt, rng))
    spectral = PM @ U_C
    if np.linalg.cond(spectral) > 1 / LSTSQ_COND:
        return None
    S = mode_product(Y_M, np.linalg.pinv(spectral), 3)
    U_A = _leading_left(Y_M, 1, Lt)
    U_B = _leading_left(Y_M, 2, Mt)
    if U_A.shape[1] < Lt or U_B.shape[1] < Mt:
        return None
    G = multi_mode_product(S, (U_A.T, U_B.T, None))
    basis = np.eye(Lt) if R == 1 else _term_basis(G, L, rng)
    if basis is None or np.linalg.cond(basis) > 1 / LSTSQ_COND:
        return None
    H = mode_product(G, np.linalg.inv(basis), 1)
    A, B, C = [], [], []
    for r in range(R):
        rows = slice(r * L, (r + 1) * L)
        A.append(U_A @ basis[:, rows] if R == 1 else np.linalg.qr(U_A @ basis[:, rows])[0])
        B.append(U_B @ _leading_left(H[rows], 2, M))
        C.append(U_C @ _leading_left(H[rows], 3, N))
    if not problem.blind:
        hsi = [(problem.P1 @ a, problem.P2 @ b, c) for a, b, c in zip(A, B, C)]
        cores = _fit_cores(Y_H, hsi, ranks, [False] * R, [np.zeros(t) for t in ranks], rng)
        return LmnModel([LmnTerm(d, a, b, c) for d, a, b, c in zip(cores, A, B, C)])
    C_all = np.hstack(C)
    Z = mode_product(Y_H, np.linalg.pinv(C_all), 3)
    W = mode_product(Y_M, np.linalg.pinv(PM @ C_all), 3)
    cores, A_t, B_t = [], [], []
    for r in range(R):
        cols = slice(r * N, (r + 1) * N)
        D_M = multi_mode_product(W[:, :, cols], (A[r].T, B[r].T, None))
        U_t = _leading_left(Z[:, :, cols], 1, L)
        V_t = _leading_left(Z[:, :, cols], 2, M)
        if U_t.shape[1] < L or V_t.shape[1] < M:
            return None
        gauge = _hsi_gauge(D_M, multi_mode_product(Z[:, :, cols], (U_t.T, V_t.T, None)))
        if gauge is None:
            return None
        a_t, b_t = U_t @ gauge[0], V_t @ gauge[1]
        scale = math.sqrt(max(np.linalg.norm(b_t), TINY) / max(np.linalg.norm(a_t), TINY))
        cores.append(D_M)
        A_t.append(scale * a_t)
        B_t.append(b_t / scale)
    model = LmnModel([LmnTerm(d, a, b, c) for d, a, b, c in zip(cores, A, B, C)])
    return SemiBlindModel(model, A_t, B_t)


def _naive_start(problem: CoupledProblem, ranks, rng, frozen_cores: bool):
    Y_H, Y_M = problem.Y_H, problem.Y_M
    Ls, Ms, Ns = zip(*ranks)
    A = _spread_columns(_leading_left(Y_M, 1, sum(Ls)), Ls, rng)
    B = _spread_columns(_leading_left(Y_M, 2, sum(Ms)), Ms, rng)
    C = np.split(pure_pixel_basis(unfold(Y_H, 3), sum(Ns), rng), np.cumsum(Ns)[:-1], axis=1)
    if problem.blind:
        A_t = _spread_columns(_leading_left(Y_H, 1, sum(Ls)), Ls, rng)
        B_t = _spread_columns(_leading_left(Y_H, 2, sum(Ms)), Ms, rng)
        hsi = list(zip(A_t, B_t, C))
    else:
        hsi = [(problem.P1 @ a, problem.P2 @ b, c) for a, b, c in zip(A, B, C)]
    frozen = [frozen_cores] * len(ranks)
    cores = [np.eye(L)[:, :, np.newaxis] if frozen_cores else np.zeros(t) for L, t in zip(Ls, ranks)]
    cores = _fit_cores(Y_H, hsi, ranks, frozen, cores, rng)
    model = LmnModel([LmnTerm(d, a, b, c, core_frozen=frozen_cores) for d, a, b, c in zip(cores, A, B, C)])
    if problem.blind:
        return SemiBlindModel(model, list(A_t), list(B_t))
    return model


def initialize(
    data_H,
    data_M,
    degradation,
    ranks,
    R: int | None = None,
    seed=None,
    blind: bool = False,
    frozen_cores: bool = False,
):
    """
    Data-driven start: A_r, B_r from leading left singular vectors of the MSI mode-1/2
    unfoldings, C_r from pure-pixel selection on the HSI, D_r from a least-squares fit
    to the HSI. Blind mode seeds A~_r, B~_r from the HSI unfoldings.

    The leading subspaces are shared by all terms. For free cores of one common rank
    triple they are split into terms algebraically, and the split is kept when it fits
    the data better than handing out singular vectors in order.
    `ranks` is a list of (L_r, M_r, N_r), or one triple repeated R times.
    """
    Y_H = as_tensor3(data_H, "Y_H")
    Y_M = as_tensor3(data_M, "Y_M")
    if R is not None and len(ranks) == 3 and all(isinstance(n, (int, np.integer)) for n in ranks):
        ranks = [tuple(ranks)] * int(R)
    ranks = [tuple(int(n) for n in t) for t in ranks]
    problem = make_problem(Y_H, Y_M, degradation, blind=blind)
    I, J, K = problem.dims_sri
    I_H, J_H = Y_H.shape[:2]
    for L, M, N in ranks:
        if L > I or M > J or N > K or (blind and (L > I_H or M > J_H)):
            raise TensorError(INVALID_RANK, f"ranks {(L, M, N)} exceed data dims {(I, J, K)}")
        if frozen_cores and (L != M or N != 1):
            raise TensorError(INVALID_RANK, f"frozen identity cores need (L, L, 1), got {(L, M, N)}")
    rng = np.random.default_rng(seed)
    model = _naive_start(problem, ranks, rng, frozen_cores)
    if not frozen_cores:
        try:
            aligned = _aligned_start(problem, ranks, rng)
        except (np.linalg.LinAlgError, TensorError) as e:
            log.debug(f"algebraic split failed: {e}")
            aligned = None
        if aligned is not None:
            naive_obj, aligned_obj = objective(problem, model), objective(problem, aligned)
            log.debug(f"start objective: naive {naive_obj:.6e}, algebraic {aligned_obj:.6e}")
            if aligned_obj < naive_obj:
                model = aligned
    log.debug(f"initialized {len(ranks)} terms with ranks {ranks}")
    return model


def perturb(model, rel: float, seed=None):
    """Copy of `model` with every free block X moved by rel * ||X||_F in a random direction."""
    rng = np.random.default_rng(seed)
    out = model.copy()

    def moved(x):
        g = rng.standard_normal(x.shape)
        return x + rel * np.linalg.norm(x) * g / max(np.linalg.norm(g), TINY)

    for term in _base(out).terms:
        term.A, term.B, term.C = moved(term.A), moved(term.B), moved(term.C)
        if not term.core_frozen:
            term.D = moved(term.D)
    if isinstance(out, SemiBlindModel):
        out.A_tilde = [moved(a) for a in out.A_tilde]
        out.B_tilde = [moved(b) for b in out.B_tilde]
    return out
