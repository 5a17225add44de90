"""
LMN parameter sets: R block terms D_r x1 A_r x2 B_r x3 C_r.

CPD, Tucker and LL1 are realized as degenerate rank shapes of the same model, so a
single reconstruction and gradient engine serves all four.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from tensorkit import comm
from tensorkit.core import multi_mode_product
from tensorkit.errors import DIM_MISMATCH, INDEX_RANGE, INVALID_RANK, IO_FAILURE
from tensorkit.utils import TensorError, as_matrix, as_tensor3

log = logging.getLogger("climb.model")
log.setLevel(logging.INFO)

MANIFEST_FORMAT = "climb-lmn/1"


class ModelKind(str, Enum):
    CPD = "CPD"
    TUCKER = "TUCKER"
    LL1 = "LL1"
    LMN = "LMN"


Ranks = tuple[int, int, int]


@dataclass
class LmnTerm:
    D: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    core_frozen: bool = False

    def __post_init__(self):
        self.D = as_tensor3(self.D, "core D")
        self.A = as_matrix(self.A, "factor A")
        self.B = as_matrix(self.B, "factor B")
        self.C = as_matrix(self.C, "factor C")
        L, M, N = self.D.shape
        if self.A.shape[1] != L or self.B.shape[1] != M or self.C.shape[1] != N:
            raise TensorError(
                DIM_MISMATCH,
                f"core {self.D.shape} vs factors {self.A.shape}, {self.B.shape}, {self.C.shape}",
            )
        if L > self.A.shape[0] or M > self.B.shape[0] or N > self.C.shape[0]:
            raise TensorError(INVALID_RANK, f"ranks {self.D.shape} exceed dims {self.dims}")

    @property
    def ranks(self) -> Ranks:
        return tuple(int(n) for n in self.D.shape)  # type: ignore[return-value]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    def copy(self) -> "LmnTerm":
        return LmnTerm(self.D.copy(), self.A.copy(), self.B.copy(), self.C.copy(), self.core_frozen)

    def tensor(self) -> np.ndarray:
        return multi_mode_product(self.D, (self.A, self.B, self.C))


@dataclass
class LmnModel:
    terms: list[LmnTerm]

    def __post_init__(self):
        if len(self.terms) < 1:
            raise TensorError(INVALID_RANK, "a model needs at least one term")
        dims = self.terms[0].dims
        for r, term in enumerate(self.terms):
            if term.dims != dims:
                raise TensorError(DIM_MISMATCH, f"term {r} has dims {term.dims}, term 0 has {dims}")

    @property
    def R(self) -> int:
        return len(self.terms)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.terms[0].dims

    @property
    def ranks(self) -> list[Ranks]:
        return [t.ranks for t in self.terms]

    def copy(self) -> "LmnModel":
        return LmnModel([t.copy() for t in self.terms])


@dataclass
class SemiBlindModel:
    """theta': the LMN model over the SRI grid plus per-term HSI-grid factors (A~_r, B~_r)."""

    base: LmnModel
    A_tilde: list[np.ndarray] = field(default_factory=list)
    B_tilde: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.A_tilde = [as_matrix(a, "A_tilde") for a in self.A_tilde]
        self.B_tilde = [as_matrix(b, "B_tilde") for b in self.B_tilde]
        if len(self.A_tilde) != self.base.R or len(self.B_tilde) != self.base.R:
            raise TensorError(
                DIM_MISMATCH,
                f"{len(self.A_tilde)}/{len(self.B_tilde)} HSI factors for {self.base.R} terms",
            )
        for r, (term, at, bt) in enumerate(zip(self.base.terms, self.A_tilde, self.B_tilde)):
            L, M, _ = term.ranks
            if at.shape[1] != L or bt.shape[1] != M:
                raise TensorError(DIM_MISMATCH, f"term {r}: HSI factor ranks do not match core {term.ranks}")
        if len({a.shape[0] for a in self.A_tilde}) != 1 or len({b.shape[0] for b in self.B_tilde}) != 1:
            raise TensorError(DIM_MISMATCH, "HSI factors disagree on the HSI grid size")

    @classmethod
    def from_model(cls, model: LmnModel, P1, P2) -> "SemiBlindModel":
        """theta' that reproduces `model` exactly under known P1, P2: A~_r = P1 A_r, B~_r = P2 B_r."""
        P1 = as_matrix(P1, "P1")
        P2 = as_matrix(P2, "P2")
        return cls(model.copy(), [P1 @ t.A for t in model.terms], [P2 @ t.B for t in model.terms])

    @property
    def hsi_dims(self) -> tuple[int, int]:
        return (self.A_tilde[0].shape[0], self.B_tilde[0].shape[0])

    def copy(self) -> "SemiBlindModel":
        return SemiBlindModel(
            self.base.copy(), [a.copy() for a in self.A_tilde], [b.copy() for b in self.B_tilde]
        )

    def reconstruct_hsi(self) -> np.ndarray:
        res = None
        for term, at, bt in zip(self.base.terms, self.A_tilde, self.B_tilde):
            part = multi_mode_product(term.D, (at, bt, term.C))
            res = part if res is None else res + part
        return res


def reconstruct(model: LmnModel) -> np.ndarray:
    """Y_S = sum_r D_r x1 A_r x2 B_r x3 C_r."""
    res = None
    for term in model.terms:
        part = term.tensor()
        res = part if res is None else res + part
    return res


def reconstruct_term(model: LmnModel, r: int) -> np.ndarray:
    if not 0 <= r < model.R:
        raise TensorError(INDEX_RANGE, f"term {r} of {model.R}")
    return model.terms[r].tensor()


########################################
### Rank shapes


def normalize_rank_spec(kind, rank_spec) -> list[Ranks]:
    """
    Per-term (L_r, M_r, N_r) for a rank specification:
    CPD: F; TUCKER: (L, M, N); LL1: [L_1, ..., L_R]; LMN: [(L_r, M_r, N_r), ...].
    """
    kind = ModelKind(kind)
    try:
        if kind == ModelKind.CPD:
            if isinstance(rank_spec, (list, tuple)):
                raise TypeError("CPD takes a single rank F")
            F = int(rank_spec)
            ranks = [(1, 1, 1)] * F
        elif kind == ModelKind.TUCKER:
            L, M, N = (int(n) for n in rank_spec)
            ranks = [(L, M, N)]
        elif kind == ModelKind.LL1:
            ranks = [(int(L), int(L), 1) for L in rank_spec]
        else:
            ranks = [tuple(int(n) for n in t) for t in rank_spec]
            if any(len(t) != 3 for t in ranks):
                raise TypeError("LMN terms take three ranks each")
    except (TypeError, ValueError) as e:
        raise TensorError(INVALID_RANK, f"{kind.value} rank spec {rank_spec!r}: {e}") from e
    if not ranks or any(n < 1 for t in ranks for n in t):
        raise TensorError(INVALID_RANK, f"{kind.value} rank spec {rank_spec!r}")
    return ranks  # type: ignore[return-value]


def make_special_shape(kind, dims, rank_spec, rng_seed=None) -> LmnModel:
    kind = ModelKind(kind)
    I, J, K = (int(d) for d in dims)
    ranks = normalize_rank_spec(kind, rank_spec)
    rng = np.random.default_rng(rng_seed)
    terms = []
    for L, M, N in ranks:
        if L > I or M > J or N > K:
            raise TensorError(INVALID_RANK, f"ranks {(L, M, N)} exceed dims {(I, J, K)}")
        if kind == ModelKind.LL1:
            D = np.eye(L)[:, :, np.newaxis]
        else:
            D = rng.standard_normal((L, M, N))
        A = rng.standard_normal((I, L))
        B = rng.standard_normal((J, M))
        C = rng.standard_normal((K, N))
        terms.append(LmnTerm(D, A, B, C, core_frozen=kind == ModelKind.LL1))
    return LmnModel(terms)


def count_params(kind, dims, rank_spec) -> int:
    kind = ModelKind(kind)
    I, J, K = (int(d) for d in dims)
    ranks = normalize_rank_spec(kind, rank_spec)
    if kind == ModelKind.CPD:
        return len(ranks) * (I + J + K)
    if kind == ModelKind.LL1:
        return sum(I * L + J * L for L, _, _ in ranks) + K * len(ranks)
    # Tucker is the single-term case of LMN
    return sum(I * L + J * M + K * N + L * M * N for L, M, N in ranks)


def ranks_for_budget(kind, dims, budget: int, R: int = 1, N: int | None = None):
    """
    Largest rank setting of `kind` whose parameter count stays within `budget`.
    LL1 and LMN use R uniform terms (LMN with M = L and the given N, default 2);
    Tucker uses L = M and the given N. Returns a rank spec for make_special_shape.
    """
    kind = ModelKind(kind)
    I, J, K = (int(d) for d in dims)
    best = None
    if kind == ModelKind.CPD:
        F = budget // (I + J + K)
        best = F if F >= 1 else None
    else:
        n = N if N is not None else (1 if kind == ModelKind.LL1 else 2)
        for L in range(1, min(I, J) + 1):
            if kind == ModelKind.TUCKER:
                spec = (L, L, min(n, K))
            elif kind == ModelKind.LL1:
                spec = [L] * R
            else:
                spec = [(L, L, min(n, K))] * R
            if count_params(kind, dims, spec) > budget:
                break
            best = spec
    if best is None:
        raise TensorError(INVALID_RANK, f"budget {budget} too small for {kind.value} on {dims}")
    return best


########################################
### Recoverability conditions


@dataclass
class Condition:
    name: str
    lhs: int
    rhs: int
    passed: bool


@dataclass
class RecoverabilityReport:
    blind: bool
    conditions: list[Condition]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failed(self) -> list[str]:
        return [c.name for c in self.conditions if not c.passed]

    def as_dict(self) -> dict:
        return {
            "blind": self.blind,
            "passed": self.passed,
            "conditions": [c.__dict__ for c in self.conditions],
        }


def _uniform_ranks(ranks) -> Ranks:
    if len(ranks) == 3 and all(isinstance(n, (int, np.integer)) for n in ranks):
        return tuple(int(n) for n in ranks)  # type: ignore[return-value]
    distinct = {tuple(int(n) for n in t) for t in ranks}
    if len(distinct) != 1:
        raise TensorError(INVALID_RANK, f"recoverability conditions need uniform ranks, got {sorted(distinct)}")
    return distinct.pop()  # type: ignore[return-value]


def check_recoverability(dims_sri, dims_hsi, K_M: int, ranks, R: int, blind: bool = False) -> RecoverabilityReport:
    """Inequalities of the exact-recovery theorems for uniform ranks (L, M, N)."""
    I_M, J_M, _ = (int(d) for d in dims_sri)
    I_H, J_H = (int(d) for d in dims_hsi[:2])
    L, M, N = _uniform_ranks(ranks)
    floor_n = max(math.ceil(L / M) + math.ceil(M / L), 3)
    conds = [
        Condition("I_H*J_H >= L*M*R", I_H * J_H, L * M * R, I_H * J_H >= L * M * R),
        Condition("I_M >= L*R", I_M, L * R, I_M >= L * R),
        Condition("J_M >= M*R", J_M, M * R, J_M >= M * R),
        Condition("L*M >= N", L * M, N, L * M >= N),
        Condition("N >= max(ceil(L/M)+ceil(M/L), 3)", N, floor_n, N >= floor_n),
    ]
    if blind:
        conds += [
            Condition("K_M >= 2N", int(K_M), 2 * N, int(K_M) >= 2 * N),
            Condition("I_H >= L*R", I_H, L * R, I_H >= L * R),
            Condition("J_H >= M*R", J_H, M * R, J_H >= M * R),
        ]
    report = RecoverabilityReport(blind, conds)
    if not report.passed:
        log.warning(f"Recoverability conditions failed: {report.failed()}")
    return report


########################################
### Serialization


def save_model(model: LmnModel | SemiBlindModel, directory, name: str = "model") -> Path:
    """JSON manifest plus one T3B1 blob per factor, referenced by relative path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = model.base if isinstance(model, SemiBlindModel) else model
    terms = []
    for r, term in enumerate(base.terms):
        entry = {"ranks": list(term.ranks), "core_frozen": term.core_frozen}
        for key in ("D", "A", "B", "C"):
            fname = f"{name}_r{r}_{key}.t3b"
            value = getattr(term, key)
            if key == "D":
                comm.write_tensor(directory / fname, value)
            else:
                comm.write_matrix(directory / fname, value)
            entry[key] = fname
        if isinstance(model, SemiBlindModel):
            for key, value in (("A_tilde", model.A_tilde[r]), ("B_tilde", model.B_tilde[r])):
                fname = f"{name}_r{r}_{key}.t3b"
                comm.write_matrix(directory / fname, value)
                entry[key] = fname
        terms.append(entry)
    manifest = {
        "format": MANIFEST_FORMAT,
        "R": base.R,
        "dims": list(base.dims),
        "semi_blind": isinstance(model, SemiBlindModel),
        "terms": terms,
    }
    path = directory / f"{name}.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def load_model(path) -> LmnModel | SemiBlindModel:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except (OSError, ValueError) as e:
        raise TensorError(IO_FAILURE, f"{path}: {e}") from e
    if manifest.get("format") != MANIFEST_FORMAT:
        raise TensorError(IO_FAILURE, f"{path}: not a {MANIFEST_FORMAT} manifest")
    root = path.parent
    terms, a_tilde, b_tilde = [], [], []
    for entry in manifest["terms"]:
        terms.append(
            LmnTerm(
                comm.read_tensor(root / entry["D"]),
                comm.read_matrix(root / entry["A"]),
                comm.read_matrix(root / entry["B"]),
                comm.read_matrix(root / entry["C"]),
                core_frozen=bool(entry["core_frozen"]),
            )
        )
        if manifest.get("semi_blind"):
            a_tilde.append(comm.read_matrix(root / entry["A_tilde"]))
            b_tilde.append(comm.read_matrix(root / entry["B_tilde"]))
    model = LmnModel(terms)
    if manifest.get("semi_blind"):
        return SemiBlindModel(model, a_tilde, b_tilde)
    return model
