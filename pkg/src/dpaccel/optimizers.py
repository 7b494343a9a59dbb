"""First-order iterations with per-iteration Laplace privacy noise.

One driver runs all variants: plain gradient descent, heavy ball (two
algebraically equivalent forms), Nesterov momentum, and a multi-stage
Nesterov scheme whose stepsize drops by 4x from stage to stage.  Gradient
noise scales come from a NoiseSchedule; every release's leak is charged to
a PrivacyAccount as it happens.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .privacy_core import NoiseSchedule, PrivacyAccount, RngStream, laplace_sample

ALGORITHMS = ("dp-gd", "dp-hb", "dp-hb-avg", "dp-nag", "dp-masg")


def polyak_momentum(mu: float, L: float) -> float:
    """Heavy-ball momentum tuned to the noiseless optimal rate."""
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    kappa = L / mu
    return ((np.sqrt(kappa) - 1) / (np.sqrt(kappa) + 1)) ** 2


def polyak_stepsize(mu: float, L: float) -> float:
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    return 4.0 / (np.sqrt(mu) + np.sqrt(L)) ** 2


def nesterov_momentum(alpha, mu: float):
    """Momentum (1 - sqrt(alpha*mu)) / (1 + sqrt(alpha*mu)); needs alpha*mu in (0, 1)."""
    alpha = np.asarray(alpha, dtype=float)
    s = alpha * mu
    if np.any(s <= 0) or np.any(s >= 1):
        raise ValueError(f"alpha*mu must lie in (0, 1), got {s}")
    r = np.sqrt(s)
    out = (1.0 - r) / (1.0 + r)
    return float(out) if out.ndim == 0 else out


@dataclass
class StageSchedule:
    """Iteration counts and stepsizes for a staged run.

    Iterations are 1-based: with lengths (3, 5), iterations 1..3 are stage 1
    and 4..8 are stage 2.
    """

    lengths: tuple
    alphas: tuple

    def __post_init__(self):
        self.lengths = tuple(int(v) for v in self.lengths)
        self.alphas = tuple(float(v) for v in self.alphas)
        if len(self.lengths) != len(self.alphas):
            raise ValueError("one stepsize per stage required")
        if any(v < 1 for v in self.lengths):
            raise ValueError(f"stage lengths must be >= 1, got {self.lengths}")
        if any(a <= 0 for a in self.alphas):
            raise ValueError(f"stage stepsizes must be > 0, got {self.alphas}")

    @property
    def stages(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> int:
        return sum(self.lengths)

    def stage_of(self, i: int) -> int:
        """1-based stage index of 1-based iteration i."""
        if not 1 <= i <= self.total:
            raise ValueError(f"iteration {i} outside 1..{self.total}")
        cum = 0
        for k, length in enumerate(self.lengths, start=1):
            cum += length
            if i <= cum:
                return k
        raise AssertionError("unreachable")

    def alpha_per_iteration(self) -> np.ndarray:
        return np.repeat(self.alphas, self.lengths)

    def stage_per_iteration(self) -> np.ndarray:
        return np.repeat(np.arange(1, self.stages + 1), self.lengths)


def masg_stage_schedule(mu: float, L: float, c: float, p: int, T: int) -> StageSchedule:
    """Stage plan: a unit-length warm stage at c/L, then geometrically longer
    stages at stepsize c / (4^k L).

    The unit is ceil(sqrt(kappa) * log(2^(p+2))); stage k >= 2 has length
    2^k * unit.  The last stage is truncated so the total is exactly T.
    """
    if not 0 < mu <= L:
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if c <= 0:
        raise ValueError(f"stepsize scale must be positive, got {c}")
    if T < 1:
        raise ValueError(f"need T >= 1, got {T}")
    kappa = L / mu
    unit = int(np.ceil(np.sqrt(kappa) * np.log(2.0 ** (p + 2))))
    unit = max(unit, 1)
    lengths = [min(unit, T)]
    alphas = [c / L]
    k = 2
    while sum(lengths) < T:
        length = min(2**k * unit, T - sum(lengths))
        lengths.append(length)
        alphas.append(c / (2 ** (2 * k) * L))
        k += 1
    return StageSchedule(lengths=tuple(lengths), alphas=tuple(alphas))


@dataclass
class HyperParams:
    """Per-run knobs; stages is only consulted by dp-masg."""

    alpha: float
    T: int
    m: int
    beta: float = 0.0
    stages: StageSchedule | None = None

    def __post_init__(self):
        if self.stages is None and self.alpha <= 0:
            raise ValueError(f"stepsize must be positive, got {self.alpha}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.beta}")
        if self.T < 0:
            raise ValueError(f"need T >= 0, got {self.T}")
        if self.m < 1:
            raise ValueError(f"need m >= 1, got {self.m}")


@dataclass
class Trace:
    """Iteration log: suboptimality and cumulative leak per step."""

    t: np.ndarray
    subopt: np.ndarray
    eps_cum: np.ndarray
    meta: dict = field(default_factory=dict)
    iterates: np.ndarray | None = None

    @property
    def final_subopt(self) -> float:
        return float(self.subopt[-1])

    @property
    def T(self) -> int:
        return len(self.t) - 1

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "subopt", "eps_cum"])
            for i in range(len(self.t)):
                writer.writerow(
                    [int(self.t[i]), repr(float(self.subopt[i])), repr(float(self.eps_cum[i]))]
                )
        with open(path.with_name(path.stem + ".meta.json"), "w") as fh:
            json.dump(self.meta, fh, indent=2, default=float)

    @classmethod
    def from_csv(cls, path) -> "Trace":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["t", "subopt", "eps_cum"]:
            raise ValueError(f"not a trace CSV: {path}")
        body = rows[1:]
        meta = {}
        meta_path = path.with_name(path.stem + ".meta.json")
        if meta_path.exists():
            with open(meta_path) as fh:
                meta = json.load(fh)
        return cls(
            t=np.array([int(r[0]) for r in body]),
            subopt=np.array([float(r[1]) for r in body]),
            eps_cum=np.array([float(r[2]) for r in body]),
            meta=meta,
        )


def run(
    algorithm: str,
    obj,
    hp: HyperParams,
    schedule: NoiseSchedule,
    account: PrivacyAccount,
    rng: RngStream,
    x0: np.ndarray,
    fstar: float,
    record_iterates: bool = False,
) -> Trace:
    """Run one private optimization and return its trace.

    Per iteration: draw the subsample (only when m < n), evaluate the mean
    gradient at the algorithm's query point, add Laplace(b_t) noise, charge
    eps_t to the account, update.  The trace has T+1 rows; row 0 is the
    initial point with zero leak.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if len(schedule) != hp.T:
        raise ValueError(f"schedule length {len(schedule)} != T = {hp.T}")
    if hp.m > obj.n:
        raise ValueError(f"subsample size {hp.m} exceeds n = {obj.n}")
    if not np.isfinite(fstar):
        raise ValueError("fstar must be finite")
    if schedule.total_epsilon > account.remaining + 1e-9:
        raise ValueError(
            f"schedule leaks {schedule.total_epsilon:.6g} but the account only has "
            f"{account.remaining:.6g} left"
        )
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (obj.d,):
        raise ValueError(f"x0 must have shape ({obj.d},), got {x.shape}")

    if algorithm == "dp-masg":
        if hp.stages is None or hp.stages.total != hp.T:
            raise ValueError("dp-masg needs a stage plan covering exactly T iterations")
        alphas = hp.stages.alpha_per_iteration()
        betas = np.asarray(nesterov_momentum(alphas, obj.mu))
    else:
        alphas = np.full(hp.T, hp.alpha)
        beta = 0.0 if algorithm == "dp-gd" else hp.beta
        betas = np.full(hp.T, beta)

    start = time.perf_counter()
    x_prev = x.copy()
    ubar = np.zeros_like(x)
    subopt = np.empty(hp.T + 1)
    eps_cum = np.empty(hp.T + 1)
    subopt[0] = obj.value(x) - fstar
    eps_cum[0] = 0.0
    iterates = [x.copy()] if record_iterates else None

    for t in range(hp.T):
        alpha_t, beta_t = alphas[t], betas[t]
        idx = rng.subsample(obj.n, hp.m) if hp.m < obj.n else None
        if algorithm in ("dp-nag", "dp-masg"):
            point = (1.0 + beta_t) * x - beta_t * x_prev
        else:
            point = x
        g = obj.minibatch_gradient(point, idx)
        if schedule.b[t] > 0:
            g = g + laplace_sample(rng, schedule.b[t], obj.d)
        account.spend(schedule.eps[t])

        if algorithm in ("dp-gd", "dp-hb"):
            x_new = x - alpha_t * g + beta_t * (x - x_prev)
        elif algorithm == "dp-hb-avg":
            ubar = beta_t * ubar + (1.0 - beta_t) * g
            x_new = x - (alpha_t / (1.0 - beta_t)) * ubar
        else:
            x_new = point - alpha_t * g
        x_prev, x = x, x_new

        subopt[t + 1] = obj.value(x) - fstar
        eps_cum[t + 1] = account.spent
        if record_iterates:
            iterates.append(x.copy())

    meta = {
        "algorithm": algorithm,
        "alpha": None if hp.stages is not None else hp.alpha,
        "beta": None if hp.stages is not None else float(betas[0]) if hp.T else hp.beta,
        "stages": None
        if hp.stages is None
        else {"lengths": list(hp.stages.lengths), "alphas": list(hp.stages.alphas)},
        "m": hp.m,
        "T": hp.T,
        "seed": rng.seed,
        "schedule": schedule.provenance,
        "epsilon_total": account.epsilon_total,
        "fstar": fstar,
        "wall_time": time.perf_counter() - start,
    }
    return Trace(
        t=np.arange(hp.T + 1),
        subopt=subopt,
        eps_cum=eps_cum,
        meta=meta,
        iterates=None if iterates is None else np.array(iterates),
    )
