"""Two-step blackbox hash-evasion attack with strict query accounting.

Step one perturbs the image to move its hash (soft-label: the attacker sees
full hashes and optimizes normalized Hamming distance with SimBA-, NES-, or
ZOsignSGD-style search).  Step two shrinks the visual distortion while
keeping the hash distance past a threshold (hard-label: only the constraint
indicator matters), via boundary binary search, Monte-Carlo normal
estimation, and geometric step-size trials.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft

from . import image_ops
from .hash_core import BitHash, HashAlgoId, compute_hash, hamming_normalized
from .rng import substream

REPORT_THRESHOLDS = (0.1, 0.2, 0.3, 0.4)
DISTORTION_THETA = 0.1


class QueryBudgetExceededError(RuntimeError):
    """The oracle refused a query because its hard budget is spent."""


class PartialEstimateError(RuntimeError):
    """A gradient estimate cannot complete within the remaining budget."""


class HashOracle:
    """Query-counting wrapper around a hash algorithm.

    ``query_count`` increments by exactly one per hash evaluation and can
    never pass ``budget``.
    """

    def __init__(self, algo: HashAlgoId, budget: int) -> None:
        if budget < 1:
            raise ValueError("query budget must be positive")
        self.algo = algo
        self.budget = int(budget)
        self.query_count = 0

    @property
    def n_bits(self) -> int:
        return self.algo.n_bits

    @property
    def remaining(self) -> int:
        return self.budget - self.query_count

    def query(self, img: np.ndarray) -> BitHash:
        if self.query_count >= self.budget:
            raise QueryBudgetExceededError(f"budget {self.budget} exhausted")
        self.query_count += 1
        return compute_hash(self.algo, img)


class AttackMode(enum.Enum):
    UNTARGETED = "untargeted"
    TARGETED = "targeted"


@dataclass(frozen=True)
class AttackGoal:
    """What the attacker wants from the hash distance.

    Untargeted: push D_h(h0, H(x)) up to at least ``d0`` (default 0.4).
    Targeted: pull D_h(target_hash, H(x)) down to at most ``d0`` (default 0.1).
    """

    mode: AttackMode
    target_hash: BitHash | None = None
    d0: float | None = None

    def __post_init__(self) -> None:
        if self.mode is AttackMode.TARGETED and self.target_hash is None:
            raise ValueError("targeted goal requires target_hash")
        if self.mode is AttackMode.UNTARGETED and self.target_hash is not None:
            raise ValueError("untargeted goal must not carry target_hash")
        if self.d0 is None:
            default = 0.4 if self.mode is AttackMode.UNTARGETED else 0.1
            object.__setattr__(self, "d0", default)
        if not 0.0 <= float(self.d0) < 1.0:
            raise ValueError(f"d0={self.d0} outside [0, 1)")

    def reference_hash(self, h0: BitHash) -> BitHash:
        """The hash distances are measured against: h0 or the target."""
        if self.mode is AttackMode.TARGETED:
            assert self.target_hash is not None
            return self.target_hash
        return h0

    def distance(self, h0: BitHash, h: BitHash) -> float:
        return hamming_normalized(self.reference_hash(h0), h)

    def satisfied(self, dh: float) -> bool:
        if self.mode is AttackMode.UNTARGETED:
            return dh >= self.d0
        return dh <= self.d0

    def loss(self, dh: float) -> float:
        """Scalar to descend: -D_h when pushing away, +D_h when pulling in."""
        return dh if self.mode is AttackMode.TARGETED else -dh

    def improves(self, new_dh: float, old_dh: float) -> bool:
        return self.loss(new_dh) < self.loss(old_dh)


class StepOneMethod(enum.Enum):
    SIMBA = "simba"
    NES = "nes"
    ZOSIGNSGD = "zosignsgd"


@dataclass(frozen=True)
class StepOneConfig:
    """Soft-label search settings; ``lr`` defaults per method when None."""

    method: StepOneMethod
    max_queries: int = 3000
    step_size: float = 0.05
    k: int = 20
    beta: float = 0.01
    lr: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_queries < 1:
            raise ValueError("max_queries must be positive")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.k < 2 or self.k % 2:
            raise ValueError("k must be even and >= 2 (antithetic pairs)")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lr is None:
            default = 0.01 if self.method is StepOneMethod.ZOSIGNSGD else 0.02
            object.__setattr__(self, "lr", default)
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass(frozen=True)
class StepTwoConfig:
    """Distortion-minimization settings."""

    max_queries: int = 2000
    tolerance: float = 1e-3
    b: int = 30
    seed: int = 0
    improvement_tol: float = 1e-4
    patience: int = 5

    def __post_init__(self) -> None:
        if self.max_queries < 0:
            raise ValueError("max_queries must be nonnegative")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.b < 10:
            raise ValueError("b must be at least 10")


@dataclass(frozen=True)
class StepOneResult:
    """Best iterate of the soft-label stage and its bookkeeping."""

    image: np.ndarray
    observed_hash: BitHash
    h0: BitHash
    dh: float
    goal_met: bool
    queries_used: int
    trace: tuple[float, ...]
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class AttackOutcome:
    """Final attack result; distance and distortion recomputed at return."""

    adv_image: np.ndarray
    final_dh: float
    final_l2: float
    queries_used: int
    goal_met: bool
    succeeded_at: dict[float, bool] = field(default_factory=dict)
    flags: tuple[str, ...] = ()


def success_map(
    mode: AttackMode,
    dh: float,
    l2: float,
    thresholds: tuple[float, ...] = REPORT_THRESHOLDS,
    theta: float = DISTORTION_THETA,
) -> dict[float, bool]:
    """Per-threshold success indicator: strict distance side plus L2 < theta."""
    if mode is AttackMode.UNTARGETED:
        return {p: bool(dh > p and l2 < theta) for p in thresholds}
    return {p: bool(dh < p and l2 < theta) for p in thresholds}


def nes_gradient_estimate(
    oracle,
    x: np.ndarray,
    goal: AttackGoal,
    h_ref: BitHash,
    k: int,
    beta: float,
    rng: np.random.Generator | int,
) -> np.ndarray:
    """Antithetic Monte-Carlo gradient of the goal loss at ``x``.

    g = (1/K) sum_k (1/beta) u_k * loss(D_h(reference, H(clamp(x + beta u_k))))
    over K/2 Gaussian draws paired with their negations.  ``h_ref`` is the
    hash distances are measured against (h0 untargeted, target otherwise).
    Consumes exactly ``k`` queries; raises without querying when the budget
    cannot cover a full estimate.
    """
    if k < 2 or k % 2:
        raise ValueError("k must be even and >= 2")
    if beta <= 0:
        raise ValueError("beta must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = substream(int(rng), "nes-estimate")
    if oracle.remaining < k:
        raise PartialEstimateError(
            f"estimate needs {k} queries, only {oracle.remaining} left"
        )
    grad = np.zeros_like(x)
    try:
        for _ in range(k // 2):
            u = rng.standard_normal(x.shape)
            for signed in (u, -u):
                probe = np.clip(x + beta * signed, 0.0, 1.0)
                dh = hamming_normalized(h_ref, oracle.query(probe))
                grad += signed * (goal.loss(dh) / beta)
    except QueryBudgetExceededError as exc:
        raise PartialEstimateError("budget exhausted mid-estimate") from exc
    return grad / k


def _finish_step_one(
    best_img: np.ndarray,
    best_hash: BitHash,
    best_dh: float,
    h0: BitHash,
    goal: AttackGoal,
    used: int,
    trace: list[float],
    flags: tuple[str, ...],
) -> StepOneResult:
    return StepOneResult(
        image=best_img,
        observed_hash=best_hash,
        h0=h0,
        dh=best_dh,
        goal_met=goal.satisfied(best_dh),
        queries_used=used,
        trace=tuple(trace),
        flags=flags,
    )


def step_one(oracle, img0: np.ndarray, goal: AttackGoal, cfg: StepOneConfig) -> StepOneResult:
    """Soft-label search for an image whose hash distance meets ``goal.d0``.

    Returns the best iterate found (the satisfying one on early stop, the
    best-so-far with a ``budget-exhausted`` flag otherwise).  Never issues
    more than ``cfg.max_queries`` oracle calls.
    """
    x0 = image_ops.as_pixel_image(img0)
    if goal.mode is AttackMode.TARGETED and goal.target_hash is not None:
        if goal.target_hash.n_bits != oracle.n_bits:
            raise ValueError("target hash length does not match oracle")
    if oracle.remaining < 1 or cfg.max_queries < 1:
        raise QueryBudgetExceededError("step one needs at least one query")

    used = 1
    h0 = oracle.query(x0)
    # Untargeted reference is h0 itself (dh0 == 0 for a clean oracle);
    # targeted is the distance from the starting hash to the target.
    dh0 = goal.distance(h0, h0)
    trace = [dh0]
    if goal.satisfied(dh0):
        return _finish_step_one(x0.copy(), h0, dh0, h0, goal, used, trace, ())

    if cfg.method is StepOneMethod.SIMBA:
        return _simba_step_one(oracle, x0, goal, cfg, h0, dh0, used, trace)
    return _nes_family_step_one(oracle, x0, goal, cfg, h0, dh0, used, trace)


@functools.lru_cache(maxsize=256)
def _dct_basis_vector(n: int, k: int) -> np.ndarray:
    """Orthonormal inverse-DCT of the k-th unit coefficient, length n."""
    e = np.zeros(n)
    e[k] = 1.0
    vec = scipy.fft.idct(e, norm="ortho")
    vec.flags.writeable = False
    return vec


SIMBA_FREQ_BLOCK = 17


def _simba_step_one(oracle, x0, goal, cfg, h0, dh0, used, trace) -> StepOneResult:
    # Proposals live in the low-frequency image-DCT basis, applied equally to
    # every channel (the hashes read luminance): single pixels are invisible
    # to a downsampling hash, single low-frequency coefficients are not.  One
    # query per proposal; a proposal is kept unless it makes the objective
    # worse (the hash loss is quantized, so ties carry sub-threshold progress
    # that strict-improvement acceptance would throw away).
    rng = substream(cfg.seed, "step-one", cfg.method.value)
    h, w, _ = x0.shape
    block = min(SIMBA_FREQ_BLOCK, h, w)
    n_coords = block * block
    x = x0.copy()
    cur_dh = dh0
    best = (dh0, x0.copy(), h0)
    order = rng.permutation(n_coords)
    pos = 0
    while used < cfg.max_queries and oracle.remaining >= 1:
        if pos == n_coords:
            order = rng.permutation(n_coords)
            pos = 0
        coord = int(order[pos])
        pos += 1
        u, v = coord // block, coord % block
        sign = 1.0 if rng.random() < 0.5 else -1.0
        basis = np.outer(_dct_basis_vector(h, u), _dct_basis_vector(w, v))
        cand = np.clip(x + (sign * cfg.step_size) * basis[:, :, np.newaxis], 0.0, 1.0)
        used += 1
        hq = oracle.query(cand)
        dh = goal.distance(h0, hq)
        if goal.loss(dh) <= goal.loss(cur_dh):
            x = cand
            if goal.improves(dh, cur_dh):
                cur_dh = dh
                best = (dh, cand, hq)
                if goal.satisfied(dh):
                    trace.append(cur_dh)
                    return _finish_step_one(cand, hq, dh, h0, goal, used, trace, ())
        trace.append(cur_dh)
    dh_b, img_b, h_b = best
    return _finish_step_one(
        img_b, h_b, dh_b, h0, goal, used, trace, ("budget-exhausted",)
    )


def _nes_family_step_one(oracle, x0, goal, cfg, h0, dh0, used, trace) -> StepOneResult:
    rng = substream(cfg.seed, "step-one", cfg.method.value)
    h_ref = goal.reference_hash(h0)
    x = x0.copy()
    best = (dh0, x0.copy(), h0)
    flags: tuple[str, ...] = ()
    while used + cfg.k + 1 <= cfg.max_queries and oracle.remaining >= cfg.k + 1:
        grad = nes_gradient_estimate(oracle, x, goal, h_ref, cfg.k, cfg.beta, rng)
        used += cfg.k
        # Sign steps: the raw estimate's scale collapses on the piecewise
        # constant hash loss, so per-pixel +-lr moves are what make progress.
        x = np.clip(x - cfg.lr * np.sign(grad), 0.0, 1.0)
        used += 1
        h = oracle.query(x)
        dh = goal.distance(h0, h)
        if goal.improves(dh, best[0]):
            best = (dh, x.copy(), h)
        trace.append(best[0])
        if goal.satisfied(dh):
            return _finish_step_one(x.copy(), h, dh, h0, goal, used, trace, ())
    flags = ("budget-exhausted",)
    dh_b, img_b, h_b = best
    return _finish_step_one(img_b, h_b, dh_b, h0, goal, used, trace, flags)


def binary_search_boundary(
    phi: Callable[[np.ndarray], bool],
    img0: np.ndarray,
    img_feasible: np.ndarray,
    tolerance: float,
) -> tuple[float, np.ndarray]:
    """Find the smallest t in [0, 1] with phi((1-t) img0 + t img_feasible) true.

    ``img_feasible`` (t=1) must satisfy phi.  Returns (t_hi, image at t_hi)
    where the bracket width is at most ``tolerance``; each probe costs one
    phi evaluation.
    """
    lo, hi = 0.0, 1.0
    x_hi = img_feasible
    while hi - lo > tolerance:
        mid = (lo + hi) / 2.0
        x_mid = np.clip((1.0 - mid) * img0 + mid * img_feasible, 0.0, 1.0)
        if phi(x_mid):
            hi, x_hi = mid, x_mid
        else:
            lo = mid
    return hi, x_hi


def _degraded_outcome(img0, image, h, goal, used, flags) -> AttackOutcome:
    # ``h`` is the hash observed at ``image``; for untargeted goals the
    # reference defaults to that same observation when no better h0 exists.
    dh = hamming_normalized(goal.reference_hash(h), h)
    l2 = image_ops.l2_normalized(img0, image)
    return AttackOutcome(
        adv_image=image,
        final_dh=dh,
        final_l2=l2,
        queries_used=used,
        goal_met=goal.satisfied(dh),
        succeeded_at=success_map(goal.mode, dh, l2),
        flags=flags,
    )


def step_two(
    oracle,
    img0: np.ndarray,
    i_init: np.ndarray,
    goal: AttackGoal,
    cfg: StepTwoConfig,
    *,
    h0: BitHash | None = None,
    h_init: BitHash | None = None,
) -> AttackOutcome:
    """Shrink distortion while keeping the constraint ``goal.satisfied`` true.

    Loop: binary-search the segment [img0, current] to the constraint
    boundary, estimate the boundary normal from ``cfg.b`` indicator probes,
    then try geometrically shrinking steps along it.  Stops on budget, on
    ``cfg.max_queries``, or when L2 improvements stay below
    ``cfg.improvement_tol`` for ``cfg.patience`` rounds.  The returned image
    is re-verified with one final query when budget allows.
    """
    x0 = image_ops.as_pixel_image(img0)
    xi = image_ops.as_pixel_image(i_init)
    rng = substream(cfg.seed, "step-two")
    used = 0

    def remaining() -> int:
        return min(cfg.max_queries - used, oracle.remaining)

    def query(img: np.ndarray) -> BitHash:
        nonlocal used
        used += 1
        return oracle.query(img)

    if h0 is None:
        if remaining() < 1:
            raise QueryBudgetExceededError("step two needs h0 or one query")
        h0 = query(x0)
    h_ref = goal.reference_hash(h0)

    def goal_dh(h: BitHash) -> float:
        return hamming_normalized(h_ref, h)

    if h_init is None:
        if remaining() < 1:
            # Cannot measure I_init at all; img0 is the only verified point.
            return _degraded_outcome(
                x0, x0, h0, goal, used, ("budget-exhausted", "unverified-init")
            )
        h_init = query(xi)
    dh_init = goal_dh(h_init)
    if not goal.satisfied(dh_init):
        l2 = image_ops.l2_normalized(x0, xi)
        return AttackOutcome(
            adv_image=xi,
            final_dh=dh_init,
            final_l2=l2,
            queries_used=used,
            goal_met=False,
            succeeded_at=success_map(goal.mode, dh_init, l2),
            flags=("constraint-violated-at-init",),
        )

    # ``last_true`` pairs the most recent constraint-satisfying probe with
    # its observed hash so best iterates keep an honest (image, hash) pair
    # even when the budget dies before the final verification query.
    last_true: dict[str, object] = {"img": xi, "h": h_init}

    def phi(img: np.ndarray) -> bool:
        h = query(img)
        ok = goal.satisfied(goal_dh(h))
        if ok:
            last_true["img"], last_true["h"] = img, h
        return ok

    x_cur, h_cur = xi, h_init
    best_img, best_h = xi, h_init
    best_l2 = image_ops.l2_normalized(x0, xi)
    dim = x0.size
    stall_rounds = 0
    flags: list[str] = []
    iteration = 0
    search_cost = int(np.ceil(np.log2(1.0 / cfg.tolerance)))

    while remaining() >= search_cost + cfg.b + 1 and stall_rounds < cfg.patience:
        iteration += 1
        _, x_b = binary_search_boundary(phi, x0, x_cur, cfg.tolerance)
        h_b = last_true["h"] if last_true["img"] is x_b else h_cur
        l2_b = image_ops.l2_normalized(x0, x_b)
        if l2_b < best_l2 - 1e-12:
            improvement = best_l2 - l2_b
            best_img, best_h, best_l2 = x_b, h_b, l2_b
            stall_rounds = 0 if improvement > cfg.improvement_tol else stall_rounds + 1
        else:
            stall_rounds += 1

        if remaining() < cfg.b + 1:
            break
        # Monte-Carlo boundary normal from indicator probes around x_b.
        dist_e = float(np.linalg.norm((x_b - x0).ravel()))
        delta = max(cfg.tolerance * np.sqrt(dim) * dist_e, 1e-4)
        probes = rng.standard_normal((cfg.b,) + x_b.shape)
        norms = np.sqrt((probes**2).sum(axis=tuple(range(1, probes.ndim)), keepdims=True))
        probes /= np.maximum(norms, 1e-12)
        signs = np.empty(cfg.b)
        for i in range(cfg.b):
            signs[i] = 1.0 if phi(np.clip(x_b + delta * probes[i], 0.0, 1.0)) else -1.0
        if np.all(signs == 1.0):
            normal = probes.mean(axis=0)
        elif np.all(signs == -1.0):
            normal = -probes.mean(axis=0)
        else:
            centered = signs - signs.mean()
            normal = np.tensordot(centered, probes, axes=(0, 0)) / cfg.b
        norm = float(np.linalg.norm(normal.ravel()))
        if norm < 1e-12:
            stall_rounds += 1
            continue
        normal /= norm

        # Geometric step-size trial away from the boundary along the normal.
        step = dist_e / max(np.sqrt(iteration), 1.0)
        moved = False
        while remaining() >= 1 and step > cfg.tolerance * max(dist_e, 1e-12):
            cand = np.clip(x_b + step * normal, 0.0, 1.0)
            if phi(cand):
                x_cur, h_cur = cand, last_true["h"]
                moved = True
                break
            step /= 2.0
        if not moved:
            x_cur, h_cur = x_b, h_b

    if remaining() >= 1:
        h_fin = query(best_img)
        dh_fin = goal_dh(h_fin)
    else:
        dh_fin = goal_dh(best_h)
        flags.append("unverified-final")
    if remaining() == 0:
        flags.append("budget-exhausted")
    l2_fin = image_ops.l2_normalized(x0, best_img)
    return AttackOutcome(
        adv_image=best_img,
        final_dh=dh_fin,
        final_l2=l2_fin,
        queries_used=used,
        goal_met=goal.satisfied(dh_fin),
        succeeded_at=success_map(goal.mode, dh_fin, l2_fin),
        flags=tuple(flags),
    )


def jsha(
    oracle,
    img0: np.ndarray,
    goal: AttackGoal,
    cfg1: StepOneConfig,
    cfg2: StepTwoConfig,
) -> AttackOutcome:
    """Both steps end to end; queries_used covers the whole composition.

    Step two keeps the hash distance obtained in step one: its constraint is
    the step-one early-stop level when met, else the best level actually
    achieved, so distortion minimization never undoes step one's progress.
    """
    res1 = step_one(oracle, img0, goal, cfg1)
    if res1.goal_met:
        step2_goal = goal
    else:
        step2_goal = AttackGoal(
            mode=goal.mode,
            target_hash=goal.target_hash,
            d0=res1.dh,
        )
    if oracle.remaining < 1 or cfg2.max_queries < 1:
        out = _degraded_outcome(
            image_ops.as_pixel_image(img0),
            res1.image,
            res1.observed_hash,
            step2_goal,
            res1.queries_used,
            res1.flags + ("step-two-skipped",),
        )
        return AttackOutcome(
            adv_image=out.adv_image,
            final_dh=out.final_dh,
            final_l2=out.final_l2,
            queries_used=res1.queries_used,
            goal_met=goal.satisfied(out.final_dh),
            succeeded_at=out.succeeded_at,
            flags=out.flags,
        )
    out2 = step_two(
        oracle,
        img0,
        res1.image,
        step2_goal,
        cfg2,
        h0=res1.h0,
        h_init=res1.observed_hash,
    )
    return AttackOutcome(
        adv_image=out2.adv_image,
        final_dh=out2.final_dh,
        final_l2=out2.final_l2,
        queries_used=res1.queries_used + out2.queries_used,
        goal_met=goal.satisfied(out2.final_dh),
        succeeded_at=out2.succeeded_at,
        flags=res1.flags + out2.flags,
    )
