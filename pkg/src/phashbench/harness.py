"""Experiment orchestration: ASR tables, edit sweeps, attack campaigns, SNR.

Success rates follow the strict-inequality convention: an untargeted outcome
counts at threshold p when D_h > p, a targeted one when D_h < p, and both
additionally require L2 < theta.  Ties count as failure.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import image_ops
from .defense import BitFlipDefense
from .evasion import (
    DISTORTION_THETA,
    REPORT_THRESHOLDS,
    AttackGoal,
    AttackMode,
    AttackOutcome,
    HashOracle,
    StepOneConfig,
    StepOneMethod,
    StepTwoConfig,
    jsha,
    nes_gradient_estimate,
    step_one,
    success_map,
)
from .hash_core import BitHash, HashAlgoId, compute_hash, hamming_normalized
from .rng import substream


class ReportFormatError(ValueError):
    """A report or outcome file does not follow the expected layout."""


def _succeeds(mode: AttackMode, dh: float, l2: float, p: float, theta: float) -> bool:
    if mode is AttackMode.UNTARGETED:
        return dh > p and l2 < theta
    return dh < p and l2 < theta


def compute_asr(
    outcomes: Sequence,
    p: float,
    theta: float,
    mode: AttackMode,
) -> float:
    """Fraction of outcomes succeeding at threshold ``p`` under ``theta``."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("cannot compute a success rate over zero outcomes")
    hits = sum(
        1 for o in outcomes if _succeeds(mode, o.final_dh, o.final_l2, p, theta)
    )
    return hits / len(outcomes)


def _check_monotone(asr: dict[float, float], mode: AttackMode, what: str) -> None:
    ps = sorted(asr)
    vals = [asr[p] for p in ps]
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{what}: rate {v} outside [0, 1]")
    for lo, hi in zip(vals, vals[1:]):
        if mode is AttackMode.UNTARGETED and hi > lo + 1e-12:
            raise ValueError(f"{what}: untargeted rates must not increase in p")
        if mode is AttackMode.TARGETED and hi < lo - 1e-12:
            raise ValueError(f"{what}: targeted rates must not decrease in p")


@dataclass(frozen=True)
class AsrReport:
    """Success-rate table for one (algo, method, mode, q) cell."""

    algo: str
    method: str
    mode: AttackMode
    q: float
    m: int
    theta: float
    asr: dict[float, float]
    mean_queries: float
    mean_l2: float

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("report needs at least one outcome")
        _check_monotone(self.asr, self.mode, "AsrReport")


def build_asr_report(
    algo: str,
    method: str,
    mode: AttackMode,
    q: float,
    outcomes: Sequence,
    theta: float = DISTORTION_THETA,
    thresholds: tuple[float, ...] = REPORT_THRESHOLDS,
) -> AsrReport:
    outcomes = list(outcomes)
    asr = {p: compute_asr(outcomes, p, theta, mode) for p in thresholds}
    return AsrReport(
        algo=algo,
        method=method,
        mode=mode,
        q=q,
        m=len(outcomes),
        theta=theta,
        asr=asr,
        mean_queries=float(np.mean([o.queries_used for o in outcomes])),
        mean_l2=float(np.mean([o.final_l2 for o in outcomes])),
    )


# ---------------------------------------------------------------------------
# Edit-robustness sweep


EditSampler = Callable[[np.random.Generator], image_ops.EditOp]


def default_edit_samplers() -> dict[str, EditSampler]:
    """Parameter ranges for the stock edit operations, drawn uniformly."""
    return {
        "compress": lambda rng: image_ops.Compress(quality=int(rng.integers(30, 91))),
        "resize": lambda rng: image_ops.Resize(scale=float(rng.uniform(0.5, 2.0))),
        "rotate": lambda rng: image_ops.Rotate(degrees=float(rng.uniform(-30.0, 30.0))),
        "vignette": lambda rng: image_ops.Vignette(strength=float(rng.uniform(0.3, 1.0))),
    }


def _describe_op(op: image_ops.EditOp) -> str:
    fields = dataclasses.asdict(op)
    inner = ",".join(f"{k}={fields[k]:.4g}" for k in sorted(fields))
    return f"{type(op).__name__}({inner})"


@dataclass(frozen=True)
class EditEntry:
    """Every (image, draw) result for a single edit operation."""

    op_name: str
    rows: tuple[tuple[str, int, str, float], ...]
    asr: dict[float, float]

    def __post_init__(self) -> None:
        _check_monotone(self.asr, AttackMode.UNTARGETED, f"EditEntry[{self.op_name}]")

    @property
    def distances(self) -> tuple[float, ...]:
        return tuple(row[3] for row in self.rows)


@dataclass(frozen=True)
class EditRobustnessReport:
    algo: str
    m: int
    draws_per_image: int
    seed: int
    theta: float
    entries: tuple[EditEntry, ...]


def run_edit_sweep(
    algo: HashAlgoId,
    corpus: Sequence[tuple[str, np.ndarray]],
    seed: int = 0,
    draws_per_image: int = 5,
    samplers: dict[str, EditSampler] | None = None,
    thresholds: tuple[float, ...] = REPORT_THRESHOLDS,
) -> EditRobustnessReport:
    """Hash every image before/after randomized edits; tabulate D_h and ASR.

    The distortion gate is disabled here (theta = inf): an edit "attacks" the
    hash whenever the distance alone crosses p.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if len(corpus) < 20:
        warnings.warn(
            f"edit sweep calibrated for >= 20 images, got {len(corpus)}",
            stacklevel=2,
        )
    if draws_per_image < 1:
        raise ValueError("draws_per_image must be positive")
    samplers = samplers if samplers is not None else default_edit_samplers()
    entries = []
    for op_name in sorted(samplers):
        sampler = samplers[op_name]
        rows = []
        for name, img in corpus:
            img = image_ops.as_pixel_image(img)
            h0 = compute_hash(algo, img)
            rng = substream(seed, "edit", op_name, name)
            for draw in range(draws_per_image):
                op = sampler(rng)
                h1 = compute_hash(algo, image_ops.apply_edit(img, op))
                rows.append((name, draw, _describe_op(op), hamming_normalized(h0, h1)))
        dhs = [r[3] for r in rows]
        asr = {p: float(np.mean([d > p for d in dhs])) for p in thresholds}
        entries.append(EditEntry(op_name=op_name, rows=tuple(rows), asr=asr))
    return EditRobustnessReport(
        algo=algo.value,
        m=len(corpus),
        draws_per_image=draws_per_image,
        seed=seed,
        theta=math.inf,
        entries=tuple(entries),
    )


# ---------------------------------------------------------------------------
# Attack campaigns


METHOD_NAMES = (
    "simba",
    "nes",
    "zosignsgd",
    "simba+hsja",
    "nes+hsja",
    "zosignsgd+hsja",
)


def parse_method(name: str) -> tuple[StepOneMethod, bool]:
    """Method string -> (step-one search, whether step two runs)."""
    base, plus, suffix = name.partition("+")
    if plus and suffix != "hsja":
        raise ValueError(f"unknown method {name!r}")
    try:
        method = StepOneMethod(base)
    except ValueError:
        raise ValueError(f"unknown method {name!r}") from None
    return method, bool(plus)


@dataclass(frozen=True)
class CampaignItem:
    """One attacked image: ground-truth distances, not the defended view."""

    image_name: str
    method: str
    mode: AttackMode
    q: float
    outcome: AttackOutcome
    error: str | None = None


@dataclass(frozen=True)
class CampaignResult:
    items: tuple[CampaignItem, ...]
    reports: tuple[AsrReport, ...]

    @property
    def errors(self) -> tuple[CampaignItem, ...]:
        return tuple(it for it in self.items if it.error is not None)


def _derive_seed(seed: int, *labels: str) -> int:
    return int(substream(seed, *labels).integers(2**63))


def _fmt_q(q: float) -> str:
    return format(float(q), ".6g")


def _attack_one(
    algo: HashAlgoId,
    name: str,
    img: np.ndarray,
    method_name: str,
    mode: AttackMode,
    q: float,
    budget1: int,
    budget2: int,
    seed: int,
    d0: float | None,
    target_hash: BitHash | None,
    theta: float,
) -> CampaignItem:
    img = image_ops.as_pixel_image(img)
    h0_true = compute_hash(algo, img)
    goal = AttackGoal(mode=mode, target_hash=target_hash, d0=d0)
    method, two_step = parse_method(method_name)
    labels = ("attack", name, method_name, mode.value, _fmt_q(q))
    budget = budget1 + (budget2 if two_step else 0)
    oracle = HashOracle(algo, budget=budget)
    if q > 0.0:
        oracle = BitFlipDefense(oracle, q, substream(seed, *labels, "defense"))
    cfg1 = StepOneConfig(
        method=method,
        max_queries=budget1,
        seed=_derive_seed(seed, *labels, "step1"),
    )
    try:
        if two_step:
            cfg2 = StepTwoConfig(
                max_queries=budget2,
                seed=_derive_seed(seed, *labels, "step2"),
            )
            out = jsha(oracle, img, goal, cfg1, cfg2)
        else:
            res = step_one(oracle, img, goal, cfg1)
            l2 = image_ops.l2_normalized(img, res.image)
            out = AttackOutcome(
                adv_image=res.image,
                final_dh=res.dh,
                final_l2=l2,
                queries_used=res.queries_used,
                goal_met=res.goal_met,
                succeeded_at=success_map(mode, res.dh, l2, theta=theta),
                flags=res.flags,
            )
        error = None
    except Exception as exc:  # noqa: BLE001 - campaign must survive one bad image
        out = AttackOutcome(
            adv_image=img,
            final_dh=goal.distance(h0_true, h0_true),
            final_l2=0.0,
            queries_used=oracle.query_count,
            goal_met=False,
            succeeded_at={p: False for p in REPORT_THRESHOLDS},
            flags=("error",),
        )
        error = f"{type(exc).__name__}: {exc}"
    # Defended or not, the scoreboard uses the real hash of the final image.
    dh_true = goal.distance(h0_true, compute_hash(algo, out.adv_image))
    out = dataclasses.replace(
        out,
        final_dh=dh_true,
        goal_met=goal.satisfied(dh_true),
        succeeded_at=success_map(mode, dh_true, out.final_l2, theta=theta),
    )
    return CampaignItem(
        image_name=name,
        method=method_name,
        mode=mode,
        q=q,
        outcome=out,
        error=error,
    )


def _attack_one_star(task: tuple) -> CampaignItem:
    return _attack_one(*task)


def pick_targets(
    algo: HashAlgoId,
    corpus: Sequence[tuple[str, np.ndarray]],
    seed: int,
) -> dict[str, BitHash]:
    """Assign each image the hash of a randomly chosen different image."""
    if len(corpus) < 2:
        raise ValueError("targeted campaigns need at least two images")
    hashes = [compute_hash(algo, image_ops.as_pixel_image(im)) for _, im in corpus]
    targets = {}
    for i, (name, _) in enumerate(corpus):
        rng = substream(seed, "target", name)
        j = int(rng.integers(len(corpus) - 1))
        if j >= i:
            j += 1
        targets[name] = hashes[j]
    return targets


def run_attack_campaign(
    algo: HashAlgoId,
    corpus: Sequence[tuple[str, np.ndarray]],
    methods: Sequence[str],
    mode: AttackMode,
    q_levels: Sequence[float] = (0.0,),
    budget1: int = 3000,
    budget2: int = 2000,
    seed: int = 0,
    d0: float | None = None,
    theta: float = DISTORTION_THETA,
    workers: int = 1,
) -> CampaignResult:
    """One attack per (image, method, q); per-image failures become rows.

    Every image gets its own oracle and seed stream, so results do not depend
    on ``workers``.  Under a defense the attacker only ever sees flipped
    hashes; the returned distances are re-measured on the undefended hash.
    """
    if not corpus:
        raise ValueError("empty corpus")
    for m in methods:
        parse_method(m)
    targets = (
        pick_targets(algo, corpus, seed) if mode is AttackMode.TARGETED else {}
    )
    tasks = []
    for q in q_levels:
        for method_name in methods:
            for name, img in corpus:
                tasks.append(
                    (
                        algo,
                        name,
                        img,
                        method_name,
                        mode,
                        float(q),
                        budget1,
                        budget2,
                        seed,
                        d0,
                        targets.get(name),
                        theta,
                    )
                )
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            items = list(pool.map(_attack_one_star, tasks))
    else:
        items = [_attack_one_star(t) for t in tasks]
    reports = []
    for q in q_levels:
        for method_name in methods:
            cell = [
                it.outcome
                for it in items
                if it.method == method_name and it.q == float(q)
            ]
            reports.append(
                build_asr_report(algo.value, method_name, mode, float(q), cell, theta)
            )
    return CampaignResult(items=tuple(items), reports=tuple(reports))


# ---------------------------------------------------------------------------
# Gradient signal-to-noise experiment


def estimate_gradient_snr(
    make_oracle: Callable[[], object],
    img: np.ndarray,
    goal: AttackGoal,
    betas: Sequence[float],
    k: int,
    trials: int,
    seed: int = 0,
) -> dict[float, float]:
    """SNR (dB) of the zeroth-order gradient estimate per smoothing radius.

    For each beta, ``trials`` independent estimates g_i are drawn (fresh
    oracle each trial, one reference query plus k probe queries) and scored
    as ||mean g||^2 / mean ||g_i - mean g||^2.
    """
    if trials < 2:
        raise ValueError("need at least two trials to estimate noise power")
    img = image_ops.as_pixel_image(img)
    table = {}
    for beta in betas:
        if beta <= 0:
            raise ValueError("beta grid must be positive")
        grads = []
        for t in range(trials):
            oracle = make_oracle()
            h_ref = oracle.query(img)
            if goal.mode is AttackMode.TARGETED:
                h_ref = goal.target_hash
            rng = substream(seed, "snr", _fmt_q(beta), t)
            g = nes_gradient_estimate(oracle, img, goal, h_ref, k=k, beta=beta, rng=rng)
            grads.append(g.ravel())
        stack = np.stack(grads)
        mean = stack.mean(axis=0)
        signal = float(mean @ mean)
        noise = float(np.mean(np.sum((stack - mean) ** 2, axis=1)))
        if noise == 0.0:
            table[float(beta)] = math.inf if signal > 0 else -math.inf
        else:
            table[float(beta)] = 10.0 * math.log10(signal / noise)
    return table


def gradient_snr_experiment(
    algo: HashAlgoId,
    img: np.ndarray,
    betas: Sequence[float] = (0.001, 0.005, 0.01, 0.05),
    k: int = 60,
    trials: int = 20,
    seed: int = 0,
) -> dict[float, float]:
    """Run the SNR probe against a real hash oracle around ``img``."""

    def make_oracle() -> HashOracle:
        return HashOracle(algo, budget=k + 1)

    goal = AttackGoal(mode=AttackMode.UNTARGETED)
    return estimate_gradient_snr(make_oracle, img, goal, betas, k, trials, seed)


# ---------------------------------------------------------------------------
# Report files (all writers are deterministic given equal inputs)


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".6f")


OUTCOME_FIELDS = (
    "image",
    "method",
    "mode",
    "q",
    "queries",
    "dh",
    "l2",
    "succ@0.1",
    "succ@0.2",
    "succ@0.3",
    "succ@0.4",
    "flags",
    "error",
)


def write_outcomes_csv(path: str | Path, items: Sequence[CampaignItem]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(OUTCOME_FIELDS)
        for it in items:
            o = it.outcome
            writer.writerow(
                [
                    it.image_name,
                    it.method,
                    it.mode.value,
                    _fmt_q(it.q),
                    o.queries_used,
                    _fmt(o.final_dh),
                    _fmt(o.final_l2),
                    *(int(o.succeeded_at.get(p, False)) for p in REPORT_THRESHOLDS),
                    "|".join(o.flags),
                    it.error or "",
                ]
            )


@dataclass(frozen=True)
class OutcomeRecord:
    """Row of an outcomes CSV; mirrors what compute_asr needs."""

    image: str
    method: str
    mode: AttackMode
    q: float
    queries_used: int
    final_dh: float
    final_l2: float
    succeeded_at: dict[float, bool]
    flags: tuple[str, ...]
    error: str | None


def is_outcomes_csv(path: str | Path) -> bool:
    """True when the file's header row matches the outcome column layout."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    return header is not None and tuple(header) == OUTCOME_FIELDS


def read_outcomes_csv(path: str | Path) -> list[OutcomeRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != OUTCOME_FIELDS:
            raise ReportFormatError(f"{path}: unexpected outcome CSV header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(OUTCOME_FIELDS):
                raise ReportFormatError(f"{path}:{lineno}: wrong column count")
            try:
                records.append(
                    OutcomeRecord(
                        image=row[0],
                        method=row[1],
                        mode=AttackMode(row[2]),
                        q=float(row[3]),
                        queries_used=int(row[4]),
                        final_dh=float(row[5]),
                        final_l2=float(row[6]),
                        succeeded_at={
                            p: bool(int(v))
                            for p, v in zip(REPORT_THRESHOLDS, row[7:11])
                        },
                        flags=tuple(f for f in row[11].split("|") if f),
                        error=row[12] or None,
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ReportFormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def aggregate_outcome_records(
    records: Sequence[OutcomeRecord],
    algo: str,
    theta: float = DISTORTION_THETA,
) -> tuple[AsrReport, ...]:
    """Rebuild per-(method, mode, q) reports from raw outcome rows."""
    if not records:
        raise ReportFormatError("no outcome rows to aggregate")
    cells: dict[tuple[str, str, float], list[OutcomeRecord]] = {}
    for rec in records:
        cells.setdefault((rec.method, rec.mode.value, rec.q), []).append(rec)
    reports = []
    for method, mode_value, q in sorted(cells):
        cell = cells[(method, mode_value, q)]
        reports.append(
            build_asr_report(algo, method, AttackMode(mode_value), q, cell, theta)
        )
    return tuple(reports)


ASR_FIELDS = (
    "algo",
    "method",
    "mode",
    "q",
    "m",
    "theta",
    "p",
    "asr",
    "mean_queries",
    "mean_l2",
)


def write_asr_reports_csv(path: str | Path, reports: Sequence[AsrReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ASR_FIELDS)
        for rep in reports:
            for p in sorted(rep.asr):
                writer.writerow(
                    [
                        rep.algo,
                        rep.method,
                        rep.mode.value,
                        _fmt_q(rep.q),
                        rep.m,
                        _fmt(rep.theta),
                        _fmt_q(p),
                        _fmt(rep.asr[p]),
                        _fmt(rep.mean_queries),
                        _fmt(rep.mean_l2),
                    ]
                )


def _report_as_dict(rep: AsrReport) -> dict:
    return {
        "algo": rep.algo,
        "method": rep.method,
        "mode": rep.mode.value,
        "q": round(rep.q, 6),
        "m": rep.m,
        "theta": rep.theta if math.isfinite(rep.theta) else "inf",
        "asr": {_fmt_q(p): round(rep.asr[p], 6) for p in sorted(rep.asr)},
        "mean_queries": round(rep.mean_queries, 6),
        "mean_l2": round(rep.mean_l2, 6),
    }


def write_asr_reports_json(path: str | Path, reports: Sequence[AsrReport]) -> None:
    payload = [_report_as_dict(rep) for rep in reports]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_edit_raw_csv(path: str | Path, report: EditRobustnessReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("algo", "op", "image", "draw", "params", "dh"))
        for entry in report.entries:
            for name, draw, params, dh in entry.rows:
                writer.writerow([report.algo, entry.op_name, name, draw, params, _fmt(dh)])


def write_edit_report_csv(path: str | Path, report: EditRobustnessReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("algo", "op", "m", "draws", "p", "asr"))
        for entry in report.entries:
            for p in sorted(entry.asr):
                writer.writerow(
                    [
                        report.algo,
                        entry.op_name,
                        report.m,
                        report.draws_per_image,
                        _fmt_q(p),
                        _fmt(entry.asr[p]),
                    ]
                )


def write_edit_report_json(path: str | Path, report: EditRobustnessReport) -> None:
    payload = {
        "algo": report.algo,
        "m": report.m,
        "draws_per_image": report.draws_per_image,
        "seed": report.seed,
        "theta": "inf",
        "ops": {
            entry.op_name: {
                "asr": {_fmt_q(p): round(entry.asr[p], 6) for p in sorted(entry.asr)},
                "mean_dh": round(float(np.mean(entry.distances)), 6),
                "max_dh": round(float(np.max(entry.distances)), 6),
            }
            for entry in report.entries
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_snr_csv(path: str | Path, table: dict[float, float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("beta", "snr_db"))
        for beta in sorted(table):
            writer.writerow([_fmt_q(beta), _fmt(table[beta])])


def asr_reports_chart(reports: Sequence[AsrReport], title: str) -> str:
    from . import svg

    series = []
    for rep in reports:
        label = f"{rep.method} q={_fmt_q(rep.q)}"
        pts = [(p, rep.asr[p]) for p in sorted(rep.asr)]
        series.append((label, pts))
    return svg.line_chart(series, title, "threshold p", "ASR")


def edit_report_chart(report: EditRobustnessReport, p: float = 0.3) -> str:
    from . import svg

    labels = [entry.op_name for entry in report.entries]
    values = [entry.asr[p] for entry in report.entries]
    return svg.bar_chart(labels, values, f"edit ASR({_fmt_q(p)}) on {report.algo}", "ASR")


def snr_chart(table: dict[float, float]) -> str:
    from . import svg

    pts = [(b, table[b]) for b in sorted(table) if math.isfinite(table[b])]
    if not pts:
        raise ValueError("no finite SNR points to chart")
    return svg.line_chart([("gradient estimate", pts)], "SNR vs beta", "beta", "SNR (dB)")
