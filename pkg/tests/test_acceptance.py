"""Release gates for the whole workbench, one verdict line per criterion.

Every test here drives the shipped code end to end at desk scale and prints
``[criterion N] PASS/FAIL: ...`` so a verbose run reads as a ten-line
scorecard (the per-test stdout shows up under the PASSES summary section).
Budgets and thresholds are fixed; seeds are pinned so reruns are comparable.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest

import gradcheck
from phashbench import harness
from phashbench.cli import main as cli_main
from phashbench.corpus import default_corpus_dir
from phashbench.evasion import AttackMode
from phashbench.hash_core import (
    BitHash,
    HashAlgoId,
    compute_hash,
    hamming_normalized,
    read_fixture_file,
)
from phashbench.inversion.data import build_dataset
from phashbench.inversion.layers import (
    Conv3x3,
    Dense,
    NearestUpsample2x,
    Relu,
    ResidualBlock,
    Sigmoid,
)
from phashbench.inversion.model import DecoderModel, backward, bits_to_pm1
from phashbench.inversion.training import TrainConfig, evaluate_inversion, train
from phashbench.rng import substream


def _verdict(criterion: int, checks: list[tuple[bool, str]]) -> None:
    """Print one scorecard line, then fail on any unmet check."""
    ok = all(flag for flag, _ in checks)
    detail = "; ".join(text for _, text in checks)
    print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
    bad = [text for flag, text in checks if not flag]
    assert not bad, f"criterion {criterion}: {bad}"


# ---------------------------------------------------------------------------
# 1. Hash correctness: frozen reference digests and the distance metric


def test_criterion_1_hash_reference_and_metric(corpus_images, fixture_dir):
    t0 = time.monotonic()
    by_name = dict(corpus_images)
    worst = 0.0
    for name, ref in read_fixture_file(fixture_dir / "pdq_reference.txt", n_bits=256):
        h = compute_hash(HashAlgoId.DCT256, by_name[name])
        worst = max(worst, hamming_normalized(h, ref))

    rng = substream(20260814, "metric-trials")
    trials = 10_000
    exact = symmetric = identity = triangle = bounded = True
    for _ in range(trials):
        n = int(rng.choice([64, 256]))
        a = BitHash.from_bits(rng.integers(0, 2, n))
        b = BitHash.from_bits(rng.integers(0, 2, n))
        c = BitHash.from_bits(rng.integers(0, 2, n))
        d_ab = hamming_normalized(a, b)
        oracle = sum(1 for x, y in zip(a.bits(), b.bits()) if x != y) / n
        exact &= d_ab == oracle
        symmetric &= hamming_normalized(b, a) == d_ab
        identity &= hamming_normalized(a, a) == 0.0
        triangle &= d_ab <= hamming_normalized(a, c) + hamming_normalized(c, b) + 1e-12
        bounded &= 0.0 <= d_ab <= 1.0
    dt = time.monotonic() - t0
    _verdict(
        1,
        [
            (worst <= 0.1, f"max D_h to frozen dct256 reference {worst:.4f} (gate 0.1)"),
            (exact, f"{trials} random pairs match the bit-loop oracle exactly"),
            (symmetric and identity and triangle and bounded, "metric axioms hold"),
            (dt < 60.0, f"{dt:.1f}s (gate 60s)"),
        ],
    )


# ---------------------------------------------------------------------------
# 2. Edit robustness directions on the packaged corpus


def test_criterion_2_edit_robustness_directions(corpus_images):
    t0 = time.monotonic()
    rep = harness.run_edit_sweep(
        HashAlgoId.DCT256, corpus_images, seed=0, draws_per_image=5
    )
    asr = {e.op_name: e.asr for e in rep.entries}
    dt = time.monotonic() - t0
    _verdict(
        2,
        [
            (asr["compress"][0.1] <= 0.10, f"compress ASR(0.1)={asr['compress'][0.1]:.2f} (gate <=0.10)"),
            (asr["rotate"][0.3] >= 0.80, f"rotate ASR(0.3)={asr['rotate'][0.3]:.2f} (gate >=0.80)"),
            (asr["resize"][0.3] == 0.0, f"resize ASR(0.3)={asr['resize'][0.3]:.2f} (gate ==0)"),
            (dt < 120.0, f"{dt:.1f}s (gate 120s)"),
        ],
    )


# ---------------------------------------------------------------------------
# 3. Targeted attacks never reach a foreign hash within the distortion cap


def test_criterion_3_targeted_attacks_all_fail(corpus_images):
    t0 = time.monotonic()
    methods = ("simba+hsja", "nes+hsja", "zosignsgd+hsja")
    res = harness.run_attack_campaign(
        HashAlgoId.DCT256,
        corpus_images,
        methods=methods,
        mode=AttackMode.TARGETED,
        budget1=3000,
        budget2=2000,
        seed=0,
    )
    errors = [it for it in res.items if it.error is not None]
    by_method = {r.method: r for r in res.reports}
    dt = time.monotonic() - t0
    checks = [(not errors, f"{len(errors)} attack errors")]
    for m in methods:
        rate = by_method[m].asr[0.1]
        checks.append((rate == 0.0, f"{m} targeted ASR(0.1)={rate:.2f} (gate ==0)"))
    checks.append((dt < 1800.0, f"{dt:.0f}s (gate 1800s)"))
    _verdict(3, checks)


# ---------------------------------------------------------------------------
# 4-6. One untargeted campaign scored undefended and under q=0.1 bit flips


@pytest.fixture(scope="module")
def untargeted_campaign(corpus_images):
    t0 = time.monotonic()
    res = harness.run_attack_campaign(
        HashAlgoId.DCT256,
        corpus_images,
        methods=("nes+hsja",),
        mode=AttackMode.UNTARGETED,
        q_levels=(0.0, 0.1),
        budget1=3000,
        budget2=2000,
        seed=0,
    )
    reports = {r.q: r for r in res.reports}
    errors = sum(1 for it in res.items if it.error is not None)
    return reports, errors, time.monotonic() - t0


def test_criterion_4_untargeted_constrained_robustness(untargeted_campaign):
    reports, errors, dt = untargeted_campaign
    rate = reports[0.0].asr[0.3]
    _verdict(
        4,
        [
            (errors == 0, f"{errors} attack errors"),
            (rate <= 0.05, f"undefended ASR(0.3)={rate:.2f} (gate <=0.05)"),
            (dt < 1800.0, f"campaign {dt:.0f}s (gate 1800s)"),
        ],
    )


def test_criterion_5_untargeted_partial_success(untargeted_campaign):
    reports, _, _ = untargeted_campaign
    rate = reports[0.0].asr[0.1]
    _verdict(
        5,
        [(rate >= 0.30, f"undefended nes+hsja ASR(0.1)={rate:.2f} (gate >=0.30)")],
    )


def test_criterion_6_bit_flip_defense_effect(untargeted_campaign):
    reports, _, _ = untargeted_campaign
    undef, defended = reports[0.0], reports[0.1]
    _verdict(
        6,
        [
            (
                defended.asr[0.1] <= undef.asr[0.1],
                f"q=0.1 ASR(0.1)={defended.asr[0.1]:.2f} <= undefended {undef.asr[0.1]:.2f}",
            ),
            (defended.asr[0.3] == 0.0, f"q=0.1 ASR(0.3)={defended.asr[0.3]:.2f} (gate ==0)"),
        ],
    )


# ---------------------------------------------------------------------------
# 7. Gradient-estimate SNR collapses at small smoothing radii


def test_criterion_7_gradient_snr(corpus_images):
    t0 = time.monotonic()
    img = dict(corpus_images)["corpus_00.png"]
    table = harness.gradient_snr_experiment(HashAlgoId.DCT256, img, seed=0)
    lo, hi = table[0.001], table[0.05]
    dt = time.monotonic() - t0
    _verdict(
        7,
        [
            (lo < hi, f"SNR(beta=0.001)={lo:.1f} dB < SNR(beta=0.05)={hi:.1f} dB"),
            (lo < -10.0, f"SNR(beta=0.001)={lo:.1f} dB (gate < -10 dB)"),
            (dt < 300.0, f"{dt:.1f}s (gate 300s)"),
        ],
    )


# ---------------------------------------------------------------------------
# 8. Decoder training: gradients, memorization, and the full recipe


def test_criterion_8_inversion_training():
    # Finite-difference agreement, layer by layer and through the full model.
    rng = substream(21, "layer-init")
    layer_cases = {
        "dense": (Dense("d", 8, 10, rng), rng.standard_normal((3, 8))),
        "conv": (Conv3x3("c", 2, 3, rng), rng.standard_normal((2, 5, 5, 2))),
        "residual": (ResidualBlock("r", 2, rng), rng.standard_normal((1, 6, 6, 2))),
        "relu": (
            Relu(),
            rng.uniform(0.05, 1.0, (2, 4, 4, 3)) * rng.choice([-1.0, 1.0], (2, 4, 4, 3)),
        ),
        "sigmoid": (Sigmoid(), rng.standard_normal((2, 4, 4, 1))),
        "upsample": (NearestUpsample2x(), rng.standard_normal((2, 3, 3, 2))),
    }
    worst_fd = 0.0
    for name, (layer, x) in layer_cases.items():
        worst_fd = max(worst_fd, gradcheck.check_layer(layer, x, substream(21, "fd", name)))
    model = DecoderModel(64, features=2, init_seed=7)
    h = BitHash.from_bits(substream(3, "fd-hash").random(64) > 0.5)
    target = substream(3, "fd-target").uniform(size=(32, 32, 1))
    _, grads = backward(model, h, target)
    x = bits_to_pm1(h)[np.newaxis, :]

    def loss_at():
        out = model.forward_batch(x)
        return float(np.mean((out - target[np.newaxis]) ** 2))

    worst_fd = max(
        worst_fd, gradcheck.check_model_params(model, loss_at, grads, substream(7, "fd-pick"))
    )

    # Ten pairs must be memorizable nearly perfectly.
    ds10 = build_dataset(
        "synthetic:regular", HashAlgoId.DCT64, count=10, seed=1, train_fraction=1.0
    )
    overfit = DecoderModel(64, features=32, init_seed=0)
    res10 = train(
        overfit, ds10, TrainConfig(epochs=150, batch_size=10, initial_lr=0.005, seed=0)
    )
    mse10 = res10.loss_curve[-1]

    # The stock recipe must finish on one core and keep improving.
    t0 = time.monotonic()
    ds = build_dataset("synthetic:regular", HashAlgoId.DCT256, count=512, seed=0)
    model = DecoderModel(256, features=32, init_seed=0)
    result = train(model, ds, TrainConfig(epochs=50, batch_size=64, initial_lr=0.005, seed=0))
    dt = time.monotonic() - t0
    decades = np.asarray(result.loss_curve).reshape(5, 10).mean(axis=1)
    decreasing = bool(np.all(np.diff(decades) < 0))
    _verdict(
        8,
        [
            (worst_fd < 1e-3, f"worst finite-difference rel err {worst_fd:.2e} (gate 1e-3)"),
            (mse10 < 0.01, f"10-pair overfit MSE {mse10:.2e} (gate 0.01)"),
            (decreasing, "10-epoch loss averages strictly decreasing over 50 epochs"),
            (dt < 900.0, f"full dct256 recipe {dt:.0f}s (gate 900s)"),
        ],
    )


# ---------------------------------------------------------------------------
# 9. Reconstruction quality orderings across hash length, defense, diversity


def test_criterion_9_inversion_orderings():
    def run(algo: HashAlgoId, source: str, q: float) -> float:
        ds = build_dataset("synthetic:" + source, algo, count=256, seed=0, defense_q=q)
        model = DecoderModel(algo.n_bits, features=32, init_seed=0)
        train(model, ds, TrainConfig(epochs=15, batch_size=64, initial_lr=0.002, seed=0))
        return evaluate_inversion(model, ds).mean_ssim

    ssim_64 = run(HashAlgoId.DCT64, "regular", 0.0)
    ssim_1024 = run(HashAlgoId.DCT1024, "regular", 0.0)
    sweep = [run(HashAlgoId.DCT256, "regular", q) for q in (0.0, 0.1, 0.2, 0.3)]
    ssim_diverse = run(HashAlgoId.DCT256, "diverse", 0.0)
    non_increasing = bool(np.all(np.diff(sweep) <= 1e-12))
    sweep_txt = "/".join(f"{s:.3f}" for s in sweep)
    _verdict(
        9,
        [
            (ssim_1024 > ssim_64, f"SSIM dct1024 {ssim_1024:.3f} > dct64 {ssim_64:.3f}"),
            (non_increasing, f"SSIM vs q in (0,0.1,0.2,0.3): {sweep_txt} non-increasing"),
            (sweep[0] > ssim_diverse, f"regular {sweep[0]:.3f} > diverse {ssim_diverse:.3f}"),
        ],
    )


# ---------------------------------------------------------------------------
# 10. Same seed twice -> byte-identical report files from every pipeline


def test_criterion_10_reproducibility(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("PHASH_SEED", raising=False)
    sample = str(default_corpus_dir() / "corpus_00.png")
    pipelines = {
        "hash": ["hash", "--algo", "dct256", sample],
        "attack": [
            "attack", "--algo", "dct64", "--max-images", "2", "--method", "simba",
            "--budget1", "25", "--budget2", "0", "--d0", "0.3",
            "--save-images", "true", "--seed", "3",
        ],
        "sweep-edits": [
            "sweep-edits", "--algo", "dct64", "--max-images", "2",
            "--draws-per-image", "1", "--seed", "3",
        ],
        "snr": [
            "snr", "--algo", "dct64", "--betas", "0.01,0.05", "--k", "8",
            "--trials", "2", "--seed", "3",
        ],
        "invert": [
            "invert", "--algo", "dct64", "--count", "12", "--epochs", "2",
            "--batch-size", "8", "--features", "2", "--train-fraction", "0.75",
            "--seed", "3",
        ],
    }
    compared = 0
    mismatched: list[str] = []
    for name, argv in pipelines.items():
        dirs = []
        for attempt in ("a", "b"):
            out_dir = tmp_path / f"{name}-{attempt}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                code = cli_main(argv + ["--output-dir", str(out_dir)])
            assert code == 0, f"{name} run {attempt} exited {code}"
            dirs.append(out_dir)
        first = {p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file()}
        second = {p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file()}
        assert first == second, f"{name}: file sets differ"
        for rel in sorted(first):
            if rel.name == "manifest.txt":  # embeds the output path itself
                continue
            compared += 1
            if (dirs[0] / rel).read_bytes() != (dirs[1] / rel).read_bytes():
                mismatched.append(f"{name}/{rel}")
    capsys.readouterr()
    _verdict(
        10,
        [
            (compared >= 12, f"{compared} report files compared across 5 pipelines"),
            (not mismatched, f"byte-identical re-runs (diffs: {mismatched or 'none'})"),
        ],
    )
