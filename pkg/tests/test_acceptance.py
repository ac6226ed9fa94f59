"""Acceptance criteria 1-9, one test each, at their stated tolerances.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
Criteria 5 and 8 train alexnet-mini for 40 epochs six times in total and
dominate the runtime (about four minutes per run on one core).
"""
import csv
import hashlib
import io
import time
from contextlib import contextmanager
from dataclasses import replace

import numpy as np
import pytest
from gradcheck import CASES, TOL, run_case
from oracles import adam_scalar, flood_fill_labels, otsu_histogram_exact, rmsprop_scalar, sgdm_scalar

from plastisort.cli import run as cli
from plastisort.harness.classify import classify
from plastisort.harness.config import DataConfig, TrainConfig
from plastisort.harness.dataset import split_dataset
from plastisort.harness.evaluation import evaluate
from plastisort.harness.sweep import sweep
from plastisort.harness.training import listing_for, train
from plastisort.imgio import RasterImage, load_image
from plastisort.nncore.network import WeightStore
from plastisort.nncore.weightfile import dumps
from plastisort.optim import SolverConfig, SolverState, init_state, solver_step
from plastisort.rng import derive_seed
from plastisort.segment import BinaryImage, label_components, otsu_threshold, segment_image
from plastisort.synthgen import SynthSpec, generate_dataset, generate_tray

SEEDS = range(5)
RUN_BUDGET_S = 15 * 60


@contextmanager
def criterion(n, record):
    state = {"ok": False, "detail": ""}
    try:
        yield state
    except Exception as exc:
        record(n, False, f"{state['detail']} raised {exc!r}".strip())
        raise
    record(n, state["ok"], state["detail"])
    assert state["ok"], state["detail"]


def sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- 1 ------------------------------------------------------------------------------

def random_gray(rng, i):
    h, w = rng.integers(16, 257, 2)
    kind = i % 4
    if kind == 0:
        px = rng.integers(0, 256, (h, w))
    elif kind == 1:  # narrow band, many empty bins
        lo = rng.integers(0, 200)
        px = rng.integers(lo, lo + rng.integers(2, 56), (h, w))
    elif kind == 2:  # a handful of levels, heavy ties
        px = rng.choice(rng.integers(0, 256, rng.integers(2, 6)), (h, w))
    else:
        px = rng.normal(rng.uniform(0, 255), rng.uniform(1, 80), (h, w))
    return np.clip(px, 0, 255).astype(np.uint8)


def crafted_bimodal(rng):
    out = []
    for j, (m0, m1, s, frac) in enumerate([(40, 200, 5, 0.5), (30, 220, 10, 0.2), (90, 160, 15, 0.7),
                                           (0, 255, 0, 0.5), (10, 12, 0, 0.5), (60, 190, 3, 0.95),
                                           (100, 140, 20, 0.5), (20, 245, 8, 0.1), (128, 129, 0, 0.3),
                                           (5, 250, 30, 0.5)]):  # fmt: skip
        h, w = 32 + 16 * j, 200 - 12 * j
        n0 = int(frac * h * w)
        vals = np.concatenate([rng.normal(m0, s, n0), rng.normal(m1, s, h * w - n0)])
        out.append(np.clip(np.rint(rng.permutation(vals)), 0, 255).astype(np.uint8).reshape(h, w))
    return out


def test_criterion_1_otsu_oracle(record_criterion):
    with criterion(1, record_criterion) as c:
        rng = np.random.default_rng(2024)
        images = [random_gray(rng, i) for i in range(200)] + crafted_bimodal(rng)
        t0 = time.perf_counter()
        got = [otsu_threshold(RasterImage(px)) for px in images]
        elapsed = time.perf_counter() - t0
        mismatches = sum(tuple(g) != otsu_histogram_exact(px) for g, px in zip(got, images))
        c["detail"] = f"{len(images)} images, {mismatches} mismatches, {elapsed:.2f} s (< 5 s)"
        c["ok"] = mismatches == 0 and elapsed < 5


# --- 2 ------------------------------------------------------------------------------

def test_criterion_2_labeling_oracle(record_criterion):
    with criterion(2, record_criterion) as c:
        rng = np.random.default_rng(77)
        masks = []
        for i in range(200):
            h, w = rng.integers(1, 96, 2)
            density = rng.uniform(0.05, 0.8)
            m = rng.random((h, w)) < density
            if i % 5 == 0:  # blobby masks with long chains
                m = np.kron(m[: h // 4 + 1, : w // 4 + 1], np.ones((4, 4), bool))[:h, :w]
            masks.append(m)
        bad, elapsed = 0, 0.0
        for m in masks:
            for conn in (4, 8):
                t0 = time.perf_counter()
                lm = label_components(BinaryImage(m), conn)
                elapsed += time.perf_counter() - t0
                ref, count = flood_fill_labels(m, conn)
                bad += lm.count != count or not np.array_equal(lm.labels, ref)
        c["detail"] = f"400 labelings, {bad} mismatches, {elapsed:.2f} s (< 10 s)"
        c["ok"] = bad == 0 and elapsed < 10


# --- 3 ------------------------------------------------------------------------------

def test_criterion_3_gradient_checks(record_criterion):
    with criterion(3, record_criterion) as c:
        t0 = time.perf_counter()
        worst = {}
        for kind, cases in CASES.items():
            assert len(cases) >= 5, kind
            worst[kind] = max(run_case(kind, case, seed=i) for i, case in enumerate(cases))
        elapsed = time.perf_counter() - t0
        summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
        c["detail"] = f"max rel. error per kind: {summary}; {elapsed:.1f} s (< 60 s)"
        c["ok"] = max(worst.values()) < TOL and elapsed < 60


# --- 4 ------------------------------------------------------------------------------

def _random_state(rng, kind, n):
    w = rng.standard_normal(n)
    g = rng.standard_normal(n) * rng.choice([1e-3, 1.0, 10.0])
    t = int(rng.integers(0, 500))
    if kind == "sgdm":
        moments = {"velocity": rng.standard_normal(n) * 0.01}
    elif kind == "adam":
        moments = {"m": rng.standard_normal(n) * 0.1, "v": rng.random(n) * 0.1}
    else:
        moments = {"mean_square": rng.random(n) * 0.1}
    return w, g, t, moments


def _one_dim(a):
    return WeightStore({0: (np.asarray(a, np.float64), np.zeros(1))})


def test_criterion_4_solver_oracles(record_criterion):
    with criterion(4, record_criterion) as c:
        rng = np.random.default_rng(99)
        worst = 0.0
        identity = True
        for kind in ("adam", "sgdm", "rmsprop"):
            cfg = SolverConfig(kind)
            for _ in range(100):
                n = int(rng.integers(1, 9))
                w, g, t, moments = _random_state(rng, kind, n)
                state = SolverState({k: _one_dim(v) for k, v in moments.items()}, t)
                new, _ = solver_step(cfg, state, _one_dim(w), _one_dim(g))
                for i in range(n):
                    if kind == "sgdm":
                        ref = sgdm_scalar(w[i], moments["velocity"][i], g[i], cfg.lr, cfg.momentum)[0]
                    elif kind == "adam":
                        ref = adam_scalar(w[i], moments["m"][i], moments["v"][i], g[i], t + 1, cfg.lr,
                                          cfg.beta1, cfg.beta2, cfg.epsilon)[0]  # fmt: skip
                    else:
                        ref = rmsprop_scalar(w[i], moments["mean_square"][i], g[i], cfg.lr, cfg.decay,
                                             cfg.epsilon)[0]  # fmt: skip
                    worst = max(worst, abs(float(new.params[0][0][i]) - ref))
            ws = _one_dim(rng.standard_normal(6))
            new, _ = solver_step(cfg, init_state(cfg, ws), ws, ws.zeros_like())
            identity &= new.equal(ws)
        c["detail"] = f"300 steps, max abs. deviation {worst:.1e} (< 1e-12), zero-gradient identity {identity}"
        c["ok"] = worst < 1e-12 and identity


# --- 5 ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def default_data(tmp_path_factory):
    return generate_dataset(SynthSpec(), tmp_path_factory.mktemp("default"))


@pytest.fixture(scope="module")
def mini_runs(default_data):
    """Train alexnet-mini with the best settings for seeds 0-4 and evaluate the test split."""
    out = {}
    for seed in SEEDS:
        cfg = TrainConfig(seed=seed, data=DataConfig(root=str(default_data / "pieces")))
        listing = listing_for(cfg)
        t0 = time.perf_counter()
        weights, report = train(cfg, listing)
        elapsed = time.perf_counter() - t0
        spec = cfg.network_spec(len(listing.classes))
        test = evaluate(weights, listing, "test", spec, cfg.preprocess_params(spec.input_size))
        out[seed] = dict(cfg=cfg, listing=listing, weights=weights, report=report, test=test.overall,
                         time=elapsed)  # fmt: skip
    return out


def test_criterion_5_desk_scale_protocol(mini_runs, record_criterion):
    with criterion(5, record_criterion) as c:
        cfg = mini_runs[0]["cfg"]
        best = (cfg.network, cfg.solver.kind, cfg.batch_size, cfg.max_epochs, cfg.shuffle)
        assert best == ("alexnet-mini", "adam", 50, 40, "every-epoch"), best
        counts_ok = all(
            r["listing"].counts() == {k: {"train": 160, "val": 40, "test": 15} for k in ("ABS", "PS")}
            for r in mini_runs.values()
        )
        rows = []
        ok = counts_ok
        for seed, r in mini_runs.items():
            val, test, secs = r["report"].final_val_accuracy, r["test"], r["time"]
            ok &= val >= 90 and test >= 85 and secs <= RUN_BUDGET_S
            rows.append(f"seed {seed}: val {val:.2f}% test {test:.2f}% {secs:.0f} s")
        c["detail"] = "; ".join(rows) + f"; split 160/40/15 {counts_ok}"
        c["ok"] = ok


def test_calibration_reaches_ninety_within_ten_epochs(mini_runs):
    # the default synthetic spec is pinned so validation passes 90% by epoch 10
    for r in mini_runs.values():
        assert max(r["report"].val_accuracy[:10]) >= 90


def test_class_a_pieces_classified_as_class_a(mini_runs, default_data):
    r = mini_runs[0]
    assert r["report"].final_val_accuracy >= 95
    spec, cfg = r["cfg"].network_spec(), r["cfg"]
    with open(default_data / "trays" / "truth.csv") as fh:
        truth = list(csv.DictReader(fh))
    checked = 0
    for name in sorted({t["filename"] for t in truth}):
        dets = classify(spec, r["weights"], load_image(default_data / name),
                        cfg.preprocess_params(spec.input_size), cfg.crop_pad)  # fmt: skip
        for t in (t for t in truth if t["filename"] == name and t["class"] == "ABS"):
            (det,) = [d for d in dets if d.box.contains(float(t["cx"]), float(t["cy"]))]
            assert r["listing"].classes[det.label] == "ABS"
            checked += 1
    assert checked > 10


# --- 6 ------------------------------------------------------------------------------

def _check_runs_table(report, labels, text):
    lines = [l for l in text.splitlines() if l.startswith("|")]
    cells = [[v.strip() for v in l.strip("|").split("|")] for l in lines]
    assert cells[0] == [f"Epochs={report.cells[0].epochs}, MiniBS={report.cells[0].batch_size}"] + [
        f"Validation Acc ({l})" for l in labels
    ]
    assert [row[0] for row in cells[1:]] == ["Test 1", "Test 2", "Test 3", "Average"]
    pct = np.array([[float(v.rstrip("%")) for v in row[1:]] for row in cells[1:]])
    # the printed average follows from the printed runs (up to display rounding)
    assert np.abs(pct[:3].mean(axis=0) - pct[3]).max() <= 0.01


def _check_csv(report):
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert len(rows) == len(report.cells)
    for row, cell in zip(rows, report.cells):
        runs = [float(row[f"run_{i}"]) for i in (1, 2, 3)]
        assert abs(np.mean(runs) - float(row["mean"])) <= 1e-4
        assert cell.mean == sum(cell.runs) / 3


def test_criterion_6_sweep_structure(small_dataset, record_criterion):
    with criterion(6, record_criterion) as c:
        base = TrainConfig(network="tiny", seed=3, data=DataConfig(str(small_dataset / "pieces"), 0.2, 2))
        solvers = sweep("solvers", base)
        assert [(x.solver, x.epochs, x.batch_size, x.shuffle) for x in solvers.cells] == [
            (s, 10, 50, "every-epoch") for s in ("adam", "sgdm", "rmsprop")
        ]
        _check_runs_table(solvers, ["Adam", "sgdm", "rmsprop"], solvers.to_text())
        shuffles = sweep("shuffles", base)
        assert [(x.solver, x.shuffle) for x in shuffles.cells] == [
            ("adam", s) for s in ("never", "once", "every-epoch")
        ]
        _check_runs_table(shuffles, ["Never", "Once", "Every epoch"], shuffles.to_text())
        grid = sweep("batch-epoch", base)
        left = [(x.epochs, x.batch_size) for x in grid.cells if x.group == "epochs"]
        right = [(x.epochs, x.batch_size) for x in grid.cells if x.group == "batch"]
        assert left == [(40, b) for b in (20, 30, 40, 50, 60, 70)]
        assert right == [(e, 50) for e in (10, 20, 30, 40, 50, 60)]
        assert (40, 50) in left and (40, 50) in right
        body = [l for l in grid.to_text().splitlines() if l.startswith("|")]
        assert len(body) == 1 + 6
        for rep in (solvers, shuffles, grid):
            _check_csv(rep)
            assert all(len(x.runs) == 3 for x in rep.cells)
        # the three runs use seeds seed, seed+1, seed+2
        cfg = replace(base, max_epochs=10, batch_size=50)
        assert train(replace(cfg, seed=base.seed + 2))[1].final_val_accuracy == solvers.cells[0].runs[2]
        c["detail"] = "solver 3x3+mean, shuffle 3x3+mean, grid 6+6 incl. epochs=40/MiniBS=50; means recomputed"
        c["ok"] = True


# --- 7 ------------------------------------------------------------------------------

def test_criterion_7_segmentation_end_to_end(record_criterion):
    with criterion(7, record_criterion) as c:
        spec = SynthSpec()
        failures = []
        for i in range(50):
            k = 1 + i % 6
            img, truth = generate_tray(spec, derive_seed(7007, i), k)
            boxes = segment_image(img).boxes
            hits = [[b.contains(*p.centroid) for b in boxes] for p in truth]
            one_to_one = len(boxes) == k and all(sum(h) == 1 for h in hits) and all(
                sum(col) == 1 for col in zip(*hits)
            )
            if not one_to_one:
                failures.append((i, k, len(boxes)))
        c["detail"] = f"50 trays with K in 1..6, {len(failures)} failures {failures[:3]}"
        c["ok"] = not failures


# --- 8 ------------------------------------------------------------------------------

def test_criterion_8_determinism(mini_runs, default_data, tmp_path, record_criterion):
    with criterion(8, record_criterion) as c:
        out = tmp_path / "cli_seed0"
        assert cli(["train", "--data", str(default_data / "pieces"), "--out", str(out), "--seed", "0"]) == 0
        cli_bytes = (out / "weights.psnn").read_bytes()
        api_bytes = dumps(mini_runs[0]["weights"])
        weights_equal = sha(cli_bytes) == sha(api_bytes)
        tray = default_data / "trays" / "tray_005.pgm"
        hashes = {}
        for attempt in ("a", "b"):
            for jobs in ("1", "2", "4"):
                d = tmp_path / f"classify_{attempt}{jobs}"
                assert cli(["classify", "--weights", str(out / "weights.psnn"), "--image", str(tray),
                            "--jobs", jobs, "--out", str(d)]) == 0  # fmt: skip
                hashes[attempt + jobs] = sha((d / "detections.csv").read_bytes())
        n_det = (tmp_path / "classify_a1" / "detections.csv").read_text().count("\n") - 1
        classify_equal = len(set(hashes.values())) == 1
        c["detail"] = (f"40-epoch weights API vs CLI identical {weights_equal} ({sha(cli_bytes)[:12]}); "
                       f"classify hash over 2 runs x jobs 1/2/4 identical {classify_equal} ({n_det} boxes)")  # fmt: skip
        c["ok"] = weights_equal and classify_equal and n_det > 0


# --- 9 ------------------------------------------------------------------------------

def test_criterion_9_eval_report_identity(tmp_path, record_criterion):
    with criterion(9, record_criterion) as c:
        for cls in ("ABS", "PS"):
            (tmp_path / cls).mkdir()
            for i in range(16):
                (tmp_path / cls / f"{i:02d}.pgm").write_bytes(b"P5\n1 1\n255\n\x00")
        listing = split_dataset(tmp_path, 0.0, 15, seed=0)
        ps_test = sorted(it.path for it in listing.role("test") if listing.classes[it.label] == "PS")
        wrong = set(ps_test[:4])

        def mock(path):
            return 1 if path.parent.name == "PS" and path not in wrong else 0

        rep = evaluate(None, listing, "test", predictor=mock)
        overall = round(rep.overall, 2)
        # 15 + 11 correct is 26 of 30; that ratio is the 86.67% figure
        c["detail"] = f"overall {overall}% ({rep.correct.sum()}/30) matrix {rep.confusion.tolist()}"
        c["ok"] = (overall == 86.67 and rep.confusion.tolist() == [[15, 0], [4, 11]]
                   and "overall: 26/30" in rep.to_text())  # fmt: skip
