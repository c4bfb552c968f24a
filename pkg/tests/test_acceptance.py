"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
report lines on stdout.
"""

import math
import time
import warnings

import numpy as np
import pytest

from spsmvg.cli import main as cli_main
from spsmvg.data import SplitSpec, build_dataset, load_manifest
from spsmvg.errors import NonConvergenceWarning
from spsmvg.experiment import make_hyper, prepare_splits, rank_manifest, train_model
from spsmvg.gradcheck import run_gradcheck
from spsmvg.model import POOLING_MODES
from spsmvg.mvgraph import apply_threshold, build_affinity, normalize
from spsmvg.ranking import fit_bradley_terry
from spsmvg.synth import SynthSpec, gen_synthetic, load_truth
from spsmvg.training import TrainConfig, evaluate, init_params
from spsmvg.views import ViewConfig


def _report(num: int, desc: str, fn) -> None:
    try:
        fn()
    except BaseException:
        print(f"[criterion {num}] FAIL: {desc}")
        raise
    print(f"[criterion {num}] PASS: {desc}")


# ---------------------------------------------------------------------------
# shared fixtures

@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_corpus")
    manifest_path = gen_synthetic(root, SynthSpec(series=40, photos_per_series=4,
                                                  size=32, seed=7))
    return root, load_manifest(manifest_path)


@pytest.fixture(scope="module")
def trained(corpus):
    """Default-config training run on the synthetic corpus (criteria 4, 5, 8)."""
    root, manifest = corpus
    view_cfg = ViewConfig()
    config = TrainConfig()
    cache = root / "cache"
    train_ds, val_ds, test_ds = prepare_splits(manifest, view_cfg, SplitSpec(), cache)
    params = init_params(make_hyper(view_cfg), config.seed)
    initial_loss = evaluate(train_ds, params, config).loss
    t0 = time.time()
    logs = train_model(train_ds, val_ds, params, config)
    elapsed = time.time() - t0
    return {
        "root": root, "manifest": manifest, "view_cfg": view_cfg, "config": config,
        "cache": cache, "train_ds": train_ds, "val_ds": val_ds, "test_ds": test_ds,
        "params": params, "initial_loss": initial_loss, "logs": logs,
        "elapsed": elapsed,
    }


# ---------------------------------------------------------------------------
# criterion 1: gradient oracle

def test_criterion_1_gradient_oracle():
    def check():
        t0 = time.time()
        for mode in ("max", "avg", "max_avg", "null"):
            err = run_gradcheck(mode, seed=0, eps=1e-5)
            assert err <= 1e-4, f"mode {mode}: max relative error {err:.3e}"
        elapsed = time.time() - t0
        assert elapsed < 30.0, f"gradcheck took {elapsed:.1f}s"

    _report(1, "analytic gradients match finite differences (tol 1e-4, <30s)", check)


# ---------------------------------------------------------------------------
# criterion 2: graph properties

def test_criterion_2_graph_properties():
    def check():
        rng = np.random.default_rng(0)
        for _ in range(1000):
            l = int(rng.integers(2, 7))
            C = int(rng.integers(4, 13))
            V = rng.normal(size=(l, C))
            A = build_affinity(V)
            np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-9)
            A_scaled = build_affinity(7.0 * V)
            assert np.max(np.abs(A_scaled - A)) <= 1e-12
            for lam in (0.0, 1.0 / l, 0.9):
                A_thr = apply_threshold(A, lam)
                np.testing.assert_array_equal(A_thr[0, :], A[0, :])
                np.testing.assert_array_equal(A_thr[:, 0], A[:, 0])
                S = normalize(A_thr)
                assert np.max(np.abs(S - S.T)) <= 1e-9

    _report(2, "affinity/normalization properties hold on 1000 random view matrices",
            check)


# ---------------------------------------------------------------------------
# criterion 3: Bradley-Terry vs simplex grid search

def _grid_tables(res=1e-3):
    n = int(round(1.0 / res))
    i = np.arange(1, n - 1)
    si, sj = np.meshgrid(i, i, indexing="ij")
    sk = n - si - sj
    valid = sk >= 1
    s = np.stack([si[valid], sj[valid], sk[valid]], axis=1).astype(np.float64) * res
    log_s = np.log(s)
    log_sums = {
        (a, b): np.log(s[:, a] + s[:, b]) for a in range(3) for b in range(a + 1, 3)
    }
    return s, log_s, log_sums


def test_criterion_3_bradley_terry_oracle():
    def check():
        s_grid, log_s, log_sums = _grid_tables()
        rng = np.random.default_rng(1)
        for _ in range(200):
            P = np.zeros((3, 3))
            for a in range(3):
                for b in range(a + 1, 3):
                    P[a, b] = rng.uniform(0.05, 0.95)
                    P[b, a] = 1.0 - P[a, b]
            ll = np.zeros(len(s_grid))
            for a in range(3):
                for b in range(3):
                    if a != b:
                        pair = (min(a, b), max(a, b))
                        ll += P[a, b] * (log_s[:, a] - log_sums[pair])
            oracle = s_grid[np.argmax(ll)]
            mm = fit_bradley_terry(P)
            # the oracle is quantized to the 1e-3 grid, so compare on that
            # grid: the snapped MM point must sit within one cell of the
            # argmax and tie its log-likelihood (flat optima can make two
            # adjacent cells equally optimal)
            snapped = np.round(mm, 3)
            assert np.max(np.abs(snapped - oracle)) <= 1e-3 + 1e-12, (P, mm, oracle)
            ll_snapped = sum(
                P[a, b] * (math.log(snapped[a]) - math.log(snapped[a] + snapped[b]))
                for a in range(3) for b in range(3) if a != b
            )
            # one grid cell moves the log-likelihood by O(1e-5) at this
            # curvature, so the tie tolerance just guards gross mismatches
            assert ll_snapped >= ll.max() - 1e-4, (P, mm, oracle)

        two = np.array([[0.0, 0.75], [0.25, 0.0]])
        np.testing.assert_allclose(fit_bradley_terry(two), [0.75, 0.25], atol=1e-6)

        cyc = np.array([[0.0, 0.8, 0.2], [0.2, 0.0, 0.8], [0.8, 0.2, 0.0]])
        np.testing.assert_allclose(fit_bradley_terry(cyc), 1 / 3, atol=1e-8)

    _report(3, "MM scores match 1e-3 simplex grid-search MLE on 200 random matrices",
            check)


# ---------------------------------------------------------------------------
# criterion 4: learnability

def test_criterion_4_learnability(trained):
    def check():
        assert abs(trained["initial_loss"] - math.log(2)) <= 1e-9
        best = max(log.val.accuracy for log in trained["logs"])
        assert best >= 0.95, f"best held-out accuracy {best:.4f}"
        assert len(trained["logs"]) <= 200
        assert trained["elapsed"] < 60.0, f"training took {trained['elapsed']:.1f}s"

    _report(4, "default config reaches held-out accuracy >= 0.95 in <=200 epochs "
               "(<60s), initial loss ln 2", check)


# ---------------------------------------------------------------------------
# criterion 5: ablation grid sanity

def test_criterion_5_ablation_grid(trained):
    def check():
        from spsmvg.experiment import run_ablation

        config = TrainConfig(epochs=40)
        rows = run_ablation(trained["manifest"], trained["view_cfg"], config,
                            SplitSpec(), trained["cache"])
        assert len(rows) == len(POOLING_MODES) * 3
        assert {r["pooling"] for r in rows} == set(POOLING_MODES)
        assert {r["views"] for r in rows} == {"V+C+H", "V+C+S", "V+H+S"}
        null_best = max(r["accuracy"] for r in rows if r["pooling"] == "null")
        pooled_best = max(r["accuracy"] for r in rows if r["pooling"] != "null")
        assert null_best <= pooled_best + 0.02, (null_best, pooled_best)

    _report(5, "ablation grid completes 4 pooling modes x 3 view combos; "
               "null pooling never beats pooled by > 0.02", check)


# ---------------------------------------------------------------------------
# criterion 6: determinism + checkpoint round trip

def test_criterion_6_determinism(tmp_path):
    def check():
        root = tmp_path / "corpus"
        cli_main(["synth", "--out", str(root), "--series", "8", "--photos", "3",
                  "--size", "16", "--seed", "2"])
        manifest = str(root / "manifest.tsv")
        base = ["train", "--manifest", manifest, "--C", "8", "--d-hidden", "8",
                "--batch-size", "8", "--seed", "0"]

        # two identical runs -> bit-identical checkpoints
        for name in ("a.ckpt", "b.ckpt"):
            assert cli_main(base + ["--epochs", "4", "--out", str(tmp_path / name)]) == 0
        bytes_a = (tmp_path / "a.ckpt").read_bytes()
        assert bytes_a == (tmp_path / "b.ckpt").read_bytes()

        # save/load round-trips bit-exactly
        from spsmvg.checkpoint import load_checkpoint, params_from_checkpoint, save_checkpoint

        ckpt = load_checkpoint(tmp_path / "a.ckpt")
        params = params_from_checkpoint(ckpt)
        save_checkpoint(params, ckpt.train_config, ckpt.epoch, ckpt.rng_state,
                        tmp_path / "c.ckpt")
        assert bytes_a == (tmp_path / "c.ckpt").read_bytes()

        # resume matches uninterrupted training
        assert cli_main(base + ["--epochs", "2", "--out", str(tmp_path / "half.ckpt")]) == 0
        assert cli_main(["train", "--manifest", manifest,
                         "--resume", str(tmp_path / "half.ckpt"),
                         "--epochs", "4", "--out", str(tmp_path / "resumed.ckpt")]) == 0
        assert bytes_a == (tmp_path / "resumed.ckpt").read_bytes()

    _report(6, "bit-identical checkpoints across reruns, exact round trip, "
               "resume matches uninterrupted training", check)


# ---------------------------------------------------------------------------
# criterion 7: metrics correctness

def test_criterion_7_metrics_fixture():
    def check():
        from spsmvg.data import PairDataset, PairSample
        from spsmvg.model import Hyper

        hyper = Hyper((("deep", 5), ("color", 4)), C=8, d_hidden=8, r=4, h1=12, h2=8)
        params = init_params(hyper, 0)
        rng = np.random.default_rng(4)
        params["fc3/w"].value[...] = rng.normal(scale=0.5,
                                                size=params["fc3/w"].value.shape)
        raws = {"deep": rng.normal(size=(12, 5)), "color": rng.normal(size=(12, 4))}
        index = {f"a{p}": p for p in range(6)} | {f"b{p}": 6 + p for p in range(6)}
        labels = [0, 1, 0, 0, 0, 0]
        pairs = [PairSample(f"s{p}", f"a{p}", f"b{p}", labels[p]) for p in range(6)]
        dataset = PairDataset(raws, index, pairs)
        config = TrainConfig(views=("deep", "color"), lam=0.5)
        m = evaluate(dataset, params, config)
        # hand-computed from predictions [0,1,0,0,0,1] vs labels [0,1,0,0,0,0]:
        # TP=1, FP=1, FN=0, TN=4 -> accuracy 5/6, F1 2/3
        assert m.accuracy == pytest.approx(5 / 6, abs=1e-12)
        assert m.f1 == pytest.approx(2 / 3, abs=1e-12)

    _report(7, "evaluate reproduces hand-computed accuracy 5/6 and F1 2/3 "
               "on the 6-pair fixture", check)


# ---------------------------------------------------------------------------
# criterion 8: end-to-end ranking

def test_criterion_8_ranking_selection_rate(trained):
    def check():
        full_ds = build_dataset(trained["manifest"], trained["view_cfg"],
                                trained["cache"])
        with warnings.catch_warnings():
            # near-converged MM fits (delta ~1e-7) do not affect the argmax
            warnings.simplefilter("ignore", NonConvergenceWarning)
            results = rank_manifest(trained["manifest"], full_ds,
                                    trained["params"], trained["config"])
        truth = load_truth(trained["root"] / "truth.tsv")
        assert len(results) == 40
        hits = 0
        for res in results:
            best_img = max(truth[res.series_id], key=lambda row: row[1])[0]
            hits += res.photos[res.best] == best_img
        rate = hits / len(results)
        assert rate >= 0.90, f"selection rate {rate:.3f}"

    _report(8, "ranked best photo matches highest latent quality in >= 90% "
               "of 40 series", check)
