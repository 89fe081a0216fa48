"""Acceptance suite: one test per criterion, each logging a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
repeated in the terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import micro
import oracles
from krf import KRFClassifier, bundled_graph, generate_synthetic, split
from krf import model as M
from krf import tensor as T
from krf.correlation import ablate, cooccurrence_counts, integrate, normalize, threshold_filter
from krf.data import SongSample, SyntheticConfig, load_dataset, save_dataset
from krf.gcn import gcn_layer, label_similarity_heatmap
from krf.gradcheck import grad_check
from krf.han import encode_batch, make_batch
from krf.kg import Edge, StyleGraph, check_scores, knowledge_matrix
from krf.metrics import f1_scores, hamming_loss, one_error

# desk-scale training setup shared by the recovery, minority and sweep criteria
TRAIN = dict(word_dim=32, word_hidden=16, review_hidden=16, label_dim=32, gcn_hidden=64, label_out=32,
             epochs=20, learning_rate=0.01, batch_size=16)
SEEDS = (7, 8, 9)
ABLATIONS = ("full", "no_stat", "no_knowledge", "han_only")
N_CORPUS = 2000
N_POOL = 4000  # extra planted samples (past the corpus prefix) for the minority-style F1


# -- 1 -----------------------------------------------------------------------


def test_gradient_fidelity(acceptance_log):
    start = time.perf_counter()
    p, A, batch, Y = micro.setup("full")
    assert batch.n_songs == 4 and A.shape == (2, 5, 5)
    rep = grad_check(lambda: M.loss(M.forward(batch, p, A), Y), dict(p.items()), eps=1e-5, tol=1e-4)
    elapsed = time.perf_counter() - start
    ok = rep.passed and set(rep.max_rel_error) == set(p.names()) and elapsed < 60
    acceptance_log(1, "gradient fidelity", ok,
                   f"{len(rep.max_rel_error)} parameters, worst rel error {rep.worst:.2e}, {elapsed:.1f}s")
    assert ok, rep.summary()


# -- 2 -----------------------------------------------------------------------


def _random_instance(rng):
    n = int(rng.integers(2, 8))
    styles = [f"s{i}" for i in range(n)]
    label_sets = [list(rng.choice(styles, size=int(rng.integers(1, n + 1)), replace=False))
                  for _ in range(int(rng.integers(0, 30)))]
    pairs = list(itertools.combinations(styles, 2))
    chosen = rng.permutation(len(pairs))[: int(rng.integers(0, len(pairs) + 1))]
    relations = ("fusion", "super_subordinate", "coordinate")
    edges = [Edge(*pairs[k], relations[int(rng.integers(3))]) for k in chosen]
    A = rng.uniform(0, 10, size=(n, n)) * (rng.random((n, n)) < 0.7)
    A = np.triu(A) + np.triu(A, 1).T
    return styles, label_sets, StyleGraph(styles, edges), A, float(rng.integers(0, 6))


def _max_diff(got, ref):
    return float(np.max(np.abs(np.asarray(got) - np.asarray(ref)))) if np.size(got) else 0.0


def test_matrix_oracles(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    scores = check_scores(None)
    worst = dict.fromkeys(("cooccurrence", "threshold", "normalize", "knowledge"), 0.0)
    for _ in range(200):
        styles, label_sets, g, A, tau = _random_instance(rng)
        C = cooccurrence_counts(label_sets, styles)
        worst["cooccurrence"] = max(worst["cooccurrence"], _max_diff(C, oracles.cooccurrence(label_sets, styles)))
        worst["threshold"] = max(worst["threshold"], _max_diff(threshold_filter(A, tau),
                                                               oracles.threshold(A.tolist(), tau)))
        N = normalize(A)
        D = A.sum(axis=1)
        entrywise = [[A[i, j] / math.sqrt(D[i] * D[j]) if D[i] > 0 and D[j] > 0 else 0.0
                      for j in range(len(styles))] for i in range(len(styles))]
        worst["normalize"] = max(worst["normalize"], _max_diff(N, entrywise),
                                 _max_diff(N, oracles.normalize(A.tolist())))
        edges = [(e.a, e.b, e.relation) for e in g.edges]
        worst["knowledge"] = max(worst["knowledge"], _max_diff(knowledge_matrix(g),
                                                               oracles.knowledge(styles, edges, scores)))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-12 and elapsed < 10
    acceptance_log(2, "matrix oracles", ok,
                   "200 instances, max |diff| " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                   + f", {elapsed:.1f}s")
    assert ok


# -- 3 -----------------------------------------------------------------------


def test_metric_oracles(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(1000):
        n_labels = int(rng.integers(1, 8))
        n = int(rng.integers(1, 10))
        pred = [set(np.flatnonzero(rng.random(n_labels) < 0.4).tolist()) for _ in range(n)]
        gold = [set(rng.choice(n_labels, size=int(rng.integers(1, n_labels + 1)), replace=False).tolist())
                for _ in range(n)]
        scores = rng.integers(-4, 5, size=(n, n_labels)).astype(float)  # integer scores make ties common
        macro, micro_f1, _ = f1_scores(pred, gold, n_labels)
        ref_macro, ref_micro = oracles.f1(pred, gold, n_labels)
        worst = max(worst, abs(macro - ref_macro), abs(micro_f1 - ref_micro),
                    abs(hamming_loss(pred, gold, n_labels) - oracles.hamming(pred, gold, n_labels)),
                    abs(one_error(scores, gold) - oracles.one_error(scores.tolist(), gold)))
    macro, micro_f1, _ = f1_scores([{0}, {0, 1}], [{1}, {0, 1}], 2)
    worked = macro == 2 / 3 and micro_f1 == 2 / 3
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and worked and elapsed < 5
    acceptance_log(3, "metric oracles", ok,
                   f"1000 instances, max |diff| {worst:.1e}, worked example macro={macro!r} micro={micro_f1!r}, "
                   f"{elapsed:.1f}s")
    assert ok


# -- 4 and 5 ----------------------------------------------------------------


@pytest.fixture(scope="module")
def ablation_runs():
    """Train every ablation on the planted corpus of each seed; reused by criteria 4 and 5."""
    g = bundled_graph("styles8")
    start = time.perf_counter()
    runs = {}
    for seed in SEEDS:
        corpus = generate_synthetic(g.styles, g, SyntheticConfig(n_samples=N_CORPUS + N_POOL, seed=seed))
        sp = split(corpus.samples[:N_CORPUS], seed)
        pool = corpus.samples[N_CORPUS:]
        for abl in ABLATIONS:
            est = KRFClassifier(graph=g, ablation=abl, random_state=seed, **TRAIN)
            est.fit(sp.train, sp.train, X_val=sp.validation, y_val=sp.validation)
            test = est.evaluate(sp.test, sp.test)
            minority = est.evaluate(pool, pool).per_label[corpus.minority]["f1"]
            runs[seed, abl] = {"micro": test.micro_f1, "minority_f1": minority, "epochs": len(est.history_),
                               "minority": corpus.minority}
    return runs, time.perf_counter() - start


def ordering_holds(values, slack=0.01):
    """Non-increasing along ``values`` with at most one adjacent inversion of at most ``slack``."""
    inversions = [b - a for a, b in zip(values, values[1:]) if b > a]
    return len(inversions) == 0 or (len(inversions) == 1 and inversions[0] <= slack)


def test_ordering_helper():
    assert ordering_holds([0.9, 0.8, 0.7, 0.6])
    assert ordering_holds([0.9, 0.905, 0.7, 0.6])
    assert not ordering_holds([0.9, 0.92, 0.7, 0.6])
    assert not ordering_holds([0.9, 0.905, 0.7, 0.705])


@pytest.mark.slow
def test_synthetic_recovery(ablation_runs, acceptance_log):
    runs, elapsed = ablation_runs
    full7 = runs[7, "full"]
    per_seed = {s: [runs[s, a]["micro"] for a in ABLATIONS] for s in SEEDS}
    orders = {s: ordering_holds(v) for s, v in per_seed.items()}
    ok = full7["micro"] >= 0.85 and full7["epochs"] <= 20 and all(orders.values()) and elapsed < 15 * 60
    detail = f"seed 7 full micro F1 {full7['micro']:.4f}; " + "; ".join(
        f"seed {s} " + " ".join(f"{a}={v:.4f}" for a, v in zip(ABLATIONS, per_seed[s]))
        + (" ordered" if orders[s] else " out of order") for s in SEEDS) + f"; {elapsed / 60:.1f} min"
    acceptance_log(4, "synthetic recovery", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_minority_style(ablation_runs, acceptance_log):
    runs, _ = ablation_runs
    gaps = [runs[s, "full"]["minority_f1"] - runs[s, "han_only"]["minority_f1"] for s in SEEDS]
    mean_gap = float(np.mean(gaps))
    ok = mean_gap >= 0.05
    detail = f"minority {runs[SEEDS[0], 'full']['minority']!r}; " + ", ".join(
        f"seed {s} full {runs[s, 'full']['minority_f1']:.3f} vs han_only {runs[s, 'han_only']['minority_f1']:.3f}"
        for s in SEEDS) + f"; mean gap {mean_gap:+.3f}"
    acceptance_log(5, "minority style", ok, detail)
    assert ok, detail


# -- 6 -----------------------------------------------------------------------

SWEEP_N = 600
SWEEP_NOISE = 0.1
SWEEP_POOL = 2000


@pytest.mark.slow
def test_tau_sweep_shape(acceptance_log):
    g = bundled_graph("styles8")
    corpus = generate_synthetic(g.styles, g, SyntheticConfig(n_samples=SWEEP_N + SWEEP_POOL, seed=7,
                                                             rare_pair_noise=SWEEP_NOISE))
    sp = split(corpus.samples[:SWEEP_N], 7)
    pool = corpus.samples[SWEEP_N:]
    curve = []
    for tau in range(9):
        est = KRFClassifier(graph=g, tau=tau, random_state=7, **TRAIN)
        est.fit(sp.train, sp.train, X_val=sp.validation, y_val=sp.validation)
        curve.append(est.evaluate(pool, pool).micro_f1)
    interior = max(curve[1:8])
    ok = interior > curve[0] and interior > curve[8]
    detail = "micro F1 by tau " + " ".join(f"{t}:{v:.4f}" for t, v in enumerate(curve)) + \
        f"; argmax tau={int(np.argmax(curve))}"
    acceptance_log(6, "tau sweep shape", ok, detail)
    assert ok, detail


# -- 7 -----------------------------------------------------------------------


def test_determinism_and_roundtrips(acceptance_log, tmp_path):
    g = bundled_graph("styles8")
    corpus = generate_synthetic(g.styles, g, n_samples=150, seed=3)
    sp = split(corpus.samples, 3)
    small = dict(TRAIN, word_dim=8, word_hidden=4, review_hidden=4, label_dim=8, gcn_hidden=8, label_out=4,
                 epochs=1)
    a = KRFClassifier(graph=g, random_state=5, **small).fit(sp.train, sp.train)
    b = KRFClassifier(graph=g, random_state=5, **small).fit(sp.train, sp.train)
    same_loss = a.history_[0]["train_loss"] == b.history_[0]["train_loss"]

    a.save(tmp_path / "m.krfckpt")
    loaded = KRFClassifier.load(tmp_path / "m.krfckpt")
    same_forward = loaded.decision_function(sp.test).tobytes() == a.decision_function(sp.test).tobytes()

    save_dataset(tmp_path / "d.jsonl", corpus.samples)
    again = load_dataset(tmp_path / "d.jsonl")
    save_dataset(tmp_path / "d2.jsonl", again)
    same_data = again == corpus.samples and \
        (tmp_path / "d.jsonl").read_bytes() == (tmp_path / "d2.jsonl").read_bytes()

    ok = same_loss and same_forward and same_data
    acceptance_log(7, "determinism and round-trips", ok,
                   f"epoch-1 loss equal={same_loss}, checkpoint forward bit-exact={same_forward}, "
                   f"dataset round-trip exact={same_data}")
    assert ok


# -- 8 -----------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def _softmax_and_attention(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=20, size=(int(rng.integers(1, 6)), int(rng.integers(1, 9))))
    assert np.all(np.abs(T.softmax(T.Tensor(x), axis=1).data.sum(axis=1) - 1) <= 1e-9)
    p = micro.setup("full", seed=int(rng.integers(100)))[0]
    songs = micro.songs(int(rng.integers(1000)), n=int(rng.integers(1, 5)))
    batch = make_batch(songs)
    _, alpha_w, alpha_s = encode_batch(batch, p.han, return_attention=True)
    assert np.all(np.abs(alpha_w.sum(axis=1) - 1) <= 1e-9)
    assert np.all(np.abs(alpha_s.sum(axis=1) - 1) <= 1e-9)
    assert np.all(alpha_w[batch.word_mask == 0] < 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def _heatmap_and_normalized(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    H = label_similarity_heatmap(rng.normal(size=(n, int(rng.integers(1, 6)))))
    assert np.abs(H - H.T).max() <= 1e-9 and H.min() >= 0 and H.max() <= 1
    A = rng.uniform(0, 5, size=(n, n)) * (rng.random((n, n)) < 0.6)
    A = A + A.T
    N = normalize(A)
    assert np.abs(N - N.T).max() <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(10, 300), st.integers(0, 2**31 - 1))
def _split_disjoint(n, seed):
    samples = [SongSample(f"x{i}", "", ("r",), ("rock",)) for i in range(n)]
    sp = split(samples, seed)
    ids = [[s.id for s in part] for part in (sp.train, sp.validation, sp.test)]
    flat = [i for part in ids for i in part]
    assert len(flat) == len(set(flat)) == n


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def _ablation_slices(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    S, K = (normalize(np.abs(np.triu(rng.normal(size=(n, n)))) + np.abs(np.triu(rng.normal(size=(n, n)))).T)
            for _ in range(2))
    A = integrate(S, K)
    H = T.Tensor(rng.normal(size=(n, 3)))
    W = T.Tensor(rng.normal(size=(3, 4)))
    no_stat, no_knowledge = ablate(A, "no_stat"), ablate(A, "no_knowledge")
    assert not no_stat[0].any() and np.array_equal(no_stat[1], K)
    assert not no_knowledge[1].any() and np.array_equal(no_knowledge[0], S)
    np.testing.assert_allclose(gcn_layer(no_stat, H, W).data, gcn_layer(np.stack([K, 0 * K]), H, W).data,
                               atol=1e-12)
    np.testing.assert_allclose(gcn_layer(no_knowledge, H, W).data, gcn_layer(np.stack([S, 0 * S]), H, W).data,
                               atol=1e-12)


def test_structural_invariants(acceptance_log):
    start = time.perf_counter()
    failures = []
    for name, prop in [("softmax/attention", _softmax_and_attention), ("heatmap/normalize", _heatmap_and_normalized),
                       ("split", _split_disjoint), ("ablation", _ablation_slices)]:
        try:
            prop()
        except Exception as exc:  # noqa: BLE001 - reported below
            failures.append(f"{name}: {type(exc).__name__}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 60
    acceptance_log(8, "structural invariants", ok,
                   f"4 property groups, failures {failures or 'none'}, {elapsed:.1f}s")
    assert ok, failures
