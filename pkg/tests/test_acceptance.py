"""Acceptance suite: one test per release criterion.

Each test enforces its quality threshold and runtime budget, then prints an
explicit ``PASS <criterion>: <measured margin>`` line (visible under
``pytest -v -s`` and in CI logs). Every random draw flows from fixed seeds,
so results are reproducible bit for bit; thresholds are asserted as written,
never loosened to fit a run.
"""
import json
import math
import os
import time

import numpy as np
import pytest

import algoselect.autodiff as ad
import algoselect.complexity as cx
import algoselect.evaluation as ev
import algoselect.layers as ly
import algoselect.model as md
from algoselect.checkpoint import TrainedSelector
from algoselect.cli import main as cli_main
from algoselect.embeddings import save_catalog, synth_catalog
from algoselect.scenario import (
    RunStatus,
    SplitIndex,
    build_scenario,
    apply_normalize,
    fit_feature_stats,
    load_scenario,
    restrict_algorithms,
    save_scenario,
    split_instances,
)
from algoselect.synthetic import make_centroid_scenario, make_planted_dims_scenario
from algoselect.training import TrainConfig, train_selector, train_stage1

# shared settings for the planted-world criteria (tuned once, then frozen)
E2E_MODEL = dict(embedding_dim=10, lstm_hidden=8, encoder_dim=16, top_k=8,
                 shared_dim=16, problem_hidden=(32,), algorithm_hidden=(32,),
                 scoring_hidden=(32,))
E2E_TRAIN = dict(learning_rate=0.02, epochs_stage1=30, epochs_stage2=30,
                 batch_size=128, optimizer="adam")


def _elapsed_under(t0: float, limit: float, label: str) -> float:
    dt = time.monotonic() - t0
    assert dt < limit, f"{label} took {dt:.1f}s, budget {limit:.0f}s"
    return dt


# --- criterion 1: baseline scores match an independent brute force ---------

def _oracle_tables(scenario):
    """Straight-line double-loop transcription of the scoring rules."""
    c = scenario.meta.cutoff_time
    table = []
    for row in scenario.runs:
        out = []
        for rec in row:
            if rec.status is RunStatus.OK and rec.runtime <= c:
                out.append(float(rec.runtime))
            else:
                out.append(10.0 * c)
        table.append(out)
    return table


def test_a01_baseline_scores_match_bruteforce():
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    statuses_pool = np.array(["ok", "ok", "ok", "timeout", "memout", "crash"])
    for case in range(100):
        n = int(rng.integers(2, 21))
        a = int(rng.integers(2, 9))
        c = float(rng.uniform(10.0, 500.0))
        rt = rng.uniform(0.0, 1.5 * c, size=(n, a))
        st = rng.choice(statuses_pool, size=(n, a))
        st[0, 0] = "ok"
        rt[0, 0] = c           # the cutoff itself still counts as solved
        st[0, a - 1] = "ok"
        rt[0, a - 1] = 1.2 * c  # finished late: penalized despite ok status
        scen = build_scenario(f"case{case}", c, [f"s{j}" for j in range(a)],
                              [f"p{j}" for j in range(n)],
                              rng.normal(size=(n, 3)), rt, st)

        oracle = _oracle_tables(scen)
        got = ev.par10_matrix(scen)
        for i in range(n):
            for j in range(a):
                assert got[i, j] == oracle[i][j]
                assert ev.par10(scen.runs[i][j].runtime,
                                scen.runs[i][j].status, c) == oracle[i][j]

        # minima, argmin, and cell values come from explicit loops; only the
        # final mean reduction is delegated so float summation order matches
        mean = lambda vals: float(np.mean(np.array(vals)))
        train_idx = list(range(0, n, 2))
        eval_idx = list(range(1, n, 2)) or [0]
        assert ev.vbs(scen, eval_idx) == mean([min(oracle[i]) for i in eval_idx])

        best, best_mean = 0, mean([oracle[i][0] for i in train_idx])
        for j in range(1, a):
            mean_j = mean([oracle[i][j] for i in train_idx])
            if mean_j < best_mean:  # strict: ties keep the lower index
                best, best_mean = j, mean_j
        sbs_id, sbs_eval = ev.sbs(scen, train_idx, eval_idx)
        assert sbs_id == scen.algorithms[best]
        assert sbs_eval == mean([oracle[i][best] for i in eval_idx])
    dt = _elapsed_under(t0, 5.0, "baseline scoring oracle")
    print(f"\nPASS baseline scores vs brute force: 100/100 scenarios exact ({dt:.1f}s)")


# --- criterion 2: gradients match central differences ----------------------

GRAD_TOL = 1e-4


def _kink_free_input(weights, biases, rng, size, margin=1e-3, tries=100):
    """Draw an input whose relu pre-activations all clear the kink."""
    for _ in range(tries):
        x = rng.normal(size=size)
        h, clear = x, True
        for w, b in zip(weights, biases):
            pre = w @ h + b
            clear = clear and bool(np.min(np.abs(pre)) > margin)
            h = np.maximum(pre, 0.0)
        if clear:
            return x
    raise AssertionError("no kink-free input found")


def _check_relu_mlp(rng, worst):
    mlp = ly.init_mlp([4, 5, 3], ("relu", "identity"), rng)
    ws = [l.weight.values for l in mlp.layers]
    bs = [l.bias.values for l in mlp.layers]
    x = ad.leaf(_kink_free_input(ws, bs, rng, 4), requires_grad=True)
    f = lambda t: ad.mse_loss(ly.mlp_forward(mlp, t), np.zeros(3))
    worst.append(ad.grad_check(f, x))
    g = lambda _t: ad.mse_loss(ly.mlp_forward(mlp, x), np.zeros(3))
    worst.append(ad.grad_check(g, mlp.layers[0].weight))
    worst.append(ad.grad_check(g, mlp.layers[1].bias))


def _check_lstm(rng, seed, worst):
    lstm = ly.init_lstm(3, 3, rng)
    readout = ly.init_mlp([6, 2], ("identity",), rng)
    tokens = rng.normal(size=(2, 3))
    f = lambda _t: ad.mse_loss(ly.lstm_encode(lstm, tokens, readout), np.zeros(2))
    cell_tensors = list(lstm.tensors()) + list(readout.tensors())
    # rotate through the cell's tensors so all of them are covered every
    # few seeds without blowing the runtime budget
    for k in range(4):
        worst.append(ad.grad_check(f, cell_tensors[(4 * seed + k) % len(cell_tensors)]))


def _check_selector(rng, worst):
    noise = (rng.gumbel(size=6), rng.gumbel(size=6))
    theta = ad.leaf(0.5 * rng.normal(size=6), requires_grad=True)
    f = lambda t: ad.mse_loss(
        ly.gumbel_weights(ly.GumbelSelector(t, 0.7), mode="train", noise=noise),
        np.zeros(6))
    worst.append(ad.grad_check(f, theta))
    f_eval = lambda t: ad.mse_loss(
        ly.gumbel_weights(ly.GumbelSelector(t, 0.7), mode="eval"), np.zeros(6))
    worst.append(ad.grad_check(f_eval, theta))


def _check_cosine(rng, worst):
    u = ad.leaf(rng.normal(size=5), requires_grad=True)
    v = ad.constant(rng.normal(size=5))
    worst.append(ad.grad_check(lambda t: ad.cosine_similarity(t, v), u))
    um = ad.leaf(rng.normal(size=(3, 4)), requires_grad=True)
    vm = ad.constant(rng.normal(size=(3, 4)))
    worst.append(ad.grad_check(
        lambda t: ad.mse_loss(ad.cosine_similarity(t, vm), np.zeros(3)), um))


def _check_full_graph(rng, seed, worst):
    # tanh keeps the whole graph smooth; relu is covered by the MLP check
    config = md.ModelConfig(embedding_dim=3, lstm_hidden=3, encoder_dim=4,
                            top_k=2, shared_dim=3, problem_hidden=(4,),
                            algorithm_hidden=(4,), scoring_hidden=(3,),
                            hidden_activation="tanh", temperature=0.8)
    params = md.init_model_params(config, 4, 2, rng, stage="stage1")
    seq = rng.normal(size=(2, 3))
    noise = (rng.gumbel(size=4), rng.gumbel(size=4))
    feats = ad.leaf(rng.normal(size=4), requires_grad=True)

    def score_graph(_t):
        gate = ly.gumbel_weights(params.selector, mode="train", noise=noise)
        return md.score(params, feats, seq, 0, gate)

    worst.append(ad.grad_check(score_graph, feats))
    tensors = list(params.trainable_tensors())
    worst.append(ad.grad_check(score_graph, tensors[seed % len(tensors)]))


def test_a02_gradients_match_finite_differences():
    t0 = time.monotonic()
    worst: list = []
    for seed in range(100):
        rng = np.random.default_rng([202, seed])
        _check_relu_mlp(rng, worst)
        _check_lstm(rng, seed, worst)
        _check_selector(rng, worst)
        _check_cosine(rng, worst)
        _check_full_graph(rng, seed, worst)
    peak = max(worst)
    assert peak <= GRAD_TOL, f"worst relative gradient error {peak:.3e}"
    dt = _elapsed_under(t0, 60.0, "gradient suite")
    print(f"\nPASS gradient checks: {len(worst)} comparisons over 100 seeds, "
          f"worst error {peak:.2e} <= {GRAD_TOL:.0e} ({dt:.1f}s)")


# --- criterion 3: sampled gates keep dimensions at their probability -------

def test_a03_gate_sampling_matches_keep_probability():
    t0 = time.monotonic()
    rng = np.random.default_rng(303)
    draws = 1_000_000
    margins = []
    for pi in (0.1, 0.5, 0.9):
        g_plus = rng.gumbel(size=draws)
        g_minus = rng.gumbel(size=draws)
        frac = float(np.mean(np.log(pi) + g_plus > np.log(1.0 - pi) + g_minus))
        tol = 3.0 * math.sqrt(pi * (1.0 - pi) / draws)
        assert abs(frac - pi) <= tol, f"pi={pi}: fraction {frac:.5f}"
        margins.append(abs(frac - pi) / tol)

        # the selector's own sampler decides the same event as tau -> 0
        dim = 200_000
        theta = ad.constant(np.full(dim, math.log(pi / (1.0 - pi))))
        sel = ly.GumbelSelector(theta, temperature=1e-3)
        w = ly.gumbel_weights(sel, mode="train",
                              noise=(rng.gumbel(size=dim), rng.gumbel(size=dim)))
        frac_sel = float(np.mean(w.values > 0.5))
        assert abs(frac_sel - pi) <= 4.0 * math.sqrt(pi * (1.0 - pi) / dim)
    dt = _elapsed_under(t0, 10.0, "gate sampling")
    print(f"\nPASS gate sampling: fractions within 3-sigma of keep probability "
          f"(worst margin {max(margins):.2f} of allowance) ({dt:.1f}s)")


# --- criterion 4: stage-1 selection recovers planted dimensions ------------

def test_a04_selection_recovers_planted_dimensions():
    t0 = time.monotonic()
    planted = (2, 9, 16, 23, 30)
    model_config = md.ModelConfig(
        embedding_dim=32, encoder_dim=32, token_encoder="mean_tokens",
        use_embedding_table=False, top_k=5, shared_dim=16,
        problem_hidden=(32,), algorithm_hidden=(32,), scoring_hidden=(32,))
    hits_per_seed = []
    for seed in range(10):
        scen, catalog, dims = make_planted_dims_scenario(
            num_instances=200, num_algorithms=6, encoder_dim=32,
            planted_dims=planted, cutoff=100.0, seed=seed,
            separation=6.0, noise=0.5)
        split = split_instances(scen, 0.8, seed)
        stage1 = train_stage1(scen, catalog, split, model_config,
                              TrainConfig(learning_rate=0.03, epochs_stage1=60,
                                          epochs_stage2=1, batch_size=128,
                                          optimizer="adam", seed=seed,
                                          tau_final=0.25))
        picked = set(int(i) for i in ly.select_topk(stage1.params.selector, 5))
        hits_per_seed.append(len(picked & set(dims)))
    good = sum(h >= 4 for h in hits_per_seed)
    assert good >= 8, f"recovered >=4/5 planted dims in only {good}/10 seeds: {hits_per_seed}"
    dt = _elapsed_under(t0, 300.0, "selection recovery")
    print(f"\nPASS planted-dimension recovery: {good}/10 seeds with >=4/5 dims "
          f"(hits {hits_per_seed}) ({dt:.1f}s)")


# --- criteria 5 and 6: end-to-end quality and ablation ordering ------------

_FULL_RUNS: dict = {}


def _e2e_world(seed):
    scen, catalog = make_centroid_scenario(num_instances=200, num_algorithms=6,
                                           num_features=10, cutoff=100.0,
                                           seed=seed, noise=0.8, separation=4.0)
    return scen, catalog, split_instances(scen, 0.8, seed)


def _full_report(seed):
    if seed not in _FULL_RUNS:
        scen, catalog, split = _e2e_world(seed)
        trained = train_selector(scen, catalog, split, md.ModelConfig(**E2E_MODEL),
                                 TrainConfig(seed=seed, **E2E_TRAIN))
        _FULL_RUNS[seed] = ev.evaluate(trained, scen, catalog, split)
    return _FULL_RUNS[seed]


def test_a05_end_to_end_closes_performance_gap():
    t0 = time.monotonic()
    gaps = []
    for seed in range(10):
        rep = _full_report(seed)
        assert rep.sbs_par10 > rep.vbs_par10  # the world keeps a wide gap
        gaps.append(rep.gap_closed)
    good = sum(g is not None and g >= 0.70 for g in gaps)
    assert good >= 8, f"gap >= 0.70 in only {good}/10 seeds: {np.round(gaps, 3)}"
    dt = _elapsed_under(t0, 600.0, "end-to-end quality")
    print(f"\nPASS end-to-end gap closure: {good}/10 seeds >= 0.70 "
          f"(gaps {[f'{g:.2f}' for g in gaps]}) ({dt:.1f}s)")


def test_a06_algorithm_tower_ablation_ordering():
    t0 = time.monotonic()
    ordered = 0
    pairs = []
    for seed in range(10):
        full_gap = _full_report(seed).gap_closed or 0.0
        scen, catalog, split = _e2e_world(seed)
        ablated = md.make_ablation(md.ModelConfig(**E2E_MODEL),
                                   "no_algorithm_features")
        rep = ev.evaluate(
            train_selector(scen, catalog, split, ablated,
                           TrainConfig(seed=seed, **E2E_TRAIN)),
            scen, catalog, split)
        af_gap = rep.gap_closed or 0.0
        ordered += full_gap > af_gap
        pairs.append((round(full_gap, 2), round(af_gap, 2)))
    assert ordered >= 8, f"full > no-algorithm-tower in only {ordered}/10 seeds: {pairs}"
    dt = _elapsed_under(t0, 600.0, "ablation ordering")
    print(f"\nPASS ablation ordering: dropping the algorithm tower hurts in "
          f"{ordered}/10 seeds {pairs} ({dt:.1f}s)")


# --- criterion 7: capacity bound calculator --------------------------------

def test_a07_capacity_bound_calculator():
    t0 = time.monotonic()
    # hand-substituted closed-form values, checked to 1e-9
    one = cx.BoundInputs(num_layers=1, layer_norms=(1.0,), gamma_s=1.0,
                         num_problems=1, num_algorithms=1)
    four = cx.BoundInputs(num_layers=1, layer_norms=(1.0,), gamma_s=1.0,
                          num_problems=4, num_algorithms=4)
    assert abs(cx.rademacher_bound(one) - 1.840188675413445) <= 1e-9
    assert abs(cx.rademacher_bound(four) - 0.765926496192679) <= 1e-9

    # monotonicity on 1000 random points: tighter with more data, looser
    # with larger layer norms or larger inputs
    rng = np.random.default_rng(707)
    for _ in range(1000):
        l = int(rng.integers(1, 5))
        norms = [float(r) for r in rng.uniform(0.3, 2.5, size=l)]
        gs = float(rng.uniform(0.05, 6.0))
        n_p = int(rng.integers(1, 400))
        n_a = int(rng.integers(1, 40))
        base = cx.rademacher_bound(cx.BoundInputs(l, tuple(norms), gs, n_p, n_a))
        assert cx.rademacher_bound(
            cx.BoundInputs(l, tuple(norms), gs, 2 * n_p, n_a)) <= base
        assert cx.rademacher_bound(
            cx.BoundInputs(l, tuple(norms), gs, n_p, 2 * n_a)) <= base
        up = list(norms)
        up[int(rng.integers(0, l))] *= 1.7
        assert cx.rademacher_bound(
            cx.BoundInputs(l, tuple(up), gs, n_p, n_a)) >= base
        assert cx.rademacher_bound(
            cx.BoundInputs(l, tuple(norms), 1.7 * gs, n_p, n_a)) >= base

    # sampled members of the bounded class never beat the bound
    checked = []
    for m in range(20):
        rng = np.random.default_rng([708, m])
        n_inst = int(rng.integers(6, 13))
        n_algo = int(rng.integers(2, 5))
        e = int(rng.integers(3, 6))
        n_feat = int(rng.integers(2, 5))
        config = md.ModelConfig(
            embedding_dim=e, encoder_dim=e, token_encoder="mean_tokens",
            use_embedding_table=False, use_cosine=False,
            use_feature_selection=False, shared_dim=int(rng.integers(2, 4)),
            top_k=2, problem_hidden=(int(rng.integers(3, 6)),),
            algorithm_hidden=(int(rng.integers(3, 6)),),
            scoring_hidden=(int(rng.integers(2, 5)),))
        algos = [f"s{j}" for j in range(n_algo)]
        scen = build_scenario(
            f"m{m}", 100.0, algos, [f"p{j}" for j in range(n_inst)],
            rng.normal(size=(n_inst, n_feat)),
            rng.uniform(1.0, 90.0, size=(n_inst, n_algo)),
            np.full((n_inst, n_algo), "ok", dtype=object))
        catalog = synth_catalog(algos, dim=e, length=2, seed=m)
        params = md.init_model_params(config, n_feat, n_algo, rng, stage="stage2")
        split = SplitIndex(tuple(range(n_inst)), (), 0)
        trained = TrainedSelector(params, tuple(algos),
                                  fit_feature_stats(scen, split.train_indices))
        report = cx.bound_from_checkpoint(trained, scen, catalog, split)

        feats = apply_normalize(scen.feature_matrix(), trained.feature_stats)
        fused = np.stack([catalog.get(aid).tokens.mean(axis=0) for aid in algos])
        rows = np.stack([np.concatenate([fused[j], feats[i]])
                         for i in range(n_inst) for j in range(n_algo)])
        est = cx.empirical_rademacher_estimate(
            rows, cx.unified_layer_dims(params), report.inputs.layer_norms,
            num_models=40, num_sigma=64, rng=rng)
        assert 0.0 <= est <= report.bound, f"model {m}: {est} > {report.bound}"
        checked.append(est / report.bound)
    dt = _elapsed_under(t0, 120.0, "capacity bound")
    print(f"\nPASS capacity bound: hand values to 1e-9, monotone on 1000 points, "
          f"20/20 sampled estimates below bound (max ratio {max(checked):.3f}) ({dt:.1f}s)")


# --- criterion 8: scoring algorithms unseen in training --------------------

def test_a08_unseen_algorithm_generalization():
    t0 = time.monotonic()
    beats, details = 0, []
    for seed in range(10):
        scen, catalog, split = _e2e_world(seed)
        part = restrict_algorithms(scen, scen.algorithms[:5])
        config = md.ModelConfig(use_embedding_table=False, use_cosine=False,
                                **E2E_MODEL)
        trained = train_selector(part, catalog, split, config,
                                 TrainConfig(seed=seed, **E2E_TRAIN))

        # the held-out algorithm is scored purely from its token embeddings
        held_out = catalog.get(scen.algorithms[5])
        feats = apply_normalize(scen.feature_matrix()[list(split.test_indices)],
                                trained.feature_stats)
        direct = md.score_g(trained.params, ad.constant(feats[0]), held_out)
        assert np.isfinite(direct.item())

        test = list(split.test_indices)
        scores = ev.score_matrix(trained, scen, catalog, test)
        assert np.all(np.isfinite(scores))
        picks = np.argmin(scores, axis=1)
        sel = float(ev.par10_matrix(scen)[test, picks].mean())
        _, sbs_val = ev.sbs(scen, split.train_indices, test)
        beats += sel < sbs_val
        details.append((round(sel, 1), round(sbs_val, 1)))
    assert beats >= 7, f"beat the single best solver in only {beats}/10 seeds: {details}"
    dt = _elapsed_under(t0, 600.0, "unseen-algorithm generalization")
    print(f"\nPASS unseen-algorithm generalization: selection with the held-out "
          f"algorithm beats the single best solver in {beats}/10 seeds ({dt:.1f}s)")


# --- criterion 9: the pipeline is deterministic ----------------------------

def test_a09_pipeline_determinism(tmp_path):
    t0 = time.monotonic()
    scen, catalog = make_centroid_scenario(num_instances=40, num_algorithms=3,
                                           num_features=5, seed=11)
    save_scenario(scen, tmp_path / "scenario")
    save_catalog(catalog, tmp_path / "catalog.jsonl")
    (tmp_path / "config.json").write_text(json.dumps({
        "model": {"lstm_hidden": 4, "encoder_dim": 8, "top_k": 4,
                  "shared_dim": 4, "problem_hidden": [8],
                  "algorithm_hidden": [8], "scoring_hidden": [8]},
        "train": {"epochs_stage1": 3, "epochs_stage2": 3, "batch_size": 32,
                  "seed": 7},
        "split": {"train_fraction": 0.75, "seed": 7},
    }))
    for run in ("one", "two"):
        assert cli_main(["train", "--scenario", str(tmp_path / "scenario"),
                         "--catalog", str(tmp_path / "catalog.jsonl"),
                         "--config", str(tmp_path / "config.json"),
                         "--out", str(tmp_path / f"train-{run}")]) == 0
        assert cli_main(["evaluate", "--scenario", str(tmp_path / "scenario"),
                         "--catalog", str(tmp_path / "catalog.jsonl"),
                         "--checkpoint", str(tmp_path / f"train-{run}" / "checkpoint.json"),
                         "--config", str(tmp_path / "config.json"),
                         "--out", str(tmp_path / f"eval-{run}")]) == 0
    identical = []
    for sub, fname in (("train", "checkpoint.json"), ("train", "checkpoint_stage1.json"),
                       ("train", "manifest.json"), ("eval", "report.json"),
                       ("eval", "report.txt"), ("eval", "manifest.json")):
        a = (tmp_path / f"{sub}-one" / fname).read_bytes()
        b = (tmp_path / f"{sub}-two" / fname).read_bytes()
        assert a == b, f"{sub}/{fname} differs between reruns"
        identical.append(fname)
    dt = _elapsed_under(t0, 120.0, "determinism")
    print(f"\nPASS determinism: {len(identical)} artifacts byte-identical across "
          f"full pipeline reruns ({dt:.1f}s)")


# --- criterion 10: optional smoke test on externally supplied data ---------

def test_a10_external_scenario_smoke():
    path = os.environ.get("ASLIB_SCENARIO_DIR")
    if not path:
        pytest.skip("set ASLIB_SCENARIO_DIR to a scenario directory to enable")
    t0 = time.monotonic()
    scen = load_scenario(path)
    catalog = synth_catalog(scen.algorithms, dim=16, length=3, seed=0)
    split = split_instances(scen, 0.8, 0)
    config = md.ModelConfig(embedding_dim=16, lstm_hidden=8, encoder_dim=16,
                            top_k=8, shared_dim=16, problem_hidden=(32,),
                            algorithm_hidden=(32,), scoring_hidden=(32,))
    trained = train_selector(scen, catalog, split, config,
                             TrainConfig(learning_rate=0.02, epochs_stage1=10,
                                         epochs_stage2=10, batch_size=128,
                                         optimizer="adam", seed=0))
    report = ev.evaluate(trained, scen, catalog, split)
    ceiling = 10.0 * scen.meta.cutoff_time
    assert report.vbs_par10 <= report.selector_par10 <= ceiling + 1e-9 * ceiling
    print("\n" + ev.render_report_table({"selector": report}))
    print(f"PASS external scenario: {scen.meta.scenario_id} completed end to end "
          f"({time.monotonic() - t0:.1f}s)")
