"""Acceptance criteria 1-11 at their stated tolerances.

Each test records one ``criterion N: PASS|FAIL`` line; the lines are printed
in the pytest terminal summary (see conftest.py) or, when this file is run as
a script, directly.
"""
import filecmp
import os
import time
from fractions import Fraction

import numpy as np
import pytest

from oimlab.cli import run
from oimlab.losses import LossConfig, oim_probability, training_step
from oimlab.memory_bank import CircularQueue, LookupTable, Proposal, adaptive_momentum
from oimlab.metrics import avg_pairwise_cosine, average_precision, retrieval_eval
from oimlab.normalization import (FeatureBatch, Labelled, Unlabelled, batchnorm_stats,
                                  prototype_weights, protonorm_forward, protonorm_stats)
from oimlab.numerics import l2_normalize, make_rng

RESULTS = {}


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def _timed(command, out):
    start = time.perf_counter()
    code, summary = run(command, out=str(out))
    return code, summary, time.perf_counter() - start


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    """First run of every subcommand; criterion 11 reruns them."""
    base = tmp_path_factory.mktemp("acceptance")
    return {c: (base / c,) + _timed(c, base / c) for c in ("gradcheck", "toy2d", "separability", "ablation")}


def test_c01_gradient_suite(runs):
    out, code, summary, secs = runs["gradcheck"]
    worst = max(summary["checks"].values())
    ok = code == 0 and summary["passed"] and worst < 1e-4 and secs < 30
    assert record(1, ok, f"5 suites x 100 instances, max rel err {worst:.2e} (< 1e-4), {secs:.1f}s (< 30s)")


def test_c02_protonorm_algebra():
    rng = make_rng(2024)
    bal = dup = 0.0
    dup_moves_bn = True
    weights_ok = True
    for _ in range(200):
        k, c, d = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        tags = [Labelled(i) for i in range(k) for _ in range(c)]
        x = rng.standard_normal((k * c, d)) * 3 + rng.standard_normal(d)
        pn, bn = protonorm_stats(FeatureBatch(x, tags)), batchnorm_stats(FeatureBatch(x, tags))
        y_pn, s_pn = protonorm_forward(FeatureBatch(x, tags))
        bal = max(bal, np.abs(pn.mu - bn.mu).max(), np.abs(pn.sigma - bn.sigma).max(),
                  np.abs(s_pn.mu - bn.mu).max())
        rows = [b for b, t in enumerate(tags) if t == Labelled(0)]
        x2 = np.vstack([x, x[rows]])
        tags2 = tags + [tags[b] for b in rows]
        pn2, bn2 = protonorm_stats(FeatureBatch(x2, tags2)), batchnorm_stats(FeatureBatch(x2, tags2))
        dup = max(dup, np.abs(pn2.mu - pn.mu).max(), np.abs(protonorm_forward(FeatureBatch(x2, tags2))[1].mu - pn.mu).max())
        dup_moves_bn &= bool(np.abs(bn2.mu - bn.mu).max() > 1e-6)
        counts = rng.integers(1, 6, k)
        t3 = [Labelled(i) for i in range(k) for _ in range(counts[i])]
        w = prototype_weights(t3)
        expect = np.concatenate([np.full(n, 1.0 / (k * n)) for n in counts])
        weights_ok &= bool(np.abs(w - expect).max() < 1e-15 and abs(w.sum() - 1) < 1e-12)
    y, st = protonorm_forward(FeatureBatch(np.array([[0.0], [0.0], [0.0], [0.0], [4.0]]),
                                           [Labelled(0)] * 4 + [Labelled(1)]))
    hand = st.mu[0] == 2.0 and st.sigma[0] == 2.0 and y[:, 0].tolist() == [-1, -1, -1, -1, 1]
    ok = bal < 1e-12 and dup < 1e-12 and dup_moves_bn and weights_ok and hand
    assert record(2, ok, f"balanced |PN-BN| {bal:.1e}, duplicate shift {dup:.1e}, BN moved {dup_moves_bn}, "
                         f"weights {weights_ok}, hand example {hand}")


def test_c03_bank_invariants():
    rng = make_rng(3)
    lut, q = LookupTable(20, 6), CircularQueue(37, 6)
    ring, cursor, filled = [None] * 37, 0, 0
    for _ in range(10_000):
        x = l2_normalize(rng.standard_normal(6) * rng.uniform(0.01, 10))
        t = int(rng.integers(20))
        if rng.random() < 0.5:
            lut.update_oim(t, x, float(rng.uniform(0, 1)))
        else:
            lut.update_loim(t, x, float(rng.uniform(0, 1)), 0.1)
        u = l2_normalize(rng.standard_normal(6))
        q.push(u)
        ring[cursor] = u
        cursor, filled = (cursor + 1) % 37, min(filled + 1, 37)
    norms = np.linalg.norm(lut.entries, axis=1)
    lut_err = np.abs(norms[norms > 0] - 1).max()
    q_err = np.abs(np.linalg.norm(q.active(), axis=1) - 1).max()
    ring_ok = q.write_cursor == cursor and q.fill_count == filled and np.array_equal(q.active(), np.array(ring[:filled]))
    ok = lut_err < 1e-9 and q_err < 1e-9 and ring_ok
    assert record(3, ok, f"10^4 updates: LUT norm err {lut_err:.1e}, queue norm err {q_err:.1e}, ring model {ring_ok}")


def test_c04_loim_oim_equivalence():
    rng = make_rng(4)
    luts = {m: LookupTable(10, 5) for m in ("oim", "loim")}
    queues = {m: CircularQueue(16, 5) for m in ("oim", "loim")}
    identical = True
    for _ in range(100):
        tags = [Labelled(int(t)) if rng.random() < 0.8 else Unlabelled(0) for t in rng.integers(0, 10, 6)]
        tags[0] = Labelled(int(rng.integers(10)))
        x = rng.standard_normal((6, 5))
        for mode in ("oim", "loim"):
            batch = [Proposal(x[b], tags[b], 0.5) for b in range(6)]
            training_step(batch, luts[mode], queues[mode], LossConfig(eta=0.5, epsilon=0.1, mode=mode))
        identical &= bool(np.array_equal(luts["oim"].entries, luts["loim"].entries))
    assert record(4, identical, "100 steps at IoU 0.5, eta 0.5, eps 0.1: LUTs bitwise identical at every step"
                  if identical else "LUT trajectories diverged")


def test_c05_clip_law():
    sweep = [0, 0.25, 0.5, 0.89, 0.9, 0.95, 1.0]
    got = [adaptive_momentum(s, 0.1) for s in sweep]
    ok = got == [0, 0.25, 0.5, 0.89, 0.9, 0.9, 0.9]
    assert record(5, ok, f"clip(s, 0, 0.9) on {sweep} -> {got}")


def test_c06_probability_contract():
    rng = make_rng(6)
    worst, argmax_ok = 0.0, True
    for _ in range(1000):
        d, n = int(rng.integers(2, 9)), int(rng.integers(1, 30))
        lut = LookupTable(n, d)
        lut.entries[:] = l2_normalize(rng.standard_normal((n, d)))
        q = CircularQueue(int(rng.integers(0, 10)), d)
        for _ in range(int(rng.integers(0, 15))):
            q.push(l2_normalize(rng.standard_normal(d)))
        x = l2_normalize(rng.standard_normal(d))
        probs = [oim_probability(x, lut, q, tau) for tau in (0.33, 1.0, 3.0)]
        worst = max(worst, max(abs(p.sum() - 1) for p in probs))
        argmax_ok &= len({int(np.argmax(p)) for p in probs}) == 1
    ok = worst <= 1e-9 and argmax_ok
    assert record(6, ok, f"10^3 instances: max |sum p - 1| {worst:.1e}, argmax tau-invariant {argmax_ok}")


def test_c07_toy2d(runs):
    _, code, s, secs = runs["toy2d"]
    ok = code == 0 and s["seeds_gap_std_ordered"] >= 3 and s["seeds_min_gap_ordered"] >= 3 and secs < 120
    assert record(7, ok, f"gap std PN<BN<none in {s['seeds_gap_std_ordered']}/4 seeds, "
                         f"min gap PN>BN>none in {s['seeds_min_gap_ordered']}/4, {secs:.1f}s (< 120s)")


def test_c08_separability(runs):
    _, code, s, secs = runs["separability"]
    ok = code == 0 and s["seeds_ordered"] >= 3 and secs < 180
    med = s["median_final_lut_mean"]
    assert record(8, ok, f"final LUT cosine PN<BN<none in {s['seeds_ordered']}/4 seeds "
                         f"(medians {med['protonorm']:.3f} / {med['batchnorm']:.3f} / {med['none']:.3f}), "
                         f"{secs:.1f}s (< 180s)")


def test_c09_ablation(runs):
    _, code, s, secs = runs["ablation"]
    loim = s["seeds_loim_ge_oim"]
    pn = s["seeds_protonorm_ge_batchnorm"]
    ok = (code == 0 and min(loim.values()) >= 3 and min(pn.values()) >= 3
          and s["best_cell"] == "protonorm+loim" and secs < 300)
    assert record(9, ok, f"LOIM>=OIM seeds BN {loim['batchnorm']}/4 PN {loim['protonorm']}/4; "
                         f"PN>=BN seeds OIM {pn['oim']}/4 LOIM {pn['loim']}/4; best median cell "
                         f"{s['best_cell']}; {secs:.1f}s (< 300s)")


def _brute_ap(matches):
    hits, precs = 0, []
    for r, m in enumerate(matches, 1):
        if m:
            hits += 1
            precs.append(Fraction(hits, r))
    return sum(precs) / len(precs)


def test_c10_metrics_oracles():
    rng = make_rng(10)
    ap_ok = rank_ok = cos_ok = True
    for _ in range(300):
        n = int(rng.integers(2, 21))
        g = rng.standard_normal((n, 3))
        gids = rng.integers(0, 3, n)
        q = rng.standard_normal((3, 3))
        qids = gids[rng.integers(0, n, 3)]
        rep = retrieval_eval(q, qids, g, gids)
        brute = []
        for i in range(3):
            order = sorted(range(n), key=lambda j: (-(q[i] @ g[j]), j))
            matches = [gids[j] == qids[i] for j in order]
            brute.append(_brute_ap(matches))
            ap_ok &= rep.average_precisions[i] == float(brute[-1])
        ap_ok &= rep.mAP == float(sum(brute) / 3)
        brute_r1 = Fraction(sum(gids[min(range(n), key=lambda j: (-(q[i] @ g[j]), j))] == qids[i]
                                for i in range(3)), 3)
        rank_ok &= rep.rank1 == float(brute_r1)
        rows = rng.standard_normal((int(rng.integers(2, 12)), 4))
        sims = [rows[a] @ rows[b] / np.linalg.norm(rows[a]) / np.linalg.norm(rows[b])
                for a in range(len(rows)) for b in range(a + 1, len(rows))]
        mean, std = avg_pairwise_cosine(rows)
        m0 = sum(sims) / len(sims)
        cos_ok &= abs(mean - m0) < 1e-12 and abs(std - (sum((s - m0) ** 2 for s in sims) / len(sims)) ** 0.5) < 1e-12
    hand = average_precision([True, False, True]) == 5 / 6
    ok = ap_ok and rank_ok and cos_ok and hand
    assert record(10, ok, f"300 galleries <= 20: AP and mAP exact {ap_ok}, rank-1 exact {rank_ok}; "
                          f"hand AP 5/6 {hand}; pairwise cosine to 1e-12 {cos_ok}")


def _csvs(root):
    return sorted(os.path.relpath(os.path.join(d, f), root)
                  for d, _, files in os.walk(root) for f in files if f.endswith(".csv"))


def test_c11_determinism(runs, tmp_path):
    same, compared = True, 0
    for command, (out, *_rest) in runs.items():
        code, _ = run(command, out=str(tmp_path / command))
        names = _csvs(out)
        same &= code == _rest[0] and names == _csvs(tmp_path / command)
        for name in names:
            compared += 1
            same &= filecmp.cmp(out / name, tmp_path / command / name, shallow=False)
    assert record(11, same, f"4 subcommands rerun, {compared} CSV files byte-identical {same}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
