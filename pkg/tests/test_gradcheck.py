import numpy as np

from oimlab import gradcheck, normalization
from oimlab.cli import main


def test_suites_pass():
    assert all(r.passed for r in gradcheck.run_suites(seed=1, instances=20))


def test_sign_flip_is_caught(monkeypatch, tmp_path):
    good = normalization.protonorm_backward
    monkeypatch.setattr(normalization, "protonorm_backward", lambda b, g, **kw: -good(b, g, **kw))
    results = {r.name: r for r in gradcheck.run_suites(instances=10)}
    assert not results["protonorm"].passed and not results["pipeline"].passed
    assert results["batchnorm"].passed
    assert main(["gradcheck", "--out", str(tmp_path)]) == 2


def test_dropped_centre_term_is_caught(monkeypatch):
    monkeypatch.setattr(normalization, "batchnorm_backward",
                        lambda b, g, **kw: np.asarray(g) / b.features.std(axis=0))
    results = {r.name: r for r in gradcheck.run_suites(instances=10)}
    assert not results["batchnorm"].passed
