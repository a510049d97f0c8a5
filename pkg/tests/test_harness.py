import json
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats as sps

from perfektor.harness import (
    ConfigError,
    ExperimentConfig,
    TorusSimulator,
    compare_distributions,
    pair_flux_counts,
    run_experiment,
    torus_long_run,
)
from perfektor.sampling import make_rng


def test_torus_rejects_small_box(em1_fine):
    with pytest.raises(ConfigError):
        TorusSimulator(em1_fine, 16)


def test_fast_kernel_equals_python_kernel(em1_fine, hb1):
    for model in (em1_fine, hb1):
        a = TorusSimulator(model, 64, kernel="python")
        b = TorusSimulator(model, 64, kernel="fast")
        ra, rb = make_rng(301), make_rng(301)
        for _ in range(20):
            a.run_interval(1.5, ra)
            b.run_interval(1.5, rb)
        assert (a.state == b.state).all()


def test_torus_spontaneous_marginal(spont3):
    counts = torus_long_run(spont3, 16, 20.0, 4000, 1.0, make_rng(302), [[(0,)]])[0]
    n = sum(counts.values())
    stat, p = sps.chisquare([counts.get((a,), 0) for a in range(3)],
                            [n * q for q in (0.5, 1 / 3, 1 / 6)])
    assert p > 0.01


def test_torus_heat_bath_flip_symmetry(hb1):
    counts = torus_long_run(hb1, 32, 100.0, 8000, 2.0, make_rng(303), [[(0,)]])[0]
    n = sum(counts.values())
    p_up = counts.get((1,), 0) / n
    assert abs(p_up - 0.5) < 4 * math.sqrt(0.25 / n) + 0.01


def test_torus_seed_stability(em1_fine):
    a = torus_long_run(em1_fine, 64, 100.0, 4000, 4.0, make_rng(304), [[(0,)]])[0]
    b = torus_long_run(em1_fine, 64, 100.0, 4000, 4.0, make_rng(305), [[(0,)]])[0]
    assert compare_distributions(a, b).p_value > 0.001


def test_d2_heat_bath_sampler_vs_oracle():
    from fractions import Fraction

    from perfektor.coloring import perfect_sample
    from perfektor.rates import heat_bath_model, ising_heat_bath_spec

    model = heat_bath_model(ising_heat_bath_spec(0.02, d=2))
    sites = [(0, 0), (1, 0)]
    oracle = torus_long_run(model, 6, 30.0, 1500, 2.0, make_rng(307), [sites])[0]
    exact = Counter()
    for rep in range(1500):
        s = perfect_sample(model, sites, make_rng(308, rep))
        exact[(s[sites[0]], s[sites[1]])] += 1
    assert compare_distributions(exact, oracle).p_value > 0.001


def test_detailed_balance_flux(hb1):
    flux = pair_flux_counts(hb1, 16, 400.0, [(0,), (1,)], make_rng(306))
    for (u, v), n_uv in flux.items():
        n_vu = flux.get((v, u), 0)
        if n_uv + n_vu >= 40:
            # two-sided binomial check of flux symmetry
            p = sps.binomtest(n_uv, n_uv + n_vu, 0.5).pvalue
            assert p > 1e-4


# ---------------------------------------------------------------------------
# compare_distributions
# ---------------------------------------------------------------------------


def test_compare_identical_counts():
    counts = {(0,): 500, (1,): 500}
    rep = compare_distributions(counts, dict(counts))
    assert rep.tv_distance == 0.0
    assert rep.p_value == pytest.approx(1.0)


def test_compare_flags_undersampled():
    rep = compare_distributions({(0,): 1000, (1,): 2}, {(0,): 995, (1,): 4})
    assert (1,) in rep.undersampled


def test_compare_rejects_distinguishable():
    rng = np.random.default_rng(1)
    a = Counter((int(x),) for x in rng.random(20000) < 0.5)
    b = Counter((int(x),) for x in rng.random(20000) < 0.56)
    rep = compare_distributions(a, b)
    assert rep.p_value < 1e-6
    assert rep.tv_distance > 0.04


def test_tv_radius_covers_noise():
    rng = np.random.default_rng(2)
    a = Counter((int(x),) for x in rng.random(20000) < 0.5)
    b = Counter((int(x),) for x in rng.random(20000) < 0.5)
    rep = compare_distributions(a, b)
    assert rep.tv_distance <= rep.tv_radius


# ---------------------------------------------------------------------------
# Experiment orchestration
# ---------------------------------------------------------------------------

SPONT_SPEC = {"dimension": 1, "alphabet": 3, "model": "table",
              "params": {"range": 0, "M": 1,
                         "rates": {"0": ["1/2", "1/3", "1/6"],
                                   "1": ["1/2", "1/3", "1/6"],
                                   "2": ["1/2", "1/3", "1/6"]}}}


def test_smoke_experiment_fast(tmp_path):
    import time

    config = ExperimentConfig(kind="sample", model=SPONT_SPEC, sites=((0,),),
                              replicates=100, seed=5, out_dir=str(tmp_path))
    t0 = time.perf_counter()
    result = run_experiment(config)
    assert time.perf_counter() - t0 < 1.0
    assert result.ok
    assert (tmp_path / "samples.csv").exists()
    assert (tmp_path / "sample_manifest.json").exists()


def test_manifest_reproducibility(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        run_experiment(ExperimentConfig(kind="sample", model=SPONT_SPEC,
                                        sites=((0,),), replicates=50, seed=9,
                                        out_dir=str(out)))
    assert (out_a / "samples.csv").read_bytes() == (out_b / "samples.csv").read_bytes()
    assert (out_a / "marginals.json").read_bytes() == (out_b / "marginals.json").read_bytes()


def test_validate_kind(tmp_path):
    config = ExperimentConfig(kind="validate", model=SPONT_SPEC, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.ok
    payload = json.loads((tmp_path / "validate.json").read_text())
    assert payload["strict"]["passes"] is True


def test_decompose_kind_with_check(tmp_path):
    config = ExperimentConfig(kind="decompose", model=SPONT_SPEC, out_dir=str(tmp_path),
                              extras={"check": True})
    result = run_experiment(config)
    assert result.ok
    assert result.summary["max_reconstruction_error"] == 0.0


def test_finitary_kind(tmp_path):
    spec = {"dimension": 1, "alphabet": 2, "model": "example1",
            "params": {"q0": "5/8", "q_inf": "1/2", "ratio": "1/4", "R": 3}}
    config = ExperimentConfig(kind="finitary", model=spec, sites=((0,),),
                              replicates=200, seed=8, out_dir=str(tmp_path))
    result = run_experiment(config)
    assert result.ok
    reports = json.loads((tmp_path / "finitary_reports.json").read_text())
    assert len(reports) == 200
    assert all(r["bits_total"] >= 2 for r in reports)
    assert (tmp_path / "pile_statistics.csv").exists()


def test_couple_kind(tmp_path):
    spec = {"dimension": 1, "alphabet": 2, "model": "example1",
            "params": {"q0": "5/8", "q_inf": "1/2", "ratio": "1/4", "R": 3}}
    config = ExperimentConfig(kind="couple", model=spec, sites=((0,),),
                              replicates=400, seed=3, out_dir=str(tmp_path),
                              extras={"t_grid": [1.0, 4.0]})
    result = run_experiment(config)
    assert result.ok


def test_invalid_configs():
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(kind="nonsense"))
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(kind="sample", model=None))
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig(kind="sample", model="missing_file.json"))
    bad_oracle = ExperimentConfig(kind="oracle", model={
        "dimension": 1, "alphabet": 2, "model": "example1",
        "params": {"q0": "5/8", "q_inf": "1/2", "ratio": "1/4", "R": 25}})
    bad_oracle.oracle.L = 16
    with pytest.raises(ConfigError):
        run_experiment(bad_oracle)


def test_config_hash_stable():
    a = ExperimentConfig(kind="sample", model=SPONT_SPEC, seed=1)
    b = ExperimentConfig(kind="sample", model=SPONT_SPEC, seed=1)
    assert a.config_hash() == b.config_hash()
    b.seed = 2
    assert a.config_hash() != b.config_hash()
