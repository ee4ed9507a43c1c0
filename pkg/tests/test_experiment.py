import csv
import math

import numpy as np
import pytest

from impmix import envs
from impmix.experiment import (CSV_HEADER, ConfigError, ExperimentConfig, GenerationRecord,
                               ResumeConflict, aggregate, read_records, records_to_csv,
                               reuse_table, run_experiment, run_one)


def cfg(**kw):
    base = dict(env="CartPole", algorithm="snes", generations=6, population=10, seeds=[0, 1])
    base.update(kw)
    return ExperimentConfig(**base)


def rec(g, fit, reused=0, im=0, eim=0, fresh=10, cum=None):
    return GenerationRecord(g, cum if cum is not None else 10 * (g + 1), fit, fit, fit,
                            reused, im, eim, fresh)


# -- config ---------------------------------------------------------------------------

def test_defaults():
    c = ExperimentConfig()
    assert (c.population, c.sigma, c.lr, c.beta1, c.beta2, c.weight_decay) == (
        50, 0.25, 0.01, 0.99, 0.999, 0.05)
    assert c.generations == 1000 and len(c.seeds) == 25
    assert ExperimentConfig(algorithm="cmaes").generations == 400
    assert ExperimentConfig(algorithm="cem").generations == 400
    assert ExperimentConfig(algorithm="openes").generations == 1000


@pytest.mark.parametrize("bad", [dict(population=1), dict(archive_k=0), dict(mixing="both"),
                                 dict(env="Pong"), dict(algorithm="pso"), dict(sigma=0.0),
                                 dict(seeds=[])])
def test_invalid_configs(bad):
    with pytest.raises(ConfigError):
        cfg(**bad)


def test_config_roundtrip(tmp_path):
    c = cfg(mixing="eim", archive_k=3)
    p = tmp_path / "c.yaml"
    p.write_text(c.dump())
    assert ExperimentConfig.load(p) == c


def test_config_rejects_unknown_keys_and_schema(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("schema_version: 1\npopulaton: 50\n")
    with pytest.raises(ConfigError, match="populaton"):
        ExperimentConfig.load(p)
    p.write_text("schema_version: 2\n")
    with pytest.raises(ConfigError, match="schema_version"):
        ExperimentConfig.load(p)
    p.write_text("population: 50\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(p)
    p.write_text("schema_version: 1\nenv: {id: CartPole}\n")
    with pytest.raises(ConfigError, match="nested"):
        ExperimentConfig.load(p)
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.yaml")


# -- run_one ---------------------------------------------------------------------------

def test_no_mixing_evaluates_everything():
    recs = run_one(cfg(mixing="none"), 0)
    assert all(r.fresh == 10 and r.reused_total == 0 for r in recs)
    assert [r.cum_evals for r in recs] == [10 * (g + 1) for g in range(6)]


@pytest.mark.parametrize("mode", ["im", "eim"])
def test_mixing_accounting(mode):
    recs = run_one(cfg(mixing=mode, generations=15, archive_k=3), 1)
    assert recs[0].fresh == 10 and recs[0].reused_total == 0
    prev = 0
    for r in recs:
        assert r.reused_total + r.fresh == 10
        assert r.reused_im + r.reused_eim == r.reused_total
        assert r.cum_evals - prev == r.fresh
        prev = r.cum_evals
    if mode == "im":
        assert all(r.reused_eim == 0 for r in recs)
    assert sum(r.reused_total for r in recs) > 0


def test_episode_count_matches_rollouts(monkeypatch):
    calls = []
    real = envs.evaluate

    def counting(env, P, seed, gen, idx, threads=1):
        calls.append(len(list(idx)))
        return real(env, P, seed, gen, idx, threads)

    monkeypatch.setattr(envs, "evaluate", counting)
    recs = run_one(cfg(mixing="im", generations=12), 2)
    assert sum(calls) == recs[-1].cum_evals == sum(r.fresh for r in recs)


def test_reused_rows_keep_archived_fitness():
    # population fitness stats only ever come from real episodes: every value is a
    # CartPole return, i.e. an integer in [1, 200]
    recs = run_one(cfg(mixing="im", generations=10), 3)
    for r in recs:
        for v in (r.mean_fitness * 10, r.max_fitness, r.min_fitness):
            assert abs(v - round(v)) < 1e-9
        assert 1 <= r.min_fitness <= r.max_fitness <= 200


def test_run_deterministic_across_threads():
    a = records_to_csv(run_one(cfg(mixing="eim", generations=8), 4, threads=1))
    b = records_to_csv(run_one(cfg(mixing="eim", generations=8), 4, threads=8))
    assert a == b


@pytest.mark.parametrize("alg", ["openes", "cem", "cmaes"])
def test_other_algorithms_run(alg):
    recs = run_one(cfg(algorithm=alg, mixing="im", generations=4), 0)
    assert len(recs) == 4


def test_acrobot_returns_in_range():
    recs = run_one(cfg(env="Acrobot", generations=3), 0)
    assert all(-200 <= r.min_fitness <= r.max_fitness <= -1 for r in recs)


# -- aggregate ---------------------------------------------------------------------------

def test_aggregate_two_point():
    s = aggregate([[rec(0, 100.0)], [rec(0, 200.0)]])
    assert s.mean_fitness == [150.0]
    assert s.ci_half_width[0] == pytest.approx(50.0)


def test_aggregate_identical_runs():
    run = [rec(g, 50.0 + g) for g in range(4)]
    s = aggregate([run, list(run), list(run)])
    assert s.ci_half_width == [0.0] * 4


def test_aggregate_matches_manual_recomputation():
    fits = [[10.0, 20.0, 35.0], [12.0, 18.0, 40.0], [9.0, 25.0, 30.0]]
    reuse = [[(0, 0, 0), (6, 5, 1), (8, 6, 2)], [(0, 0, 0), (7, 7, 0), (9, 8, 1)],
             [(0, 0, 0), (5, 4, 1), (10, 7, 3)]]
    runs = []
    for f, r in zip(fits, reuse):
        cum = 0
        run = []
        for g, (fv, (tot, im, eim)) in enumerate(zip(f, r)):
            cum += 10 - tot
            run.append(rec(g, fv, tot, im, eim, 10 - tot, cum))
        runs.append(run)
    s = aggregate(runs, population=10)
    for g in range(3):
        col = [f[g] for f in fits]
        m = sum(col) / 3
        sd = math.sqrt(sum((x - m) ** 2 for x in col) / 2)
        assert s.mean_fitness[g] == pytest.approx(m)
        assert s.ci_half_width[g] == pytest.approx(sd / math.sqrt(3))
    reused = 6 + 8 + 7 + 9 + 5 + 10
    assert s.total_reuse_pct == pytest.approx(100 * reused / 90)
    assert s.from_im_pct == pytest.approx(100 * (5 + 6 + 7 + 8 + 4 + 7) / reused)
    assert s.from_eim_pct == pytest.approx(100 * (1 + 2 + 0 + 1 + 1 + 3) / reused)


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate([[rec(0, 1.0)]])
    with pytest.raises(ValueError):
        aggregate([[rec(0, 1.0)], [rec(0, 1.0), rec(1, 1.0)]])


# -- files --------------------------------------------------------------------------

def test_run_experiment_outputs(tmp_path):
    c = cfg(mixing="im", generations=5)
    summary = run_experiment(c, tmp_path)
    with open(tmp_path / "seed_0.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == list(CSV_HEADER)
    assert header == ["generation", "cum_evals", "mean_fitness", "max_fitness", "min_fitness",
                      "reused_total", "reused_im", "reused_eim", "fresh"]
    assert (tmp_path / "summary.json").exists()
    assert (tmp_path / "reuse_table.csv").exists()
    assert ExperimentConfig.load(tmp_path / "config.yaml") == c
    assert len(read_records(tmp_path / "seed_1.csv")) == 5
    assert summary.n_seeds == 2
    with pytest.raises(ResumeConflict):
        run_experiment(c, tmp_path)
    run_experiment(c, tmp_path, overwrite=True)


def test_csv_roundtrip(tmp_path):
    recs = run_one(cfg(mixing="im", generations=4), 5)
    text = records_to_csv(recs)
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    (tmp_path / "s.csv").write_text(text)
    assert read_records(tmp_path / "s.csv") == recs


def test_reuse_table_hand_computed(tmp_path):
    # two seeds, three generations of N=50
    rows = {
        0: [(0, 0, 0, 50), (45, 40, 5, 5), (48, 44, 4, 2)],
        1: [(0, 0, 0, 50), (40, 40, 0, 10), (47, 45, 2, 3)],
    }
    run = tmp_path / "snes_eim"
    run.mkdir()
    for seed, rs in rows.items():
        cum = 0
        recs = []
        for g, (tot, im, eim, fresh) in enumerate(rs):
            cum += fresh
            recs.append(GenerationRecord(g, cum, 1.0, 1.0, 1.0, tot, im, eim, fresh))
        (run / f"seed_{seed}.csv").write_text(records_to_csv(recs))
    table = reuse_table([run]).splitlines()
    # reused = 180 of 300 samples; IM 169, EIM 11
    assert table[1] == "snes_eim,60.0,93.9,6.1"


def test_reuse_table_missing_dir(tmp_path):
    with pytest.raises(FileNotFoundError):
        reuse_table([tmp_path])
