"""Campaign harness tests: config resolution, determinism, aggregation, CSV."""

import math

import numpy as np
import pytest

from popdyn.experiments import (AGGREGATE_HEADER, TRIAL_HEADER, Cell,
                                ConfigError, ExperimentConfig, aggregate,
                                equivalence_campaign, figure2_beta_values,
                                figure2_campaign, margin_threshold_campaign,
                                read_csv, resolve_cells, resolve_horizon,
                                resolve_margin, run_campaign, run_trial,
                                wilson_interval, write_csv)


def small_config(**kw):
    base = dict(protocol="dbamc", model="ci", n_inputs=40, m_workers=40,
                margin=6, horizon="4nlogn", trials=5, base_seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfigParsing:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"protocol": "dbam", "bogus": 1})

    def test_unknown_fault_key_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"fault": {"gamma": 0.1}})

    def test_json_file_round_trip(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"protocol": "dbam", "model": "standard", '
                        '"n_inputs": 100, "margin": 10, "trials": 3}')
        cfg = ExperimentConfig.from_json(str(path))
        assert cfg.protocol == "dbam" and cfg.trials == 3


class TestResolution:
    def test_auto_margin_natural_log(self):
        assert resolve_margin("auto", 500, 1000, parity_of=500) == 84

    def test_auto_margin_alpha(self):
        assert resolve_margin({"auto": 2.0}, 500, 1000, parity_of=500) >= 166

    def test_horizon_token(self):
        assert resolve_horizon("4nlogn", 1000) == math.ceil(4000 * math.log(1000))
        assert resolve_horizon(12345, 1000) == 12345
        with pytest.raises(ConfigError):
            resolve_horizon("4nsquared", 1000)

    def test_invalid_cells_reported_not_fatal(self):
        cfg = small_config(margin=[6, 999])  # 999 > n = 40
        cells, errors = resolve_cells(cfg)
        assert len(cells) == 1 and len(errors) == 1
        assert "margin" in errors[0][1]

    def test_faulty_cells_run_to_horizon(self):
        cfg = small_config(fault={"leak_model": "adversarial", "beta": 0.01})
        cells, _ = resolve_cells(cfg)
        assert cells[0].stop == "at_horizon"
        cfg = small_config()
        cells, _ = resolve_cells(cfg)
        assert cells[0].stop == "at_convergence"

    def test_beta_sweep_cross_product(self):
        cfg = small_config(
            m_workers=[20, 40],
            fault={"leak_model": "adversarial", "beta": [0.0, 0.01]})
        cells, errors = resolve_cells(cfg)
        assert not errors and len(cells) == 4


class TestRunCampaign:
    def test_single_trial_mirrors_aggregate(self):
        cfg = small_config(trials=1)
        res = run_campaign(cfg, parallel=False)
        assert len(res.trials) == 1 and len(res.aggregates) == 1
        agg = res.aggregates[0]
        assert agg.trials == 1
        assert agg.mean_sample_success == res.trials[0].sample_success

    def test_reproducible_rows(self):
        cfg = small_config()
        a = run_campaign(cfg, parallel=False)
        b = run_campaign(cfg, parallel=False)
        assert [r.to_row() for r in a.trials] == [r.to_row() for r in b.trials]

    def test_no_fault_converged_runs_have_zero_error(self):
        cfg = small_config(trials=20)
        res = run_campaign(cfg, parallel=False)
        for r in res.trials:
            if r.converged:
                assert r.sample_error == 0.0
                assert r.terminal_class == "ALL_X"

    def test_aggregate_recomputes_from_trials(self):
        cfg = small_config(trials=10)
        res = run_campaign(cfg, parallel=False)
        agg = res.aggregates[0]
        succ = [r.sample_success for r in res.trials]
        assert agg.mean_sample_success == pytest.approx(np.mean(succ))
        conv = [r for r in res.trials if r.converged]
        assert agg.conv_rate == pytest.approx(len(conv) / len(res.trials))
        rebuilt = aggregate(res.trials, agg.group_key, 1)
        assert rebuilt.to_row() == agg.to_row()


class TestWilson:
    def test_boundaries(self):
        lo, hi = wilson_interval(0, 100)
        assert lo == pytest.approx(0.0, abs=1e-12) and hi < 0.05
        lo, hi = wilson_interval(100, 100)
        assert hi == pytest.approx(1.0) and lo > 0.95

    def test_contains_point_estimate(self):
        lo, hi = wilson_interval(37, 100)
        assert lo < 0.37 < hi

    def test_narrows_with_samples(self):
        w1 = np.diff(wilson_interval(50, 100))[0]
        w2 = np.diff(wilson_interval(500, 1000))[0]
        assert w2 < w1


class TestCsv:
    def test_headers_exact(self):
        assert TRIAL_HEADER.startswith("trial_index,seed,protocol,model,")
        assert TRIAL_HEADER.endswith("cum_null,cum_xy,cum_blank,cum_leaks")
        assert AGGREGATE_HEADER == ("group_key,trials,mean_sample_success,"
                                    "sd_sample_success,wilson_lo,wilson_hi,"
                                    "conv_rate,mean_steps_converged")

    def test_round_trip(self, tmp_path):
        cfg = small_config(trials=3)
        res = run_campaign(cfg, parallel=False)
        path = tmp_path / "trials.csv"
        write_csv([r.to_row() for r in res.trials], path, TRIAL_HEADER)
        parsed = read_csv(path)
        assert len(parsed) == 3
        assert parsed[0]["protocol"] == "dbamc"
        assert int(parsed[2]["trial_index"]) == 2

    def test_crlf_line_endings(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_csv([], path, AGGREGATE_HEADER)
        raw = path.read_bytes()
        assert raw == (AGGREGATE_HEADER + "\r\n").encode()

    def test_byte_identical_reruns(self, tmp_path):
        cfg = small_config(trials=4)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv([r.to_row() for r in run_campaign(cfg, parallel=False).trials],
                  p1, TRIAL_HEADER)
        write_csv([r.to_row() for r in run_campaign(cfg, parallel=False).trials],
                  p2, TRIAL_HEADER)
        assert p1.read_bytes() == p2.read_bytes()

    def test_write_error_carries_path(self, tmp_path):
        bad = tmp_path / "no" / "such" / "dir" / "f.csv"
        with pytest.raises(OSError, match="f.csv"):
            write_csv([], bad, TRIAL_HEADER)


class TestPrebuiltCampaigns:
    def test_figure2_beta_grid(self):
        N = 2000
        betas = figure2_beta_values(N)
        assert betas[0] == 0.0
        assert betas[1] == pytest.approx(1 / N)
        assert betas[2] == pytest.approx(math.log(N) / N)
        assert betas[3] == pytest.approx(math.sqrt(N * math.log(N)) / (8 * N))

    def test_figure2_small_grid(self, tmp_path):
        paths = figure2_campaign(tmp_path, sizes=(50,), base_seed=1)
        assert len(paths) == 4
        for cell, path in paths:
            rows = read_csv(path)
            assert rows, path
            assert "x_hat2" in rows[0]

    def test_margin_campaign_requires_sorted(self):
        with pytest.raises(ConfigError):
            margin_threshold_campaign(40, 40, [10, 2], trials=2)

    def test_margin_campaign_contrast_direction(self):
        _, aggs = margin_threshold_campaign(100, 100, [2, 40], trials=30,
                                            base_seed=5, parallel=False)
        assert aggs[0].conv_rate <= aggs[1].conv_rate

    def test_equivalence_beta_guard(self):
        with pytest.raises(ConfigError):
            equivalence_campaign(100, 0.5, trials=2)

    def test_equivalence_small(self):
        res = equivalence_campaign(60, 0.01, factor_list=(1.0,), trials=20,
                                   base_seed=3, parallel=False)
        assert res.leak_aggregate.trials == 20
        assert len(res.pairs) == 1
        assert res.pairs[0].byz_count == 1
        assert res.pairs[0].mean_error_ratio >= 0.0


class TestRunTrial:
    def test_record_matches_cell(self):
        cell = Cell(protocol="dbam", model="standard", n_inputs=60,
                    m_workers=0, margin=10, beta=0.0, leak_model="none",
                    leak_pool="all", byz_mode="none", byz_count=0,
                    horizon=2000, stop="at_convergence")
        rec, traj = run_trial(cell, 0, 42, 4)
        assert rec.cell is cell
        assert 0.0 <= rec.sample_success <= 1.0
        assert rec.steps_run <= 2000
        assert traj[0].step == 0
