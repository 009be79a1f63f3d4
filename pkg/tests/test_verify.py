import json

import numpy as np
import pytest

from specfid import quant, spectral, synth
from specfid.errors import ConfigError
from specfid.tensorio import RandomStream
from specfid.verify import (
    PROTOCOL_DEFAULTS,
    PROTOCOLS,
    ExperimentConfig,
    VerificationReport,
    power_law_matrix,
    run_bbp_check,
    run_bernstein_check,
    run_failure_profile,
    run_full_suite,
    run_gradient_bound_check,
    run_relative_error_regression,
    run_stable_rank_sweep,
    run_unbiasedness,
    write_reports,
)

# reduced sizes so the whole module runs in seconds
SMALL = {
    "unbias": {"trials": 3, "m": 64, "n": 64},
    "regress": {"trials": 2, "m": 64, "n": 1024, "alphas": [1.5]},
    "srank": {"trials": 10, "m": 64, "n": 64},
    "bbp": {"trials": 2, "d": 200, "c0_d": 50, "c0_trials": 2, "spike_tol": 0.1, "bulk_tol": 0.15, "c0_tol": 0.05},
    "bernstein": {"trials": 40, "n": 32, "big_n": 128, "big_trials": 5, "scale_lo": 1.5, "scale_hi": 2.5},
    "gradbound": {"trials": 2},
    "failprof": {"trials": 10, "sweep_trials": 5, "m": 48, "n": 48},
}


def small_cfg(**kw):
    kw.setdefault("ensemble", synth.ZipfEnsemble(V=64, alpha=1.5, d=16, N=128))
    kw.setdefault("protocols", json.loads(json.dumps(SMALL)))
    return ExperimentConfig(**kw)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.scheme == quant.PRESETS["nvfp4"]
        assert cfg.params("srank")["trials"] == 100
        assert cfg.params("bbp")["d"] == 1000

    def test_trials_override_all(self):
        cfg = ExperimentConfig(trials=3)
        assert all(cfg.params(p)["trials"] == 3 for p in PROTOCOLS)

    def test_protocol_seeds(self):
        cfg = ExperimentConfig(seed=10)
        assert [cfg.protocol_seed(p) for p in PROTOCOLS] == list(range(10, 17))

    @pytest.mark.parametrize("kw", [dict(trials=0), dict(eta=0.0), dict(eta=-1.0), dict(theta=0.0), dict(theta=1.0),
                                    dict(fit_range=(3, 2)), dict(fit_range=(0, 5)), dict(seed=-1),
                                    dict(protocols={"nope": {}}), dict(protocols={"srank": {"bogus": 1}})])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)

    def test_json_roundtrip(self):
        cfg = small_cfg(scheme=quant.PRESETS["mxfp4"], eta=0.1, fit_range=(2, 9), seed=5)
        back = ExperimentConfig.from_json(json.dumps(cfg.to_dict()))
        assert back.to_dict() == cfg.to_dict()
        assert back.sha256() == cfg.sha256()

    def test_scheme_preset_name(self):
        cfg = ExperimentConfig.from_dict({"scheme": "int4"})
        assert cfg.scheme == quant.PRESETS["int4"]

    def test_hash_covers_resolved_defaults(self):
        a = ExperimentConfig()
        b = ExperimentConfig(protocols={"srank": {"trials": 100}})
        c = ExperimentConfig(protocols={"srank": {"trials": 99}})
        assert a.sha256() == b.sha256() != c.sha256()

    @pytest.mark.parametrize("text", ["{not json", "[1, 2]", '{"eta": -1}', '{"scheme": "fp8"}', '{"extra": 1}',
                                      '{"ensemble": {"V": 10}}', '{"protocols": 3}'])
    def test_bad_json(self, text):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(text)


class TestReport:
    def test_csv_and_json(self):
        r = VerificationReport("x", True, {"a": 1.5, "b": float("nan"), "ok": np.bool_(True), "n": np.int64(3)},
                               {"k": [1, 2], "v": [0.1, 1 / 3], "flag": [True, False]}, ["note"])
        assert r.to_csv() == "k,v,flag\n1,0.1,true\n2,0.3333333333333333,false\n"
        s = json.loads(r.summary_json())
        assert s == {"protocol": "x", "pass": True, "statistics": {"a": 1.5, "b": None, "ok": True, "n": 3},
                     "notes": ["note"]}

    def test_write_reports(self, tmp_path):
        r = VerificationReport("p", False, {"a": 1.0}, {"c": [1]})
        paths = write_reports([r], tmp_path / "out")
        assert [p.name for p in paths] == ["p.csv", "p.summary.json"]
        assert (tmp_path / "out" / "p.csv").read_text() == "c\n1\n"


class TestPowerLawMatrix:
    @pytest.mark.parametrize("shape", [(40, 30), (30, 40), (200, 20)])
    def test_prescribed_spectrum(self, shape):
        A, sigma = power_law_matrix(*shape, mu=2.0, alpha=1.5, rng=RandomStream(0))
        k = np.arange(1, min(shape) + 1)
        np.testing.assert_allclose(sigma, 2.0 * k**-0.75, rtol=1e-15)
        np.testing.assert_allclose(spectral.singular_values(A), sigma, rtol=1e-10)

    def test_frozen_tail(self):
        _, sigma = power_law_matrix(20, 20, 1.0, 2.0, RandomStream(0), r=5)
        assert np.all(sigma[4:] == sigma[4])

    def test_bad_mu(self):
        with pytest.raises(ConfigError):
            power_law_matrix(4, 4, 0.0, 2.0, RandomStream(0))


class TestUnbiasedness:
    def test_small_pass(self):
        r = run_unbiasedness(small_cfg())
        assert r.passed
        assert len(r.table["mean"]) == 3
        assert 0.6 <= r.statistics["variance_ratio"] <= 1.4

    def test_zero_input(self):
        r = run_unbiasedness(small_cfg(), zero_input=True)
        assert r.passed
        assert all(m == 0.0 for m in r.table["mean"])

    def test_uniform_grid_ratio_near_one(self):
        cfg = small_cfg(scheme=quant.QuantScheme(family="uniform_step", step=0.05, block_size=None))
        r = run_unbiasedness(cfg)
        assert r.passed
        assert abs(r.statistics["variance_ratio"] - 1) < 0.05


class TestRegression:
    def test_identity_control(self):
        r = run_relative_error_regression(small_cfg(scheme=quant.IDENTITY))
        assert r.passed and r.statistics["skipped_no_noise"]
        assert all(e == 0 for e in r.table["max_eps"])

    def test_degenerate_floor(self):
        cfg = small_cfg(protocols={"regress": {"trials": 1, "m": 16, "n": 64, "floor": 2.0}})
        with pytest.raises(ConfigError):
            run_relative_error_regression(cfg)

    def test_reports_fit_columns(self):
        r = run_relative_error_regression(small_cfg())
        assert set(r.table) >= {"r2", "slope", "intercept", "head_ratio", "tail_ratio"}
        assert "median_r2_a1.5" in r.statistics


class TestStableRank:
    def test_small(self):
        r = run_stable_rank_sweep(small_cfg())
        assert r.passed
        assert r.statistics["increase_rate"] >= 0.95

    def test_identity_control(self):
        r = run_stable_rank_sweep(small_cfg(scheme=quant.IDENTITY))
        assert r.passed
        assert all(r.table["degenerate"])
        assert r.table["sr_before"] == r.table["sr_after"]
        assert r.statistics["non_degenerate"] == 0

    def test_int4_fixed_seed(self):
        cfg = small_cfg(scheme=quant.PRESETS["int4"], protocols={"srank": {"trials": 1, "alpha_lo": 2.0, "alpha_hi": 2.0}})
        r = run_stable_rank_sweep(cfg)
        assert r.table["sr_after"][0] > r.table["sr_before"][0]


class TestBBP:
    def test_small(self):
        r = run_bbp_check(small_cfg())
        assert r.passed
        assert r.statistics["rho_1"] == pytest.approx(10 * (1 + 0.5 / 9), rel=1e-14)

    def test_subcritical(self):
        cfg = small_cfg(protocols={"bbp": {"spike_ratios": [1.5]}})
        with pytest.raises(ConfigError, match="mp_bulk_edge"):
            run_bbp_check(cfg)

    def test_no_spikes_bulk_only(self):
        cfg = small_cfg(protocols={"bbp": {"spike_ratios": [], "trials": 2, "d": 200, "bulk_tol": 0.15}})
        r = run_bbp_check(cfg)
        assert r.passed
        assert "c0_rel_err" not in r.statistics


class TestBernstein:
    def test_small(self):
        r = run_bernstein_check(small_cfg())
        assert r.statistics["violations"] == 0
        assert r.passed
        assert len(r.table["t"]) == 10
        assert all(e <= b for e, b in zip(r.table["empirical"], r.table["bound"]))


class TestGradientBound:
    def test_small(self):
        r = run_gradient_bound_check(small_cfg())
        assert r.passed and r.statistics["violations"] == 0
        assert r.statistics["max_ratio"] <= 1 + 1e-10

    def test_identity_input(self):
        G = synth.synthetic_output_gradient(8, 5, 1.0, RandomStream(0))
        sg = spectral.singular_values(synth.weight_gradient(np.eye(8), G))
        np.testing.assert_allclose(sg, spectral.singular_values(G), rtol=1e-14)
        assert sg[0] <= 1.0 + 1e-14

    def test_M_doubles_bound(self):
        a = run_gradient_bound_check(small_cfg())
        b = run_gradient_bound_check(small_cfg(protocols={"gradbound": {"trials": 2, "M": 2.0}}))
        assert b.statistics["violations"] == 0
        np.testing.assert_allclose(b.table["max_ratio"], a.table["max_ratio"], rtol=1e-12)


class TestFailureProfile:
    def test_small(self):
        r = run_failure_profile(small_cfg())
        for name in ("main", "L3", "L7", "L15"):
            assert r.statistics[f"{name}_bound_violations"] == 0
        assert len(r.table["k"]) == 4 * 48

    def test_huge_eta(self):
        r = run_failure_profile(small_cfg(eta=1e3))
        assert all(t == 0 for t in r.table["theta_hat"])
        assert all(r.statistics[f"{n}_bound_violations"] == 0 for n in ("main", "L3", "L7", "L15"))

    def test_sweep_only_changes_quantizer(self):
        # every sweep run shares its stream offset, so head means differ only through L
        r = run_failure_profile(small_cfg(protocols={"failprof": {"trials": 2, "sweep_trials": 6, "m": 32, "n": 32,
                                                                  "levels": [3, 15]}}))
        assert r.statistics["L3_head_mean"] >= r.statistics["L15_head_mean"]


class TestSuite:
    def test_order_and_count(self):
        reports = run_full_suite(small_cfg())
        assert [r.protocol for r in reports] == list(PROTOCOLS)

    def test_subset_in_canonical_order(self):
        reports = run_full_suite(small_cfg(), ["gradbound", "unbias"])
        assert [r.protocol for r in reports] == ["unbias", "gradbound"]

    def test_unknown_protocol(self):
        with pytest.raises(ConfigError):
            run_full_suite(small_cfg(), ["nope"])

    def test_config_error_propagates(self):
        cfg = small_cfg(protocols={"bbp": {"spike_ratios": [1.0]}})
        with pytest.raises(ConfigError):
            run_full_suite(cfg, ["unbias", "bbp"])

    def test_failure_isolated(self):
        # a failing pass rule in one protocol leaves the rest running
        cfg = small_cfg(protocols={"unbias": {"trials": 2, "m": 32, "n": 32, "var_hi": 0.1}})
        reports = run_full_suite(cfg, ["unbias", "gradbound"])
        assert [r.passed for r in reports] == [False, True]

    def test_exception_isolated(self, monkeypatch):
        from specfid import verify

        def boom(cfg):
            raise RuntimeError("kaput")

        monkeypatch.setitem(verify.RUNNERS, "unbias", boom)
        reports = run_full_suite(small_cfg(), ["unbias", "gradbound"])
        assert not reports[0].passed and "kaput" in reports[0].notes[0]
        assert reports[1].passed

    def test_deterministic_bytes(self, tmp_path):
        cfg = small_cfg()
        names = ["unbias", "srank", "bernstein", "gradbound"]
        write_reports(run_full_suite(cfg, names), tmp_path / "a")
        write_reports(run_full_suite(cfg, names), tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_seed_changes_output(self):
        a = run_full_suite(small_cfg(seed=1), ["unbias"])[0].to_csv()
        b = run_full_suite(small_cfg(seed=2), ["unbias"])[0].to_csv()
        assert a != b

    def test_defaults_table_complete(self):
        assert set(PROTOCOL_DEFAULTS) == set(PROTOCOLS)
