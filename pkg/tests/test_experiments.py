import json
import math

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from hopgag import HopfieldConfig, InvalidInputError
from hopgag.experiments import (
    COLUMNS,
    ExperimentSpec,
    Report,
    gen_patterns,
    linear_contraction,
    read_report,
    run_convergence_bench,
    run_experiment,
    run_guidance_sweep,
    run_noise_robustness,
    thread_count,
    write_report,
)
from hopgag.hopfield import retrieve


def small(kind, **kw):
    base = {"noise_robustness": {"trials": 4},
            "convergence_bench": {"trials": 1, "dims": (8, 4)},
            "guidance_sweep": {"trials": 1, "dims": (8, 4), "max_iter": 100}}[kind]
    return ExperimentSpec(kind=kind, **{**base, **kw})


class TestPatterns:
    def test_deterministic(self):
        assert_array_equal(gen_patterns(5, 3, seed=9).array, gen_patterns(5, 3, seed=9).array)
        assert not np.array_equal(gen_patterns(5, 3, seed=9).array, gen_patterns(5, 3, seed=10).array)

    def test_shape(self):
        xi = gen_patterns(8, 16)
        assert xi.array.shape == (8, 16)

    def test_unit_sphere(self):
        norms = np.linalg.norm(gen_patterns(7, 11, "unit_sphere", 3).array, axis=0)
        assert np.all(np.abs(norms - 1) <= 1e-12)

    def test_known_first_draw(self):
        # Philox keyed by SeedSequence([0, 1]); frozen to catch accidental stream changes
        expected = np.random.Generator(np.random.Philox(np.random.SeedSequence([0, 1]))).standard_normal((2, 2))
        assert_array_equal(gen_patterns(2, 2, seed=0).array, expected)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            gen_patterns(0, 3)
        with pytest.raises(InvalidInputError):
            gen_patterns(3, 3, "cube")


class TestSpec:
    def test_defaults(self):
        spec = ExperimentSpec("noise_robustness")
        assert spec.dims == (32, 8)
        assert spec.effective_beta == pytest.approx(1 / math.sqrt(32))
        assert spec.alphas == [1.0, 1.5, 2.0]
        assert spec.sigmas == [0.0, 0.1, 0.2, 0.5, 1.0, 2.0]

    def test_round_trip_dict(self):
        spec = ExperimentSpec("guidance_sweep", seed=5, lambdas=[0.0, 3.0], guidance={"eta": None})
        again = ExperimentSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
        assert again == spec
        assert again.guidance.eta == math.inf

    @pytest.mark.parametrize("obj", [
        {"kind": "noise_robustness", "colour": "red"},
        {"kind": "warp_drive"},
        {"kind": "noise_robustness", "trials": 0},
        {"kind": "noise_robustness", "sigmas": []},
        {"kind": "noise_robustness", "alphas": [2.5]},
        {"kind": "guidance_sweep", "lambdas": []},
        {"kind": "guidance_sweep", "guidance": {"zeta": 2.0}},
        {"kind": "guidance_sweep", "guidance": {"nu": 1.0}},
        {"kind": "noise_robustness", "seed": -1},
        {"kind": "noise_robustness", "dims": [3]},
        {"kind": "noise_robustness", "pattern_mode": "cube"},
        {"kind": "noise_robustness", "tol": 0},
    ])
    def test_rejects_invalid(self, obj):
        with pytest.raises(InvalidInputError):
            ExperimentSpec.from_dict(obj)

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv("HOPGAG_THREADS", "3")
        assert thread_count() == 3
        monkeypatch.setenv("HOPGAG_THREADS", "0")
        assert thread_count() >= 1
        monkeypatch.setenv("HOPGAG_THREADS", "many")
        with pytest.raises(InvalidInputError):
            thread_count()


class TestNoiseRobustness:
    def test_row_count_and_columns(self):
        rep = run_noise_robustness(small("noise_robustness"))
        assert len(rep.rows) == 3 * 6 * 4
        assert all(list(r) == COLUMNS["noise_robustness"] for r in rep.rows)

    def test_zero_noise_is_baseline(self):
        spec = small("noise_robustness", sigmas=[0.0])
        rep = run_noise_robustness(spec)
        for r in rep.rows:
            xi = gen_patterns(32, 8, seed=r["trial"])
            target = xi.column(r["pattern"])
            cfg = HopfieldConfig(r["alpha"], spec.effective_beta)
            assert r["error"] == np.linalg.norm(retrieve(target, xi, cfg) - target)

    def test_separated_patterns_favour_sparsemax(self):
        spec = ExperimentSpec("noise_robustness", pattern_mode="unit_sphere", beta=8.0,
                              sigmas=[0.05, 0.1, 0.2], trials=20)
        grid = run_noise_robustness(spec).summary["grid"]
        mean = {(g["alpha"], g["sigma"]): g["mean_error"] for g in grid}
        for s in spec.sigmas:
            assert mean[(2.0, s)] <= mean[(1.0, s)]

    def test_thread_schedule_does_not_matter(self, monkeypatch):
        spec = small("noise_robustness")
        monkeypatch.setenv("HOPGAG_THREADS", "1")
        serial = run_noise_robustness(spec).rows
        monkeypatch.setenv("HOPGAG_THREADS", "4")
        assert run_noise_robustness(spec).rows == serial

    def test_growth_diagnostic_present(self):
        growth = run_noise_robustness(small("noise_robustness")).summary["growth"]
        assert [g["alpha"] for g in growth] == [1.0, 1.5, 2.0]


class TestConvergenceBench:
    def test_linear_testbed(self):
        A, b, x_star = linear_contraction(6, seed=1)
        assert np.allclose(A, A.T, atol=1e-15)
        assert np.max(np.abs(np.linalg.eigvalsh(A))) == pytest.approx(0.95)
        assert np.allclose(A @ x_star + b, x_star)

    def test_every_method_converges_on_contraction(self):
        rep = run_convergence_bench(small("convergence_bench"))
        linear = [r for r in rep.rows if r["testbed"] == "linear"]
        assert {r["method"] for r in linear} == {"picard", "km", "aa1_fixed", "aa1_ls", "aa5_ls", "gag"}
        assert all(r["converged"] for r in linear)

    def test_acceleration_halves_iterations(self):
        rep = run_convergence_bench(ExperimentSpec("convergence_bench", dims=(16, 8), trials=2))
        it = {(r["trial"], r["method"]): r["iterations"] for r in rep.rows if r["testbed"] == "linear"}
        for t in range(2):
            assert it[(t, "aa1_ls")] <= 0.5 * it[(t, "picard")]

    def test_deterministic(self):
        spec = small("convergence_bench")
        assert run_convergence_bench(spec).rows == run_convergence_bench(spec).rows


class TestGuidanceSweep:
    def test_synthetic_monotone_and_ceiling(self):
        spec = small("guidance_sweep", max_iter=400)
        rep = run_guidance_sweep(spec)
        for r in rep.rows:
            assert r["max_guidance_norm"] <= r["guidance_ceiling"] * (1 + 1e-12)
            if r["testbed"] == "synthetic" and r["zeta"] == 0.0:
                assert r["u_monotone"]
        assert {r["lam"] for r in rep.rows} == {0.0, 1.0, 5.0, 10.0}

    def test_row_count(self):
        rep = run_guidance_sweep(small("guidance_sweep", trials=2, lambdas=[0.0, 2.0, 4.0]))
        assert len(rep.rows) == 2 * 3 * 2 * 2  # testbeds x lambdas x zeta x trials


class TestReports:
    def test_csv_round_trip(self, tmp_path):
        rep = run_experiment(small("noise_robustness"))
        write_report(rep, tmp_path / "r.csv")
        text = (tmp_path / "r.csv").read_bytes()
        assert text.count(b"\r\n") == len(rep.rows) + 1
        assert read_report(tmp_path / "r.csv").rows == rep.rows

    def test_csv_header_only(self, tmp_path):
        rep = Report({"spec": {"kind": "convergence_bench"}}, [], {})
        write_report(rep, tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == ",".join(COLUMNS["convergence_bench"]) + "\n"

    def test_csv_seventeen_digits(self, tmp_path):
        rep = Report({"spec": {"kind": "noise_robustness"}},
                     [{"alpha": 1.0, "sigma": 0.1, "trial": 0, "pattern": 2, "error": 1 / 3}], {})
        write_report(rep, tmp_path / "d.csv")
        assert "0.33333333333333331" in (tmp_path / "d.csv").read_text()

    def test_json_round_trip(self, tmp_path):
        spec = small("guidance_sweep", guidance={"eta": None})
        rep = run_experiment(spec)
        write_report(rep, tmp_path / "r.json", "json")
        back = read_report(tmp_path / "r.json", "json")
        assert back.rows == rep.rows
        assert ExperimentSpec.from_dict(back.metadata["spec"]) == spec
        assert back.metadata["version"] == "0.1.0"

    def test_unwritable_destination(self, tmp_path):
        rep = run_experiment(small("noise_robustness"))
        with pytest.raises(Exception, match="missing"):
            write_report(rep, tmp_path / "missing" / "r.csv")

    def test_unknown_format(self, tmp_path):
        with pytest.raises(InvalidInputError):
            write_report(run_experiment(small("noise_robustness")), tmp_path / "r.x", "xml")
