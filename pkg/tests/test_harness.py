"""Experiment orchestration: config, planning, grid runs, summaries, CLI."""

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from dpaccel import harness
from dpaccel.cli import main
from dpaccel.harness import (
    ExperimentConfig,
    build_objective,
    comparison_table,
    plan_cell,
    reference_optimum,
    run_grid,
    summarize,
)
from dpaccel.objectives import Dataset, LogisticObjective, QuadraticObjective, generate_synthetic
from dpaccel.optimizers import Trace, nesterov_momentum, polyak_momentum
from dpaccel.privacy_core import NoiseSchedule, epsilon_of
from dpaccel.svgplot import write_line_svg


def tiny_config(**overrides):
    base = dict(
        d=3, n=120, u_max=2.0, lam=0.05, data_seed=3, epsilon=1.0,
        algorithms=("dp-gd", "dp-hb", "dp-nag-opt"),
        m_values=(40, 120), T_values=(4, 6), c_values=(0.5,),
        replicates=2, seed_base=7,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("grid")
    config = tiny_config()
    summary = run_grid(config, out)
    return config, out, summary


# ---------------------------------------------------------------------------
# ExperimentConfig


def test_config_defaults_and_seed_list():
    cfg = ExperimentConfig()
    assert cfg.d == 20 and cfg.n == 10_000 and cfg.epsilon == 1.0
    assert cfg.lam == 0.01 and cfg.u_max == 20.0 and cfg.e0_guess == 10.0
    assert cfg.m_values == (1_000, 10_000)
    assert cfg.T_values == (100, 200, 500, 1000)
    assert cfg.c_values == (0.1, 1.0)
    assert cfg.seed_list == list(range(1000, 1020))
    cfg2 = ExperimentConfig(seeds=(5, 9, 2))
    assert cfg2.seed_list == [5, 9, 2]


def test_config_full_scale_bumps_n():
    cfg = ExperimentConfig(full_scale=True)
    assert cfg.n == 100_000
    assert cfg.objective_tag != ExperimentConfig().objective_tag


def test_config_json_round_trip(tmp_path):
    cfg = tiny_config(seeds=(1, 2, 3), x0=(0.0, 0.5, -0.5))
    path = tmp_path / "config.json"
    cfg.to_json(path)
    back = ExperimentConfig.from_json(path)
    assert back == cfg
    assert isinstance(back.algorithms, tuple)
    assert isinstance(back.seeds, tuple)


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"d": 3, "n": 100, "budget": 2.0}))
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_json(path)


def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(epsilon=0.0)
    with pytest.raises(ValueError):
        tiny_config(m_values=(500,))  # m > n
    with pytest.raises(ValueError):
        tiny_config(T_values=(0,))
    with pytest.raises(ValueError):
        tiny_config(c_values=(1.5,))
    with pytest.raises(ValueError):
        tiny_config(algorithms=("dp-gd", "dp-fancy"))
    with pytest.raises(ValueError):
        tiny_config(x0=(1.0,))
    with pytest.raises(ValueError):
        tiny_config(workers=0)
    with pytest.raises(ValueError):
        tiny_config(replicates=0)


# ---------------------------------------------------------------------------
# reference_optimum


def test_reference_optimum_quadratic_matches_solve():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(4, 4))
    Q = G @ G.T + 0.5 * np.eye(4)
    q = rng.normal(size=4)
    obj = QuadraticObjective(Q, q)
    xstar, fstar, gnorm = reference_optimum(obj)
    np.testing.assert_allclose(xstar, obj.minimizer, atol=1e-8)
    assert fstar == pytest.approx(obj.fstar, abs=1e-12)
    assert gnorm < 1e-8


def test_reference_optimum_logistic_stationary():
    obj = LogisticObjective(generate_synthetic(5, 500, 4.0, seed=1), lam=0.05)
    xstar, fstar, gnorm = reference_optimum(obj)
    assert gnorm < 1e-6
    assert fstar < obj.value(np.zeros(5))


def test_reference_optimum_ridge_dominated():
    # stationarity gives 2*lam*x* = -grad_loss(x*), so the optimum shrinks
    # toward the origin like 1/lam
    data = generate_synthetic(5, 500, 4.0, seed=1)
    norms = []
    for lam in (10.0, 100.0):
        xstar, _, _ = reference_optimum(LogisticObjective(data, lam=lam))
        norms.append(np.linalg.norm(xstar))
    assert norms[0] < 0.02
    assert norms[1] < norms[0] / 5.0


# ---------------------------------------------------------------------------
# plan_cell


@pytest.fixture(scope="module")
def small_obj():
    return LogisticObjective(generate_synthetic(3, 120, 2.0, seed=3), lam=0.05)


def test_plan_cell_uniform_algorithms(small_obj):
    obj = small_obj
    S1 = obj.sensitivity_bound()
    for algo in ("dp-gd", "dp-hb", "dp-nag"):
        run_algo, hp, sched = plan_cell(algo, obj, 40, 6, 0.5, 1.0, 10.0, 1)
        assert run_algo == algo
        assert hp.alpha == 0.5 / obj.L
        assert hp.T == 6 and hp.m == 40
        assert sched.provenance == "uniform"
        assert len(sched.b) == 6
        leak = float(np.sum(epsilon_of(S1, sched.b, obj.n, 40)))
        assert leak == pytest.approx(1.0, abs=1e-9)
    _, hp_gd, _ = plan_cell("dp-gd", obj, 40, 6, 0.5, 1.0, 10.0, 1)
    assert hp_gd.beta == 0.0
    _, hp_hb, _ = plan_cell("dp-hb", obj, 40, 6, 0.5, 1.0, 10.0, 1)
    assert hp_hb.beta == pytest.approx(polyak_momentum(obj.mu, obj.L), rel=1e-15)
    _, hp_nag, _ = plan_cell("dp-nag", obj, 40, 6, 0.5, 1.0, 10.0, 1)
    assert hp_nag.beta == pytest.approx(nesterov_momentum(0.5 / obj.L, obj.mu), rel=1e-15)


def test_plan_cell_masg(small_obj):
    run_algo, hp, sched = plan_cell("dp-masg", small_obj, 120, 30, 1.0, 1.0, 10.0, 1)
    assert run_algo == "dp-masg"
    assert hp.stages is not None
    assert hp.stages.total == 30
    assert hp.alpha == hp.stages.alphas[0]
    assert sched.provenance == "uniform"


def test_plan_cell_opt_variants(small_obj):
    obj = small_obj
    S1 = obj.sensitivity_bound()
    for algo, base in (("dp-nag-opt", "dp-nag"), ("dp-masg-opt", "dp-masg")):
        run_algo, hp, sched = plan_cell(algo, obj, 120, 50, 1.0, 1.0, 10.0, 1)
        assert run_algo == base
        assert hp.T <= 50
        assert len(sched.b) == hp.T
        assert sched.provenance.startswith("optimized")
        leak = float(np.sum(epsilon_of(S1, sched.b, obj.n, 120)))
        assert leak == pytest.approx(1.0, abs=1e-9)
        # subsampled planning rescales and re-audits
        run_algo, hp, sched = plan_cell(algo, obj, 40, 50, 1.0, 1.0, 10.0, 1)
        assert sched.provenance == "optimized+rescaled"
        leak = float(np.sum(epsilon_of(S1, sched.b, obj.n, 40)))
        assert leak == pytest.approx(1.0, abs=1e-9)


def test_plan_cell_unknown_algorithm(small_obj):
    with pytest.raises(ValueError, match="unknown grid algorithm"):
        plan_cell("dp-sgd", small_obj, 40, 6, 0.5, 1.0, 10.0, 1)


# ---------------------------------------------------------------------------
# run_grid


def test_run_grid_outputs(tiny_grid):
    config, out, summary = tiny_grid
    n_cells = 3 * 2 * 2 * 1
    assert len(summary["records"]) == n_cells
    assert summary["failed"] == []
    traces = sorted((out / "traces").glob("*.csv"))
    assert len(traces) == n_cells * 2
    curves = sorted((out / "curves").glob("curve_*.csv"))
    assert len(curves) == n_cells
    with open(out / "summary.json") as fh:
        on_disk = json.load(fh)
    assert on_disk["reference"]["grad_norm"] < 1e-6
    assert on_disk["objective"] == config.objective_tag
    assert {r["n_seeds"] for r in on_disk["records"]} == {2}


def test_run_grid_budget_spent_everywhere(tiny_grid):
    # every trace's cumulative leak lands on the configured budget
    _, out, _ = tiny_grid
    for path in sorted((out / "traces").glob("*.csv")):
        tr = Trace.from_csv(path)
        assert tr.eps_cum[-1] == pytest.approx(1.0, abs=1e-6)
        assert np.all(np.diff(tr.eps_cum) >= 0)


def test_run_grid_horizons(tiny_grid):
    _, _, summary = tiny_grid
    for rec in summary["records"]:
        assert rec["T_effective"] <= rec["T"]
        if rec["algorithm"] in ("dp-gd", "dp-hb"):
            assert rec["T_effective"] == rec["T"]
    assert "dp-gd|m=40|c=0.5" in summary["comparison"]


def test_run_grid_rerun_is_bitwise_identical(tmp_path):
    cfg = tiny_config(algorithms=("dp-hb",), m_values=(40,), T_values=(5,))
    a, b = tmp_path / "a", tmp_path / "b"
    run_grid(cfg, a)
    run_grid(tiny_config(algorithms=("dp-hb",), m_values=(40,), T_values=(5,)), b)
    for pa in sorted((a / "traces").glob("*.csv")):
        pb = b / "traces" / pa.name
        assert pa.read_bytes() == pb.read_bytes()
    for pa in sorted((a / "curves").glob("*.csv")):
        assert pa.read_bytes() == (b / "curves" / pa.name).read_bytes()


def test_run_grid_workers_match_serial(tmp_path):
    kw = dict(algorithms=("dp-gd", "dp-nag-opt"), m_values=(40,), T_values=(5,))
    a, b = tmp_path / "serial", tmp_path / "pool"
    run_grid(tiny_config(**kw), a, workers=1)
    run_grid(tiny_config(**kw), b, workers=3)
    names_a = sorted(p.name for p in (a / "traces").glob("*.csv"))
    names_b = sorted(p.name for p in (b / "traces").glob("*.csv"))
    assert names_a == names_b
    for name in names_a:
        assert (a / "traces" / name).read_bytes() == (b / "traces" / name).read_bytes()


def test_run_grid_records_failed_cells(tmp_path, monkeypatch):
    real = harness.plan_cell

    def flaky(algo, *args, **kwargs):
        if algo == "dp-hb":
            raise ValueError("boom")
        return real(algo, *args, **kwargs)

    monkeypatch.setattr(harness, "plan_cell", flaky)
    cfg = tiny_config(algorithms=("dp-gd", "dp-hb"), m_values=(40,), T_values=(5,))
    summary = run_grid(cfg, tmp_path / "out")
    assert len(summary["failed"]) == 1
    assert summary["failed"][0]["error"] == "boom"
    assert {r["algorithm"] for r in summary["records"]} == {"dp-gd"}


# ---------------------------------------------------------------------------
# summarize


def synthetic_trace(subopt, algo="dp-gd", m=40, T=None, c=0.5, tag="obj", eps=1.0):
    subopt = np.asarray(subopt, dtype=float)
    T = len(subopt) - 1 if T is None else T
    t = np.arange(len(subopt))
    eps_cum = np.linspace(0.0, eps, len(subopt))
    meta = {
        "objective": tag,
        "epsilon_total": eps,
        "grid": {"algorithm": algo, "m": m, "T": T, "c": c},
    }
    return Trace(t=t, subopt=subopt, eps_cum=eps_cum, meta=meta)


def test_summarize_single_trace_equals_trace():
    tr = synthetic_trace([1.0, 0.1, 0.01])
    summary = summarize([tr])
    rec = summary["records"][0]
    np.testing.assert_allclose(rec["mean_log10"], np.log10(tr.subopt), rtol=1e-15)
    assert rec["sem_log10"] == [0.0, 0.0, 0.0]
    assert rec["final_mean_error"] == 0.01
    assert rec["n_seeds"] == 1


def test_summarize_hand_means():
    a = synthetic_trace([1.0, 0.1])
    b = synthetic_trace([1.0, 0.001])
    rec = summarize([a, b])["records"][0]
    np.testing.assert_allclose(rec["mean_log10"], [0.0, -2.0], atol=1e-15)
    # log10 finals are -1 and -3: std(ddof=1) = sqrt(2), sem = 1
    assert rec["sem_log10"][1] == pytest.approx(1.0, rel=1e-12)
    assert rec["final_mean_error"] == pytest.approx(0.0505, rel=1e-12)


def test_summarize_permutation_invariant():
    traces = [
        synthetic_trace([1.0, 10 ** -(i + 1)], algo=algo, T=9)
        for algo in ("dp-gd", "dp-hb")
        for i in range(3)
    ]
    fwd = summarize(traces)
    rev = summarize(traces[::-1])
    assert fwd == rev


def test_summarize_best_over_T():
    traces = [
        synthetic_trace([1.0] * 5 + [0.5], T=5),
        synthetic_trace([1.0] * 8 + [0.2], T=8),
    ]
    summary = summarize(traces)
    pick = summary["comparison"]["dp-gd|m=40|c=0.5"]
    assert pick["best_T"] == 8
    assert pick["final_mean_error"] == 0.2
    table = comparison_table(summary)
    assert "dp-gd" in table and "0.2" in table


def test_summarize_rejects_mismatches():
    with pytest.raises(ValueError, match="no traces"):
        summarize([])
    with pytest.raises(ValueError, match="mix objectives"):
        summarize([synthetic_trace([1.0, 0.1], tag="a"), synthetic_trace([1.0, 0.1], tag="b")])
    with pytest.raises(ValueError, match="mix budgets"):
        summarize([synthetic_trace([1.0, 0.1], eps=1.0), synthetic_trace([1.0, 0.1], eps=2.0)])
    with pytest.raises(ValueError, match="mixes trace lengths"):
        summarize([synthetic_trace([1.0, 0.1], T=5), synthetic_trace([1.0, 0.1, 0.01], T=5)])


def test_summarize_accepts_paths(tmp_path):
    tr = synthetic_trace([1.0, 0.25, 0.125])
    path = tmp_path / "tr.csv"
    tr.to_csv(path)
    assert summarize([path]) == summarize([tr])


def test_summarize_floors_zero_suboptimality():
    rec = summarize([synthetic_trace([1.0, 0.0])])["records"][0]
    assert rec["mean_log10"][1] == -300.0


# ---------------------------------------------------------------------------
# svgplot


def test_write_line_svg(tmp_path):
    out = tmp_path / "plot.svg"
    xs = np.arange(10)
    write_line_svg(out, [("a", xs, np.sin(xs)), ("b", xs, np.where(xs > 5, np.nan, xs))],
                   title="demo", xlabel="t", ylabel="y")
    root = ET.parse(out).getroot()
    assert root.tag.endswith("svg")
    body = out.read_text()
    assert body.count("<polyline") == 2
    assert "demo" in body


def test_write_line_svg_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        write_line_svg(tmp_path / "x.svg", [])
    with pytest.raises(ValueError):
        write_line_svg(tmp_path / "x.svg", [("a", [0, 1], [np.nan, np.nan])])


# ---------------------------------------------------------------------------
# CLI


def test_cli_gen_data(tmp_path):
    out = tmp_path / "data.csv"
    rc = main(["gen-data", "--out", str(out), "--d", "3", "--n", "50", "--seed", "1"])
    assert rc == 0
    data = Dataset.from_csv(out)
    assert data.U.shape == (50, 3)


def test_cli_allocate_uniform(tmp_path):
    out = tmp_path / "sched.csv"
    rc = main(["allocate", "--scheme", "uniform", "--S1", "4.0", "--epsilon", "1.0",
               "--T", "10", "--n", "1000", "--m", "100", "--out", str(out)])
    assert rc == 0
    sched = NoiseSchedule.from_csv(out)
    assert len(sched.b) == 10
    leak = float(np.sum(epsilon_of(4.0, sched.b, 1000, 100)))
    assert leak == pytest.approx(1.0, abs=1e-9)


def test_cli_allocate_nag_opt_selects_horizon(tmp_path):
    out = tmp_path / "sched.csv"
    rc = main(["allocate", "--scheme", "nag-opt", "--S1", "4.0", "--epsilon", "1.0",
               "--T", "60", "--n", "1000", "--mu", "0.1", "--L", "1.0",
               "--e0", "10.0", "--d", "3", "--out", str(out)])
    assert rc == 0
    sched = NoiseSchedule.from_csv(out)
    assert 1 <= len(sched.b) <= 60
    leak = float(np.sum(epsilon_of(4.0, sched.b, 1000, 1000)))
    assert leak == pytest.approx(1.0, abs=1e-9)


def test_cli_certify(tmp_path):
    out_json = tmp_path / "cert.json"
    out_curve = tmp_path / "bound.csv"
    rc = main(["certify", "--alpha", "1.0", "--beta", "0.0", "--mu", "0.5", "--L", "1.0",
               "--out-json", str(out_json),
               "--S1", "4.0", "--epsilon", "1.0", "--T", "20", "--n", "1000", "--m", "1000",
               "--out-curve", str(out_curve)])
    assert rc == 0
    with open(out_json) as fh:
        payload = json.load(fh)
    assert payload["rho"] == 0.71
    lines = out_curve.read_text().strip().splitlines()
    assert lines[0] == "t,bound"
    assert len(lines) == 22  # header + t = 0..20


def test_cli_certify_infeasible_exit_code():
    assert main(["certify", "--alpha", "10.0", "--beta", "0.999",
                 "--mu", "0.5", "--L", "1.0"]) == 1


def test_cli_analyze_quadratic(tmp_path):
    out = tmp_path / "bound.csv"
    rc = main(["analyze-quadratic", "--alpha", "0.5", "--beta", "0.1",
               "--eigs", "0.5,1.0", "--sigma2", "0.01", "--t-max", "15",
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,bound"
    assert len(lines) == 17


def test_cli_run_and_summarize(tmp_path):
    cfg = tiny_config(algorithms=("dp-gd",), m_values=(40,), T_values=(5,))
    cfg_path = tmp_path / "config.json"
    cfg.to_json(cfg_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    assert (out / "summary.json").exists()

    sum_json = tmp_path / "summary.json"
    svg_dir = tmp_path / "svg"
    rc = main(["summarize", "--traces", str(out / "traces"),
               "--out", str(sum_json), "--svg", str(svg_dir)])
    assert rc == 0
    with open(sum_json) as fh:
        summary = json.load(fh)
    assert summary["epsilon"] == 1.0
    svgs = list(svg_dir.glob("*.svg"))
    assert svgs
    for p in svgs:
        ET.parse(p)


def test_cli_summarize_empty_dir_exits(tmp_path):
    with pytest.raises(SystemExit):
        main(["summarize", "--traces", str(tmp_path)])
