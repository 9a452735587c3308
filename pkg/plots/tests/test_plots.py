"""Plot-script tests: schema guards, grid shape, byte stability.

These tests feed the scripts hand-written CSV fixtures in the harness's
external CSV schemas; they do not import the simulation package.
"""

import importlib.util
import sys
from pathlib import Path

import pytest

PLOTS_DIR = Path(__file__).resolve().parents[1]


def _load(name):
    spec = importlib.util.spec_from_file_location(name, PLOTS_DIR / f"{name}.py")
    mod = importlib.util.module_from_spec(spec)
    sys.modules[name] = mod
    spec.loader.exec_module(mod)
    return mod


plot_trajectories = _load("plot_trajectories")
plot_sweep = _load("plot_sweep")

TRAJ_HEADER = ("step,x,y,b,x_hat2,y_hat2,P2,sample_error,phase,stage,"
               "cum_productive,cum_blank,cum_leaks")
AGG_HEADER = ("group_key,trials,mean_sample_success,sd_sample_success,"
              "wilson_lo,wilson_hi,conv_rate,mean_steps_converged")


def write_traj(path, rows=6):
    lines = [TRAJ_HEADER]
    for i in range(rows):
        step = i * 100
        x, y, b = 10 + i * 5, 10 - i, 40 - i * 4
        lines.append(f"{step},{x},{y},{b},{2*x+b},{2*y+b},{2*(x-y)},"
                     f"0.5,1,0,{i*20},{i*10},0")
    path.write_text("\n".join(lines) + "\n")


def write_agg(path, ms=(60, 150, 300)):
    lines = [AGG_HEADER]
    for m in ms:
        p = min(0.99, 0.5 + m / 400)
        lines.append(f'"protocol=dbamc,n=600,m={m},margin=80,beta=0.001,'
                     f'byz=none:0",3000,{p},0.1,{p-0.02},{p+0.02},0.9,1234')
    path.write_text("\n".join(lines) + "\n")


class TestTrajectoriesGrid:
    def test_twelve_csvs_make_three_by_four_grid(self, tmp_path):
        for size in (300, 1000, 5000):
            for bi in range(4):
                write_traj(tmp_path / f"fig2_m{size}_b{bi}_beta0.001.csv")
        out = tmp_path / "fig2.png"
        plot_trajectories.render(
            [str(p) for p in tmp_path.glob("fig2_*.csv")], str(out))
        assert out.exists() and out.stat().st_size > 0

    def test_single_csv_single_panel(self, tmp_path):
        p = tmp_path / "one.csv"
        write_traj(p)
        out = tmp_path / "one.png"
        plot_trajectories.render([str(p)], str(out))
        assert out.exists()

    def test_header_mismatch_names_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(TRAJ_HEADER.replace("y_hat2", "yhat") + "\n0,1,1,1\n")
        with pytest.raises(plot_trajectories.PlotError, match="y_hat2"):
            plot_trajectories.render([str(p)], str(tmp_path / "o.png"))

    def test_short_csv_rejected_with_filename(self, tmp_path):
        p = tmp_path / "short.csv"
        p.write_text(TRAJ_HEADER + "\n")
        with pytest.raises(plot_trajectories.PlotError, match="short.csv"):
            plot_trajectories.render([str(p)], str(tmp_path / "o.png"))

    def test_missing_csv_exits_nonzero(self, tmp_path, capsys):
        code = plot_trajectories.main(["--glob", str(tmp_path / "nope*.csv"),
                                       "--out", str(tmp_path / "o.png")])
        assert code == 1

    def test_byte_stable_output(self, tmp_path):
        p = tmp_path / "t.csv"
        write_traj(p)
        o1, o2 = tmp_path / "a.png", tmp_path / "b.png"
        plot_trajectories.render([str(p)], str(o1))
        plot_trajectories.render([str(p)], str(o2))
        assert o1.read_bytes() == o2.read_bytes()


class TestSweep:
    def test_seven_point_sweep(self, tmp_path):
        p = tmp_path / "fig3_agg.csv"
        write_agg(p, ms=(60, 150, 300, 600, 1200, 2400, 3000))
        out = tmp_path / "fig3.png"
        assert plot_sweep.main(["--in", str(p), "--out", str(out)]) == 0
        assert out.exists() and out.stat().st_size > 0

    def test_empty_rows_rejected(self, tmp_path, capsys):
        p = tmp_path / "empty.csv"
        p.write_text(AGG_HEADER + "\n")
        code = plot_sweep.main(["--in", str(p), "--out",
                                str(tmp_path / "o.png")])
        assert code == 1
        assert not (tmp_path / "o.png").exists()

    def test_header_mismatch_names_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(AGG_HEADER.replace("wilson_lo", "ci_lo") + "\n")
        with pytest.raises(plot_sweep.PlotError, match="wilson_lo"):
            plot_sweep.render(str(p), str(tmp_path / "o.png"))

    def test_byte_stable_output(self, tmp_path):
        p = tmp_path / "agg.csv"
        write_agg(p)
        o1, o2 = tmp_path / "a.png", tmp_path / "b.png"
        plot_sweep.render(str(p), str(o1))
        plot_sweep.render(str(p), str(o2))
        assert o1.read_bytes() == o2.read_bytes()

    def test_points_sorted_by_m(self, tmp_path):
        p = tmp_path / "agg.csv"
        write_agg(p, ms=(300, 60, 150))
        points = plot_sweep.load_sweep(str(p))
        assert [m for m, *_ in points] == [60, 150, 300]
