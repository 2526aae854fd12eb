"""CLI subcommands end to end on tiny sweeps."""

import numpy as np
import pytest

from augflow import sweep as S
from augflow.cli import main
from augflow.configio import load_experiment_spec


def write_sweep(tmp_path, trainer_body=None, sweep_body=None, out="out"):
    (tmp_path / "grid.cfg").write_text("H=3\nreward_floor=0.1\n")
    (tmp_path / "trainer.cfg").write_text(
        trainer_body
        or "total_updates=6\nbatch_size=4\nhidden=8\neval_every=3\nepsilon=0.05\n"
    )
    spec = tmp_path / "spec.cfg"
    spec.write_text(
        sweep_body
        or (
            "[sweep]\ngrid_config=grid.cfg\ntrainer_config=trainer.cfg\n"
            f"output_dir={out}\nobjectives=tb\nseeds=0,1\ncap=8\n"
        )
    )
    return spec


def test_run_writes_csvs_and_manifest(tmp_path):
    spec = write_sweep(tmp_path)
    assert main(["run", str(spec)]) == 0
    out = tmp_path / "out"
    csvs = sorted(p.name for p in out.glob("cell*__*.csv"))
    assert csvs == [
        "cell000__tb_H3_a0_seed0.csv",
        "cell000__tb_H3_a0_seed0_visits.csv",
        "cell001__tb_H3_a0_seed1.csv",
        "cell001__tb_H3_a0_seed1_visits.csv",
    ]
    manifest = (out / "manifest.txt").read_text()
    assert "status=ok" in manifest
    assert (out / "spec.cfg").exists()
    assert (out / "grid.cfg").exists()
    assert (out / "trainer.cfg").exists()


def test_rerun_byte_identical(tmp_path):
    spec_a = write_sweep(tmp_path, out="a")
    main(["run", str(spec_a)])
    spec_b = write_sweep(tmp_path, out="b")
    main(["run", str(spec_b)])
    for name in ["cell000__tb_H3_a0_seed0.csv", "cell001__tb_H3_a0_seed1.csv",
                 "manifest.txt"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_two_objectives_two_seeds_four_cells(tmp_path):
    spec = write_sweep(
        tmp_path,
        sweep_body=(
            "[sweep]\ngrid_config=grid.cfg\ntrainer_config=trainer.cfg\n"
            "output_dir=out\nobjectives=tb,db\nseeds=0,1\ncap=8\n"
        ),
    )
    assert main(["run", str(spec)]) == 0
    assert len(list((tmp_path / "out").glob("cell*__*[0-9].csv"))) == 4


def test_workers_give_identical_results(tmp_path):
    spec_a = write_sweep(tmp_path, out="serial")
    main(["run", str(spec_a)])
    spec_b = write_sweep(tmp_path, out="parallel")
    main(["run", str(spec_b), "--workers", "2"])
    a = (tmp_path / "serial" / "cell001__tb_H3_a0_seed1.csv").read_bytes()
    b = (tmp_path / "parallel" / "cell001__tb_H3_a0_seed1.csv").read_bytes()
    assert a == b


def test_cap_enforced(tmp_path):
    spec = write_sweep(
        tmp_path,
        sweep_body=(
            "[sweep]\ngrid_config=grid.cfg\ntrainer_config=trainer.cfg\n"
            "output_dir=out\nseeds=0,1,2,3\ncap=2\n"
        ),
    )
    assert main(["run", str(spec)]) == 1
    assert main(["run", str(spec), "--cap", "8"]) == 0


def test_config_error_exit_code(tmp_path):
    p = tmp_path / "broken.cfg"
    p.write_text("this is not a config\n")
    assert main(["run", str(p)]) == 1
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1


def test_cell_failure_exit_code(tmp_path):
    # reward floor 0 makes plain TB raise on the first floor-reward rollout
    (tmp_path / "grid.cfg").write_text("H=3\nreward_floor=0\n")
    (tmp_path / "trainer.cfg").write_text("total_updates=5\nbatch_size=8\nhidden=8\n")
    spec = tmp_path / "spec.cfg"
    spec.write_text(
        "[sweep]\ngrid_config=grid.cfg\ntrainer_config=trainer.cfg\noutput_dir=out\n"
    )
    assert main(["run", str(spec)]) == 2
    manifest = (tmp_path / "out" / "manifest.txt").read_text()
    assert "status=failed" in manifest


def test_summarize_and_plot(tmp_path, capsys):
    spec = write_sweep(tmp_path)
    main(["run", str(spec)])
    out = tmp_path / "out"
    assert main(["summarize", str(out)]) == 0
    text = capsys.readouterr().out
    assert "final L1" in text
    summary = (out / "summary.csv").read_text().strip().splitlines()
    assert len(summary) == 2  # header + one config
    assert summary[1].startswith("tb_H3_a0,2,")

    assert main(["plot", str(out)]) == 0
    svgs = sorted(p.name for p in out.glob("plot_*.svg"))
    assert svgs == [
        "plot_l1_error.svg",
        "plot_loss.svg",
        "plot_mean_intrinsic.svg",
        "plot_modes.svg",
        "plot_topk_reward.svg",
    ]
    body = (out / "plot_modes.svg").read_text()
    assert body.startswith("<svg") and body.rstrip().endswith("</svg>")
    # re-emission is deterministic
    first = (out / "plot_l1_error.svg").read_bytes()
    main(["plot", str(out)])
    assert (out / "plot_l1_error.svg").read_bytes() == first


def test_summary_with_missing_cells(tmp_path):
    spec = write_sweep(tmp_path)
    main(["run", str(spec)])
    out = tmp_path / "out"
    (out / "cell001__tb_H3_a0_seed1.csv").unlink()
    summaries, missing = S.summarize(out)
    assert missing == ["cell001__tb_H3_a0_seed1"]
    assert summaries[0].n_seeds == 1


def test_summary_hand_arithmetic(tmp_path):
    spec = write_sweep(tmp_path)
    main(["run", str(spec)])
    out = tmp_path / "out"
    runs = [
        S.read_metrics_csv(out / f"cell00{i}__tb_H3_a0_seed{i}.csv") for i in (0, 1)
    ]
    finals = [r["l1_error"][-1] for r in runs]
    summaries, _ = S.summarize(out)
    assert summaries[0].final_l1_mean == pytest.approx(np.mean(finals), rel=1e-12)
    assert summaries[0].final_l1_std == pytest.approx(np.std(finals), rel=1e-12)


def test_spec_evaluation_also_single_cell(tmp_path):
    spec = write_sweep(
        tmp_path,
        sweep_body=(
            "[sweep]\ngrid_config=grid.cfg\ntrainer_config=trainer.cfg\n"
            "output_dir=out\n"
        ),
    )
    loaded = load_experiment_spec(spec)
    cells = S.expand_cells(loaded)
    assert len(cells) == 1
    assert main(["run", str(spec)]) == 0
    assert (tmp_path / "out" / "manifest.txt").exists()


def test_verify_subcommand():
    assert main(["verify"]) == 0
