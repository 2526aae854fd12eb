"""Training loop: determinism, metrics, intrinsic annotation, convergence."""

import numpy as np
import pytest

from augflow import env as E
from augflow import intrinsic as I
from augflow import model as M
from augflow import objectives as O
from augflow import tensor as T
from augflow import trainer as TR
from augflow.env import GridState, make_grid
from augflow.trainer import TrainerConfig, train


def small_cfg(**kw):
    base = dict(total_updates=20, hidden=(16, 16), eval_every=10, seed=0)
    base.update(kw)
    return TrainerConfig(**base)


def test_zero_updates_single_row():
    g = make_grid(3, reward_floor=0.1)
    rec = train(small_cfg(total_updates=0), g)
    assert len(rec.rows) == 1
    assert rec.rows[0].update == 0
    assert rec.rows[0].modes == 0
    assert np.isnan(rec.rows[0].loss)
    assert rec.visit_counts.sum() == 0


def test_determinism_bit_identical_records():
    g = make_grid(4, reward_floor=0.05)
    cfg = small_cfg(total_updates=30, objective="tb_joint",
                    intrinsic=I.IntrinsicConfig(kind="rnd", alpha=0.01, mode="joint",
                                                embed_dim=8, hidden=(16, 16)))
    a = train(cfg, g)
    b = train(cfg, g)
    assert a.rows_csv() == b.rows_csv()
    assert np.array_equal(a.visit_counts, b.visit_counts)
    c = train(small_cfg(total_updates=30, objective="tb_joint", seed=1,
                        intrinsic=cfg.intrinsic), g)
    assert c.rows_csv() != a.rows_csv()


def test_tb_converges_on_dense_h3():
    """Recorded run: final exact L1 ~ 3e-7, well under the 0.05 bound."""
    g = make_grid(3, reward_floor=0.1)
    cfg = TrainerConfig(total_updates=2000, objective="tb", seed=0,
                        hidden=(32, 32), eval_every=500)
    rec = train(cfg, g)
    assert rec.rows[-1].l1_error < 0.05
    assert rec.rows[-1].modes == 3


def test_mode_monotonicity_and_csv_shape():
    g = make_grid(3, reward_floor=0.1)
    rec = train(small_cfg(total_updates=40, eval_every=10), g)
    modes = [r.modes for r in rec.rows]
    assert modes == sorted(modes)
    lines = rec.rows_csv().strip().splitlines()
    assert lines[0] == TR.CSV_HEADER
    assert len(lines) == len(rec.rows) + 1
    visits = rec.visits_csv().strip().splitlines()
    assert len(visits) == 3 and all(len(row.split(",")) == 3 for row in visits)


def test_annotate_none_and_constant():
    g = make_grid(4, reward_floor=0.1)
    params = M.init_flow_model(g, np.random.default_rng(0), hidden=(8,))
    batch = M.rollout_batch(params, g, 1.0, np.random.default_rng(1), 6)
    TR.annotate_intrinsic(batch, I.IntrinsicConfig(kind="none"), None, g)
    assert all(np.all(tr.edge_intrinsic == 0) and tr.terminal_intrinsic == 0 for tr in batch)

    four_step = next((tr for tr in batch if tr.n_transitions == 4), None)
    cfg = I.IntrinsicConfig(kind="constant", alpha=0.01, mode="edge")
    TR.annotate_intrinsic(batch, cfg, None, g)
    if four_step is not None:
        assert four_step.edge_intrinsic.sum() == pytest.approx(0.04)
    assert all(tr.terminal_intrinsic == 0 for tr in batch)

    joint = I.IntrinsicConfig(kind="constant", alpha=0.01, mode="joint")
    TR.annotate_intrinsic(batch, joint, None, g)
    assert all(tr.terminal_intrinsic == 0.01 for tr in batch)


def test_annotate_rnd_matches_post_hoc_novelty():
    g = make_grid(4, reward_floor=0.1)
    params = M.init_flow_model(g, np.random.default_rng(0), hidden=(8,))
    batch = M.rollout_batch(params, g, 1.0, np.random.default_rng(2), 5)
    cfg = I.IntrinsicConfig(kind="rnd", alpha=0.5, mode="joint", embed_dim=8, hidden=(8, 8))
    pair = I.init_rnd(g, cfg, np.random.default_rng(3))
    TR.annotate_intrinsic(batch, cfg, pair, g)
    for tr in batch:
        for t in range(tr.n_transitions):
            want = I.novelty(pair, g, tr.states[t + 1])
            assert tr.edge_intrinsic[t] == pytest.approx(want, rel=1e-12)
        assert tr.terminal_intrinsic == pytest.approx(
            I.novelty(pair, g, tr.terminal), rel=1e-12
        )


def test_modes_discovered():
    g = make_grid(8, reward_floor=1e-6)
    counts = np.zeros(g.num_cells, dtype=np.int64)
    assert TR.modes_discovered(counts, g) == 0
    for cell in g.goal_cells:
        counts[E.cell_index(g, cell)] = 1
    assert TR.modes_discovered(counts, g) == 3


def test_uniform_rollouts_find_all_modes_h8():
    g = make_grid(8, reward_floor=1e-6)
    params = M.init_flow_model(g, np.random.default_rng(0), hidden=(8,))
    counts = np.zeros(g.num_cells, dtype=np.int64)
    rng = np.random.default_rng(4)
    for _ in range(10):
        for tr in M.rollout_batch(params, g, 1.0, rng, 1000):
            counts[E.cell_index(g, tr.terminal.coords)] += 1
    assert TR.modes_discovered(counts, g) == 3


def test_loss_trend_down():
    g = make_grid(4, reward_floor=0.05)
    cfg = TrainerConfig(total_updates=300, objective="tb", seed=0,
                        hidden=(16, 16), eval_every=50)
    rec = train(cfg, g)
    early = rec.rows[1].loss  # mean over updates 1..50
    late = rec.rows[-1].loss
    assert late < early


def test_nan_loss_aborts_with_snapshot(monkeypatch):
    g = make_grid(3, reward_floor=0.1)

    def bad_loss(kind, params, grid, batch, novelty_fn=None):
        return T.Tensor(float("nan"))

    monkeypatch.setattr(O, "batch_loss", bad_loss)
    monkeypatch.setattr(TR.O, "batch_loss", bad_loss)
    with pytest.raises(TR.NonFiniteLossError) as exc:
        train(small_cfg(total_updates=5), g)
    assert exc.value.update == 1
    assert exc.value.params is not None


def test_config_validation():
    with pytest.raises(ValueError, match="unknown objective"):
        small_cfg(objective="nope")
    with pytest.raises(ValueError, match="needs augmentation mode"):
        small_cfg(objective="tb_joint")
    with pytest.raises(ValueError, match="no intrinsic"):
        small_cfg(intrinsic=I.IntrinsicConfig(kind="constant", alpha=0.1, mode="none"))
    with pytest.raises(ValueError):
        small_cfg(batch_size=0)
    with pytest.raises(ValueError):
        small_cfg(topk=999)
    with pytest.raises(ValueError):
        small_cfg(epsilon=1.5)


def test_fm_and_db_objectives_train():
    g = make_grid(3, reward_floor=0.1)
    for objective in ("db", "fm"):
        cfg = TrainerConfig(total_updates=60, objective=objective, seed=0,
                            hidden=(16, 16), eval_every=30)
        rec = train(cfg, g)
        assert len(rec.rows) == 3
        assert np.isfinite(rec.rows[-1].loss)


def test_augmented_objectives_train():
    g = make_grid(3, reward_floor=0.1)
    for objective, mode in (
        ("tb_edge_aug", "edge"),
        ("tb_state_aug", "state"),
        ("tb_joint", "joint"),
        ("db_edge_aug", "edge"),
        ("fm_edge_aug", "edge"),
    ):
        icfg = I.IntrinsicConfig(kind="rnd", alpha=0.05, mode=mode,
                                 embed_dim=8, hidden=(16, 16))
        cfg = TrainerConfig(total_updates=40, objective=objective, seed=0,
                            hidden=(16, 16), eval_every=20, intrinsic=icfg)
        rec = train(cfg, g)
        assert np.isfinite(rec.rows[-1].loss)
        assert rec.rows[-1].mean_intrinsic > 0
