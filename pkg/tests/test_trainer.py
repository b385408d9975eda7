import numpy as np
import pytest

import waveloss.trainer as trainer
from waveloss.datasets import generate_wave_record, normalize_dataset
from waveloss.generator import load_checkpoint
from waveloss.trainer import TrainConfig, infer_records, train, write_log


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)
    with pytest.raises(ValueError):
        TrainConfig(loss_variant="l2")
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule=((0.0, 1e-3), (0.5, 2e-3)))  # increasing
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule=((0.0, 0.0),))


def test_lr_schedule_endpoints_and_breaks():
    cfg = TrainConfig(iterations=1000)
    assert cfg.lr_at(0) == 5e-4
    assert cfg.lr_at(399) == 5e-4
    assert cfg.lr_at(400) == 2e-4
    assert cfg.lr_at(700) == 5e-5
    assert cfg.lr_at(999) == 1e-5


def _tiny_dataset(seed=0, frames=6):
    recs = [generate_wave_record(M=8, k=2, frames=frames, seed=seed)]
    recs, _ = normalize_dataset(recs)
    return recs


def _tiny_config(**kw):
    base = dict(iterations=20, batch_size=1, T=3, seed=0,
                checkpoint_interval=10, loss_variant="mae", tile_size=8,
                tile_overlap=0, tile_band=2.0)
    base.update(kw)
    return TrainConfig(**base)


def test_overfit_single_sample():
    recs = _tiny_dataset()
    cfg = _tiny_config(iterations=200, checkpoint_interval=200)
    params, gen_cfg, log = train(cfg, recs)
    first = np.mean([r["loss"] for r in log[:10]])
    last = np.mean([r["loss"] for r in log[-10:]])
    assert last <= 0.5 * first
    assert all(np.isfinite(r["loss"]) for r in log)


def test_checkpoint_resume_is_bitwise_identical(tmp_path):
    recs = _tiny_dataset()
    full_dir = tmp_path / "full"
    half_dir = tmp_path / "half"
    full_dir.mkdir(), half_dir.mkdir()

    cfg = _tiny_config()
    params_full, _, _ = train(cfg, recs, out_dir=str(full_dir))

    # same 20-iteration config, interrupted after 10 (keeps the lr
    # schedule aligned with the uninterrupted run)
    train(cfg, recs, out_dir=str(half_dir), eval_every=10,
          stop_condition=lambda it, p, c: it >= 10)
    params_res, _, log = train(cfg, recs, out_dir=str(half_dir),
                               resume=str(half_dir / "checkpoint.wlck"))
    assert log[0]["iteration"] == 10
    for name in params_full:
        assert np.array_equal(params_full[name].data, params_res[name].data)
    assert ((full_dir / "checkpoint.wlck").read_bytes()
            == (half_dir / "checkpoint.wlck").read_bytes())


def test_train_rejects_bad_datasets():
    with pytest.raises(ValueError, match="empty"):
        train(_tiny_config(), [])
    with pytest.raises(ValueError, match="shorter"):
        train(_tiny_config(T=10), _tiny_dataset(frames=4))


def test_nan_loss_aborts_with_iteration(monkeypatch):
    class FakeLoss:
        def item(self):
            return float("nan")

    monkeypatch.setattr(trainer, "_batch_loss",
                        lambda *a, **k: FakeLoss())
    with pytest.raises(FloatingPointError, match="iteration 0"):
        train(_tiny_config(), _tiny_dataset())


def test_loss_variants_run_and_differ():
    recs = _tiny_dataset()
    finals = {}
    for variant in ("mae", "rfft", "wavelet"):
        cfg = _tiny_config(iterations=3, loss_variant=variant,
                           checkpoint_interval=100)
        _, _, log = train(cfg, recs)
        finals[variant] = log[0]["loss"]
    assert finals["wavelet"] > finals["mae"]  # weighted extra terms
    assert finals["rfft"] > finals["mae"]


def test_eval_callback_and_stop_condition():
    recs = _tiny_dataset()
    seen = []
    cfg = _tiny_config(iterations=12, checkpoint_interval=100)
    _, _, log = train(cfg, recs, eval_every=3,
                      eval_callback=lambda it, p, c: seen.append(it),
                      stop_condition=lambda it, p, c: it >= 6)
    assert seen == [3, 6]
    assert log[-1]["iteration"] == 5  # stopped early


def test_write_log_and_checkpoint_files(tmp_path):
    recs = _tiny_dataset()
    cfg = _tiny_config(iterations=10)
    params, gen_cfg, log = train(cfg, recs, out_dir=str(tmp_path))
    write_log(str(tmp_path / "log.csv"), log, cfg)
    lines = (tmp_path / "log.csv").read_text().strip().split("\n")
    assert lines[0] == "iteration,lr,loss_total"
    assert len(lines) == 11
    ck_cfg, ck_params, extra, meta = load_checkpoint(
        str(tmp_path / "checkpoint.wlck"))
    assert meta["iteration"] == "10"
    assert set(extra) == {p + n for n in ck_params
                          for p in ("adam.m.", "adam.v.")}


def test_infer_records_shapes():
    recs = _tiny_dataset()
    cfg = _tiny_config(iterations=2)
    params, gen_cfg, _ = train(cfg, recs)
    preds = infer_records(params, gen_cfg, recs, frames=4)
    assert len(preds) == 1 and len(preds[0]) == 4
    assert preds[0][0].data.shape == (16, 16, 1)
