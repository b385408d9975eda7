import numpy as np
import pytest

from waveloss.datasets import (Frame, SimSequence, generate_wave_record,
                               heights_to_sdf)
from waveloss.evaluation import (EvalReport, evaluate_model, export_report,
                                 export_spectra, export_subband_image,
                                 merge_reports, metric_freq_mae, metric_mae,
                                 read_report, write_pgm)
from waveloss.grid import Grid


def _seq(height_list, extent=16):
    frames = [Frame(sdf=heights_to_sdf(h, extent)) for h in height_list]
    return SimSequence(frames=frames, resolution="high", k=1, source="test")


def _wavy(mid, amps, n=32, T=4, phase=0.0):
    x = np.arange(n)
    hs = []
    for t in range(T):
        h = np.full(n, float(mid))
        for f, a in amps:
            h = h + a * np.sin(2 * np.pi * f * (x + t + phase) / n)
        hs.append(h)
    return hs


def test_metric_mae():
    a = _seq(_wavy(8.0, [(2, 1.0)]))
    assert metric_mae([a], [a]) == 0.0
    rng = np.random.default_rng(0)
    base = [rng.uniform(4, 12, 32) for _ in range(3)]
    off = [h + 0.25 for h in base]
    # a constant height offset is a constant SDF offset
    assert abs(metric_mae([_seq(off)], [_seq(base)]) - 0.25) < 1e-12
    with pytest.raises(ValueError, match="mismatch"):
        metric_mae([_seq(base, extent=16)], [_seq(base, extent=8)])


def test_metric_freq_mae_basics():
    a = _seq(_wavy(8.0, [(2, 1.0), (9, 0.5)]))
    assert metric_freq_mae([a], [a], "spatial") == 0.0
    assert metric_freq_mae([a], [a], "temporal") == 0.0


def test_metric_freq_mae_penalizes_missing_high_band():
    gt = [_seq(_wavy(8.0, [(2, 1.0), (11, 0.6)]))]
    with_band = [_seq(_wavy(8.0, [(2, 1.0), (11, 0.6)], phase=0.3))]
    without = [_seq(_wavy(8.0, [(2, 1.0)], phase=0.3))]
    good = metric_freq_mae(with_band, gt, "spatial")
    bad = metric_freq_mae(without, gt, "spatial")
    assert bad > good


def test_metric_freq_mae_permutation_invariant():
    rng = np.random.default_rng(1)
    gen = [_seq([8.0 + rng.uniform(-1, 1, 32) for _ in range(3)])
           for _ in range(3)]
    gt = [_seq([8.0 + rng.uniform(-1, 1, 32) for _ in range(3)])
          for _ in range(3)]
    fwd = metric_freq_mae(gen, gt, "temporal")
    rev = metric_freq_mae(gen[::-1], gt[::-1], "temporal")
    assert abs(fwd - rev) < 1e-12


def _report(name="self"):
    rec = generate_wave_record(M=8, k=2, frames=4, seed=9)
    preds = [[f.sdf for f in rec.high.frames]]
    return evaluate_model(preds, [rec], name=name)


def test_evaluate_model_self_is_zero():
    report = _report()
    row = report.rows["self"]
    assert row["mae"] == 0.0
    assert row["spatial_freq_mae"] == 0.0
    assert row["temporal_freq_mae"] == 0.0
    assert set(report.spectra) == {"generated", "ground_truth", "input"}


def test_report_csv_roundtrip(tmp_path):
    report = EvalReport(rows={
        "mae_model": {"mae": 0.0391234567, "spatial_freq_mae": 0.99,
                      "temporal_freq_mae": 0.881},
        "surf": {"mae": 0.047, "spatial_freq_mae": 0.884,
                 "temporal_freq_mae": 0.738}})
    path = tmp_path / "report.csv"
    export_report(report, str(path))
    back = read_report(str(path))
    for model, row in report.rows.items():
        for key, val in row.items():
            assert abs(back.rows[model][key] - val) < 1e-12
    # deterministic byte stream
    path2 = tmp_path / "again.csv"
    export_report(report, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_export_spectra_format(tmp_path):
    report = _report()
    path = tmp_path / "spectra.csv"
    export_spectra(report, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "series,domain,bin,frequency,amplitude"
    series = {ln.split(",")[0] for ln in lines[1:]}
    assert series == {"generated", "ground_truth", "input"}
    domains = {ln.split(",")[1] for ln in lines[1:]}
    assert domains == {"spatial", "temporal"}


def test_merge_reports_prefixes_generated_spectra():
    a, b = _report(name="model"), _report(name="model")
    merged = merge_reports({"mae_model": a, "surf": b})
    assert set(merged.rows) == {"mae_model", "surf"}
    assert "generated:mae_model" in merged.spectra
    assert "ground_truth" in merged.spectra


def test_write_pgm(tmp_path):
    path = tmp_path / "img.pgm"
    write_pgm(str(path), np.arange(12.0).reshape(3, 4))
    blob = path.read_bytes()
    assert blob.startswith(b"P5\n4 3\n255\n")
    assert len(blob) == len(b"P5\n4 3\n255\n") + 12
    assert blob[-1] == 255 and blob[11] == 0
    flat = tmp_path / "flat.pgm"
    write_pgm(str(flat), np.zeros((2, 2)))
    assert flat.read_bytes().endswith(b"\x00\x00\x00\x00")


def test_export_subband_image(tmp_path):
    rng = np.random.default_rng(2)
    g = Grid(rng.standard_normal((32, 32, 1)), channels=1)
    path = tmp_path / "bands.pgm"
    export_subband_image(g, str(path))
    assert path.read_bytes().startswith(b"P5\n")
