"""Quantitative metrics and exports.

Frequency-space MAE compares log2 amplitude surface spectra of generated
and ground-truth sequences, bin by bin (linear-amplitude comparison is
available behind a flag). CSV and portable-graymap exports are
deterministic byte streams.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .datasets import Frame, SimSequence
from .spectral import LOG_FLOOR, dataset_spectrum
from .wavelet import dwt_multiscale


@dataclass
class EvalReport:
    rows: dict = field(default_factory=dict)     # model -> metric dict
    spectra: dict = field(default_factory=dict)  # series -> {domain: Spectrum}


def _frames_of(seq):
    return [f.sdf.data[..., 0] for f in seq.frames]


def metric_mae(gen_seqs, gt_seqs):
    total, count = 0.0, 0
    for g, t in zip(gen_seqs, gt_seqs):
        for fg, ft in zip(_frames_of(g), _frames_of(t)):
            if fg.shape != ft.shape:
                raise ValueError(f"shape mismatch {fg.shape} vs {ft.shape}")
            total += np.abs(fg - ft).sum()
            count += fg.size
    return total / count


def metric_freq_mae(gen_seqs, gt_seqs, domain, log=True):
    sg = dataset_spectrum(gen_seqs, domain)
    st = dataset_spectrum(gt_seqs, domain)
    if log:
        a = np.log2(sg.amplitudes + LOG_FLOOR)
        b = np.log2(st.amplitudes + LOG_FLOOR)
    else:
        a, b = sg.amplitudes, st.amplitudes
    return float(np.mean(np.abs(a - b)))


def _pred_sequences(preds, records):
    seqs = []
    for frames, rec in zip(preds, records):
        seqs.append(SimSequence(frames=[Frame(sdf=p) for p in frames],
                                resolution="high", k=rec.low.k,
                                source="generated"))
    return seqs


def evaluate_model(preds, records, frames=None, name="model"):
    """Build an EvalReport for one model's full-frame predictions."""
    T = frames
    gt = [SimSequence(frames=r.high.frames[:T], resolution="high",
                      k=r.low.k, source=r.high.source) for r in records]
    inp = [SimSequence(frames=r.low.frames[:T], resolution="low",
                       k=r.low.k, source=r.low.source) for r in records]
    gen = _pred_sequences(preds, records)
    report = EvalReport()
    report.rows[name] = {
        "mae": metric_mae(gen, gt),
        "spatial_freq_mae": metric_freq_mae(gen, gt, "spatial"),
        "temporal_freq_mae": metric_freq_mae(gen, gt, "temporal"),
    }
    for series, seqs in (("generated", gen), ("ground_truth", gt),
                         ("input", inp)):
        report.spectra[series] = {
            "spatial": dataset_spectrum(seqs, "spatial"),
            "temporal": dataset_spectrum(seqs, "temporal"),
        }
    return report


def merge_reports(named_reports):
    """Combine per-model reports; spectra keep the model name as prefix."""
    out = EvalReport()
    for name, rep in named_reports.items():
        for model, row in rep.rows.items():
            out.rows[name if model == "model" else model] = row
        for series, spec in rep.spectra.items():
            key = series if series != "generated" else f"generated:{name}"
            out.spectra.setdefault(key, spec)
    return out


def export_report(report, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["model", "mae", "spatial_freq_mae", "temporal_freq_mae"])
        for model in sorted(report.rows):
            row = report.rows[model]
            w.writerow([model, f"{row['mae']:.12g}",
                        f"{row['spatial_freq_mae']:.12g}",
                        f"{row['temporal_freq_mae']:.12g}"])


def export_spectra(report, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["series", "domain", "bin", "frequency", "amplitude"])
        for series in sorted(report.spectra):
            for domain in ("spatial", "temporal"):
                spec = report.spectra[series][domain]
                for b, a in enumerate(spec.amplitudes):
                    w.writerow([series, domain, b,
                                f"{b * spec.bin_width:.12g}", f"{a:.12g}"])


def read_report(path):
    rows = {}
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows[rec["model"]] = {
                "mae": float(rec["mae"]),
                "spatial_freq_mae": float(rec["spatial_freq_mae"]),
                "temporal_freq_mae": float(rec["temporal_freq_mae"]),
            }
    report = EvalReport()
    report.rows = rows
    return report


def write_pgm(path, array):
    """Binary portable graymap, normalized to the array's value range."""
    a = np.asarray(array, dtype=np.float64)
    lo, hi = a.min(), a.max()
    scaled = np.zeros(a.shape, dtype=np.uint8) if hi - lo < 1e-300 else \
        np.round((a - lo) / (hi - lo) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii"))
        f.write(scaled.tobytes())


def export_subband_image(grid, path):
    """Wavelet sub-bands of a 2D frame, highest frequency leftmost."""
    p = dwt_multiscale(grid, dims=(0, 1))
    height = max(next(iter(hf.values())).data.shape[0] * len(hf)
                 for hf in p.levels)
    columns = []
    for hf in p.levels:  # level 0 (highest frequency) first
        bands = [hf[key].data[..., 0] for key in sorted(hf)]
        col = np.concatenate(bands, axis=1)
        padded = np.zeros((col.shape[0], height))
        padded[:, :col.shape[1]] = col
        columns.append(padded)
    strip = np.concatenate(
        [np.pad(c, ((0, max(0, columns[0].shape[0] - c.shape[0])), (0, 0)))
         for c in columns], axis=1)
    write_pgm(path, strip.T)
