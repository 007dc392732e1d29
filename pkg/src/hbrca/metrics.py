"""Trajectory-quality metrics: displacement, RMSF variants, error tables.

All metrics operate on positions in normalized units and are invariant
under a global translation applied to the trajectory they measure,
since each uses its own reference (first step or per-atom time mean).
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import TrajectoryCorpus, fmt_float
from .errors import ParameterError
from .model import predict_windows


@dataclass
class MetricSeries:
    name: str
    axis: str  # "time" | "atom" | "T-sweep"
    values: np.ndarray


def displacement(traj: np.ndarray) -> np.ndarray:
    """Distance from the first step, averaged over atoms, per step.

    For an [N, T, D] trajectory returns [T]; the per-atom Euclidean
    displacement ||r_t(i) - r_0(i)|| is averaged over atoms so a
    single-atom system reduces to the plain distance.
    """
    if traj.ndim != 3:
        raise ParameterError(f"expected [N, T, D], got {traj.shape}")
    per_atom = np.linalg.norm(traj - traj[:, :1, :], axis=-1)
    return per_atom.mean(axis=0)


def rmsf_over_atoms(traj: np.ndarray) -> np.ndarray:
    """Spread across atoms at each step: [T] values.

    sqrt(mean over atoms of ||r_t(i) - rbar(i)||^2) with rbar(i) the
    time mean of atom i.
    """
    if traj.ndim != 3:
        raise ParameterError(f"expected [N, T, D], got {traj.shape}")
    dev = traj - traj.mean(axis=1, keepdims=True)
    return np.sqrt((dev**2).sum(axis=-1).mean(axis=0))


def rmsf_over_time(traj: np.ndarray) -> np.ndarray:
    """Per-atom fluctuation about its own time mean: [N] values."""
    if traj.ndim != 3:
        raise ParameterError(f"expected [N, T, D], got {traj.shape}")
    dev = traj - traj.mean(axis=1, keepdims=True)
    return np.sqrt((dev**2).sum(axis=-1).mean(axis=1))


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    if pred.shape != truth.shape:
        raise ParameterError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


def mae(pred: np.ndarray, truth: np.ndarray) -> float:
    if pred.shape != truth.shape:
        raise ParameterError(f"shape mismatch {pred.shape} vs {truth.shape}")
    return float(np.mean(np.abs(pred - truth)))


def gaussian_nll(pred: np.ndarray, truth: np.ndarray, var: float = 5e-5) -> float:
    """Average Gaussian negative log-likelihood at a fixed variance.

    Optional reporting only; the optimized objective stays MSE.
    """
    if var <= 0:
        raise ParameterError("variance must be positive")
    sq = mse(pred, truth)
    return 0.5 * (np.log(2.0 * np.pi * var) + sq / var)


def mse_mae_sweep(checkpoints: dict, corpora: dict, seed: int = 0) -> list:
    """Self-rollout error per window length T.

    `checkpoints` maps T to a loaded Checkpoint and `corpora` maps T to
    the matching windowed test corpus. Rows for which a checkpoint is
    missing are omitted with a warning. Returns rows sorted by
    descending T: (T, n_samples, mse, mae).
    """
    rows = []
    for t in sorted(corpora, reverse=True):
        if t not in checkpoints:
            warnings.warn(f"no checkpoint for T={t}; row omitted")
            continue
        ckpt = checkpoints[t]
        corpus = corpora[t]
        model = ckpt.build_model()
        preds = predict_windows(
            model, corpus.positions, ckpt.config.tau, seed
        )
        truth = corpus.positions[:, :, 1:, :]
        rows.append((t, corpus.n_samples, mse(preds, truth), mae(preds, truth)))
    return rows


def sweep_series(rows: list) -> dict:
    """Sweep rows as named series over the T axis (plot-ready form)."""
    ts = np.array([r[0] for r in rows])
    return {
        "mse": MetricSeries("mse", "T-sweep", np.array([r[2] for r in rows])),
        "mae": MetricSeries("mae", "T-sweep", np.array([r[3] for r in rows])),
        "T": ts,
    }


def sweep_csv(rows: list, path=None) -> str:
    out = io.StringIO()
    out.write("T,samples,mse,mae\n")
    for t, n, m, a in rows:
        out.write(f"{t},{n},{fmt_float(m)},{fmt_float(a)}\n")
    content = out.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
    return content


# -- plot-ready exports --------------------------------------------------------


def _series_csv(header: str, rows: list) -> str:
    out = io.StringIO()
    out.write(header + "\n")
    for row in rows:
        out.write(",".join(str(r) if isinstance(r, int) else fmt_float(r) for r in row))
        out.write("\n")
    return out.getvalue()


def displacement_csv(truth: TrajectoryCorpus, pred: TrajectoryCorpus) -> str:
    """Per-sample displacement series plus the across-sample mean."""
    rows = []
    d_truth = np.stack([displacement(truth.positions[s]) for s in range(truth.n_samples)])
    d_pred = np.stack([displacement(pred.positions[s]) for s in range(pred.n_samples)])
    for s in range(truth.n_samples):
        for t in range(truth.n_steps):
            rows.append((s, t, d_truth[s, t], d_pred[s, t]))
    content = _series_csv("sample,t,truth,predicted", rows)
    mean_rows = [
        (t, float(d_truth[:, t].mean()), float(d_pred[:, t].mean()))
        for t in range(truth.n_steps)
    ]
    content += _series_csv("t,truth_mean,predicted_mean", mean_rows)
    return content


def rmsf_time_csv(truth: TrajectoryCorpus, pred: TrajectoryCorpus) -> str:
    r_truth = np.stack([rmsf_over_atoms(truth.positions[s]) for s in range(truth.n_samples)])
    r_pred = np.stack([rmsf_over_atoms(pred.positions[s]) for s in range(pred.n_samples)])
    rows = [
        (t, float(r_truth[:, t].mean()), float(r_pred[:, t].mean()))
        for t in range(truth.n_steps)
    ]
    return _series_csv("t,truth,predicted", rows)


def rmsf_atom_csv(truth: TrajectoryCorpus, pred: TrajectoryCorpus) -> str:
    r_truth = np.stack([rmsf_over_time(truth.positions[s]) for s in range(truth.n_samples)])
    r_pred = np.stack([rmsf_over_time(pred.positions[s]) for s in range(pred.n_samples)])
    rows = [
        (truth.atom_names[i], float(r_truth[:, i].mean()), float(r_pred[:, i].mean()))
        for i in range(truth.n_atoms)
    ]
    out = io.StringIO()
    out.write("atom,truth,predicted\n")
    for name, tv, pv in rows:
        out.write(f"{name},{fmt_float(tv)},{fmt_float(pv)}\n")
    return out.getvalue()
