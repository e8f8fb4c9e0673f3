"""Deterministic JSON/CSV writers and the matplotlib figures rendered next to them.

Every artifact carries the config fingerprint and master seed: JSON files as
top-level keys, CSV files as a leading ``#`` comment line, PNG files as text
metadata.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, NaN and inf become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path, payload: dict, provenance: dict) -> None:
    body = {**_clean(payload), "fingerprint": provenance["fingerprint"], "seed": provenance["seed"]}
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def write_csv(path, columns, rows, provenance: dict) -> None:
    """Rows are dicts keyed by ``columns``; floats are written with ``repr`` precision."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# fingerprint={provenance['fingerprint']} seed={provenance['seed']}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if _clean(r[c]) is None else _clean(r[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_confusion_csv(path, classes, confusion, provenance: dict) -> None:
    """Rows are true classes, columns predicted classes."""
    rows = [{"true": c, **{f"pred_{p}": n for p, n in zip(classes, row)}} for c, row in zip(classes, confusion)]
    write_csv(path, ["true"] + [f"pred_{p}" for p in classes], rows, provenance)


def write_traces_csv(path, traces: dict, provenance: dict) -> None:
    """One row per epoch; columns are the trace names."""
    names = sorted(traces)
    n = max((len(traces[k]) for k in names), default=0)
    rows = [{"epoch": i, **{k: traces[k][i] if i < len(traces[k]) else None for k in names}} for i in range(n)]
    write_csv(path, ["epoch"] + names, rows, provenance)


# --------------------------------------------------------------------------- figures


def _save(fig, path, provenance: dict) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Description": f"fingerprint={provenance['fingerprint']} "
                                                        f"seed={provenance['seed']}"})
    plt.close(fig)


def plot_traces(path, traces: dict, title: str, provenance: dict) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name in sorted(traces):
        if traces[name]:
            ax.plot(np.arange(1, len(traces[name]) + 1), traces[name], label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, path, provenance)


def plot_confusion(path, classes, confusion, provenance: dict) -> None:
    cm = np.asarray(confusion, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    fig, ax = plt.subplots(figsize=(1.0 + 0.5 * len(classes), 0.8 + 0.5 * len(classes)))
    im = ax.imshow(frac, vmin=0, vmax=1, cmap="Blues")
    ax.set_xticks(range(len(classes)), [str(c) for c in classes])
    ax.set_yticks(range(len(classes)), [str(c) for c in classes])
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    fig.colorbar(im, ax=ax, fraction=0.046)
    _save(fig, path, provenance)


def plot_per_class(path, classes, acc, provenance: dict) -> None:
    fig, ax = plt.subplots(figsize=(6, 3))
    vals = [0.0 if a is None or not math.isfinite(a) else a for a in acc]
    ax.bar([str(c) for c in classes], vals, color="tab:blue")
    ax.set_ylim(0, 1)
    ax.set_xlabel("class")
    ax.set_ylabel("top-1 accuracy")
    _save(fig, path, provenance)


def plot_chain(path, rows: list[dict], provenance: dict) -> None:
    """Heatmap of T1 over (g_prior, d_prior) cells."""
    gs = list(dict.fromkeys(r["g_prior"] for r in rows))
    ds = list(dict.fromkeys(r["d_prior"] for r in rows))
    grid = np.full((len(gs), len(ds)), np.nan)
    for r in rows:
        grid[gs.index(r["g_prior"]), ds.index(r["d_prior"])] = 100 * r["T1"]
    fig, ax = plt.subplots(figsize=(4.5, 3.8))
    im = ax.imshow(grid, cmap="viridis")
    for i in range(len(gs)):
        for j in range(len(ds)):
            ax.text(j, i, f"{grid[i, j]:.1f}", ha="center", va="center", color="w", fontsize=9)
    ax.set_xticks(range(len(ds)), ds)
    ax.set_yticks(range(len(gs)), gs)
    ax.set_xlabel("prior for D_u")
    ax.set_ylabel("prior for G")
    fig.colorbar(im, ax=ax, fraction=0.046, label="T1 (%)")
    _save(fig, path, provenance)


def plot_prior_sweep(path, rows: list[dict], provenance: dict) -> None:
    fig, ax1 = plt.subplots(figsize=(5, 3.2))
    names = [r["prior"] for r in rows]
    x = np.arange(len(rows))
    ax1.bar(x - 0.2, [100 * r["T1"] for r in rows], 0.4, label="T1 (%)", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.bar(x + 0.2, [r["PB"] for r in rows], 0.4, label="prior bias (%)", color="tab:orange")
    ax1.set_xticks(x, names)
    ax1.set_ylabel("T1 (%)")
    ax2.set_ylabel("prior bias (%)")
    fig.legend(loc="upper right", fontsize=8)
    _save(fig, path, provenance)


def plot_lambda_sweep(path, rows: list[dict], provenance: dict) -> None:
    lam = [r["lambda_u2"] for r in rows]
    pos = np.arange(len(lam))
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(pos, [100 * r["T1"] for r in rows], "o-", color="tab:blue")
    ax.set_xticks(pos, [f"{v:g}" for v in lam])
    ax.set_xlabel("lambda_u2")
    ax.set_ylabel("T1 (%)")
    apes = [r.get("ape_class_mean") for r in rows]
    if all(a is not None and math.isfinite(a) for a in apes):
        ax2 = ax.twinx()
        ax2.plot(pos, apes, "s--", color="tab:red")
        ax2.set_ylabel("class-mean APE", color="tab:red")
    _save(fig, path, provenance)


def plot_ape(path, reports: dict, provenance: dict) -> None:
    """Grouped bars of per-class APE with standard-error whiskers, one group per report."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    names = list(reports)
    k = len(next(iter(reports.values())).e_conditional)
    width = 0.8 / len(names)
    for i, name in enumerate(names):
        rep = reports[name]
        ax.bar(np.arange(k) + (i - (len(names) - 1) / 2) * width, rep.e_conditional, width,
               yerr=rep.stderr_conditional, label=name, capsize=2)
    ax.set_xticks(range(k), [f"u{c}" for c in range(k)])
    ax.set_xlabel("unseen class")
    ax.set_ylabel("APE")
    ax.legend(fontsize=8)
    _save(fig, path, provenance)
