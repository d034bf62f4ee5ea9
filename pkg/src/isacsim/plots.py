"""
Figure rendering for sweep results: a BER overlay (simulation markers on the
closed-form curve) and an MSE comparison of the two estimators, one line per
receive-array size. Figures are written next to the delimited output and
never feed back into any computation.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_MARKERS = ("o", "s", "^", "d", "v")


def _by_n_rx(rows: list[dict]) -> dict[int, list[dict]]:
    grouped: dict[int, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["n_rx"], []).append(row)
    for group in grouped.values():
        group.sort(key=lambda r: r["sweep_value"])
    return grouped


def _power_label(sweep_var: str) -> str:
    kind = "communication" if sweep_var == "beta" else "sensing"
    return f"{kind} power {sweep_var} (linear)"


def render_ber_figure(rows: list[dict], sweep_var: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for idx, (n_rx, group) in enumerate(sorted(_by_n_rx(rows).items())):
        x = [r["sweep_value"] for r in group]
        theory = [r["ber_theory"] for r in group]
        sim = [r["ber_sim"] for r in group]
        color = f"C{idx}"
        ax.plot(x, theory, color=color, label=f"theory, n_rx={n_rx}")
        # log axis: zero-error points cannot be drawn
        sim_pts = [(xv, bv) for xv, bv in zip(x, sim) if bv > 0]
        if sim_pts:
            ax.plot(*zip(*sim_pts), linestyle="none", color=color,
                    marker=_MARKERS[idx % len(_MARKERS)], fillstyle="none",
                    label=f"simulated, n_rx={n_rx}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(_power_label(sweep_var))
    ax.set_ylabel("bit error rate")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_mse_figure(rows: list[dict], sweep_var: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for idx, (n_rx, group) in enumerate(sorted(_by_n_rx(rows).items())):
        x = [r["sweep_value"] for r in group]
        color = f"C{idx}"
        ax.plot(x, [r["mse_sic"] for r in group], color=color,
                linestyle="--", label=f"SIC, n_rx={n_rx}")
        ax.plot(x, [r["mse_mmse"] for r in group], color=color,
                linestyle="-", label=f"posterior mean, n_rx={n_rx}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(_power_label(sweep_var))
    ax.set_ylabel("reflection-coefficient MSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_file(csv_path: str | Path,
                      output_dir: str | Path | None = None) -> list[Path]:
    """Render the BER and MSE figures for a result CSV; returns the paths."""
    from .cli import read_results

    csv_path = Path(csv_path)
    rows = read_results(csv_path)
    if not rows:
        raise ValueError(f"{csv_path} has no data rows to plot")
    sweep_var = rows[0]["sweep_var"]
    out_dir = Path(output_dir) if output_dir is not None else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = csv_path.stem
    ber_path = out_dir / f"{stem}_ber.png"
    mse_path = out_dir / f"{stem}_mse.png"
    render_ber_figure(rows, sweep_var, ber_path)
    render_mse_figure(rows, sweep_var, mse_path)
    return [ber_path, mse_path]
