"""Figure rendering for scenario tables: line plots and heatmaps to SVG files."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")  # headless backend; figures only ever go to files
import matplotlib.pyplot as plt

from .experiments import ResultTable

_TIME_LABEL = r"$\gamma t$"


def _series_plot(table: ResultTable, group_cols: list[str], y_col: str, ax, ylabel: str):
    cols = table.columns
    t_idx = cols.index("t")
    y_idx = cols.index(y_col)
    g_idx = [cols.index(c) for c in group_cols]
    seen: dict[tuple, tuple[list, list]] = {}
    for row in table.rows:
        key = tuple(row[i] for i in g_idx)
        ts, ys = seen.setdefault(key, ([], []))
        ts.append(row[t_idx])
        ys.append(row[y_idx])
    for key, (ts, ys) in seen.items():
        label = ", ".join(str(k) for k in key) if key else y_col
        ax.plot(ts, ys, label=label, lw=1.2)
    ax.set_xlabel(_TIME_LABEL)
    ax.set_ylabel(ylabel)
    if seen and len(seen) > 1:
        ax.legend(fontsize=7, frameon=False)


def _render_timeseries(table: ResultTable, group_cols, panels) -> plt.Figure:
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.2))
    if len(panels) == 1:
        axes = [axes]
    for ax, (y_col, ylabel) in zip(axes, panels):
        _series_plot(table, group_cols, y_col, ax, ylabel)
    fig.tight_layout()
    return fig


def _render_heatmaps(table: ResultTable) -> plt.Figure:
    etas = sorted(set(table.column("eta")))
    ms = sorted(set(table.column("m")))
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.4))
    panels = [("eta1", "log10_one_minus_c", r"$\log_{10}(1-C)$"),
              ("eta2", "concurrence", r"$C$")]
    cols = table.columns
    for ax, (panel, value_col, title) in zip(axes, panels):
        grid = np.full((len(etas), len(ms)), np.nan)
        p_idx, e_idx, m_idx, v_idx = (
            cols.index("panel"),
            cols.index("eta"),
            cols.index("m"),
            cols.index(value_col),
        )
        for row in table.rows:
            if row[p_idx] != panel:
                continue
            grid[etas.index(row[e_idx]), ms.index(row[m_idx])] = row[v_idx]
        im = ax.imshow(
            grid,
            origin="lower",
            aspect="auto",
            extent=(min(ms), max(ms), min(etas), max(etas)),
            cmap="viridis",
        )
        ax.set_xlabel(r"$m$")
        ax.set_ylabel(r"$\eta_1$" if panel == "eta1" else r"$\eta_2$")
        ax.set_title(title, fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.9)
    fig.tight_layout()
    return fig


def _render_emission(table: ResultTable) -> plt.Figure:
    fig, axes = plt.subplots(1, 2, figsize=(8.6, 3.4))
    cols = table.columns
    kind_i = cols.index("kind")
    for ax, kind, ylab in (
        (axes[0], "steady", "steady-state $C$"),
        (axes[1], "max_transient", "maximal $C$"),
    ):
        groups: dict[tuple, tuple[list, list]] = {}
        for row in table.rows:
            if row[kind_i] != kind:
                continue
            key = (row[cols.index("scheme")], row[cols.index("detuning")], row[cols.index("gamma_f")])
            xs, ys = groups.setdefault(key, ([], []))
            xs.append(row[cols.index("n")])
            ys.append(row[cols.index("concurrence")])
        for (scheme, detuning, gf), (xs, ys) in groups.items():
            order = np.argsort(xs)
            ax.plot(
                np.array(xs)[order],
                np.array(ys)[order],
                marker="o",
                ms=3.5,
                lw=1.0,
                label=f"{scheme}/{detuning}, $\\gamma_f$={gf}",
            )
        ax.set_xlabel("$N$")
        ax.set_ylabel(ylab)
        ax.legend(fontsize=6, frameon=False)
    fig.tight_layout()
    return fig


def render_table(table: ResultTable, path: str) -> None:
    """Render the scenario's standard figure next to its CSV."""
    name = table.name
    if name == "fig3_robustness":
        fig = _render_heatmaps(table)
    elif name == "spontaneous_emission":
        fig = _render_emission(table)
    elif name == "fig2_scheme_comparison":
        fig = _render_timeseries(table, ["scheme"], [
            ("concurrence_12", "$C_{(1,2)}$"),
            ("purity_12", "pair purity"),
        ])
    elif name == "tqd_comparison":
        fig = _render_timeseries(table, ["scheme", "m"], [("concurrence_12", "$C_{(1,2)}$")])
    elif name in ("hextra_chirality", "hextra_drive_neglect"):
        group = "m" if name == "hextra_chirality" else "k"
        fig = _render_timeseries(table, ["mode", group], [
            ("concurrence_avg", "mean pair $C$"),
            ("purity_avg", "mean pair purity"),
        ])
    elif name == "detuning_patterns":
        fig = _render_timeseries(table, ["pattern", "scheme"], [("concurrence_avg", "mean pair $C$")])
    elif name == "multimer_n6":
        fig = _render_timeseries(table, [], [("fidelity", "fidelity to target"), ("omega", r"$\Omega/\gamma$")])
    elif "t" in table.columns:
        numeric = [
            c for c in table.columns
            if c != "t" and table.rows and isinstance(table.rows[0][table.columns.index(c)], (int, float))
        ]
        fig = _render_timeseries(table, [], [(c, c) for c in numeric[:3]])
    else:
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.axis("off")
        ax.text(0.5, 0.5, f"{name}: no standard figure", ha="center", va="center")
    fig.savefig(path, format="svg")
    plt.close(fig)
