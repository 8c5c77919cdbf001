"""Static SVG renderings of the emitted CSV tables (presentation only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .cli import read_csv  # noqa: E402

HOUR_TICKS = list(range(0, 24, 2))
HOUR_LABELS = [str((12 + h) % 24) for h in HOUR_TICKS]

plt.rcParams["svg.hashsalt"] = "srwe"


def _columns(path):
    header, rows = read_csv(path)
    return header, {h: [float(r[i]) for r in rows] for i, h in enumerate(header)}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _hour_lines(src: Path, ylabel: str, bars: bool) -> Path:
    header, cols = _columns(src)
    fig, ax = plt.subplots(figsize=(7, 3))
    for h in header[1:]:
        label = "non-EV demand" if h == "non_pev" else f"eps={h}"
        if bars and h != "non_pev":
            ax.bar(cols["hour"], cols[h], alpha=0.5, label=label)
        else:
            ax.plot(cols["hour"], cols[h], label=label, color="black" if h == "non_pev" else None)
    ax.set_xticks(HOUR_TICKS, HOUR_LABELS)
    ax.set_xlabel("Hour of the day [h]")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    return _save(fig, src.with_suffix(".svg"))


def _robustness(src: Path) -> Path:
    header, cols = _columns(src)
    mags = [h[len("worst_individual_cost_"):] for h in header if h.startswith("worst_individual_cost_")]
    fig, axes = plt.subplots(1, len(mags), figsize=(3 * len(mags), 3), sharey=True, squeeze=False)
    for ax, m in zip(axes[0], mags):
        eps = cols["epsilon"]
        ax.fill_between(eps, cols[f"min_individual_cost_{m}"], cols[f"worst_individual_cost_{m}"], alpha=0.2)
        ax.plot(eps, cols[f"worst_individual_cost_{m}"], lw=2, label="Max.")
        ax.plot(eps, cols[f"min_individual_cost_{m}"], lw=0.8, label="Min.")
        ax.plot(eps, cols[f"average_individual_cost_{m}"], ls=":", lw=2, label="Avg.")
        ax.set_title(m)
        ax.set_xlabel("epsilon")
    axes[0][0].set_ylabel("Individual cost [$]")
    axes[0][0].legend(fontsize="small")
    return _save(fig, src.with_suffix(".svg"))


def _histogram(src: Path) -> Path:
    header, cols = _columns(src)
    fig, ax = plt.subplots(figsize=(4, 3))
    for h in header[1:]:
        ax.bar(cols["bin_center"], cols[h], width=1.0, alpha=0.5, edgecolor="black",
               label=h.replace("count_", "eps="))
    ax.set_xlabel("Individual cost [$]")
    ax.set_ylabel("Frequency")
    ax.legend(fontsize="small")
    return _save(fig, src.with_suffix(".svg"))


def _poa(src: Path) -> Path:
    _, cols = _columns(src)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(cols["epsilon"], cols["price_of_anarchy"], lw=2)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("Price of anarchy")
    return _save(fig, src.with_suffix(".svg"))


RENDERERS = {
    "valley_filling.csv": lambda p: _hour_lines(p, "Norm. demand [kW]", bars=False),
    "aggregates_by_hour.csv": lambda p: _hour_lines(p, "Avg. aggregate [kW]", bars=True),
    "robustness.csv": _robustness,
    "histogram.csv": _histogram,
    "poa.csv": _poa,
}


def render_directory(directory) -> list[Path]:
    directory = Path(directory)
    return [RENDERERS[name](directory / name) for name in sorted(RENDERERS) if (directory / name).is_file()]
