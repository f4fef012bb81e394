"""Render specshape run-figure CSV artifacts into SVG/PNG figures.

This package is deliberately decoupled from the simulation code: it knows
only the documented CSV schemas (column names per figure id) and turns
them into styled matplotlib figures. Rendering is pure file-to-file and
deterministic for a fixed matplotlib version.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "specshape-plots"

__version__ = "0.1.0"


class MissingColumnError(KeyError):
    """An input CSV lacks a column the figure schema requires."""


class EmptyInputError(ValueError):
    """An input CSV has a header but no data rows."""


@dataclass(frozen=True)
class SeriesDef:
    column: str
    label: str
    style: str = "-"


@dataclass(frozen=True)
class PanelDef:
    csv_name: str
    x_column: str
    series: tuple[SeriesDef, ...]
    xlabel: str
    ylabel: str
    logy: bool = False
    xscale: float = 1.0


@dataclass(frozen=True)
class FigureDef:
    title: str
    panels: tuple[PanelDef, ...]


def _crb_vs_theta(csv_name: str, series: tuple[SeriesDef, ...], title: str) -> FigureDef:
    return FigureDef(
        title=title,
        panels=(
            PanelDef(
                csv_name=csv_name,
                x_column="theta_deg",
                series=series,
                xlabel="DoA (deg)",
                ylabel="DoA error bound (deg)",
                logy=True,
            ),
        ),
    )


_BASELINE_SERIES = (
    SeriesDef("crb_ssh_deg", "spectrum shaping"),
    SeriesDef("crb_ula_7_deg", "ULA N=7", "--"),
    SeriesDef("crb_ula_111_deg", "ULA N=111", "--"),
    SeriesDef("crb_la_15_deg", "lens M=15", ":"),
    SeriesDef("crb_la_201_deg", "lens M=201", ":"),
)

FIGURES: dict[str, FigureDef] = {
    f"fig6{sub}": _crb_vs_theta(
        f"fig6{sub}_crb_vs_theta.csv", _BASELINE_SERIES,
        f"DoA bounds vs angle ({label})",
    )
    for sub, label in (("a", "SNR 20 dB"), ("b", "SNR 10 dB"),
                       ("c", "SNR 0 dB"), ("d", "SNR -10 dB"))
}
FIGURES.update(
    fig7=_crb_vs_theta(
        "fig7_crb_vs_theta_humid_ranges.csv",
        (
            SeriesDef("crb_range_10m_deg", "range 10 m"),
            SeriesDef("crb_range_100m_deg", "range 100 m"),
            SeriesDef("crb_range_1000m_deg", "range 1000 m"),
        ),
        "Humid-channel DoA bounds by range",
    ),
    fig8=_crb_vs_theta(
        "fig8_crb_vs_theta_gaps.csv",
        (
            SeriesDef("crb_d_1mm_deg", "D = 1 mm"),
            SeriesDef("crb_d_5mm_deg", "D = 5 mm"),
            SeriesDef("crb_d_10mm_deg", "D = 10 mm"),
        ),
        "DoA bounds by antenna gap",
    ),
    fig9=_crb_vs_theta(
        "fig9_joint_crb_vs_theta.csv",
        (
            SeriesDef("crb_aod_deg", "AoD"),
            SeriesDef("crb_doa_deg", "DoA", "--"),
        ),
        "Joint AoD/DoA bounds",
    ),
    fig10=FigureDef(
        title="Estimator RMSE vs SNR",
        panels=(
            PanelDef(
                csv_name="fig10_rmse_vs_snr.csv",
                x_column="snr_db",
                series=(
                    SeriesDef("rmse_ssh_deg", "spectrum shaping"),
                    SeriesDef("rmse_ula_60_deg", "ULA N=60", "--"),
                    SeriesDef("rmse_la_80_deg", "lens M=80", ":"),
                    SeriesDef("crb_ssh_deg", "shaping bound", "-."),
                ),
                xlabel="SNR (dB)",
                ylabel="RMSE (deg)",
                logy=True,
            ),
        ),
    ),
    fig11=FigureDef(
        title="Joint AoD/DoA RMSE vs SNR",
        panels=(
            PanelDef(
                csv_name="fig11_joint_rmse_vs_snr.csv",
                x_column="snr_db",
                series=(
                    SeriesDef("rmse_doa_deg", "DoA RMSE"),
                    SeriesDef("rmse_aod_deg", "AoD RMSE", "--"),
                    SeriesDef("crb_doa_deg", "DoA bound", "-."),
                    SeriesDef("crb_aod_deg", "AoD bound", ":"),
                ),
                xlabel="SNR (dB)",
                ylabel="RMSE (deg)",
                logy=True,
            ),
        ),
    ),
    fig12=FigureDef(
        title="Matched-filter output",
        panels=(
            PanelDef(
                csv_name="fig12_matched_filter.csv",
                x_column="theta_deg",
                series=(SeriesDef("energy", "E(theta)"),),
                xlabel="DoA (deg)",
                ylabel="matched-filter energy",
            ),
        ),
    ),
    fig13=FigureDef(
        title="Received spectrum and its lag spectrum",
        panels=(
            PanelDef(
                csv_name="fig13_spectrum.csv",
                x_column="f_hz",
                series=(SeriesDef("power", "power spectrum"),),
                xlabel="frequency (GHz)",
                ylabel="power",
                xscale=1e-9,
            ),
            PanelDef(
                csv_name="fig13_zeta_spectrum.csv",
                x_column="distance_m",
                series=(SeriesDef("magnitude", "lag spectrum"),),
                xlabel="path-length difference (m)",
                ylabel="magnitude",
            ),
        ),
    ),
)


@dataclass(frozen=True)
class PlotSpec:
    figure_id: str
    input_dir: Path
    output_path: Path

    def __post_init__(self):
        if self.figure_id not in FIGURES:
            raise ValueError(f"unknown figure id: {self.figure_id}")


@dataclass(frozen=True)
class RenderResult:
    """What got drawn, for callers that verify figures programmatically."""

    output_path: Path
    series_per_panel: tuple[int, ...]
    xlabels: tuple[str, ...]
    ylabels: tuple[str, ...]


def read_columns(path: Path, wanted: list[str]) -> dict[str, np.ndarray]:
    if not path.exists():
        raise FileNotFoundError(f"input CSV not found: {path}")
    with open(path) as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise EmptyInputError(f"{path.name}: no header row")
        missing = [c for c in wanted if c not in header]
        if missing:
            raise MissingColumnError(
                f"{path.name}: missing column(s) {', '.join(missing)}"
            )
        idx = {c: header.index(c) for c in wanted}
        data: dict[str, list[float]] = {c: [] for c in wanted}
        for row in reader:
            for c in wanted:
                data[c].append(float(row[idx[c]]))
    if not data[wanted[0]]:
        raise EmptyInputError(f"{path.name}: no data rows")
    return {c: np.asarray(v) for c, v in data.items()}


def render(spec: PlotSpec) -> RenderResult:
    """Draw one figure from its CSVs and write SVG (or PNG by suffix)."""
    definition = FIGURES[spec.figure_id]
    fig, axes = plt.subplots(
        len(definition.panels), 1,
        figsize=(6.4, 3.6 * len(definition.panels)),
        squeeze=False,
    )
    series_counts = []
    for ax, panel in zip(axes.ravel(), definition.panels):
        wanted = [panel.x_column] + [s.column for s in panel.series]
        data = read_columns(spec.input_dir / panel.csv_name, wanted)
        x = data[panel.x_column] * panel.xscale
        drawn = 0
        for series in panel.series:
            y = data[series.column]
            finite = np.isfinite(y)
            ax.plot(x[finite], y[finite], series.style, label=series.label,
                    linewidth=1.4)
            drawn += 1
        if panel.logy:
            ax.set_yscale("log")
        ax.set_xlabel(panel.xlabel)
        ax.set_ylabel(panel.ylabel)
        ax.grid(True, alpha=0.3)
        if drawn > 1:
            ax.legend(fontsize=8)
        series_counts.append(drawn)
    axes.ravel()[0].set_title(definition.title)
    fig.tight_layout()
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_path, metadata={"Date": None}
                if spec.output_path.suffix == ".svg" else None)
    plt.close(fig)
    return RenderResult(
        output_path=spec.output_path,
        series_per_panel=tuple(series_counts),
        xlabels=tuple(p.xlabel for p in definition.panels),
        ylabels=tuple(p.ylabel for p in definition.panels),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specshape-plots",
        description="Render specshape experiment CSVs into figures",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure")
    p.add_argument("--figure", required=True, choices=sorted(FIGURES))
    p.add_argument("--in", dest="input_dir", required=True,
                   help="directory holding the run-figure CSVs")
    p.add_argument("--out", required=True, help="output SVG/PNG path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = render(PlotSpec(
            figure_id=args.figure,
            input_dir=Path(args.input_dir),
            output_path=Path(args.out),
        ))
    except (FileNotFoundError, MissingColumnError, EmptyInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(result.output_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
