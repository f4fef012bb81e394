"""Secondary acceptance: every figure CSV emitted by the simulation CLI
renders to an SVG with the expected series counts and axis labels.

Exercises the real external interface: the `specshape` command generates
the CSVs, this package consumes them. Skipped when the simulation package
is not installed (this suite must be runnable standalone)."""

import shutil
import subprocess
import sys

import pytest

from specshape_plots import FIGURES, PlotSpec, render

pytest.importorskip("specshape")

# keep Monte Carlo figures fast; everything else runs at its defaults
_TRIALS = {"fig10": "100", "fig11": "100"}


@pytest.fixture(scope="module")
def artifact_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("artifacts")
    for figure_id in sorted(FIGURES):
        cmd = [sys.executable, "-m", "specshape.cli", "run-figure", figure_id,
               "--out", str(out), "--seed", "1"]
        if figure_id in _TRIALS:
            cmd += ["--trials", _TRIALS[figure_id]]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
    return out


@pytest.mark.parametrize("figure_id", sorted(FIGURES))
def test_renders_real_artifacts(figure_id, artifact_dir, tmp_path):
    out = tmp_path / f"{figure_id}.svg"
    result = render(PlotSpec(figure_id=figure_id, input_dir=artifact_dir,
                             output_path=out))
    assert out.exists() and out.stat().st_size > 0
    definition = FIGURES[figure_id]
    assert result.series_per_panel == tuple(
        len(p.series) for p in definition.panels
    )
    text = out.read_text()
    for label in result.xlabels + result.ylabels:
        assert label in text


def test_cli_entry_point_if_installed(artifact_dir, tmp_path):
    exe = shutil.which("specshape-plots")
    if exe is None:
        pytest.skip("console script not installed")
    out = tmp_path / "fig12.svg"
    proc = subprocess.run(
        [exe, "render", "--figure", "fig12", "--in", str(artifact_dir),
         "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
