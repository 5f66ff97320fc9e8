import hashlib
from pathlib import Path

import pytest

from hilab_plots.cli import main
from hilab_plots.figures import FigureSpec, SchemaError, render, trailing_mean

GOLDEN = Path(__file__).parent / "golden"

KIND_INPUTS = {
    "changes-dist": ["pairs_study.csv"],
    "changes-bars": ["interp_study.csv"],
    "mse-budget": ["gen_quality.csv"],
    "returns": ["returns_seed0.csv", "returns_seed1.csv"],
}


def _spec(kind, out, **kw):
    return FigureSpec(
        kind=kind, inputs=tuple(GOLDEN / f for f in KIND_INPUTS[kind]), out=out, **kw
    )


@pytest.mark.parametrize("kind", sorted(KIND_INPUTS))
def test_render_smoke_and_determinism(kind, tmp_path):
    first = render(_spec(kind, tmp_path / "a.png"))
    assert first.exists() and first.stat().st_size > 0
    second = render(_spec(kind, tmp_path / "b.png"))
    assert first.read_bytes() == second.read_bytes()


@pytest.mark.parametrize("kind", sorted(KIND_INPUTS))
def test_render_never_mutates_inputs(kind, tmp_path):
    before = [hashlib.sha256((GOLDEN / f).read_bytes()).hexdigest() for f in KIND_INPUTS[kind]]
    render(_spec(kind, tmp_path / "fig.png"))
    after = [hashlib.sha256((GOLDEN / f).read_bytes()).hexdigest() for f in KIND_INPUTS[kind]]
    assert before == after


def test_short_return_curve_falls_back_to_cumulative_mean(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("epoch,mean_return\n0,0.1\n1,0.3\n2,0.5\n")
    out = render(FigureSpec("returns", (short,), tmp_path / "short.png", window=15))
    assert out.exists() and out.stat().st_size > 0
    sm = trailing_mean([0.1, 0.3, 0.5], 15)
    assert sm[0] == pytest.approx(0.1)
    assert sm[1] == pytest.approx(0.2)
    assert sm[2] == pytest.approx(0.3)


def test_trailing_mean_window_behaviour():
    y = [1.0, 2.0, 3.0, 4.0]
    sm = trailing_mean(y, 2)
    assert sm == pytest.approx([1.0, 1.5, 2.5, 3.5])


def test_schema_mismatch_names_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("nu,budget\n1,2\n")
    with pytest.raises(SchemaError, match="mse"):
        render(FigureSpec("mse-budget", (bad,), tmp_path / "x.png"))


def test_extra_columns_warn_but_render(tmp_path):
    extra = tmp_path / "extra.csv"
    extra.write_text("epoch,mean_return,bonus\n0,0.1,9\n1,0.2,9\n")
    with pytest.warns(UserWarning, match="bonus"):
        out = render(FigureSpec("returns", (extra,), tmp_path / "x.png"))
    assert out.exists()


def test_missing_input_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        FigureSpec("returns", (tmp_path / "nope.csv",), tmp_path / "x.png")


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown figure kind"):
        FigureSpec("pie", (GOLDEN / "gen_quality.csv",), tmp_path / "x.png")


def test_cli_end_to_end(tmp_path):
    out = tmp_path / "fig.png"
    code = main([
        "returns",
        str(GOLDEN / "returns_seed0.csv"),
        str(GOLDEN / "returns_seed1.csv"),
        "--out", str(out),
        "--window", "5",
    ])
    assert code == 0 and out.exists()
