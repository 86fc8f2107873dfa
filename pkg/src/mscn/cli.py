"""Command-line front end: ``mscn simulate | fit | classify | density-grid | eval``.

Every subcommand is deterministic given its arguments and input files.
JSON documents go to ``--out`` (written atomically) or to stdout; numbers
are written with Python's shortest round-trip ``repr``. Exit status is 0 on
success, 1 for unreadable or inconsistent input and 3 when the fit
degenerates (typer itself uses 2 for usage errors).
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import typer

from .datasets import (
    ParseError,
    generate_synthetic,
    load_csv,
    load_int_matrix,
    load_labels,
    save_csv,
    save_matrix_csv,
    standardize,
    write_text_atomic,
)
from .distributions import MscnParams, grid_logpdf, mscn_logpdf, rotation_matrix
from .estimation import DegenerateComponentError, DegenerateDataError, FitConfig, fit_family
from .evaluation import agreement, outlier_confusion
from .mixtures import FAMILIES, MixtureModel, classify, mixture_logpdf

EXIT_INPUT = 1
EXIT_DEGENERATE = 3

app = typer.Typer(
    name="mscn",
    help="Clustering with mixtures of multiple scaled contaminated normals.",
    add_completion=False,
    no_args_is_help=True,
)


class InputError(Exception):
    pass


def _fail(msg: str, code: int) -> None:
    typer.echo(f"error: {msg}", err=True)
    raise typer.Exit(code)


def _emit_json(doc: dict, out: Optional[Path]) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        write_text_atomic(out, text)


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"--{name} expects comma-separated numbers, got {text!r}") from None


def sidecar_paths(out: Path) -> tuple[Path, Path]:
    """Label and bad-cell files written next to a simulated dataset."""
    return out.with_suffix(".labels.csv"), out.with_suffix(".bad.csv")


@app.command()
def simulate(
    out: Path = typer.Option(Path("synthetic.csv"), "--out", "-o", help="Dataset CSV to write"),
    seed: int = typer.Option(0, "--seed", help="Seed of the generator"),
) -> None:
    """Write the three-group synthetic benchmark with its label and bad-cell sidecars."""
    ds = generate_synthetic(seed)
    labels_path, bad_path = sidecar_paths(out)
    try:
        save_csv(ds, out)
        save_matrix_csv(ds.true_labels[:, None], ["label"], labels_path)
        save_matrix_csv(ds.true_bad, list(ds.names()), bad_path)
    except OSError as exc:
        _fail(str(exc), EXIT_INPUT)
    summary = {
        "data": str(out),
        "labels": str(labels_path),
        "bad_cells": str(bad_path),
        "seed": seed,
        "n": ds.n,
        "d": ds.d,
        "group_sizes": np.bincount(ds.true_labels).tolist(),
        "n_bad_cells": int(ds.true_bad.sum()),
    }
    _emit_json(summary, None)


def _load_features(path: Path, label_column: Optional[str], drop: List[str], no_header: bool):
    try:
        return load_csv(path, has_header=not no_header, label_column=label_column, drop_columns=drop)
    except (OSError, ParseError, ValueError) as exc:
        raise InputError(str(exc)) from None


@app.command()
def fit(
    data: Path = typer.Argument(..., help="Input CSV"),
    out: Path = typer.Option(Path("model.json"), "--out", "-o", help="Model JSON to write"),
    family: str = typer.Option("mscnm", "--family", help="mscnm or mnm (Gaussian baseline)"),
    k: int = typer.Option(1, "--k", "-k", min=1, help="Number of components"),
    seed: int = typer.Option(0, "--seed", help="Recorded in the fit configuration"),
    standardize_data: bool = typer.Option(False, "--standardize", help="Standardize columns first"),
    label_column: Optional[str] = typer.Option(None, "--label-column", help="Column to exclude as labels"),
    drop_column: List[str] = typer.Option([], "--drop-column", help="Column to ignore (repeatable)"),
    no_header: bool = typer.Option(False, "--no-header", help="The CSV has no header row"),
    epsilon: float = typer.Option(1e-3, "--epsilon", help="Aitken tolerance"),
    max_iter: int = typer.Option(200, "--max-iter", min=1, help="Iteration cap"),
    scale_param: str = typer.Option("rotation", "--scale-param", help="rotation or cholesky"),
    init_labels: Optional[Path] = typer.Option(None, "--init-labels", help="0-based starting partition"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="JSON-lines diagnostics on stderr"),
) -> None:
    """Fit a mixture and write it as JSON; a summary goes to stdout."""
    if family.upper() not in FAMILIES:
        _fail(f"unknown family {family!r}; choose mscnm or mnm", EXIT_INPUT)
    try:
        ds = _load_features(data, label_column, drop_column, no_header)
        if standardize_data:
            ds = standardize(ds)
        labels = load_labels(init_labels) if init_labels is not None else None
        if labels is not None and (labels.size != ds.n or labels.min() < 0 or labels.max() >= k):
            raise InputError(f"--init-labels must hold {ds.n} labels in 0..{k - 1}")
        cfg = FitConfig(k=k, epsilon=epsilon, max_iter=max_iter, scale_param=scale_param, seed=seed)
    except (InputError, ParseError, ValueError) as exc:
        _fail(str(exc), EXIT_INPUT)

    def callback(rec: dict) -> None:
        sys.stderr.write(json.dumps(rec) + "\n")

    try:
        model, state = fit_family(ds.x, family, cfg, labels, callback if verbose else None)
    except (DegenerateComponentError, DegenerateDataError) as exc:
        _fail(f"degenerate fit: {exc}", EXIT_DEGENERATE)
    if ds.standardization is not None:
        mean, sd = ds.standardization
        model = MixtureModel(model.weights, model.components, model.family,
                             (tuple(mean.tolist()), tuple(sd.tolist())))
    doc = model.to_dict()
    doc["columns"] = list(ds.names())
    write_text_atomic(out, json.dumps(doc, indent=2) + "\n")
    _emit_json(
        {
            "model": str(out),
            "family": model.family,
            "k": model.k,
            "d": model.d,
            "n": ds.n,
            "loglik": state.loglik,
            "iterations": state.iterations,
            "converged": state.converged,
            "reason": state.reason,
        },
        None,
    )


def _read_model(path: Path) -> tuple[MixtureModel, dict]:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        return MixtureModel.from_dict(doc), doc
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: cannot read model ({exc})") from None


def _bad_matrix(path: Path, shape: tuple[int, int]) -> np.ndarray:
    try:
        bad, _ = load_int_matrix(path)
    except (OSError, ParseError, ValueError) as exc:
        raise InputError(str(exc)) from None
    if bad.shape != shape:
        raise InputError(f"{path}: bad-cell matrix has shape {bad.shape}, expected {shape}")
    return bad.astype(bool)


@app.command(name="classify")
def classify_cmd(
    model_path: Path = typer.Argument(..., metavar="MODEL", help="Model JSON from `mscn fit`"),
    data: Path = typer.Argument(..., help="Data CSV on the raw scale"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Report JSON (default stdout)"),
    label_column: Optional[str] = typer.Option(None, "--label-column", help="Column of true labels"),
    drop_column: List[str] = typer.Option([], "--drop-column", help="Column to ignore (repeatable)"),
    no_header: bool = typer.Option(False, "--no-header", help="The CSV has no header row"),
    true_bad: Optional[Path] = typer.Option(None, "--true-bad", help="0/1 matrix of known bad cells"),
    labels_out: Optional[Path] = typer.Option(None, "--labels-out", help="Write predicted labels CSV"),
    bad_out: Optional[Path] = typer.Option(None, "--bad-out", help="Write predicted bad-cell CSV"),
) -> None:
    """Assign clusters and flag bad cells; add agreement scores when truth is given."""
    try:
        model, _ = _read_model(model_path)
        ds = _load_features(data, label_column, drop_column, no_header)
        if ds.d != model.d:
            raise InputError(f"model has d = {model.d} but the data have {ds.d} feature columns")
        truth_bad = _bad_matrix(true_bad, ds.x.shape) if true_bad is not None else None
    except InputError as exc:
        _fail(str(exc), EXIT_INPUT)
    rep = classify(model.transform(ds.x), model)
    flags = rep.bad_flags
    report = {
        "model": str(model_path),
        "data": str(data),
        "n": ds.n,
        "d": ds.d,
        "k": model.k,
        "columns": list(ds.names()),
        "labels": rep.labels.tolist(),
        "cluster_sizes": np.bincount(rep.labels, minlength=model.k).tolist(),
        "bad_cells": [[int(i), int(h)] for i, h in zip(*np.nonzero(flags))],
        "outlier_counts": rep.outlier_counts.tolist(),
        "n_outlier_cells": rep.n_outlier_cells,
    }
    if ds.true_labels is not None:
        report["scores"] = agreement(ds.true_labels, rep.labels).to_dict()
    if truth_bad is not None:
        report["confusion"] = outlier_confusion(truth_bad, flags).to_dict()
    if labels_out is not None:
        save_matrix_csv(rep.labels[:, None], ["label"], labels_out)
    if bad_out is not None:
        save_matrix_csv(flags, list(ds.names()), bad_out)
    _emit_json(report, out)


def _flag_component(mu, theta, lam, alpha, eta) -> MscnParams:
    mu = _floats(mu, "mu")
    lam, alpha, eta = _floats(lam, "lambda"), _floats(alpha, "alpha"), _floats(eta, "eta")
    if not len(mu) == len(lam) == len(alpha) == len(eta) == 2:
        raise InputError("density grids need d = 2: give two values for each of mu, lambda, alpha, eta")
    return MscnParams(mu, rotation_matrix(theta), lam, alpha, eta)


def _write_grid(grid, out: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "logpdf"])
    for x, y, lp in grid.rows():
        w.writerow([repr(x), repr(y), repr(lp)])
    write_text_atomic(out, buf.getvalue())


@app.command(name="density-grid")
def density_grid(
    out: Path = typer.Option(Path("grid.csv"), "--out", "-o", help="Grid CSV to write"),
    model_path: Optional[Path] = typer.Option(None, "--model", help="Model JSON (d = 2)"),
    component: Optional[int] = typer.Option(None, "--component", help="Use one component of the model"),
    mu: str = typer.Option("0,0", "--mu", help="Centre, comma-separated"),
    theta: float = typer.Option(0.0, "--theta", help="Rotation angle of the axes in radians"),
    lam: str = typer.Option("1,1", "--lambda", help="Axis variances"),
    alpha: str = typer.Option("1,1", "--alpha", help="Proportions of good points per axis"),
    eta: str = typer.Option("1,1", "--eta", help="Variance inflation per axis"),
    xlim: str = typer.Option("-5,5", "--xlim", help="x range"),
    ylim: str = typer.Option("-5,5", "--ylim", help="y range"),
    resolution: int = typer.Option(101, "--resolution", help="Points per side"),
) -> None:
    """Log-density on a regular grid for external contour plotting."""
    try:
        if model_path is not None:
            model, _ = _read_model(model_path)
            if model.d != 2:
                raise InputError(f"density grids need d = 2, the model has d = {model.d}")
            if component is not None:
                if not 0 <= component < model.k:
                    raise InputError(f"--component must be in 0..{model.k - 1}")
                c = model.components[component]
                fn = lambda pts: mscn_logpdf(pts, c)  # noqa: E731
            else:
                fn = lambda pts: mixture_logpdf(pts, model)  # noqa: E731
        else:
            c = _flag_component(mu, theta, lam, alpha, eta)
            fn = lambda pts: mscn_logpdf(pts, c)  # noqa: E731
        xs, ys = _floats(xlim, "xlim"), _floats(ylim, "ylim")
        if len(xs) != 2 or len(ys) != 2:
            raise InputError("--xlim and --ylim take two numbers")
        grid = grid_logpdf(fn, xs, ys, resolution)
    except (InputError, ValueError) as exc:
        _fail(str(exc), EXIT_INPUT)
    _write_grid(grid, out)
    cell = (grid.xs[1] - grid.xs[0]) * (grid.ys[1] - grid.ys[0])
    _emit_json({"grid": str(out), "points": resolution * resolution,
                "riemann_mass": float(np.exp(grid.logpdf).sum() * cell)}, None)


@app.command(name="eval")
def eval_cmd(
    true_labels: Path = typer.Argument(..., help="CSV with reference labels"),
    pred_labels: Path = typer.Argument(..., help="CSV with predicted labels"),
    true_column: Optional[str] = typer.Option(None, "--true-column", help="Label column (default last)"),
    pred_column: Optional[str] = typer.Option(None, "--pred-column", help="Label column (default last)"),
    true_bad: Optional[Path] = typer.Option(None, "--true-bad", help="0/1 matrix of known bad cells"),
    pred_bad: Optional[Path] = typer.Option(None, "--pred-bad", help="0/1 matrix of flagged cells"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Scores JSON (default stdout)"),
) -> None:
    """Compare two partitions (error rate, adjusted Rand) and optionally bad-cell flags."""
    try:
        t = load_labels(true_labels, true_column)
        p = load_labels(pred_labels, pred_column)
        if t.size != p.size:
            raise InputError(f"label files differ in length ({t.size} vs {p.size})")
        if (true_bad is None) != (pred_bad is None):
            raise InputError("give both --true-bad and --pred-bad, or neither")
        doc = {"n": int(t.size), "scores": agreement(t, p).to_dict()}
        if true_bad is not None:
            tb, _ = load_int_matrix(true_bad)
            pb = _bad_matrix(pred_bad, tb.shape)
            doc["confusion"] = outlier_confusion(tb.astype(bool), pb).to_dict()
    except (InputError, ParseError, ValueError, OSError) as exc:
        _fail(str(exc), EXIT_INPUT)
    _emit_json(doc, out)


def main() -> None:
    app()


if __name__ == "__main__":
    main()
