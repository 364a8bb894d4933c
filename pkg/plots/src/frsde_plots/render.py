"""Turn experiment artifacts into figures.

Every figure starts from a CSV written by the frsde command line tool plus
the report.json that sits next to it.  The report supplies the master seed
and the config hash for the footer, and for the time-regularity figure the
reference slopes as well.  Rendering is deterministic: fixed figure sizes,
the Agg backend, and no timestamps in the output files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_KINDS = (
    "moments_vs_level",
    "modulus_loglog",
    "convergence_decay",
    "eigenvalue_spectrum",
)

IMAGE_SUFFIXES = (".png", ".svg", ".pdf")

_MARKERS = ("o", "s", "^", "d", "v", "*")


class SpecError(ValueError):
    """The figure spec itself is malformed."""


class RenderError(RuntimeError):
    """The input data cannot be rendered."""


@dataclass(frozen=True)
class FigureSpec:
    """What to draw, from where, and where to put it."""

    kind: str
    csv_paths: tuple[str, ...]
    out_path: str
    report_path: str | None = None

    def __post_init__(self):
        if self.kind not in FIGURE_KINDS:
            raise SpecError(f"unknown figure kind {self.kind!r}, "
                            f"expected one of {FIGURE_KINDS}")
        if len(self.csv_paths) != 1:
            raise SpecError("exactly one input CSV is required")
        suffix = Path(self.out_path).suffix.lower()
        if suffix not in IMAGE_SUFFIXES:
            raise SpecError(f"output must end in one of {IMAGE_SUFFIXES}, "
                            f"got {self.out_path!r}")


@dataclass(frozen=True)
class RenderResult:
    """Structural summary of a finished figure, mainly for tests."""

    out_path: str
    n_points: int
    n_series: int
    reference_slopes: tuple[float, ...]
    annotations: tuple[str, ...]


def load_spec(path: str | Path) -> FigureSpec:
    """Read a figure spec from a JSON file.

    The file holds an object with keys kind, csv, out and optionally
    report.  csv may be a single path or a list with one entry.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read spec file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec file is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SpecError("spec file must hold a JSON object")

    unknown = sorted(set(raw) - {"kind", "csv", "out", "report"})
    if unknown:
        raise SpecError(f"unknown spec keys: {', '.join(unknown)}")
    for key in ("kind", "csv", "out"):
        if key not in raw:
            raise SpecError(f"spec is missing required key {key!r}")

    csv_field = raw["csv"]
    if isinstance(csv_field, str):
        paths = (csv_field,)
    elif isinstance(csv_field, list) and all(isinstance(p, str)
                                             for p in csv_field):
        paths = tuple(csv_field)
    else:
        raise SpecError("csv must be a path or a list of paths")

    report = raw.get("report")
    if report is not None and not isinstance(report, str):
        raise SpecError("report must be a path")
    if not isinstance(raw["kind"], str) or not isinstance(raw["out"], str):
        raise SpecError("kind and out must be strings")
    return FigureSpec(kind=raw["kind"], csv_paths=paths,
                      out_path=raw["out"], report_path=report)


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except OSError as exc:
        raise RenderError(f"cannot read {path}: {exc}") from None
    if header is None or not rows:
        raise RenderError("no data rows")
    return header, rows


def _columns(header, needed, path):
    missing = [name for name in needed if name not in header]
    if missing:
        raise RenderError(f"missing columns {', '.join(missing)} in {path}")
    return {name: header.index(name) for name in needed}


def _floats(rows, idx, path):
    out = []
    for row in rows:
        try:
            out.append(float(row[idx]))
        except (ValueError, IndexError):
            raise RenderError(f"malformed numeric value in {path}: "
                              f"{row!r}") from None
    return np.asarray(out)


def _load_report(spec: FigureSpec) -> dict:
    if spec.report_path is not None:
        path = Path(spec.report_path)
    else:
        path = Path(spec.csv_paths[0]).parent / "report.json"
    try:
        with open(path) as fh:
            report = json.load(fh)
    except OSError:
        raise RenderError(
            f"no run report found at {path}; every figure needs the "
            f"report.json written alongside the CSV, or an explicit "
            f"\"report\" path in the figure spec") from None
    except json.JSONDecodeError as exc:
        raise RenderError(f"run report {path} is not valid JSON: "
                          f"{exc}") from None
    if not isinstance(report, dict):
        raise RenderError(f"run report {path} must hold a JSON object")
    return report


def _footer(fig, report) -> str:
    seed = report.get("master_seed", "?")
    digest = str(report.get("config_hash", ""))[:12] or "?"
    text = f"seed {seed}   config {digest}"
    fig.text(0.99, 0.01, text, ha="right", va="bottom",
             fontsize=7, color="0.35")
    return text


def _save(fig, out_path: str) -> None:
    path = Path(out_path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {
        ".svg": {"Date": None},
        ".pdf": {"CreationDate": None},
    }.get(path.suffix.lower())
    fig.savefig(path, metadata=metadata)
    plt.close(fig)


def _fig_moments(spec, header, rows, report):
    path = spec.csv_paths[0]
    col = _columns(header, ["n_modes", "x_h_norm", "p_exp", "functional",
                            "estimate", "stderr", "ratio_2p"], path)
    estimates = _floats(rows, col["estimate"], path)
    stderrs = _floats(rows, col["stderr"], path)
    ratios = _floats(rows, col["ratio_2p"], path)
    modes = _floats(rows, col["n_modes"], path)

    # group rows into one panel per functional, one series per
    # (initial norm, moment exponent) pair, preserving file order
    panels: dict[str, dict[tuple[str, str], list[int]]] = {}
    for i, row in enumerate(rows):
        series = panels.setdefault(row[col["functional"]], {})
        key = (row[col["x_h_norm"]], row[col["p_exp"]])
        series.setdefault(key, []).append(i)

    n_panels = len(panels)
    ncols = 1 if n_panels == 1 else (2 if n_panels <= 4 else 4)
    nrows = math.ceil(n_panels / ncols)
    fig, axes = plt.subplots(nrows, ncols, squeeze=False,
                             figsize=(4.2 * ncols, 3.2 * nrows), dpi=150,
                             sharex=True)

    n_series = 0
    for ax, (name, series) in zip(axes.ravel(), panels.items()):
        for j, (key, idx) in enumerate(series.items()):
            norm, p_exp = key
            yerr = np.where(estimates[idx] > 0,
                            stderrs[idx] * ratios[idx]
                            / np.where(estimates[idx] > 0,
                                       estimates[idx], 1.0),
                            0.0)
            ax.errorbar(modes[idx], ratios[idx], yerr=yerr, capsize=3,
                        marker=_MARKERS[j % len(_MARKERS)],
                        label=f"|x|={norm}, p={p_exp}")
            n_series += 1
        ax.set_xscale("log", base=2)
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("Galerkin modes")
        ax.set_ylabel("moment / normalizer")
        ax.legend(fontsize=7)
    for ax in axes.ravel()[n_panels:]:
        ax.set_visible(False)

    fig.suptitle("Normalized moments across Galerkin levels", fontsize=11)
    fig.tight_layout(rect=(0, 0.03, 1, 0.97))
    return fig, {
        "n_points": len(rows),
        "n_series": n_series,
        "reference_slopes": (),
        "annotations": (),
    }


def _fig_modulus(spec, header, rows, report):
    path = spec.csv_paths[0]
    col = _columns(header, ["delta", "estimate", "stderr"], path)
    deltas = _floats(rows, col["delta"], path)
    estimates = _floats(rows, col["estimate"], path)
    stderrs = _floats(rows, col["stderr"], path)
    order = np.argsort(deltas)
    deltas, estimates, stderrs = (deltas[order], estimates[order],
                                  stderrs[order])
    if np.any(deltas <= 0) or np.any(estimates <= 0):
        raise RenderError("log-log axes need positive lags and estimates")

    results = report.get("results", {})
    refs = results.get("reference_slopes")
    if not isinstance(refs, dict) or not {"drift", "noise"} <= set(refs):
        raise RenderError(
            "run report carries no reference_slopes block; the log-log "
            "figure needs the drift and noise reference exponents from a "
            "time-regularity run")

    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=150)
    ax.errorbar(deltas, estimates, yerr=stderrs, marker="o", capsize=3,
                label="measured increment modulus")

    slopes = []
    for key, style in (("drift", "--"), ("noise", ":")):
        s = float(refs[key])
        slopes.append(s)
        guide = estimates[0] * (deltas / deltas[0]) ** s
        ax.plot(deltas, guide, style, color="0.4",
                label=f"{key} reference, slope {s:g}")

    fitted = results.get("slope")
    if isinstance(fitted, (int, float)) and math.isfinite(fitted):
        note = f"fitted slope {fitted:.3f}"
    else:
        note = "fitted slope undefined"
    ax.text(0.03, 0.95, note, transform=ax.transAxes, va="top", fontsize=9)

    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("lag (time)")
    ax.set_ylabel("mean pairing increment")
    ax.set_title("Increment modulus against lag", fontsize=11)
    ax.legend(fontsize=8)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    return fig, {
        "n_points": len(deltas),
        "n_series": 1,
        "reference_slopes": tuple(slopes),
        "annotations": (note,),
    }


def _fig_convergence(spec, header, rows, report):
    path = spec.csv_paths[0]
    col = _columns(header, ["level_pair", "quantity", "estimate",
                            "stderr"], path)
    labels: list[str] = []
    series: dict[str, dict[str, tuple[float, float]]] = {}
    for row in rows:
        pair = row[col["level_pair"]]
        if pair not in labels:
            labels.append(pair)
        try:
            est = float(row[col["estimate"]])
            se = float(row[col["stderr"]])
        except ValueError:
            raise RenderError(f"malformed numeric value in {path}: "
                              f"{row!r}") from None
        series.setdefault(row[col["quantity"]], {})[pair] = (est, se)

    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=150)
    xs = np.arange(len(labels))
    positive = True
    for j, (name, by_pair) in enumerate(series.items()):
        pts = [by_pair[lab] for lab in labels if lab in by_pair]
        est = np.array([p[0] for p in pts])
        se = np.array([p[1] for p in pts])
        x = np.array([i for i, lab in enumerate(labels) if lab in by_pair])
        ax.errorbar(x, est, yerr=se, marker=_MARKERS[j % len(_MARKERS)],
                    capsize=3, label=name)
        positive = positive and bool(np.all(est > 0))

    annotations = ()
    if positive:
        ax.set_yscale("log")
    else:
        annotations = ("zero estimates present, linear scale",)
        ax.text(0.03, 0.95, annotations[0], transform=ax.transAxes,
                va="top", fontsize=8)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels)
    ax.set_xlabel("level refinement")
    ax.set_ylabel("mean squared gap")
    ax.set_title("Inter-level gaps across refinements", fontsize=11)
    ax.legend(fontsize=8)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    return fig, {
        "n_points": len(rows),
        "n_series": len(series),
        "reference_slopes": (),
        "annotations": annotations,
    }


def _fig_eigenvalues(spec, header, rows, report):
    path = spec.csv_paths[0]
    col = _columns(header, ["index", "eigenvalue"], path)
    index = _floats(rows, col["index"], path)
    values = _floats(rows, col["eigenvalue"], path)

    fig, ax = plt.subplots(figsize=(6.4, 4.8), dpi=150)
    ax.loglog(index, values, marker="o", linestyle="-")
    ax.set_xlabel("mode index")
    ax.set_ylabel("operator eigenvalue")
    ax.set_title("Fractional operator spectrum", fontsize=11)
    fig.tight_layout(rect=(0, 0.03, 1, 1))
    return fig, {
        "n_points": len(rows),
        "n_series": 1,
        "reference_slopes": (),
        "annotations": (),
    }


_BUILDERS = {
    "moments_vs_level": _fig_moments,
    "modulus_loglog": _fig_modulus,
    "convergence_decay": _fig_convergence,
    "eigenvalue_spectrum": _fig_eigenvalues,
}


def render(spec: FigureSpec) -> RenderResult:
    """Draw the figure described by spec and write the image file.

    Raises RenderError when the CSV is empty, lacks required columns,
    or the run report cannot be found.  Nothing is written on failure.
    """
    header, rows = _read_rows(Path(spec.csv_paths[0]))
    report = _load_report(spec)
    with plt.rc_context({"svg.hashsalt": "frsde-plots"}):
        fig, meta = _BUILDERS[spec.kind](spec, header, rows, report)
        footer = _footer(fig, report)
        _save(fig, spec.out_path)
    return RenderResult(
        out_path=spec.out_path,
        n_points=meta["n_points"],
        n_series=meta["n_series"],
        reference_slopes=meta["reference_slopes"],
        annotations=meta["annotations"] + (footer,),
    )
