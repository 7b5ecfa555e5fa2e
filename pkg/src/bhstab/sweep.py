"""Corpus sweeps: run the full certificate over shape families and emit
deterministic CSV/JSON/SVG artifacts.

A sweep expands parametric shape families into concrete instances, runs
the eigensolver and the stability certificate on each instance at each
requested resolution, and collects one row per (instance, resolution).
Individual instance failures are recorded in the row's ``status`` field
and the sweep continues; violations of the scale-invariant eigenvalue
bound abort the sweep, since they would invalidate every downstream
ratio.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, fields, asdict

import numpy as np

from . import __version__
from .domain import ShapeSpec, boundary_edge_length, generate, half_measure_radius, measure
from .special_functions import ProfileParams, mu2_star
from .spectral import assemble, lowest_eigenpairs
from .certificate import stability_report

__all__ = [
    "FamilySweep",
    "SweepConfig",
    "CorpusRow",
    "ExponentFit",
    "SweepInvariantError",
    "default_config",
    "config_from_json",
    "run_sweep",
    "fit_exponent",
    "emit_report",
    "rows_to_csv",
    "rows_from_csv",
]

# Rows qualify for the exponent fit when the asymmetry is clearly above
# discretization noise and the deficit is positive.
A2_FIT_FLOOR = 0.05
MIN_FIT_ROWS = 5
# Scale-invariant eigenvalue bound slack (relative).
SCALED_BOUND_SLACK = 0.05

_N_DIM = 2


class SweepInvariantError(RuntimeError):
    """A corpus row violated the scale-invariant eigenvalue bound."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySweep:
    """One shape family with fixed parameters and varied parameter ranges.

    ``varied`` maps a parameter name to (start, stop, steps); the range is
    inclusive with ``steps`` evenly spaced values (steps = 1 keeps just
    ``start``).  Multiple varied parameters expand as a cartesian product.
    """

    family: str
    fixed: dict
    varied: dict

    def __post_init__(self):
        for name, rng in self.varied.items():
            start, stop, steps = rng
            if int(steps) != steps or steps < 1:
                raise ValueError(f"parameter {name!r}: steps must be a positive integer")
            if stop < start:
                raise ValueError(f"parameter {name!r}: stop < start")

    def instances(self) -> list:
        """All concrete ShapeSpec instances, in deterministic order."""
        names = sorted(self.varied)
        axes = []
        for name in names:
            start, stop, steps = self.varied[name]
            steps = int(steps)
            axes.append(np.linspace(start, stop, steps) if steps > 1 else np.array([start]))
        specs = []
        for combo in itertools.product(*axes) if names else [()]:
            params = dict(self.fixed)
            params.update({n: float(v) for n, v in zip(names, combo)})
            specs.append(ShapeSpec(self.family, params))
        return specs


@dataclass(frozen=True)
class SweepConfig:
    """Sweep definition: families, grid resolutions, solver settings."""

    families: tuple
    resolutions: tuple
    tol: float = 1e-8
    seed: int = 0
    out_dir: str = "sweep_out"

    def __post_init__(self):
        if not self.families:
            raise ValueError("sweep needs at least one shape family")
        if not self.resolutions:
            raise ValueError("sweep needs at least one resolution")
        for h in self.resolutions:
            if not 0.0 < h < 1.0:
                raise ValueError(f"resolution must be in (0, 1), got {h}")
        if self.tol <= 0.0:
            raise ValueError("eigensolver tolerance must be positive")


def config_from_json(text: str) -> SweepConfig:
    """Parse a config whose JSON keys mirror the SweepConfig field names."""
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValueError("sweep config must be a JSON object")
    known = {f.name for f in fields(SweepConfig)}
    extra = sorted(set(raw) - known)
    if extra:
        raise ValueError(f"unknown sweep config keys: {extra}")
    if "families" not in raw or "resolutions" not in raw:
        raise ValueError("sweep config needs 'families' and 'resolutions'")
    fams = []
    for entry in raw["families"]:
        fams.append(
            FamilySweep(
                family=entry["family"],
                fixed={k: float(v) for k, v in entry.get("fixed", {}).items()},
                varied={
                    k: (float(v["start"]), float(v["stop"]), int(v["steps"]))
                    for k, v in entry.get("varied", {}).items()
                },
            )
        )
    kwargs = {}
    for key in ("tol", "seed", "out_dir"):
        if key in raw:
            kwargs[key] = raw[key]
    return SweepConfig(
        families=tuple(fams), resolutions=tuple(float(h) for h in raw["resolutions"]), **kwargs
    )


def default_config(resolutions=(1 / 64, 1 / 128), out_dir: str = "sweep_out") -> SweepConfig:
    """The default corpus: two-disk separations through merge and beyond,
    dumbbell necks, low-mode boundary perturbations, and three reference
    shapes (square, 2x1 rectangle, disk)."""
    families = (
        FamilySweep(
            "two_disks", fixed={"radius": 1.0}, varied={"separation": (1.0, 3.0, 9)}
        ),
        FamilySweep(
            "dumbbell",
            fixed={"radius": 1.0, "separation": 2.0},
            varied={"neck_width": (0.1, 0.8, 8)},
        ),
        FamilySweep(
            "perturbed_disk",
            fixed={"radius": 1.0},
            varied={"eps": (0.05, 0.3, 4), "mode": (2.0, 3.0, 2)},
        ),
        FamilySweep("rectangle", fixed={"width": 1.0, "height": 1.0}, varied={}),
        FamilySweep("rectangle", fixed={"width": 2.0, "height": 1.0}, varied={}),
        FamilySweep("disk", fixed={"radius": 1.0}, varied={}),
    )
    return SweepConfig(families=families, resolutions=tuple(resolutions), out_dir=out_dir)


# ---------------------------------------------------------------------------
# corpus rows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusRow:
    """One (shape instance, resolution) result.

    ``params`` is the canonical ``name=value`` listing (sorted names,
    semicolon-separated).  ``a2_oracle_gap`` is NaN in sweep rows: the
    exhaustive two-ball oracle is budget-infeasible at corpus resolutions
    and is exercised separately on dedicated fixtures.  Failed instances
    carry NaN numerics and the failure reason in ``status``.
    """

    family: str
    params: str
    h: float
    area: float
    r_half: float
    boundary_length: float
    mu1: float
    mu2: float
    mu2_scaled: float
    bh_deficit: float
    rayleigh_bound: float
    a2: float
    a2_oracle_gap: float
    outer_a_on_a: float
    outer_b_on_a: float
    outer_a_on_b: float
    outer_b_on_b: float
    ball_a: float
    ball_b: float
    sum_outer_sq: float
    deficit_quadrature: float
    ratio_deficit_outer: float
    ratio_asym_outer: float
    ratio_stability: float
    orthogonality_residual: float
    status: str


_FLOAT_FIELDS = tuple(f.name for f in fields(CorpusRow) if f.name not in ("family", "params", "status"))


def _params_text(spec: ShapeSpec) -> str:
    return ";".join(f"{k}={spec.parameters[k]:.12g}" for k in sorted(spec.parameters))


def _failed_row(spec: ShapeSpec, h: float, reason: str) -> CorpusRow:
    nanv = {name: math.nan for name in _FLOAT_FIELDS}
    nanv["h"] = h
    return CorpusRow(
        family=spec.family, params=_params_text(spec), status=f"failed: {reason}", **nanv
    )


def _evaluate_instance(spec: ShapeSpec, h: float, cfg: SweepConfig) -> CorpusRow:
    d = generate(spec, h)
    sp = lowest_eigenpairs(assemble(d), k=3, tol=cfg.tol, seed=cfg.seed)
    p = ProfileParams.create(_N_DIM, half_measure_radius(d))
    rep = stability_report(d, sp, p, seed=cfg.seed)
    star = mu2_star(_N_DIM)
    if rep.mu2_scaled > star * (1.0 + SCALED_BOUND_SLACK):
        raise SweepInvariantError(
            f"{spec.family} {_params_text(spec)} at h={h:g}: scaled second eigenvalue "
            f"{rep.mu2_scaled:.6g} exceeds the two-ball bound {star:.6g} by more than "
            f"{SCALED_BOUND_SLACK:.0%}"
        )
    fr = rep.fractions
    return CorpusRow(
        family=spec.family,
        params=_params_text(spec),
        h=h,
        area=measure(d),
        r_half=p.r_omega,
        boundary_length=boundary_edge_length(d),
        mu1=float(sp.eigenvalues[1]),
        mu2=float(sp.eigenvalues[2]),
        mu2_scaled=rep.mu2_scaled,
        bh_deficit=rep.bh_deficit,
        rayleigh_bound=rep.rayleigh_bound,
        a2=rep.a2,
        a2_oracle_gap=math.nan,
        outer_a_on_a=fr.outer_a_on_a,
        outer_b_on_a=fr.outer_b_on_a,
        outer_a_on_b=fr.outer_a_on_b,
        outer_b_on_b=fr.outer_b_on_b,
        ball_a=fr.ball_a,
        ball_b=fr.ball_b,
        sum_outer_sq=rep.sum_outer_sq,
        deficit_quadrature=rep.deficit_quadrature,
        ratio_deficit_outer=rep.ratio_deficit_outer,
        ratio_asym_outer=rep.ratio_asym_outer,
        ratio_stability=rep.ratio_stability,
        orthogonality_residual=rep.orthogonality_residual_norm,
        status="ok",
    )


def run_sweep(cfg: SweepConfig) -> list:
    """One row per (family instance, resolution), ordered by
    (family, parameter values, h); deterministic for a fixed seed."""
    jobs = []
    for fam in cfg.families:
        for spec in fam.instances():
            key = (spec.family, tuple((k, spec.parameters[k]) for k in sorted(spec.parameters)))
            for h in sorted(cfg.resolutions):
                jobs.append((key + (h,), spec, h))
    jobs.sort(key=lambda j: j[0])
    rows = []
    for _, spec, h in jobs:
        try:
            rows.append(_evaluate_instance(spec, h, cfg))
        except SweepInvariantError:
            raise
        except Exception as exc:  # noqa: BLE001 - recorded per instance
            rows.append(_failed_row(spec, h, str(exc)))
    return rows


# ---------------------------------------------------------------------------
# exponent fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of log(bh_deficit) against log(a2) over the
    qualifying rows, plus the corpus minimum of bh_deficit / a2^(N+1)."""

    slope: float
    intercept: float
    r_squared: float
    min_ratio: float
    n_rows: int


def _qualifying(rows) -> list:
    return [
        r
        for r in rows
        if r.status == "ok"
        and math.isfinite(r.a2)
        and math.isfinite(r.bh_deficit)
        and r.a2 > A2_FIT_FLOOR
        and r.bh_deficit > 0.0
    ]


def fit_exponent(rows) -> ExponentFit:
    """Fit the deficit-versus-asymmetry power law on the log-log scale.

    Requires at least 5 rows with a2 > 0.05 and positive deficit; the
    stability check downstream is one-sided (all points above the
    slope-(N+1) line through the minimal-ratio point), so the fitted
    slope itself is informational.
    """
    good = _qualifying(rows)
    if len(good) < MIN_FIT_ROWS:
        raise ValueError(
            f"exponent fit needs at least {MIN_FIT_ROWS} rows with a2 > {A2_FIT_FLOOR} "
            f"and positive deficit; got {len(good)}"
        )
    x = np.log([r.a2 for r in good])
    y = np.log([r.bh_deficit for r in good])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 if ss_tot <= 0.0 else 1.0 - ss_res / ss_tot
    min_ratio = min(r.bh_deficit / r.a2 ** (_N_DIM + 1) for r in good)
    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        min_ratio=float(min_ratio),
        n_rows=len(good),
    )


# ---------------------------------------------------------------------------
# artifact emission
# ---------------------------------------------------------------------------


def _format_value(v) -> str:
    if isinstance(v, str):
        return v
    return f"{v:.12g}"


def rows_to_csv(rows) -> str:
    """CSV text: header is exactly the row field names; floats use 12
    significant digits; byte-deterministic for identical rows."""
    names = [f.name for f in fields(CorpusRow)]
    lines = [",".join(names)]
    for r in rows:
        d = asdict(r)
        lines.append(",".join(_format_value(d[n]) for n in names))
    return "\n".join(lines) + "\n"


def rows_from_csv(text: str) -> list:
    """Inverse of rows_to_csv (12-digit fidelity)."""
    lines = [ln for ln in text.splitlines() if ln]
    names = [f.name for f in fields(CorpusRow)]
    header = lines[0].split(",")
    if header != names:
        raise ValueError(f"unexpected CSV header: {header}")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(names):
            raise ValueError(f"malformed CSV line: {ln!r}")
        kwargs = {}
        for name, part in zip(names, parts):
            kwargs[name] = part if name in ("family", "params", "status") else float(part)
        rows.append(CorpusRow(**kwargs))
    return rows


def _svg_scatter(rows, fit) -> str:
    """Hand-rolled log-log scatter of a2 vs bh_deficit with the
    slope-(N+1) reference line through the minimal-ratio point."""
    good = _qualifying(rows)
    width, height = 640, 480
    ml, mr, mt, mb = 70, 20, 20, 50
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if good:
        lx = np.log10([r.a2 for r in good])
        ly = np.log10([r.bh_deficit for r in good])
        x_lo, x_hi = float(lx.min()), float(lx.max())
        y_lo, y_hi = float(ly.min()), float(ly.max())
        x_pad = 0.05 * max(x_hi - x_lo, 0.1)
        y_pad = 0.05 * max(y_hi - y_lo, 0.1)
        x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
        y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

        def sx(v):
            return ml + (v - x_lo) / (x_hi - x_lo) * (width - ml - mr)

        def sy(v):
            return height - mb - (v - y_lo) / (y_hi - y_lo) * (height - mt - mb)

        # Reference line with slope N+1 through the minimal-ratio point.
        i_min = int(np.argmin(ly - (_N_DIM + 1) * lx))
        x0, y0 = float(lx[i_min]), float(ly[i_min])
        y_at_lo = y0 + (_N_DIM + 1) * (x_lo - x0)
        y_at_hi = y0 + (_N_DIM + 1) * (x_hi - x0)
        parts.append(
            f'<line x1="{sx(x_lo):.2f}" y1="{sy(y_at_lo):.2f}" '
            f'x2="{sx(x_hi):.2f}" y2="{sy(y_at_hi):.2f}" '
            'stroke="#c0392b" stroke-width="1.5" stroke-dasharray="6,4"/>'
        )
        for xv, yv in zip(lx, ly):
            parts.append(
                f'<circle cx="{sx(float(xv)):.2f}" cy="{sy(float(yv)):.2f}" r="4" '
                'fill="#2c6fa8" fill-opacity="0.75"/>'
            )
        # Axes.
        parts.append(
            f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" '
            'stroke="black"/>'
        )
        parts.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>')
        for frac in (0.0, 0.5, 1.0):
            xv = x_lo + frac * (x_hi - x_lo)
            yv = y_lo + frac * (y_hi - y_lo)
            parts.append(
                f'<text x="{sx(xv):.2f}" y="{height - mb + 18}" font-size="11" '
                f'text-anchor="middle">{10.0 ** xv:.3g}</text>'
            )
            parts.append(
                f'<text x="{ml - 8}" y="{sy(yv) + 4:.2f}" font-size="11" '
                f'text-anchor="end">{10.0 ** yv:.3g}</text>'
            )
        parts.append(
            f'<text x="{(ml + width - mr) / 2}" y="{height - 10}" font-size="13" '
            'text-anchor="middle">two-ball asymmetry a2 (log)</text>'
        )
        parts.append(
            f'<text x="16" y="{(mt + height - mb) / 2}" font-size="13" text-anchor="middle" '
            f'transform="rotate(-90 16 {(mt + height - mb) / 2})">eigenvalue deficit (log)</text>'
        )
    else:
        parts.append(
            f'<text x="{width / 2}" y="{height / 2}" font-size="14" text-anchor="middle">'
            "no qualifying rows (a2 &gt; 0.05 with positive deficit)</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _report_payload(rows, fit, seed) -> dict:
    families = {}
    for r in rows:
        fam = families.setdefault(
            r.family, {"rows": 0, "failed": 0, "min_ratio_stability": None}
        )
        fam["rows"] += 1
        if r.status != "ok":
            fam["failed"] += 1
            continue
        if math.isfinite(r.ratio_stability):
            cur = fam["min_ratio_stability"]
            fam["min_ratio_stability"] = (
                r.ratio_stability if cur is None else min(cur, r.ratio_stability)
            )
    good = _qualifying(rows)
    empirical = {
        "min_ratio_stability": min((r.ratio_stability for r in good), default=None),
        "max_ratio_asym_outer": max(
            (
                r.ratio_asym_outer
                for r in rows
                if r.status == "ok" and math.isfinite(r.ratio_asym_outer)
            ),
            default=None,
        ),
        "min_ratio_deficit_outer": min(
            (
                r.ratio_deficit_outer
                for r in rows
                if r.status == "ok" and math.isfinite(r.ratio_deficit_outer)
            ),
            default=None,
        ),
        "qualifying_rows": len(good),
    }
    return {
        "tool": f"bhstab {__version__}",
        "seed": seed,
        "row_count": len(rows),
        "families": families,
        "fit": None if fit is None else asdict(fit),
        "empirical_constants": empirical,
    }


def emit_report(rows, fit, out_dir, seed: int = 0) -> dict:
    """Write corpus.csv, report.json, and scatter.svg into ``out_dir``.

    ``fit`` may be None when too few rows qualify; the JSON then carries
    null and the scatter omits the reference line.  Returns the written
    paths.  I/O failures propagate with the offending path in the message.
    """
    import os

    paths = {
        "csv": os.path.join(out_dir, "corpus.csv"),
        "json": os.path.join(out_dir, "report.json"),
        "svg": os.path.join(out_dir, "scatter.svg"),
    }
    contents = {
        "csv": rows_to_csv(rows),
        "json": json.dumps(_report_payload(rows, fit, seed), indent=2, allow_nan=False) + "\n",
        "svg": _svg_scatter(rows, fit),
    }
    try:
        os.makedirs(out_dir, exist_ok=True)
        for key, path in paths.items():
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(contents[key])
    except OSError as exc:
        raise OSError(f"cannot write sweep artifacts under {out_dir!r}: {exc}") from exc
    return paths
