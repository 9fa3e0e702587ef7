"""Heatmap scans over the Beta (mu, sigma) plane and the CMM-3 (mu1, mu3) plane."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import json
import logging
from pathlib import Path
import warnings

import numpy as np

from . import analytics, competence
from .errors import DomainError, EscmError
from .mechanism import MechanismParams
from .montecarlo import clt_success

log = logging.getLogger(__name__)

METRICS = ("p_cjt", "p_escm", "gain")
FAMILIES = ("beta_mu_sigma", "cmm3_wide")


@dataclass(frozen=True)
class Axis:
    name: str
    min: float
    max: float
    steps: int

    @property
    def values(self):
        return np.linspace(self.min, self.max, self.steps)


@dataclass(frozen=True)
class GridSpec:
    x_axis: Axis
    y_axis: Axis
    family: str
    n: int = 501
    params: MechanismParams = field(default_factory=MechanismParams)
    mode: str = "paper"

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise DomainError("; ".join(problems))

    def violations(self):
        out = []
        for ax in (self.x_axis, self.y_axis):
            if ax.steps < 2:
                out.append(f"axis {ax.name}: steps must be >= 2 (got {ax.steps})")
            if not ax.min < ax.max:
                out.append(f"axis {ax.name}: min must be < max (got {ax.min}, {ax.max})")
        if self.n < 1 or self.n % 2 == 0:
            out.append(f"n must be a positive odd integer (got {self.n})")
        if self.family not in FAMILIES:
            out.append(f"family must be one of {FAMILIES} (got {self.family!r})")
        if self.mode not in analytics.VARIANCE_MODES:
            out.append(f"mode must be one of {analytics.VARIANCE_MODES} (got {self.mode!r})")
        if self.family == "cmm3_wide":
            if not (0.0 < self.x_axis.min and self.x_axis.max < 0.5):
                out.append(f"mu1 axis must lie inside (0, 0.5) (got [{self.x_axis.min}, {self.x_axis.max}])")
            if not (0.5 < self.y_axis.min and self.y_axis.max < 1.0):
                out.append(f"mu3 axis must lie inside (0.5, 1) (got [{self.y_axis.min}, {self.y_axis.max}])")
        return out

    def to_dict(self):
        d = asdict(self)
        d["params"] = self.params.to_dict()
        return d


def default_beta_grid(params=None, n=501, steps=(81, 80), mode="paper"):
    return GridSpec(Axis("mu", 0.30, 0.70, steps[0]), Axis("sigma", 0.01, 0.40, steps[1]),
                    "beta_mu_sigma", n, params or MechanismParams(), mode)


def default_cmm_grid(params=None, n=501, steps=(41, 41), mode="paper"):
    return GridSpec(Axis("mu1", 0.05, 0.45, steps[0]), Axis("mu3", 0.55, 0.95, steps[1]),
                    "cmm3_wide", n, params or MechanismParams(), mode)


@dataclass
class HeatmapGrid:
    values: np.ndarray  # (y steps, x steps)
    mask: np.ndarray  # True where the cell is infeasible or failed
    x_axis: Axis
    y_axis: Axis
    metric: str

    @property
    def shape(self):
        return self.values.shape


def _cell(spec, x, y):
    if spec.family == "beta_mu_sigma":
        if not competence.is_feasible(x, y):
            return None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            dist = competence.beta_from_mu_sigma(x, y)
        mu_bar = x  # the grid mean itself, so p_cjt is exactly constant along sigma
    else:
        dist = competence.cmm3_wide(x, y)
        mu_bar = competence.moments(dist)[0]
    p_cjt = analytics.cjt_success(spec.n, mu_bar).value
    mom = analytics.signal_moments(dist, spec.params, mode=spec.mode)
    return p_cjt, clt_success(spec.n, mom)


def _row(spec, y):
    out = np.full((spec.x_axis.steps, 2), np.nan)
    for j, x in enumerate(spec.x_axis.values):
        try:
            res = _cell(spec, x, y)
        except EscmError as exc:
            log.warning("cell (%s=%g, %s=%g) masked: %s", spec.x_axis.name, x,
                        spec.y_axis.name, y, exc)
            continue
        if res is not None:
            out[j] = res
    return out


def _scan(spec, workers=1):
    ys = spec.y_axis.values
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_row, [spec] * len(ys), ys))
    else:
        rows = [_row(spec, y) for y in ys]
    cube = np.stack(rows)  # (ny, nx, 2)
    mask = ~np.isfinite(cube).all(axis=2)
    p_cjt, p_escm = cube[..., 0], cube[..., 1]
    gain = p_escm - p_cjt
    grids = {}
    for name, vals in (("p_cjt", p_cjt), ("p_escm", p_escm), ("gain", gain)):
        vals = np.where(mask, np.nan, vals)
        grids[name] = HeatmapGrid(vals, mask.copy(), spec.x_axis, spec.y_axis, name)
    return grids


def scan_beta(spec, workers=1):
    """P_CJT, P_ESCM and gain over (mu, sigma); cells with sigma^2 >= mu(1-mu) are masked."""
    if spec.family != "beta_mu_sigma":
        raise DomainError("scan_beta needs a beta_mu_sigma grid")
    return _scan(spec, workers)


def scan_cmm3(spec, workers=1):
    """P_CJT, P_ESCM and gain over (mu1, mu3) for the three-group wide mixture."""
    if spec.family != "cmm3_wide":
        raise DomainError("scan_cmm3 needs a cmm3_wide grid")
    return _scan(spec, workers)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _fmt(v):
    return f"{v:.9g}"


def emit_csv(grid, path):
    path = Path(path)
    xa, ya = grid.x_axis, grid.y_axis
    lines = [
        f"# metric={grid.metric}",
        f"# x_axis={xa.name} min={_fmt(xa.min)} max={_fmt(xa.max)} steps={xa.steps}",
        f"# y_axis={ya.name} min={_fmt(ya.min)} max={_fmt(ya.max)} steps={ya.steps}",
        f"{xa.name},{ya.name},{grid.metric}",
    ]
    for i, y in enumerate(ya.values):
        for j, x in enumerate(xa.values):
            v = "NA" if grid.mask[i, j] else _fmt(grid.values[i, j])
            lines.append(f"{_fmt(x)},{_fmt(y)},{v}")
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Inverse of :func:`emit_csv` for the value column (masked cells become nan)."""
    rows = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")][1:]
    return np.array([float("nan") if r.split(",")[2] == "NA" else float(r.split(",")[2])
                     for r in rows])


MASK_RGB = (190, 190, 190)
LUT_SIZE = 256


def _lut(cmap_name, reverse):
    from matplotlib import colormaps

    lut = (colormaps[cmap_name](np.linspace(0.0, 1.0, LUT_SIZE))[:, :3] * 255).round()
    lut = lut.astype(np.uint8)
    return lut[::-1] if reverse else lut


def value_range(metric):
    return (-1.0, 1.0) if metric == "gain" else (0.0, 1.0)


def colorize(grid, cmap=None, reverse=False):
    """RGB array (ny, nx, 3) with the top row holding the largest y value."""
    lo, hi = value_range(grid.metric)
    cmap = cmap or ("RdBu_r" if grid.metric == "gain" else "viridis")
    lut = _lut(cmap, reverse)
    t = (np.nan_to_num(grid.values, nan=lo) - lo) / (hi - lo)
    idx = np.clip(np.rint(t * (LUT_SIZE - 1)), 0, LUT_SIZE - 1).astype(np.int64)
    rgb = lut[idx]
    rgb[grid.mask] = MASK_RGB
    return rgb[::-1]


MARGIN = dict(left=84, right=16, top=24, bottom=44)


def render_heatmap(grid, path, cmap=None, reverse=False, cell_px=6):
    """Write a PNG: one ``cell_px`` square per cell, plus axis ticks and a title."""
    from PIL import Image, ImageDraw

    rgb = colorize(grid, cmap, reverse)
    ny, nx = rgb.shape[:2]
    pw, ph = nx * cell_px, ny * cell_px
    W = MARGIN["left"] + pw + MARGIN["right"]
    H = MARGIN["top"] + ph + MARGIN["bottom"]
    img = Image.new("RGB", (W, H), (255, 255, 255))
    body = Image.fromarray(np.ascontiguousarray(rgb)).resize((pw, ph), Image.NEAREST)
    img.paste(body, (MARGIN["left"], MARGIN["top"]))
    draw = ImageDraw.Draw(img)
    x0, y0 = MARGIN["left"], MARGIN["top"]
    for frac in np.linspace(0, 1, 5):
        xv = grid.x_axis.min + frac * (grid.x_axis.max - grid.x_axis.min)
        px = x0 + frac * (pw - 1)
        draw.line([(px, y0 + ph), (px, y0 + ph + 4)], fill=(0, 0, 0))
        draw.text((px - 12, y0 + ph + 6), f"{xv:.2f}", fill=(0, 0, 0))
        yv = grid.y_axis.min + frac * (grid.y_axis.max - grid.y_axis.min)
        py = y0 + ph - 1 - frac * (ph - 1)
        draw.line([(x0 - 5, py), (x0 - 1, py)], fill=(0, 0, 0))
        draw.text((x0 - 34, py - 5), f"{yv:.2f}", fill=(0, 0, 0))
    draw.text((x0 + pw // 2 - 10, y0 + ph + 24), grid.x_axis.name, fill=(0, 0, 0))
    draw.text((4, y0 + ph // 2), grid.y_axis.name, fill=(0, 0, 0))
    lo, hi = value_range(grid.metric)
    draw.text((x0, 6), f"{grid.metric}  [{lo:g}, {hi:g}]", fill=(0, 0, 0))
    img.save(path, format="PNG")
    return Path(path)


def write_outputs(grids, spec, out_dir, prefix, extra_meta=None):
    """3 CSVs, 3 PNGs and one JSON metadata file; returns the written paths."""
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in METRICS:
        g = grids[metric]
        written.append(emit_csv(g, out_dir / f"{prefix}_{metric}.csv"))
        written.append(render_heatmap(g, out_dir / f"{prefix}_{metric}.png"))
    meta = {
        "version": __version__,
        "grid": spec.to_dict(),
        "variance_mode": spec.mode,
        "weight_map": spec.params.weight_map.label(),
        "masked_cells": int(grids["gain"].mask.sum()),
    }
    meta.update(extra_meta or {})
    meta_path = out_dir / f"{prefix}_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    written.append(meta_path)
    return written
