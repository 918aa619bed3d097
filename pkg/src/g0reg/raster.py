"""
Raster input/output and sliding-window parameter maps.

A raster lives in two files: a JSON sidecar

    {"width": W, "height": H, "channels": ["HH", "HV", "VV"],
     "dtype": "f32le", "looks": L}

and a flat binary of ``W*H*C`` little-endian float32 values, channel-major
then row-major, stored next to it with the same stem and a ``.bin``
suffix (or under the sidecar's optional ``"file"`` key).

Window fits run over row chunks.  Inside a chunk each pixel warm-starts
from its left neighbour; the first pixel of every row starts cold, so the
maps do not depend on how rows are distributed across workers.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from . import g0dist
from .diagnostics import cvm_adequacy, mmse_alpha0
from .errors import DomainError, G0Error
from .fit import FitOptions, fit_mle
from .model import RegressionSpec

__all__ = [
    "Raster",
    "MapStack",
    "window_distribution_maps",
    "window_regression_maps",
    "ratio_adequacy",
    "pooled_ratios",
    "synthetic_distribution_scene",
    "synthetic_regression_scene",
    "EXTREME_ALPHA",
]

EXTREME_ALPHA = -1.0001
DIST_LAYERS = ("alpha", "gamma", "mu", "converged", "extreme")
REGRESS_LAYERS = ("beta0", "beta1", "alpha", "predicted", "ratio", "converged", "extreme")


def _bin_path(sidecar, meta):
    sidecar = Path(sidecar)
    name = meta.get("file")
    return sidecar.parent / name if name else sidecar.with_suffix(".bin")


def _read_grid(sidecar):
    with open(sidecar, encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("width", "height", "looks"):
        if key not in meta:
            raise DomainError(f"sidecar lacks '{key}'")
    if meta.get("dtype", "f32le") != "f32le":
        raise DomainError(f"unsupported dtype {meta['dtype']!r}")
    names = meta.get("layers", meta.get("channels"))
    if not names:
        raise DomainError("sidecar lists no channels")
    w, h = int(meta["width"]), int(meta["height"])
    raw = np.fromfile(_bin_path(sidecar, meta), dtype="<f4")
    if raw.size != w * h * len(names):
        raise DomainError(f"binary holds {raw.size} values, expected {w * h * len(names)}")
    return meta, names, raw.reshape(len(names), h, w).astype(float)


def _write_grid(sidecar, meta, data):
    sidecar = Path(sidecar)
    binp = sidecar.with_suffix(".bin")
    meta = dict(meta, dtype="f32le", file=binp.name)
    np.ascontiguousarray(data, dtype="<f4").tofile(binp)
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return binp


@dataclass
class Raster:
    """Multi-channel intensity image, ``data`` shaped ``(channels, height, width)``."""

    width: int
    height: int
    channels: list
    data: np.ndarray
    looks: float

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.channels = list(self.channels)
        if self.data.shape != (len(self.channels), self.height, self.width):
            raise DomainError(
                f"data shape {self.data.shape} does not match "
                f"({len(self.channels)}, {self.height}, {self.width})"
            )
        if not np.all(np.isfinite(self.data)) or np.any(self.data < 0):
            raise DomainError("raster intensities must be finite and >= 0")
        if not self.looks > 0:
            raise DomainError("looks must be > 0")

    def channel(self, name):
        if name not in self.channels:
            raise DomainError(f"unknown channel {name!r}; available: {', '.join(self.channels)}")
        return self.data[self.channels.index(name)]

    @classmethod
    def read(cls, sidecar):
        meta, names, data = _read_grid(sidecar)
        return cls(int(meta["width"]), int(meta["height"]), names, data, float(meta["looks"]))

    def write(self, sidecar):
        meta = {"width": self.width, "height": self.height, "channels": self.channels, "looks": self.looks}
        return _write_grid(sidecar, meta, self.data)


@dataclass
class MapStack:
    """Named per-pixel layers; masked pixels hold NaN."""

    layers: dict
    window: int
    stride: int
    looks: float
    notes: list = field(default_factory=list)

    @property
    def shape(self):
        return next(iter(self.layers.values())).shape

    def masked_fraction(self):
        return float(np.mean(self.layers["converged"] == 0))

    def write(self, sidecar):
        h, w = self.shape
        names = list(self.layers)
        meta = {
            "width": w,
            "height": h,
            "layers": names,
            "looks": self.looks,
            "window": self.window,
            "stride": self.stride,
        }
        return _write_grid(sidecar, meta, np.stack([self.layers[k] for k in names]))

    @classmethod
    def read(cls, sidecar):
        meta, names, data = _read_grid(sidecar)
        return cls(dict(zip(names, data)), int(meta.get("window", 0)), int(meta.get("stride", 1)), float(meta["looks"]))

    def layer_csv(self, name, path):
        """Write ``x,y,value`` rows for one layer (row-major order)."""
        grid = self.layers[name]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "y", "value"])
            for y in range(grid.shape[0]):
                for x in range(grid.shape[1]):
                    wr.writerow([x, y, repr(float(grid[y, x]))])


# window fitting ----------------------------------------------------------


def _fit_rows(task):
    """Fit every pixel of the given rows; returns ``(rows, {layer: values})``."""
    mode, rows, stride, window, looks, resp, pred, row_offset = task
    r = window // 2
    H, W = resp.shape
    cols = list(range(0, W, stride))
    names = DIST_LAYERS if mode == "dist" else REGRESS_LAYERS
    out = {k: np.full((len(rows), len(cols)), np.nan) for k in names}
    for i, y in enumerate(rows):
        ly = y - row_offset
        y0, y1 = max(0, ly - r), min(H, ly + r + 1)
        start = None
        for j, x in enumerate(cols):
            x0, x1 = max(0, x - r), min(W, x + r + 1)
            zw = resp[y0:y1, x0:x1].ravel()
            if mode == "dist":
                keep = zw > 0
                z = zw[keep]
                X = np.ones((z.size, 1))
            else:
                xw = pred[y0:y1, x0:x1].ravel()
                keep = zw > 0
                z = zw[keep]
                X = np.column_stack([np.ones(z.size), xw[keep]])
            out["converged"][i, j] = 0.0
            out["extreme"][i, j] = 0.0
            if z.size <= X.shape[1] + 1 or np.ptp(z) == 0:
                start = None
                continue
            try:
                spec = RegressionSpec(X, z, fix_looks=looks)
                fr = fit_mle(spec, FitOptions(start=start, strict=False))
            except G0Error:
                start = None
                continue
            if not fr.converged:
                start = None
                continue
            th = fr.theta
            start = th
            out["converged"][i, j] = 1.0
            out["extreme"][i, j] = float(th.alpha >= EXTREME_ALPHA)
            out["alpha"][i, j] = th.alpha
            if mode == "dist":
                mu = math.exp(th.beta[0])
                out["mu"][i, j] = mu
                out["gamma"][i, j] = mu * (-th.alpha - 1.0)
            else:
                out["beta0"][i, j] = th.beta[0]
                out["beta1"][i, j] = th.beta[1]
                mu = math.exp(th.beta[0] + th.beta[1] * pred[ly, x])
                out["predicted"][i, j] = mu
                out["ratio"][i, j] = resp[ly, x] / mu
    return rows, out


def _resolve_workers(workers):
    if workers is None:
        env = os.environ.get("G0REG_THREADS")
        workers = int(env) if env else 1
    if workers < 1:
        raise DomainError("workers must be >= 1")
    return workers


def _run_maps(mode, resp, pred, window, stride, looks, workers, chunk_rows):
    if window < 3 or window % 2 == 0:
        raise DomainError("window must be odd and >= 3")
    if stride < 1:
        raise DomainError("stride must be >= 1")
    workers = _resolve_workers(workers)
    H, W = resp.shape
    r = window // 2
    rows = list(range(0, H, stride))
    tasks = []
    for c0 in range(0, len(rows), chunk_rows):
        chunk = rows[c0 : c0 + chunk_rows]
        lo, hi = max(0, chunk[0] - r), min(H, chunk[-1] + r + 1)
        tasks.append((mode, chunk, stride, window, looks, resp[lo:hi], None if pred is None else pred[lo:hi], lo))
    if workers == 1 or len(tasks) == 1:
        results = map(_fit_rows, tasks)
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_fit_rows, tasks))
    names = DIST_LAYERS if mode == "dist" else REGRESS_LAYERS
    coarse = {k: np.empty((len(rows), len(range(0, W, stride)))) for k in names}
    for chunk, out in results:
        i0 = rows.index(chunk[0])
        for k in names:
            coarse[k][i0 : i0 + len(chunk)] = out[k]
    # stride > 1: every pixel takes the value of the fitted pixel at the top-left of its block
    yi = np.arange(H) // stride
    xi = np.arange(W) // stride
    return {k: v[np.ix_(yi, xi)] for k, v in coarse.items()}


def window_distribution_maps(r, channel, window=7, stride=1, workers=None, chunk_rows=4):
    """Per-pixel intercept-only G0 fits on clipped ``window x window`` patches.

    Layers: ``alpha``, ``gamma``, ``mu``, ``converged`` (1/0) and ``extreme``
    (1 where ``alpha_hat >= -1.0001``).  Windows with zero spread or too few
    positive pixels, and fits that fail to converge, are masked (NaN).
    """
    resp = r.channel(channel)
    layers = _run_maps("dist", resp, None, window, stride, r.looks, workers, chunk_rows)
    return MapStack(layers, window, stride, r.looks)


def window_regression_maps(r, response_channel, predictor_channel, window=11, stride=1, workers=None, chunk_rows=4):
    """Per-pixel fits of ``response ~ exp(b0 + b1 * predictor)``.

    Layers: ``beta0``, ``beta1``, ``alpha``, ``predicted`` (fitted mean at
    the centre pixel), ``ratio`` (response / predicted), ``converged`` and
    ``extreme``.
    """
    resp = r.channel(response_channel)
    pred = r.channel(predictor_channel)
    layers = _run_maps("regress", resp, pred, window, stride, r.looks, workers, chunk_rows)
    return MapStack(layers, window, stride, r.looks)


def pooled_ratios(ms):
    """Unmasked ratios at the fitted pixels (one per stride block)."""
    if "ratio" not in ms.layers:
        raise DomainError("map stack has no ratio layer")
    s = max(1, ms.stride)
    ratio = ms.layers["ratio"][::s, ::s]
    return ratio[ms.layers["converged"][::s, ::s] == 1]


def ratio_adequacy(ms, looks=None):
    """CvM check of the pooled ratio layer against the unit-mean G0 law.

    Returns
    -------
    alpha0, statistic, p_value : float
    """
    looks = ms.looks if looks is None else looks
    ratios = pooled_ratios(ms)
    alpha0 = mmse_alpha0(ratios, looks)
    stat, p = cvm_adequacy(ratios, alpha0, looks)
    return alpha0, stat, p


# synthetic scenes --------------------------------------------------------


def synthetic_distribution_scene(width, height, alpha=-5.0, mu=1.0, looks=4.0, seed=0, channel="HH"):
    """Single-channel scene of i.i.d. G0 intensities with mean ``mu``."""
    p = g0dist.G0Params(alpha, mu * (-alpha - 1.0), looks)
    data = g0dist.sample(p, width * height, seed).reshape(1, height, width)
    data = data.astype("<f4").astype(float)
    return Raster(width, height, [channel], data, looks)


def synthetic_regression_scene(
    width,
    height,
    beta=(-2.0, 10.0),
    alpha=-5.0,
    looks=3.0,
    predictor_mean=0.1,
    predictor_alpha=-5.0,
    seed=0,
    channels=("HV", "VV"),
):
    """Two-channel scene with ``E[resp | pred] = exp(b0 + b1 pred)``.

    The predictor channel is i.i.d. G0 with mean ``predictor_mean``; the
    response is G0 with roughness ``alpha`` around the coupled mean.
    """
    rng = np.random.default_rng(seed)
    n = width * height
    px = g0dist.G0Params(predictor_alpha, predictor_mean * (-predictor_alpha - 1.0), looks)
    x = g0dist.sample(px, n, rng)
    mu = np.exp(beta[0] + beta[1] * x)
    y = rng.gamma(looks, 1.0 / looks, n)
    g = rng.gamma(-alpha, 1.0, n) / (mu * (-alpha - 1.0))
    z = y / g
    data = np.stack([x, z]).reshape(2, height, width)
    # round through float32 so in-memory scenes match their files
    data = data.astype("<f4").astype(float)
    return Raster(width, height, list(channels), data, looks)
