"""Scalar and marginal diagnostics of sector fields and density matrices.

Every function accepts fields in either representation. Off-grid quantities
such as coherences of late-time states are evaluated in the log domain when
the field carries a ``log_scale``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grids import GridSpec, Rep, SectorField, as_rep, forward_ft_array, inverse_ft_array
from .params import DIAGONAL, DerivedConstants, PhysicalParams, Sector
from .states import DensityMatrix, coherent_qr


class FitError(ValueError):
    pass


class DegenerateSectorError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    label: str
    log: bool = False      # values hold natural logs of the observable
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def window(self, t_min: float, t_max: float) -> "TimeSeries":
        keep = (self.times >= t_min) & (self.times <= t_max)
        return TimeSeries(self.times[keep], self.values[keep], self.label, self.log, self.meta)

    def to_csv(self, path, header: dict | None = None) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write(f"# observable={self.label} log={self.log}\n")
            for k, v in (header or {}).items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "log_value" if self.log else "value"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])
        return path


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _r0_line(f: SectorField) -> np.ndarray:
    """rho(R, r=0) on the R grid, without ``log_scale``."""
    j0 = f.grid.N_r // 2
    col = f.values[:, j0:j0 + 1]
    if f.rep is Rep.FOURIER:
        col = inverse_ft_array(col, f.grid)
    return col[:, 0]


def _Q0_line(f: SectorField) -> np.ndarray:
    """rho(Q=0, r) on the r grid, without ``log_scale``."""
    g = f.grid
    if f.rep is Rep.FOURIER:
        return f.values[g.N_R // 2, :]
    return g.dR * f.values.sum(axis=0)


def _fourier_values(f: SectorField) -> np.ndarray:
    return as_rep(f, Rep.FOURIER).values


# ---------------------------------------------------------------------------
# traces, purity, coherence
# ---------------------------------------------------------------------------

def trace(f: SectorField):
    """Sector trace: real for diagonal sectors, complex for off-diagonal ones."""
    g = f.grid
    if f.rep is Rep.FOURIER:
        z = complex(f.values[g.origin])
    else:
        z = complex(g.dR * f.values[:, g.N_r // 2].sum())
    z *= math.exp(f.log_scale)
    return z.real if f.label.diagonal else z


def total_trace(rho: DensityMatrix) -> float:
    return sum(trace(rho[s]) for s in DIAGONAL)


def purity(rho: DensityMatrix) -> float:
    """Tr rho^2 over spin and apparatus, by Parseval on the (Q, r) grid."""
    g = rho.grid
    total = 0.0
    for s in Sector:
        f = rho[s]
        with np.errstate(under="ignore"):
            weight = math.exp(2 * f.log_scale)
        total += weight * float(np.sum(np.abs(_fourier_values(f)) ** 2))
    return total * g.dQ * g.dr / (2 * math.pi)


def linear_entropy(rho: DensityMatrix) -> float:
    return total_trace(rho) - purity(rho)


def log_coherence_norm(rho: DensityMatrix, sector: Sector = Sector.UD) -> float:
    """log of dR * sum_R |rho_sector(R, 0)|; finite long after the norm itself underflows."""
    f = rho[sector]
    s = f.grid.dR * float(np.abs(_r0_line(f)).sum())
    if s == 0:
        return -math.inf
    return math.log(s) + f.log_scale


def coherence_norm(rho: DensityMatrix, sector: Sector = Sector.UD) -> float:
    """L1 norm of the position diagonal of a spin-off-diagonal sector."""
    with np.errstate(under="ignore"):
        return math.exp(log_coherence_norm(rho, sector))


def coherence_sup(rho: DensityMatrix, sector: Sector = Sector.UD) -> float:
    """sup |rho_sector(Q, r)|, the sup-norm companion of :func:`coherence_norm`."""
    f = rho[sector]
    with np.errstate(under="ignore"):
        return float(np.abs(_fourier_values(f)).max()) * math.exp(f.log_scale)


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

def position_marginal(f: SectorField):
    """(R, P(R)) with P(R) = Re rho(R, r=0)."""
    with np.errstate(under="ignore"):
        return f.grid.R.copy(), _r0_line(f).real * math.exp(f.log_scale)


def momentum_marginal(f: SectorField, hbar: float = 1.0):
    """(p, P(p)) with P(p) = (1/2 pi hbar) integral exp(-i p r/hbar) rho(Q=0, r) dr."""
    g = f.grid
    line = _Q0_line(f)
    r_as_axis = GridSpec(g.N_r, g.N_r, g.r_extent, g.r_extent)
    # sum_j exp(-i k r_j) w_j = conj(sum_j exp(+i k r_j) conj(w_j))
    spectrum = np.conj(forward_ft_array(np.conj(line)[:, None], r_as_axis)[:, 0])
    p = hbar * r_as_axis.Q
    with np.errstate(under="ignore"):
        return p, spectrum.real * math.exp(f.log_scale) / (2 * math.pi * hbar)


def marginal_moments(x: np.ndarray, P: np.ndarray) -> tuple[float, float, float]:
    """(norm, mean, variance) of a gridded marginal by Riemann sums."""
    dx = float(x[1] - x[0])
    norm = dx * float(P.sum())
    if norm == 0:
        raise DegenerateSectorError("marginal integrates to zero")
    mean = dx * float((x * P).sum()) / norm
    var = dx * float(((x - mean) ** 2 * P).sum()) / norm
    return norm, mean, var


def r_variance(f: SectorField) -> float:
    """v_r of a profile rho(0, r) ~ exp(-r^2 / (4 v_r)), i.e. half the second moment in r."""
    w = _Q0_line(f).real
    r = f.grid.r
    total = float(w.sum())
    if total == 0:
        raise DegenerateSectorError("zero-trace sector")
    return float((r * r * w).sum()) / (2 * total)


def r_width(f: SectorField) -> float:
    """sqrt(v_r): the coherence length; equals hbar/sqrt(2 m kT) for the high-T pointer."""
    return math.sqrt(r_variance(f))


# ---------------------------------------------------------------------------
# comparisons
# ---------------------------------------------------------------------------

def coherent_fidelity(f: SectorField, x0: float, p0: float, params: PhysicalParams) -> float:
    """<alpha| rho |alpha> / Tr rho for the coherent state centred at (x0, p0)."""
    g = f.grid
    QQ, rr = g.mesh(Rep.FOURIER)
    target = coherent_qr(x0, p0, params)(QQ, rr)
    overlap = np.sum(_fourier_values(f) * np.conj(target)).real * g.dQ * g.dr / (2 * math.pi)
    tr = trace(f) / math.exp(f.log_scale)
    if tr == 0:
        raise DegenerateSectorError("zero-trace sector")
    return float(overlap / np.real(tr))


def grid_l1_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Sum over sectors of dR dr sum |rho_a(R, r) - rho_b(R, r)|; a proxy for the trace distance."""
    g = a.grid
    total = 0.0
    for s in Sector:
        fa = as_rep(a[s], Rep.CENTER)
        fb = as_rep(b[s], Rep.CENTER)
        total += float(np.abs(fa.actual - fb.actual).sum())
    return total * g.dR * g.dr


def pointer_separation(rho: DensityMatrix) -> float:
    """Distance between the position-marginal means of the two diagonal sectors."""
    means = []
    for s in DIAGONAL:
        if abs(trace(rho[s])) < 1e-12:
            raise DegenerateSectorError(f"{s.tag} sector has zero trace")
        means.append(marginal_moments(*position_marginal(rho[s]))[1])
    return abs(means[1] - means[0])


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------

def default_fit_window(dc: DerivedConstants) -> tuple[float, float]:
    """Window two decoherence times wide, starting once transients have decayed by e^-10."""
    start = 10 * dc.settling_time
    return start, start + 2 * dc.tau_D


def fit_decoherence_time(s: TimeSeries, window: tuple[float, float] | None = None):
    """Least-squares tau from log(values) vs t; returns (tau, r_squared)."""
    if window is not None:
        s = s.window(*window)
    if s.times.size < 4:
        raise FitError(f"need at least 4 points in the fit window, got {s.times.size}")
    if s.log:
        y = s.values
        if not np.all(np.isfinite(y)):
            raise FitError("non-finite log values in fit window")
    else:
        if np.any(s.values <= 0):
            raise FitError("non-positive values in fit window")
        y = np.log(s.values)
    slope, intercept = np.polyfit(s.times, y, 1)
    if slope == 0 or abs(slope) * np.ptp(s.times) < 1e-12 * max(1.0, np.abs(y).max()):
        raise FitError("zero slope: series does not decay")
    resid = y - (slope * s.times + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return -1.0 / slope, r2
