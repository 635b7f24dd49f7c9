"""Grids, sector fields and the partial Fourier transform over R.

Convention (kept literal)::

    rho(Q, r) = integral exp(+i Q R) rho(R, r) dR

discretized as a Riemann sum, so ``rho(Q=0, r=0)`` is the sector trace.
Axis 0 of every field is R (or Q), axis 1 is r.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .params import Sector

# fields whose log-scale falls below this are stored normalized (see SectorField)
UNDERFLOW_LOG = -600.0


class RepresentationError(ValueError):
    pass


class CharacteristicLeftDomain(ValueError):
    """A backtraced characteristic landed outside the grid where the field is not negligible."""

    def __init__(self, Q, r):
        self.point = (float(Q), float(r))
        super().__init__(f"characteristic left domain at (Q, r) = {self.point}")


class Rep(str, enum.Enum):
    CENTER = "Rr"     # center/difference coordinates
    FOURIER = "Qr"    # partial Fourier transform over R


def to_center_coords(x, x_prime):
    return (x + x_prime) / 2, x - x_prime


def from_center_coords(R, r):
    return R + r / 2, R - r / 2


@dataclass(frozen=True)
class GridSpec:
    N_R: int = 256
    N_r: int = 256
    R_extent: float = 16.0
    r_extent: float = 12.0

    def __post_init__(self):
        for name in ("N_R", "N_r"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n!r}")
        for name in ("R_extent", "r_extent"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def square(cls, n: int, R_extent: float, r_extent: float) -> "GridSpec":
        return cls(n, n, R_extent, r_extent)

    @classmethod
    def with_Q_window(cls, n: int, Q_extent: float, r_extent: float) -> "GridSpec":
        """Grid whose conjugate Q axis spans [-Q_extent, Q_extent); refining n refines Q and r."""
        return cls(n, n, math.pi * n / (2 * Q_extent), r_extent)

    @property
    def dR(self) -> float:
        return 2 * self.R_extent / self.N_R

    @property
    def dr(self) -> float:
        return 2 * self.r_extent / self.N_r

    @property
    def dQ(self) -> float:
        return 2 * math.pi / (self.N_R * self.dR)

    @property
    def Q_extent(self) -> float:
        return math.pi / self.dR

    @cached_property
    def R(self) -> np.ndarray:
        return -self.R_extent + self.dR * np.arange(self.N_R)

    @cached_property
    def r(self) -> np.ndarray:
        return -self.r_extent + self.dr * np.arange(self.N_r)

    @cached_property
    def Q(self) -> np.ndarray:
        k = np.arange(-self.N_R // 2, self.N_R // 2)
        return k * self.dQ

    @property
    def origin(self) -> tuple[int, int]:
        """Index of R = 0 (or Q = 0) and r = 0."""
        return self.N_R // 2, self.N_r // 2

    def mesh(self, rep: Rep):
        first = self.Q if Rep(rep) is Rep.FOURIER else self.R
        return np.meshgrid(first, self.r, indexing="ij")

    def with_n(self, n: int) -> "GridSpec":
        return replace(self, N_R=n, N_r=n)


@dataclass(frozen=True)
class SectorField:
    """One spin block on a grid.

    Actual values are ``values * exp(log_scale)``; ``log_scale`` is non-zero
    only for fields that would otherwise underflow (late-time coherences).
    """

    label: Sector
    rep: Rep
    values: np.ndarray
    grid: GridSpec
    log_scale: float = 0.0

    def __post_init__(self):
        shape = (self.grid.N_R, self.grid.N_r)
        if self.values.shape != shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {shape}")

    @property
    def actual(self) -> np.ndarray:
        if self.log_scale == 0.0:
            return self.values
        return self.values * math.exp(self.log_scale)

    def with_values(self, values, rep=None, log_scale=None) -> "SectorField":
        return SectorField(self.label, Rep(rep or self.rep), values, self.grid,
                           self.log_scale if log_scale is None else log_scale)

    def scaled(self, weight) -> "SectorField":
        return self.with_values(self.values * weight)

    @classmethod
    def from_log(cls, label, rep, log_values, grid) -> "SectorField":
        """Build from complex log-values, normalizing only if the field would underflow."""
        re = np.real(log_values)
        finite = re[np.isfinite(re)]
        top = float(finite.max()) if finite.size else 0.0
        scale = top if top < UNDERFLOW_LOG else 0.0
        with np.errstate(under="ignore"):
            values = np.exp(log_values - scale)
        return cls(label, Rep(rep), values.astype(complex), grid, scale)


def _require(f: SectorField, rep: Rep):
    if f.rep is not rep:
        raise RepresentationError(f"expected {rep.value} representation, got {f.rep.value}")


def forward_ft_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """rho(Q_k, r) = dR * sum_n exp(i Q_k R_n) rho(R_n, r), along axis 0."""
    N = grid.N_R
    # exp(i Q_k R_n) = exp(-i Q_k R_extent) exp(2 pi i k n / N); Q_k R_extent = pi k
    phase = np.cos(np.pi * np.arange(-N // 2, N // 2))[:, None]
    spectrum = np.fft.fftshift(np.fft.ifft(values, axis=0), axes=0) * N
    return grid.dR * phase * spectrum


def inverse_ft_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """rho(R_n, r) = 1/(N dR) * sum_k exp(-i Q_k R_n) rho(Q_k, r)."""
    N = grid.N_R
    phase = np.cos(np.pi * np.arange(-N // 2, N // 2))[:, None]
    out = np.fft.fft(np.fft.ifftshift(phase * values, axes=0), axis=0)
    return out / (N * grid.dR)


def forward_partial_ft(f: SectorField) -> SectorField:
    _require(f, Rep.CENTER)
    return f.with_values(forward_ft_array(f.values, f.grid), rep=Rep.FOURIER)


def inverse_partial_ft(f: SectorField) -> SectorField:
    _require(f, Rep.FOURIER)
    return f.with_values(inverse_ft_array(f.values, f.grid), rep=Rep.CENTER)


def as_rep(f: SectorField, rep: Rep) -> SectorField:
    rep = Rep(rep)
    if f.rep is rep:
        return f
    return forward_partial_ft(f) if rep is Rep.FOURIER else inverse_partial_ft(f)


class GridInterpolator:
    """Bicubic interpolation of a gridded field, built once and sampled many times.

    Points outside the grid return zero when the field is negligible on the
    boundary nearest to them, and raise :class:`CharacteristicLeftDomain`
    otherwise.
    """

    def __init__(self, f: SectorField, negligible: float = 1e-12):
        self.field = f
        x = f.grid.Q if f.rep is Rep.FOURIER else f.grid.R
        y = f.grid.r
        self._x, self._y = x, y
        self._re = RectBivariateSpline(x, y, f.values.real, kx=3, ky=3, s=0)
        self._im = RectBivariateSpline(x, y, f.values.imag, kx=3, ky=3, s=0)
        self._threshold = negligible * float(np.abs(f.values).max(initial=0.0))

    def __call__(self, Q, r) -> np.ndarray:
        out = self.raw(Q, r)
        if self.field.log_scale:
            out = out * math.exp(self.field.log_scale)
        return out

    def raw(self, Q, r) -> np.ndarray:
        """Interpolated ``values`` (without ``log_scale``)."""
        Q = np.asarray(Q, dtype=float)
        r = np.asarray(r, dtype=float)
        Q, r = np.broadcast_arrays(Q, r)
        x, y = self._x, self._y
        outside = (Q < x[0]) | (Q > x[-1]) | (r < y[0]) | (r > y[-1])
        out = np.zeros(Q.shape, dtype=complex)
        inside = ~outside
        if inside.any():
            out[inside] = (self._re(Q[inside], r[inside], grid=False)
                           + 1j * self._im(Q[inside], r[inside], grid=False))
        if outside.any():
            qi = np.abs(x[:, None] - np.clip(Q[outside], x[0], x[-1])[None, :]).argmin(axis=0)
            ri = np.abs(y[:, None] - np.clip(r[outside], y[0], y[-1])[None, :]).argmin(axis=0)
            edge = np.abs(self.field.values[qi, ri])
            bad = edge >= self._threshold
            if bad.any() and self._threshold > 0:
                k = int(np.argmax(bad))
                raise CharacteristicLeftDomain(Q[outside][k], r[outside][k])
        return out


def sample_offgrid(f: SectorField, Q, r):
    """Bicubic value(s) of ``f`` at off-grid point(s); exact at nodes."""
    return GridInterpolator(f)(Q, r)


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------

def field_header(f: SectorField) -> dict:
    g = f.grid
    return {"rep": f.rep.value, "label": f.label.tag, "N_R": g.N_R, "N_r": g.N_r,
            "R_extent": repr(g.R_extent), "r_extent": repr(g.r_extent),
            "log_scale": repr(f.log_scale)}


def write_field_csv(f: SectorField, path, comment: str | None = None) -> Path:
    path = Path(path)
    first = f.grid.Q if f.rep is Rep.FOURIER else f.grid.R
    names = ("Q", "r") if f.rep is Rep.FOURIER else ("R", "r")
    with open(path, "w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        fh.write("# " + " ".join(f"{k}={v}" for k, v in field_header(f).items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", names[0], names[1], "real", "imag"])
        for i, c1 in enumerate(first):
            for j, c2 in enumerate(f.grid.r):
                z = f.values[i, j]
                w.writerow([i, j, repr(float(c1)), repr(float(c2)),
                            repr(float(z.real)), repr(float(z.imag))])
    return path


def read_field_csv(path) -> SectorField:
    text = Path(path).read_text()
    header = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    header[k] = v
        else:
            body.append(line)
    try:
        grid = GridSpec(int(header["N_R"]), int(header["N_r"]),
                        float(header["R_extent"]), float(header["r_extent"]))
    except KeyError as exc:
        raise ValueError(f"{path}: field header missing {exc}") from None
    values = np.zeros((grid.N_R, grid.N_r), dtype=complex)
    rows = csv.reader(io.StringIO("\n".join(body)))
    next(rows)
    for row in rows:
        i, j = int(row[0]), int(row[1])
        values[i, j] = complex(float(row[4]), float(row[5]))
    return SectorField(Sector.from_tag(header["label"]), Rep(header["rep"]), values, grid,
                       float(header.get("log_scale", 0.0)))
