"""Independent numerical solvers used to validate the closed forms.

Both solvers work from the transport equation of one spin block (s, s') in
the (Q, r) representation, written directly in terms of the spin indices::

    d rho/dt = v_r d rho/dr + v_Q d rho/dQ + S rho
    v_r = hbar Q/m - 2 gamma r
    v_Q = -m omega^2 r/hbar - eps (s - s')/hbar
    S   = -D r^2/(4 hbar^2) - i eps (s + s') r/(2 hbar) - i lambda (s - s')/hbar

Nothing here uses :attr:`Sector.sign`; agreement with :mod:`analytic` is
therefore an independent check of the sign binding as well as the algebra.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grids import GridInterpolator, GridSpec, Rep, SectorField, forward_ft_array, inverse_ft_array
from .params import DerivedConstants, Sector
from .states import DensityMatrix

# stability limits of classical RK4 on the imaginary axis (2.83) and for the
# third-order upwind eigenvalues, expressed per unit of |v| dt / h
_RK4_SPECTRAL = 2.8 / math.pi
_RK4_UPWIND3 = 1.2
_RK4_REAL = 2.7
_BOUNDARY_TOL = 1e-6


@dataclass(frozen=True)
class TransportCoefficients:
    """Coefficients of the transport equation; unlike :class:`DerivedConstants` allows gamma = 0."""

    m: float = 1.0
    omega: float = 1.0
    gamma: float = 2.0
    D: float = 8.0
    epsilon: float = 0.5
    lambda_spin: float = 0.0
    hbar: float = 1.0

    @classmethod
    def from_constants(cls, dc: DerivedConstants) -> "TransportCoefficients":
        p = dc.params
        return cls(p.m, p.omega, p.gamma, dc.D, p.epsilon, p.lambda_spin, p.hbar)

    def velocities(self, Q, r, sector: Sector):
        s, sp = sector.s, sector.s_prime
        v_r = self.hbar * Q / self.m - 2 * self.gamma * r
        v_Q = -self.m * self.omega ** 2 * r / self.hbar - self.epsilon * (s - sp) / self.hbar
        return v_Q, v_r

    def source(self, r, sector: Sector):
        s, sp = sector.s, sector.s_prime
        return (-self.D * r * r / (4 * self.hbar ** 2)
                - 1j * self.epsilon * (s + sp) * r / (2 * self.hbar)
                - 1j * self.lambda_spin * (s - sp) / self.hbar)


def _coefficients(c) -> TransportCoefficients:
    return c if isinstance(c, TransportCoefficients) else TransportCoefficients.from_constants(c)


@dataclass(frozen=True)
class CharODEState:
    Q: np.ndarray
    r: np.ndarray
    logw: np.ndarray


def integrate_characteristic(Q, r, t, sector: Sector, dc, steps: int = 2000) -> CharODEState:
    """Fixed-step RK4 along the characteristic through (Q, r) back to time 0.

    Returns the source point and the accumulated exponent, so that
    ``rho(Q, r, t) = rho(Q_src, r_src, 0) * exp(logw)``. Vectorized over
    array-valued ``Q``, ``r`` and ``t``.
    """
    if steps < 16:
        raise ValueError("steps must be >= 16")
    c = _coefficients(dc)
    Q = np.array(Q, dtype=float)
    r = np.array(r, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast(Q, r, t).shape
    Q, r = np.broadcast_to(Q, shape).copy(), np.broadcast_to(r, shape).copy()
    logw = np.zeros(shape, dtype=complex)
    if not np.any(t):
        return CharODEState(Q, r, logw)
    h = t / steps

    def rhs(Q, r):
        v_Q, v_r = c.velocities(Q, r, sector)
        return v_Q, v_r, c.source(r, sector)

    for _ in range(steps):
        k1 = rhs(Q, r)
        k2 = rhs(Q + h / 2 * k1[0], r + h / 2 * k1[1])
        k3 = rhs(Q + h / 2 * k2[0], r + h / 2 * k2[1])
        k4 = rhs(Q + h * k3[0], r + h * k3[1])
        Q = Q + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        r = r + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        logw = logw + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return CharODEState(Q, r, logw)


# ---------------------------------------------------------------------------
# method-of-lines PDE integrator
# ---------------------------------------------------------------------------

class CFLViolation(ValueError):
    def __init__(self, dt, limit):
        self.dt, self.limit = dt, limit
        super().__init__(f"time step dt={dt!r} exceeds the stability limit {limit!r}")


class DomainTooSmall(RuntimeError):
    def __init__(self, t, sector, mass):
        self.t, self.sector, self.mass = t, sector, mass
        super().__init__(f"domain too small: boundary mass {mass:.3g} of initial in "
                         f"{sector.tag} at t={t:.6g}")


@dataclass(frozen=True)
class PDERunConfig:
    end_time: float
    dt: float | None = None          # None: largest stable step times ``cfl``
    scheme: str = "spectral"         # or "upwind3"
    cfl: float = 0.9

    SCHEMES = ("spectral", "upwind3")

    def __post_init__(self):
        if self.scheme not in self.SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {self.SCHEMES}")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.end_time >= 0:
            raise ValueError("end_time must be non-negative")


@dataclass(frozen=True)
class DiagnosticRow:
    t: float
    sector: Sector
    trace: complex
    l2_norm: float
    boundary_mass: float


@dataclass
class PDEResult:
    snapshots: dict[float, DensityMatrix]
    diagnostics: list[DiagnosticRow] = field(default_factory=list)
    dt: float = 0.0
    steps: int = 0

    @property
    def final(self) -> DensityMatrix:
        return self.snapshots[max(self.snapshots)]

    def write_diagnostics(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "sector", "trace_re", "trace_im", "l2_norm", "boundary_mass"])
            for d in self.diagnostics:
                w.writerow([repr(d.t), d.sector.tag, repr(d.trace.real), repr(d.trace.imag),
                            repr(d.l2_norm), repr(d.boundary_mass)])
        return path


class _Operator:
    """Right-hand side of the transport equation for all four blocks at once."""

    def __init__(self, grid: GridSpec, c: TransportCoefficients, scheme: str):
        self.grid, self.scheme = grid, scheme
        QQ, rr = grid.mesh(Rep.FOURIER)
        order = list(Sector)
        self.order = order
        vel = [c.velocities(QQ, rr, s) for s in order]
        self.v_Q = np.stack([v[0] * np.ones_like(QQ) for v in vel])
        self.v_r = np.stack([v[1] for v in vel])
        self.S = np.stack([c.source(rr, s) * np.ones_like(QQ) for s in order])
        self.iR = 1j * grid.R[None, :, None]
        k = 2 * np.pi * np.fft.fftfreq(grid.N_r, grid.dr)
        k[grid.N_r // 2] = 0.0   # odd derivative: drop the Nyquist mode
        self.ik_r = 1j * k[None, None, :]

    def max_step(self) -> float:
        g = self.grid
        rate = (np.abs(self.v_r).max() / g.dr + np.abs(self.v_Q).max() / g.dQ)
        limit_adv = (_RK4_SPECTRAL if self.scheme == "spectral" else _RK4_UPWIND3) / rate
        limit_src = _RK4_REAL / np.abs(self.S).max() if np.abs(self.S).max() else math.inf
        return min(limit_adv, limit_src)

    def _d_Q(self, u):
        if self.scheme == "spectral":
            # d/dQ of the transform is the transform of i R rho(R, r)
            n_blocks, n_Q, n_r = u.shape
            flat = u.transpose(1, 0, 2).reshape(n_Q, -1)
            centre = inverse_ft_array(flat, self.grid) * self.iR.reshape(n_Q, 1)
            out = forward_ft_array(centre, self.grid)
            return out.reshape(n_Q, n_blocks, n_r).transpose(1, 0, 2)
        return _upwind3(u, self.v_Q, axis=1, h=self.grid.dQ)

    def _d_r(self, u):
        if self.scheme == "spectral":
            return np.fft.ifft(self.ik_r * np.fft.fft(u, axis=2), axis=2)
        return _upwind3(u, self.v_r, axis=2, h=self.grid.dr)

    def __call__(self, u):
        return self.v_r * self._d_r(u) + self.v_Q * self._d_Q(u) + self.S * u


def _upwind3(u, v, axis, h):
    """Third-order upwind-biased derivative for d u/dt = v du/dx (transport speed -v)."""
    p1 = np.roll(u, -1, axis)
    p2 = np.roll(u, -2, axis)
    m1 = np.roll(u, 1, axis)
    m2 = np.roll(u, 2, axis)
    # speed -v > 0 takes the left-biased stencil
    left = (2 * p1 + 3 * u - 6 * m1 + m2) / (6 * h)
    right = (-p2 + 6 * p1 - 3 * u - 2 * m1) / (6 * h)
    return np.where(v < 0, left, right)


def _boundary_sup(u):
    frame = np.concatenate([u[:, :2, :].ravel(), u[:, -2:, :].ravel(),
                            u[:, :, :2].ravel(), u[:, :, -2:].ravel()])
    return np.abs(frame)


def solve_pde(rho0: DensityMatrix, dc, times, cfg: PDERunConfig) -> PDEResult:
    """Evolve all four blocks and keep snapshots at ``times`` (which must lie in (0, end_time])."""
    grid = rho0.grid
    c = _coefficients(dc)
    op = _Operator(grid, c, cfg.scheme)
    limit = op.max_step()
    stable = cfg.cfl * limit
    dt = stable if cfg.dt is None else cfg.dt
    if dt > stable:
        raise CFLViolation(dt, stable)

    u = np.stack([rho0.field(s, Rep.FOURIER).actual for s in op.order]).astype(complex)
    scale0 = np.abs(u).reshape(4, -1).max(axis=1)
    scale0 = np.where(scale0 > 0, scale0, 1.0)
    times = sorted({float(t) for t in times} | {float(cfg.end_time)})
    if times[0] <= 0:
        raise ValueError("snapshot times must be positive")

    result = PDEResult({}, [], dt, 0)
    cell = grid.dQ * grid.dr

    def record(t):
        for k, s in enumerate(op.order):
            edge = _boundary_sup(u[k:k + 1]).max() / scale0[k]
            i0, j0 = grid.origin
            result.diagnostics.append(DiagnosticRow(
                t, s, complex(u[k, i0, j0]),
                float(math.sqrt(cell * np.sum(np.abs(u[k]) ** 2))), float(edge)))
            if edge > _BOUNDARY_TOL:
                raise DomainTooSmall(t, s, edge)

    record(0.0)
    t_now = 0.0
    for t_stop in times:
        span = t_stop - t_now
        n = max(1, math.ceil(span / dt - 1e-12))
        h = span / n
        for _ in range(n):
            k1 = op(u)
            k2 = op(u + h / 2 * k1)
            k3 = op(u + h / 2 * k2)
            k4 = op(u + h * k3)
            u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            result.steps += 1
        t_now = t_stop
        record(t_now)
        sectors = {s: SectorField(s, Rep.FOURIER, u[k].copy(), grid) for k, s in enumerate(op.order)}
        result.snapshots[t_now] = DensityMatrix(sectors, rho0.amps, rho0.time + t_now, None)
    return result


def integrate_pde(rho0: DensityMatrix, cfg: PDERunConfig, dc) -> DensityMatrix:
    """State at ``cfg.end_time``."""
    if cfg.end_time == 0:
        return rho0
    return solve_pde(rho0, dc, [cfg.end_time], cfg).final


def propagate_by_characteristics(rho0: DensityMatrix, t: float, dc, steps: int | None = None
                                 ) -> DensityMatrix:
    """Grid-wide evolution by RK4 characteristics; closed-form initial data is evaluated exactly."""
    if t == 0:
        return rho0
    if steps is None:
        steps = max(64, math.ceil(100 * t))
    grid = rho0.grid
    QQ, rr = grid.mesh(Rep.FOURIER)
    sectors = {}
    for s in Sector:
        back = integrate_characteristic(QQ, rr, t, s, dc, steps)
        if rho0.evaluators is not None:
            logv = rho0.evaluators[s].log(back.Q, back.r) + back.logw
        else:
            f0 = rho0.field(s, Rep.FOURIER)
            with np.errstate(divide="ignore"):
                logv = np.log(GridInterpolator(f0).raw(back.Q, back.r)) + back.logw + f0.log_scale
        sectors[s] = SectorField.from_log(s, Rep.FOURIER, logv, grid)
    return DensityMatrix(sectors, rho0.amps, rho0.time + t, None)
