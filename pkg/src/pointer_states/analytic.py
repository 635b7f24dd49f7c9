"""Closed-form solution of the sector transport equations.

In the (Q, r) representation every sector obeys a first-order transport
equation, so its value at time t is the initial value at a backtraced source
point times an accumulated exponential factor::

    rho(Q, r, t) = rho(Q_src, r_src, 0) * exp(log_factor)

The source point relaxes along the two eigen-directions ``Q - r/lambda_pm``
with rates ``hbar/(m lambda_pm)``; the off-diagonal sectors relax towards the
shifted fixed point ``(sign 4 eps gamma/(hbar w^2), sign 2 eps/(m w^2))``.
All +/- branches come from :attr:`Sector.sign`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import GridInterpolator, GridSpec, Rep, SectorField
from .params import DerivedConstants, RegimeError, Sector, SpinAmplitudes
from .states import DensityMatrix, Evaluator, Scaled, Zero, evaluate_on_grid


@dataclass(frozen=True)
class CharacteristicImage:
    Q_src: np.ndarray
    r_src: np.ndarray
    log_factor: np.ndarray


def _one_minus_exp(x):
    """1 - exp(-x), accurate for small x (real or complex)."""
    return -np.expm1(-x)


def _real(z):
    return np.real(z) if np.iscomplexobj(z) else z


class _Flow:
    """Backtraced eigen-coordinates shared by both sector families at one (Q, r, t)."""

    def __init__(self, Q, r, t, dc: DerivedConstants, shift_sign: int):
        p = dc.params
        self.dc = dc
        self.t = t
        lp, lm = dc.lambda_plus, dc.lambda_minus
        self.G = dc.Gamma_char
        self.kp = p.hbar / (p.m * lp)
        self.km = p.hbar / (p.m * lm)
        # epsilon offsets inside the brackets; zero for the diagonal sectors
        k_eps = 2 * p.epsilon / (p.hbar * p.omega ** 2)
        self.Cp = Q - r / lp - shift_sign * k_eps * (2 * p.gamma - self.kp)
        self.Cm = Q - r / lm - shift_sign * k_eps * (2 * p.gamma - self.km)
        self.Q_fix = shift_sign * 4 * p.epsilon * p.gamma / (p.hbar * p.omega ** 2)
        self.r_fix = shift_sign * 2 * p.epsilon / (p.m * p.omega ** 2)

    def source(self):
        lp, lm = self.dc.lambda_plus, self.dc.lambda_minus
        c_plus = self.Cp * np.exp(-self.kp * self.t)
        c_minus = self.Cm * np.exp(-self.km * self.t)
        Q_src = (c_plus * lp - c_minus * lm) / (lp - lm) + self.Q_fix
        r_src = self.G * (c_plus - c_minus) + self.r_fix
        return _real(Q_src), _real(r_src)

    def z_linear(self):
        """Z1 (off-diagonal) / Z4 (diagonal): time integral of r(s) - r_fix."""
        p = self.dc.params
        t, G = self.t, self.G
        lp, lm = self.dc.lambda_plus, self.dc.lambda_minus
        return (p.m * lp * G / p.hbar * self.Cp * _one_minus_exp(self.kp * t)
                - p.m * lm * G / p.hbar * self.Cm * _one_minus_exp(self.km * t))

    def z_quadratic(self):
        """Z2 (off-diagonal) / Z3 (diagonal): time integral of (r(s) - r_fix)^2."""
        p = self.dc.params
        t, G = self.t, self.G
        lp, lm = self.dc.lambda_plus, self.dc.lambda_minus
        return (p.m * G * G * lp / (2 * p.hbar) * self.Cp ** 2 * _one_minus_exp(2 * self.kp * t)
                + p.m * G * G * lm / (2 * p.hbar) * self.Cm ** 2 * _one_minus_exp(2 * self.km * t)
                - G * G / p.gamma * self.Cp * self.Cm * _one_minus_exp(2 * p.gamma * t))


def _check_sector(sector: Sector, diagonal: bool):
    if sector.diagonal != diagonal:
        kind = "diagonal" if diagonal else "off-diagonal"
        raise ValueError(f"{sector.name} is not an {kind} sector")


def backtrace_offdiag(Q, r, t, sector: Sector, dc: DerivedConstants):
    _check_sector(sector, False)
    return _Flow(Q, r, t, dc, sector.sign).source()


def offdiag_log_factor(Q, r, t, sector: Sector, dc: DerivedConstants):
    _check_sector(sector, False)
    p = dc.params
    sgn = sector.sign
    flow = _Flow(Q, r, t, dc, sgn)
    hb2 = p.hbar ** 2
    return (-p.epsilon ** 2 * t * dc.D / (hb2 * p.m ** 2 * p.omega ** 4)
            - sgn * p.epsilon * dc.D / (p.m * p.omega ** 2 * hb2) * flow.z_linear()
            - dc.D / (4 * hb2) * flow.z_quadratic()
            + sgn * 2j * p.lambda_spin * t / p.hbar)


def backtrace_diag(Q, r, t, dc: DerivedConstants):
    return _Flow(Q, r, t, dc, 0).source()


def diag_log_factor(Q, r, t, sector: Sector, dc: DerivedConstants):
    _check_sector(sector, True)
    p = dc.params
    flow = _Flow(Q, r, t, dc, 0)
    return (-dc.D / (4 * p.hbar ** 2) * flow.z_quadratic()
            + sector.sign * 1j * p.epsilon / p.hbar * flow.z_linear())


def characteristic_image(Q, r, t, sector: Sector, dc: DerivedConstants) -> CharacteristicImage:
    Q = np.asarray(Q, dtype=float)
    r = np.asarray(r, dtype=float)
    if sector.diagonal:
        Qs, rs = backtrace_diag(Q, r, t, dc)
        lf = diag_log_factor(Q, r, t, sector, dc)
    else:
        Qs, rs = backtrace_offdiag(Q, r, t, sector, dc)
        lf = offdiag_log_factor(Q, r, t, sector, dc)
    return CharacteristicImage(Qs, rs, np.asarray(lf, dtype=complex))


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Propagated(Evaluator):
    """Exact composition: initial evaluator at the characteristic source times exp(log_factor)."""

    initial: Evaluator
    sector: Sector
    t: float
    dc: DerivedConstants

    def log(self, Q, r):
        img = characteristic_image(Q, r, self.t, self.sector, self.dc)
        return self.initial.log(img.Q_src, img.r_src) + img.log_factor


def propagate(rho0: DensityMatrix, t: float, dc: DerivedConstants) -> DensityMatrix:
    """Evolve every sector by ``t``.

    Closed-form evaluators are composed exactly; gridded initial data is
    sampled at the backtraced points with bicubic interpolation.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return rho0
    grid = rho0.grid
    if rho0.evaluators is not None:
        evs = {s: Propagated(ev, s, t, dc) for s, ev in rho0.evaluators.items()}
        sectors = {s: evaluate_on_grid(ev, grid, s) for s, ev in evs.items()}
        return DensityMatrix(sectors, rho0.amps, rho0.time + t, evs)

    QQ, rr = grid.mesh(Rep.FOURIER)
    sectors = {}
    for s, f0 in rho0.sectors.items():
        f0 = rho0.field(s, Rep.FOURIER)
        img = characteristic_image(QQ, rr, t, s, dc)
        vals = GridInterpolator(f0).raw(img.Q_src, img.r_src)
        with np.errstate(divide="ignore"):
            logv = np.log(vals) + img.log_factor + f0.log_scale
        sectors[s] = SectorField.from_log(s, Rep.FOURIER, logv, grid)
    return DensityMatrix(sectors, rho0.amps, rho0.time + t, None)


# ---------------------------------------------------------------------------
# long-time pointer states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointerState(Evaluator):
    """Gaussian sector with position variance ``var_R`` and coherence parameter ``var_r``.

    (R, r) form: exp(-(R - center)^2 / (2 var_R) - r^2 / (4 var_r)) / sqrt(2 pi var_R);
    unit trace. For a pure coherent state var_r = 2 var_R.
    """

    center: float
    var_R: float
    var_r: float

    def log(self, Q, r):
        Q = np.asarray(Q, dtype=float)
        r = np.asarray(r, dtype=float)
        return (1j * Q * self.center - self.var_R * Q * Q / 2
                - r * r / (4 * self.var_r)).astype(complex)

    def center_form(self, R, r):
        R = np.asarray(R, dtype=float)
        r = np.asarray(r, dtype=float)
        return (np.exp(-(R - self.center) ** 2 / (2 * self.var_R) - r * r / (4 * self.var_r))
                / math.sqrt(2 * math.pi * self.var_R))


def _require_overdamped(dc: DerivedConstants):
    if not dc.overdamped:
        raise RegimeError("long-time pointer forms need gamma > omega")


def long_time_sector(dc: DerivedConstants, sector: Sector) -> PointerState:
    """t -> infinity limit of a diagonal sector, renormalized to unit trace."""
    _check_sector(sector, True)
    _require_overdamped(dc)
    p = dc.params
    return PointerState(
        center=sector.sign * p.epsilon / (p.m * p.omega ** 2),
        var_R=dc.D / (8 * p.m ** 2 * p.omega ** 2 * p.gamma),
        var_r=4 * p.gamma * p.hbar ** 2 / dc.D,
    )


def zero_T_pointer(dc: DerivedConstants, sector: Sector) -> tuple[PointerState, float]:
    """Coherent pointer state at zero temperature and its |alpha|^2."""
    _check_sector(sector, True)
    _require_overdamped(dc)
    p = dc.params
    if p.bath.kind != "zero" and not (p.bath.kind == "general" and p.bath.T == 0):
        raise RegimeError("zero-temperature pointer requested for a thermal bath")
    ev = PointerState(sector.sign * p.epsilon / (p.m * p.omega ** 2),
                      p.hbar / (2 * p.m * p.omega), p.hbar / (p.m * p.omega))
    return ev, p.epsilon ** 2 / (2 * p.m * p.omega ** 3 * p.hbar)


def high_T_pointer(dc: DerivedConstants, sector: Sector) -> PointerState:
    """Generalized coherent (Gaussian) pointer state of the high-temperature bath."""
    _check_sector(sector, True)
    _require_overdamped(dc)
    p = dc.params
    if p.bath.kind != "high":
        raise RegimeError("high-temperature pointer requested for a non-high-temperature bath")
    kT = p.bath.kT
    return PointerState(sector.sign * p.epsilon / (p.m * p.omega ** 2),
                        kT / (p.m * p.omega ** 2), p.hbar ** 2 / (2 * p.m * kT))


def final_mixture(amps: SpinAmplitudes, dc: DerivedConstants, grid: GridSpec) -> DensityMatrix:
    """Spin-diagonal mixture with the long-time pointer states."""
    evs = {}
    for s in Sector:
        if s.diagonal:
            evs[s] = Scaled(long_time_sector(dc, s), amps.weight(s))
        else:
            evs[s] = Zero()
    sectors = {s: evaluate_on_grid(ev, grid, s) for s, ev in evs.items()}
    return DensityMatrix(sectors, amps, math.inf, evs)
