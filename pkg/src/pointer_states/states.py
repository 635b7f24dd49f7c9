"""Initial apparatus states and the product system-apparatus density matrix.

A *(Q,r) evaluator* is any object with ``__call__(Q, r)`` returning complex
values of a sector in the partial-Fourier representation and ``log(Q, r)``
returning their complex logarithm (used to keep strongly decayed fields
representable). Every closed-form builder here returns one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import eval_laguerre

from .grids import GridSpec, Rep, SectorField, as_rep, forward_ft_array, inverse_ft_array
from .params import PhysicalParams, Sector, SpinAmplitudes


class NormalizationError(ValueError):
    pass


def logsumexp_complex(terms):
    """log(sum(exp(t))) over the first axis, for complex ``t``."""
    terms = np.asarray(terms)
    with np.errstate(invalid="ignore"):
        top = np.max(terms.real, axis=0)
    top = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore", under="ignore"):
        return top + np.log(np.sum(np.exp(terms - top), axis=0))


# ---------------------------------------------------------------------------
# evaluators
# ---------------------------------------------------------------------------

class Evaluator:
    def __call__(self, Q, r):
        with np.errstate(under="ignore"):
            return np.exp(self.log(Q, r))

    def log(self, Q, r):  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class GaussianTerms(Evaluator):
    """Sum of cross terms coef * psi_a(x) conj(psi_b(x')) of Gaussian wave packets.

    Each wave packet is ``(2 beta/pi)^(1/4) exp(-beta (x - x_j)^2 + i p_j x / hbar)``;
    a term is ``(coef, xa, pa, xb, pb)``.
    """

    terms: tuple
    beta: float
    hbar: float = 1.0

    def log(self, Q, r):
        Q = np.asarray(Q, dtype=float)
        r = np.asarray(r, dtype=float)
        b, hbar = self.beta, self.hbar
        out = []
        for coef, xa, pa, xb, pb in self.terms:
            kappa = (pa - pb) / hbar
            xm = 0.5 * (xa + xb)
            q = Q + kappa
            expo = (1j * q * xm - q * q / (8 * b)
                    - b * ((xa - xb) ** 2 / 2 + r * (xb - xa) + r * r / 2)
                    + 1j * (pa + pb) * r / (2 * hbar))
            with np.errstate(divide="ignore"):
                out.append(np.log(complex(coef)) + expo)
        return logsumexp_complex(out)


def _packet(x, x0, p0, beta, hbar):
    return (2 * beta / math.pi) ** 0.25 * np.exp(-beta * (x - x0) ** 2 + 1j * p0 * x / hbar)


def coherent_qr(x0: float, p0: float, params: PhysicalParams) -> GaussianTerms:
    """exp(i Q x0 - hbar Q^2/(4 m w) - m w r^2/(4 hbar) + i p0 r / hbar)."""
    beta = params.m * params.omega / (2 * params.hbar)
    return GaussianTerms(((1.0, x0, p0, x0, p0),), beta, params.hbar)


def gaussian_qr(x0: float, p0: float, sigma_x: float, params: PhysicalParams) -> GaussianTerms:
    return GaussianTerms(((1.0, x0, p0, x0, p0),), 1 / (4 * sigma_x ** 2), params.hbar)


def _cat_norm(x0, p0, phase, params) -> float:
    """<psi|psi> of the unnormalized superposition: 2 + 2 Re(e^{i phase} <x0,p0|-x0,-p0>)."""
    beta = params.m * params.omega / (2 * params.hbar)
    overlap = GaussianTerms(((1.0, -x0, -p0, x0, p0),), beta, params.hbar)(0.0, 0.0)
    norm = float(2 + 2 * (complex(math.cos(phase), math.sin(phase)) * overlap).real)
    if norm < 1e-12:
        raise ValueError("cat superposition vanishes (packets coincide with opposite phase)")
    return norm


def cat_qr(x0: float, p0: float, phase: float, params: PhysicalParams) -> GaussianTerms:
    """Normalized (|x0,p0> + e^{i phase}|-x0,-p0>) including the overlap cross term."""
    beta = params.m * params.omega / (2 * params.hbar)
    e = complex(math.cos(phase), math.sin(phase))
    raw = ((1.0, x0, p0, x0, p0), (1.0, -x0, -p0, -x0, -p0),
           (e, -x0, -p0, x0, p0), (e.conjugate(), x0, p0, -x0, -p0))
    norm = _cat_norm(x0, p0, phase, params)
    return GaussianTerms(tuple((c / norm, *rest) for c, *rest in raw), beta, params.hbar)


@dataclass(frozen=True)
class FockQR(Evaluator):
    """Oscillator eigenstate |n>: exp(-|xi|^2/2) L_n(|xi|^2)."""

    n: int
    m: float
    omega: float
    hbar: float

    def __call__(self, Q, r):
        xi2 = self._xi2(Q, r)
        return (np.exp(-xi2 / 2) * eval_laguerre(self.n, xi2)).astype(complex)

    def log(self, Q, r):
        xi2 = self._xi2(Q, r)
        with np.errstate(divide="ignore"):
            return -xi2 / 2 + np.log(eval_laguerre(self.n, xi2).astype(complex))

    def _xi2(self, Q, r):
        Q = np.asarray(Q, dtype=float)
        r = np.asarray(r, dtype=float)
        return (self.hbar * Q * Q / (2 * self.m * self.omega)
                + self.m * self.omega * r * r / (2 * self.hbar))


@dataclass(frozen=True)
class Scaled(Evaluator):
    base: Evaluator
    weight: complex

    def __call__(self, Q, r):
        return self.weight * self.base(Q, r)

    def log(self, Q, r):
        with np.errstate(divide="ignore"):
            return np.log(complex(self.weight)) + self.base.log(Q, r)


@dataclass(frozen=True)
class Zero(Evaluator):
    def __call__(self, Q, r):
        return np.zeros(np.broadcast(np.asarray(Q), np.asarray(r)).shape, dtype=complex)

    def log(self, Q, r):
        return np.full(np.broadcast(np.asarray(Q), np.asarray(r)).shape, -np.inf, dtype=complex)


def evaluate_on_grid(ev: Evaluator, grid: GridSpec, label: Sector) -> SectorField:
    QQ, rr = grid.mesh(Rep.FOURIER)
    return SectorField.from_log(label, Rep.FOURIER, ev.log(QQ, rr), grid)


# ---------------------------------------------------------------------------
# position-space wave functions
# ---------------------------------------------------------------------------

# physicists' Hermite polynomials H_n(y), n <= 4
_HERMITE = (
    lambda y: np.ones_like(y),
    lambda y: 2 * y,
    lambda y: 4 * y ** 2 - 2,
    lambda y: 8 * y ** 3 - 12 * y,
    lambda y: 16 * y ** 4 - 48 * y ** 2 + 12,
)


def fock_position(n: int, params: PhysicalParams) -> Callable:
    if not 0 <= n < len(_HERMITE):
        raise ValueError(f"Fock level n={n} not supported (0 <= n <= {len(_HERMITE) - 1})")
    m, w, hbar = params.m, params.omega, params.hbar
    scale = math.sqrt(m * w / hbar)
    norm = (m * w / (math.pi * hbar)) ** 0.25 / math.sqrt(2 ** n * math.factorial(n))
    H = _HERMITE[n]

    def psi(x):
        y = scale * np.asarray(x, dtype=float)
        return (norm * H(y) * np.exp(-y * y / 2)).astype(complex)

    return psi


# ---------------------------------------------------------------------------
# apparatus states
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ApparatusState:
    kind: str
    args: dict = field(default_factory=dict)
    evaluator: Evaluator | None = None
    psi: Callable | None = None
    center_values: np.ndarray | None = None   # custom-grid: rho(R, r) on the working grid

    @property
    def has_closed_form(self) -> bool:
        return self.evaluator is not None

    def center_field(self, grid: GridSpec) -> np.ndarray:
        """rho(R, r) sampled on ``grid``."""
        if self.psi is not None:
            RR, rr = grid.mesh(Rep.CENTER)
            return self.psi(RR + rr / 2) * np.conj(self.psi(RR - rr / 2))
        if self.center_values is not None:
            if self.center_values.shape != (grid.N_R, grid.N_r):
                raise ValueError("custom-grid state does not match the working grid")
            return np.asarray(self.center_values, dtype=complex)
        QQ, rr = grid.mesh(Rep.FOURIER)
        return inverse_ft_array(self.evaluator(QQ, rr), grid)

    def qr_values(self, grid: GridSpec) -> np.ndarray:
        if self.evaluator is not None:
            QQ, rr = grid.mesh(Rep.FOURIER)
            return self.evaluator(QQ, rr)
        return forward_ft_array(self.center_field(grid), grid)

    def grid_trace(self, grid: GridSpec) -> float:
        rho = self.center_field(grid)
        return float(grid.dR * rho[:, grid.origin[1]].real.sum())


def coherent(x0: float, p0: float, params: PhysicalParams) -> ApparatusState:
    beta = params.m * params.omega / (2 * params.hbar)
    return ApparatusState("coherent", {"x0": x0, "p0": p0}, coherent_qr(x0, p0, params),
                          lambda x: _packet(x, x0, p0, beta, params.hbar))


def gaussian(x0: float, p0: float, sigma_x: float, params: PhysicalParams) -> ApparatusState:
    beta = 1 / (4 * sigma_x ** 2)
    return ApparatusState("gaussian", {"x0": x0, "p0": p0, "sigma_x": sigma_x},
                          gaussian_qr(x0, p0, sigma_x, params),
                          lambda x: _packet(x, x0, p0, beta, params.hbar))


def cat(x0: float, p0: float, phase: float, params: PhysicalParams) -> ApparatusState:
    ev = cat_qr(x0, p0, phase, params)
    beta = ev.beta
    norm = math.sqrt(_cat_norm(x0, p0, phase, params))
    e = complex(math.cos(phase), math.sin(phase))

    def psi(x):
        return (_packet(x, x0, p0, beta, params.hbar)
                + e * _packet(x, -x0, -p0, beta, params.hbar)) / norm

    return ApparatusState("cat", {"x0": x0, "p0": p0, "phase": phase}, ev, psi)


def fock(n: int, params: PhysicalParams) -> ApparatusState:
    psi = fock_position(n, params)
    return ApparatusState("fock", {"n": n}, FockQR(n, params.m, params.omega, params.hbar), psi)


def custom(grid: GridSpec, psi: Callable | None = None, rho_center=None) -> ApparatusState:
    """Arbitrary state on the working grid, from a wave function or a sampled rho(R, r)."""
    if (psi is None) == (rho_center is None):
        raise ValueError("give exactly one of psi or rho_center")
    if psi is not None:
        RR, rr = grid.mesh(Rep.CENTER)
        rho_center = psi(RR + rr / 2) * np.conj(psi(RR - rr / 2))
    return ApparatusState("custom", {}, None, None, np.asarray(rho_center, dtype=complex))


BUILDERS = {
    "coherent": ("x0", "p0"),
    "gaussian": ("x0", "p0", "sigma_x"),
    "cat": ("x0", "p0", "phase"),
    "fock": ("n",),
}


def build_state(kind: str, params: PhysicalParams, **kwargs) -> ApparatusState:
    if kind == "coherent":
        return coherent(kwargs.get("x0", 0.0), kwargs.get("p0", 0.0), params)
    if kind == "gaussian":
        return gaussian(kwargs.get("x0", 0.0), kwargs.get("p0", 0.0), kwargs["sigma_x"], params)
    if kind == "cat":
        return cat(kwargs["x0"], kwargs.get("p0", 0.0), kwargs.get("phase", 0.0), params)
    if kind == "fock":
        return fock(int(kwargs["n"]), params)
    raise ValueError(f"unknown initial state {kind!r}; valid: {', '.join(BUILDERS)}")


# ---------------------------------------------------------------------------
# density matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DensityMatrix:
    """The four sector blocks, each already multiplied by its spin weight."""

    sectors: dict
    amps: SpinAmplitudes
    time: float = 0.0
    evaluators: dict | None = None

    @property
    def grid(self) -> GridSpec:
        return next(iter(self.sectors.values())).grid

    def __getitem__(self, sector: Sector) -> SectorField:
        return self.sectors[sector]

    def field(self, sector: Sector, rep: Rep = Rep.FOURIER) -> SectorField:
        return as_rep(self.sectors[sector], rep)


def assemble_initial(phi: ApparatusState, amps: SpinAmplitudes, grid: GridSpec,
                     tol: float = 1e-8) -> DensityMatrix:
    tr = phi.grid_trace(grid)
    if abs(tr - 1.0) > tol:
        raise NormalizationError(
            f"apparatus state has trace {tr!r} on the working grid (grid too small or coarse?)")
    evaluators = None
    sectors = {}
    if phi.evaluator is not None:
        evaluators = {s: Scaled(phi.evaluator, amps.weight(s)) for s in Sector}
        for s, ev in evaluators.items():
            sectors[s] = evaluate_on_grid(ev, grid, s)
    else:
        base = phi.qr_values(grid)
        for s in Sector:
            sectors[s] = SectorField(s, Rep.FOURIER, amps.weight(s) * base, grid)
    du = sectors[Sector.DU]
    sectors[Sector.DU] = du.with_values(_adjoint_block(sectors[Sector.UD].values, du.values))
    return DensityMatrix(sectors, amps, 0.0, evaluators)


def _adjoint_block(ud: np.ndarray, du: np.ndarray) -> np.ndarray:
    """du with every node that has a mirror partner set to conj(ud(-Q, -r)), bit for bit.

    The first row and column (Q or r at -extent/2) have no partner on the grid and keep
    their directly evaluated values.
    """
    out = du.copy()
    out[1:, 1:] = np.conj(ud[:0:-1, :0:-1])
    return out
