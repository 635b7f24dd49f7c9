"""Model constants for the spin / oscillator-apparatus / oscillator-bath model.

The bath enters only through the relaxation rate ``gamma`` and the diffusion
coefficient ``D``; everything the closed-form solution needs is collected in
:class:`DerivedConstants`.
"""
from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class InvalidParamsError(ValueError):
    """Raised when a parameter set violates a model invariant."""

    def __init__(self, issues):
        self.issues = list(issues)
        msg = "; ".join(f"{i.field}: {i.message}" for i in self.issues)
        super().__init__(msg)


class DissipationlessModelError(InvalidParamsError):
    """gamma == 0: relaxation time and the damped closed forms are undefined."""


class RegimeError(ValueError):
    """An operation was requested outside the bath/damping regime it needs."""


# ---------------------------------------------------------------------------
# bath
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bath:
    kind: str = "zero"        # "zero", "high" or "general"
    kT: float | None = None   # k_B T, high-temperature regime
    T: float | None = None    # absolute temperature, general regime

    KINDS = ("zero", "high", "general")

    @classmethod
    def zero(cls) -> "Bath":
        return cls("zero")

    @classmethod
    def high(cls, kT: float) -> "Bath":
        return cls("high", kT=float(kT))

    @classmethod
    def general(cls, T: float) -> "Bath":
        return cls("general", T=float(T))

    def thermal_energy(self, kB: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "high":
            return float(self.kT)
        return kB * float(self.T)


@dataclass(frozen=True)
class PhysicalParams:
    m: float = 1.0
    omega: float = 1.0
    lambda_spin: float = 0.0
    epsilon: float = 0.5
    gamma: float = 2.0
    bath: Bath = field(default_factory=Bath.zero)
    hbar: float = 1.0
    kB: float = 1.0

    def replace(self, **changes) -> "PhysicalParams":
        from dataclasses import replace
        return replace(self, **changes)


class Issue(NamedTuple):
    field: str
    message: str
    level: str = "error"   # or "warning"


def validate(p: PhysicalParams) -> list[Issue]:
    """Every violated invariant of ``p`` (errors) plus regime warnings.

    Never raises. An empty list, or one holding only warnings, means the
    parameters are usable.
    """
    issues = []
    for name, label in (("m", "mass"), ("omega", "frequency"),
                        ("hbar", "hbar"), ("kB", "kB")):
        v = getattr(p, name)
        if not (np.isfinite(v) and v > 0):
            issues.append(Issue(name, f"{label} must be positive"))
    if not (np.isfinite(p.gamma) and p.gamma >= 0):
        issues.append(Issue("gamma", "relaxation rate must be non-negative"))
    for name in ("epsilon", "lambda_spin"):
        if not np.isfinite(getattr(p, name)):
            issues.append(Issue(name, f"{name} must be finite"))

    bath = p.bath
    if bath.kind not in Bath.KINDS:
        issues.append(Issue("bath", f"unknown bath kind {bath.kind!r}"))
    elif bath.kind == "high":
        if bath.kT is None or not (np.isfinite(bath.kT) and bath.kT >= 0):
            issues.append(Issue("bath.kT", "temperature must be non-negative"))
    elif bath.kind == "general":
        if bath.T is None or not (np.isfinite(bath.T) and bath.T >= 0):
            issues.append(Issue("bath.T", "temperature must be non-negative"))

    if not any(i.field in ("gamma", "omega") for i in issues):
        if p.gamma == 0:
            issues.append(Issue("gamma", "dissipationless model: gamma = 0", "warning"))
        elif p.gamma < p.omega:
            issues.append(Issue("gamma", "underdamped: long-time pointer assertions disabled",
                                "warning"))
        elif p.gamma == p.omega:
            issues.append(Issue("gamma", "critically damped: closed forms degenerate", "warning"))
    return issues


def errors(p: PhysicalParams) -> list[Issue]:
    return [i for i in validate(p) if i.level == "error"]


# ---------------------------------------------------------------------------
# sectors and spin amplitudes
# ---------------------------------------------------------------------------

class Sector(enum.Enum):
    """Spin-space block (s, s') of the reduced density matrix."""

    UU = (1, 1)
    UD = (1, -1)
    DU = (-1, 1)
    DD = (-1, -1)

    @property
    def s(self) -> int:
        return self.value[0]

    @property
    def s_prime(self) -> int:
        return self.value[1]

    @property
    def diagonal(self) -> bool:
        return self.s == self.s_prime

    @property
    def sign(self) -> int:
        """Branch of every +/- in the transport equations and closed forms.

        Bound once here: ``-s``, the sign produced by the coupling
        ``+eps x sigma_z``. It places the up pointer at ``-eps/(m omega^2)``.
        """
        return -self.s

    @property
    def conjugate(self) -> "Sector":
        return Sector((self.s_prime, self.s))

    @property
    def tag(self) -> str:
        return self.name.lower()

    @classmethod
    def from_tag(cls, tag: str) -> "Sector":
        return cls[tag.upper()]


DIAGONAL = (Sector.UU, Sector.DD)
OFF_DIAGONAL = (Sector.UD, Sector.DU)


@dataclass(frozen=True)
class SpinAmplitudes:
    a: complex = 1 / math.sqrt(2)
    b: complex = 1 / math.sqrt(2)

    def __post_init__(self):
        norm = abs(self.a) ** 2 + abs(self.b) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"|a|^2 + |b|^2 = {norm!r}, expected 1")

    @classmethod
    def normalized(cls, a: complex, b: complex) -> "SpinAmplitudes":
        n = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
        return cls(a / n, b / n)

    def weight(self, sector: Sector) -> complex:
        """Coefficient of the sector block in the full state."""
        a, b = complex(self.a), complex(self.b)
        return {
            Sector.UU: abs(a) ** 2,
            Sector.DD: abs(b) ** 2,
            Sector.UD: a * b.conjugate(),
            Sector.DU: a.conjugate() * b,
        }[sector]


# ---------------------------------------------------------------------------
# derived constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivedConstants:
    params: PhysicalParams
    D: float
    nbar: float
    lambda_plus: complex | float
    lambda_minus: complex | float
    Gamma_char: complex | float
    tau_R: float
    tau_D: float
    alpha_sq: float
    delta_sep: float
    lambda_dB: float | None = None

    @property
    def overdamped(self) -> bool:
        return self.params.gamma > self.params.omega

    @property
    def kappa_plus(self):
        """Slow relaxation rate hbar/(m lambda+)."""
        return self.params.hbar / (self.params.m * self.lambda_plus)

    @property
    def kappa_minus(self):
        return self.params.hbar / (self.params.m * self.lambda_minus)

    @property
    def settling_time(self) -> float:
        """1 / (slowest characteristic rate); transients decay as exp(-t/settling_time)."""
        rates = (complex(self.kappa_plus).real, complex(self.kappa_minus).real)
        return 1.0 / min(rates)

    @property
    def pointer_center(self) -> float:
        """|eps| / (m omega^2); the up pointer sits at -eps/(m omega^2)."""
        p = self.params
        return p.epsilon / (p.m * p.omega ** 2)

    @property
    def alpha_time_ratio(self) -> float:
        """tau_D / (tau_R / 2|alpha|^2); a diagnostic, 1/4 at zero temperature."""
        if self.alpha_sq == 0:
            return float("nan")
        return self.tau_D / (self.tau_R / (2 * self.alpha_sq))

    def as_dict(self) -> dict:
        def num(z):
            if z is None:
                return None
            z = complex(z)
            return z.real if z.imag == 0 else [z.real, z.imag]

        return {
            "D": self.D,
            "nbar": self.nbar,
            "lambda_plus": num(self.lambda_plus),
            "lambda_minus": num(self.lambda_minus),
            "Gamma": num(self.Gamma_char),
            "tau_R": self.tau_R,
            "tau_D": self.tau_D,
            "alpha_sq": self.alpha_sq,
            "delta_sep": self.delta_sep,
            "lambda_dB": self.lambda_dB,
            "alpha_time_ratio": self.alpha_time_ratio,
            "settling_time": self.settling_time,
        }


def diffusion_coefficient(p: PhysicalParams) -> tuple[float, float]:
    """(D, nbar) for the bath regime of ``p``."""
    m, w, g, hbar = p.m, p.omega, p.gamma, p.hbar
    bath = p.bath
    if bath.kind == "zero":
        return 4 * m * g * w * hbar, 0.0
    if bath.kind == "high":
        D = 8 * m * g * bath.kT
        return D, bath.kT / (hbar * w) - 0.5
    kT = p.kB * bath.T
    nbar = 0.0 if kT == 0 else 1.0 / math.expm1(hbar * w / kT)
    return 8 * m * g * hbar * w * (nbar + 0.5), nbar


def characteristic_lengths(m, omega, gamma, hbar):
    """(lambda+, lambda-, Gamma); complex when gamma < omega."""
    root = cmath.sqrt(gamma * gamma - omega * omega)
    scale = hbar / (m * omega * omega)
    lp = scale * (gamma + root)
    lm = scale * (gamma - root)
    if lp == lm:
        raise RegimeError("critically damped (gamma == omega): closed forms degenerate")
    G = lp * lm / (lp - lm)
    if gamma >= omega:
        return lp.real, lm.real, G.real
    return lp, lm, G


def derive_constants(p: PhysicalParams) -> DerivedConstants:
    errs = errors(p)
    if errs:
        raise InvalidParamsError(errs)
    if p.gamma == 0:
        raise DissipationlessModelError([Issue("gamma", "dissipationless model: gamma = 0")])

    m, w, g, hbar, eps = p.m, p.omega, p.gamma, p.hbar, p.epsilon
    D, nbar = diffusion_coefficient(p)
    lp, lm, G = characteristic_lengths(m, w, g, hbar)

    if eps == 0 or D == 0:
        tau_D = math.inf
    else:
        tau_D = hbar ** 2 * m ** 2 * w ** 4 / (D * eps ** 2)

    lambda_dB = None
    if p.bath.kind == "high" and p.bath.kT > 0:
        lambda_dB = hbar / math.sqrt(2 * m * p.bath.kT)

    return DerivedConstants(
        params=p,
        D=D,
        nbar=nbar,
        lambda_plus=lp,
        lambda_minus=lm,
        Gamma_char=G,
        tau_R=1.0 / g,
        tau_D=tau_D,
        alpha_sq=eps ** 2 / (2 * m * w ** 3 * hbar),
        delta_sep=2 * abs(eps) / (m * w ** 2),
        lambda_dB=lambda_dB,
    )


NATURAL = PhysicalParams(m=1.0, omega=1.0, lambda_spin=0.3, epsilon=0.5, gamma=2.0,
                         bath=Bath.zero(), hbar=1.0, kB=1.0)
