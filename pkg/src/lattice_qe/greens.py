"""Lattice Green's functions and emitter self-energies.

All infinite-lattice quantities are obtained from a 1D integral: the sum
over ``kx`` is done in closed form,

    (1/pi) int_0^pi cos(m q) / (a + b cos q) dq = (-b / (a + s))**m / s,
    s = sqrt(a - b) * sqrt(a + b),

with principal square roots. For ``Im a >= 0`` this branch is the retarded
one (``s ~ a`` at infinity), so real energies passed as ``E + 0j`` give the
``E + i0+`` boundary value directly. Values below the real axis on the
physical sheet follow from ``G(z*) = G(z)*``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .bath import LatticeSpec
from .errors import DivergenceError, NumericalFailure

__all__ = [
    "ComplexEnergy",
    "SelfEnergyValue",
    "lattice_green",
    "g00",
    "g00_boundary",
    "finite_lattice_green",
    "self_energy",
    "eta_extrapolate",
    "self_energy_midband_expansion",
    "midband_self_energy_continued",
    "sigma12",
    "sigma_collective_pm",
    "markov_ratio",
    "sigma_4minus",
    "sigma_4minus_derivative",
]

DEFAULT_TOL = 1e-8

PHYSICAL = "physical"
SECOND = "second"


@dataclass(frozen=True)
class ComplexEnergy:
    """Point of the complex energy plane and the sheet it lives on.

    ``sheet="second"`` is only meaningful below the real axis near the band
    centre, where the mid-band expansion is continued through its cut.
    """

    z: complex
    sheet: str = PHYSICAL

    def __post_init__(self):
        if self.sheet not in (PHYSICAL, SECOND):
            raise ValueError(f"unknown sheet {self.sheet!r}")
        object.__setattr__(self, "z", complex(self.z))

    @property
    def real(self) -> float:
        return self.z.real

    @property
    def imag(self) -> float:
        return self.z.imag

    def conjugate(self) -> "ComplexEnergy":
        return ComplexEnergy(self.z.conjugate(), self.sheet)

    def __complex__(self):
        return self.z


def _as_energy(z) -> ComplexEnergy:
    return z if isinstance(z, ComplexEnergy) else ComplexEnergy(z)


@dataclass(frozen=True)
class SelfEnergyValue:
    """Complex self-energy with its shift/rate decomposition.

    ``shift`` is the real part (Lamb shift ``delta_omega``); ``rate`` is
    ``-2 Im``, the Markovian population decay rate.
    """

    value: complex
    convention = "shift = Re(value); rate = -2 * Im(value)"

    @property
    def shift(self) -> float:
        return self.value.real

    @property
    def rate(self) -> float:
        return -2.0 * self.value.imag

    def __complex__(self):
        return self.value


def _kernel(a, b, m):
    s = np.sqrt(a - b) * np.sqrt(a + b)
    if m == 0:
        return 1.0 / s
    return (-b / (a + s)) ** m / s


def _quad_complex(f, a, b, points, tol):
    parts = []
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for part in (lambda q: f(q).real, lambda q: f(q).imag):
            val, e = integrate.quad(
                part, a, b, points=points or None, limit=2000, epsabs=0.25 * tol, epsrel=1e-12
            )
            parts.append(val)
            err += e
    if not err <= tol:
        raise NumericalFailure(f"quadrature reached only {err:.3g} (requested {tol:.3g})", achieved=err)
    return complex(parts[0], parts[1])


def _breakpoints(z: complex, cosines, scale):
    """Angles in ``(0, pi)`` with the given cosines, for near-real ``z`` only."""
    if abs(z.imag) > 1e-2 * scale:
        return []
    return sorted({float(np.arccos(c)) for c in cosines if -1.0 < c < 1.0})


def lattice_green(spec: LatticeSpec, z, n=(0, 0), tol: float = DEFAULT_TOL) -> complex:
    """Infinite-lattice Green's function ``(2pi)^-2 int dk e^{ik.n} / (z - w(k))``.

    Args:
        spec: Lattice; only ``J`` matters.
        z: Complex energy (physical sheet). Real values are read as ``E + i0+``.
        n: Integer lattice offset.
        tol: Absolute quadrature tolerance.

    Raises:
        NumericalFailure: The quadrature error estimate exceeds ``tol``.
    """
    z = _as_energy(z)
    if z.sheet != PHYSICAL:
        raise ValueError("lattice_green is only defined on the physical sheet")
    if z.imag < 0:
        return lattice_green(spec, z.conjugate(), n, tol).conjugate()
    zz = complex(z.z.real, abs(z.z.imag))  # forces +0.0 imaginary part
    J = spec.J
    nx, ny = sorted((abs(int(n[0])), abs(int(n[1]))), reverse=True)

    def integrand(ky):
        return _kernel(zz + 2 * J * np.cos(ky), 2 * J, nx) * np.cos(ny * ky)

    # sqrt branch points where a = z + 2J cos(ky) = +-2J
    E = zz.real
    pts = _breakpoints(zz, ((2 * J - E) / (2 * J), (-2 * J - E) / (2 * J)), 2 * J)
    return _quad_complex(integrand, 0.0, np.pi, pts, np.pi * tol) / np.pi


def g00(spec: LatticeSpec, z, tol: float = DEFAULT_TOL) -> complex:
    """Local Green's function; ``Sigma_e = g^2 * g00`` on the infinite lattice."""
    return lattice_green(spec, z, (0, 0), tol)


def g00_boundary(spec: LatticeSpec, E):
    """Closed form of ``g00(E + i0+)`` for real ``E`` (vectorised).

    In band: ``[sgn(E) K(E^2/16J^2) - i K(1 - E^2/16J^2)] / (2 pi J)``;
    outside: ``2 K(16J^2/E^2) / (pi E)``. ``K`` takes the parameter ``m = k^2``
    and is evaluated through ``ellipkm1`` wherever ``m`` is close to 1.
    Returns ``-i inf`` at ``E = 0`` and infinities at the band edges.
    """
    E = np.asarray(E, dtype=float)
    W = spec.band_edge
    a = np.abs(E)
    inside = a < W
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (a / W) ** 2
        xc = (W - a) * (W + a) / W**2  # 1 - x without cancellation
        re_in = np.sign(E) * np.where(x < 0.5, special.ellipk(x), special.ellipkm1(xc))
        val_in = (re_in - 1j * special.ellipkm1(x)) / (2 * np.pi * spec.J)
        val_out = _g00_outside(spec, np.where(inside, W, a - W)) * np.sign(E) + 0j
    val = np.where(inside, val_in, val_out)
    val = np.where(E == 0, complex(0.0, -np.inf), val)
    return val[()] if val.ndim == 0 else val


def _g00_outside(spec: LatticeSpec, delta):
    """``g00`` at distance ``delta > 0`` above the upper band edge (real)."""
    W = spec.band_edge
    delta = np.asarray(delta, dtype=float)
    E = W + delta
    p = delta * (E + W) / E**2  # 1 - W^2/E^2
    with np.errstate(divide="ignore"):
        return 2.0 * special.ellipkm1(p) / (np.pi * E)


def _g00_outside_derivative(spec: LatticeSpec, delta):
    """``d g00 / dE`` at distance ``delta`` above the upper band edge."""
    W = spec.band_edge
    E = W + delta
    p = delta * (E + W) / E**2
    m = 1.0 - p
    K = special.ellipkm1(p)
    dK_dm = (special.ellipe(m) - p * K) / (2 * m * p)
    dm_dE = -2 * W**2 / E**3
    return -2 * K / (np.pi * E**2) + 2 / (np.pi * E) * dK_dm * dm_dE


def finite_lattice_green(spec: LatticeSpec, z, n=(0, 0)) -> complex:
    """Discrete ``(1/N^2) sum_k e^{ik.n} / (z - w(k))`` on the lattice's own N x N grid."""
    z = complex(z)
    kx, ky = spec.k_grid()
    w = -2.0 * spec.J * (np.cos(kx) + np.cos(ky))
    denom = z - w
    if np.any(denom == 0):
        raise DivergenceError("z coincides with a lattice mode energy")
    phase = np.exp(1j * (kx * n[0] + ky * n[1])) if any(n) else 1.0
    return complex(np.mean(phase / denom))


def self_energy(spec: LatticeSpec, g: float, z, finite: bool = False, tol: float = DEFAULT_TOL) -> SelfEnergyValue:
    """Single-emitter self-energy ``g^2 G_00(z)``.

    ``finite=True`` sums over the ``N x N`` grid of ``spec``; otherwise the
    infinite-lattice integral is used.
    """
    if g == 0:
        return SelfEnergyValue(0j)
    if finite:
        return SelfEnergyValue(g * g * finite_lattice_green(spec, complex(z)))
    return SelfEnergyValue(g * g * g00(spec, z, tol))


def eta_extrapolate(func, E: float, etas=(1e-3, 1e-4, 1e-5)) -> complex:
    """Richardson extrapolation of ``func(E + i*eta)`` to ``eta -> 0+``.

    Fits a polynomial in ``eta`` through the samples and evaluates it at 0,
    which is exact to ``O(eta^len(etas))`` wherever ``func`` is analytic
    near ``E``. Not suitable at the band centre (log singularity).
    """
    etas = np.asarray(etas, dtype=float)
    vals = np.array([complex(func(complex(E, eta))) for eta in etas])
    # Neville's scheme at x = 0
    p = vals.copy()
    m = len(etas)
    for k in range(1, m):
        for i in range(m - k):
            p[i] = (etas[i + k] * p[i] - etas[i] * p[i + 1]) / (etas[i + k] - etas[i])
    return complex(p[0])


def self_energy_midband_expansion(spec: LatticeSpec, g: float, E: float) -> SelfEnergyValue:
    """Leading small-``|E|`` form of ``Sigma_e(E + i0+)``.

    ``(g^2/4J) [sgn(E) + (2i/pi) log(|E|/16J)]``: a jump of ``g^2/2J`` in the
    shift across ``E = 0`` and a logarithmically divergent rate.

    Raises:
        DivergenceError: ``E == 0``.
        ValueError: ``|E| >= 0.5 J`` (expansion meaningless there).
    """
    J = spec.J
    if E == 0:
        raise DivergenceError("mid-band self-energy diverges logarithmically at E = 0")
    if abs(E) >= 0.5 * J:
        raise ValueError(f"|E| = {abs(E)} is outside the mid-band domain |E| < 0.5 J")
    if abs(E) > 0.1 * J:
        warnings.warn(f"mid-band expansion used at |E| = {abs(E):.3g} J, accuracy degrades", RuntimeWarning, stacklevel=2)
    value = g * g / (4 * J) * (math.copysign(1.0, E) + 2j / np.pi * math.log(abs(E) / (16 * J)))
    return SelfEnergyValue(complex(value))


def midband_self_energy_continued(spec: LatticeSpec, g: float, z) -> complex:
    """Mid-band self-energy as an analytic function of complex ``z``.

    ``(i g^2 / 2 pi J) Log(-i z / 16J)``. In the upper half plane this is the
    physical-sheet function whose boundary value is
    :func:`self_energy_midband_expansion`. On the second sheet the same
    expression is used below the real axis: the principal log then has its
    cut on the negative imaginary axis, which is the branch cut generated by
    the Van Hove divergence.
    """
    z = _as_energy(z)
    if z.z == 0:
        raise DivergenceError("mid-band self-energy diverges at z = 0")
    if z.sheet == PHYSICAL and z.imag < 0:
        return midband_self_energy_continued(spec, g, z.conjugate()).conjugate()
    return complex(1j * g * g / (2 * np.pi * spec.J) * np.log(-1j * z.z / (16 * spec.J)))


def sigma12(spec: LatticeSpec, g: float, z, n12, finite: bool = False, tol: float = DEFAULT_TOL) -> complex:
    """Bath-mediated coupling ``g^2 G_{n12}(z)`` between two emitters."""
    if finite:
        return g * g * finite_lattice_green(spec, complex(z), tuple(n12))
    return g * g * lattice_green(spec, z, tuple(n12), tol)


def sigma_collective_pm(spec: LatticeSpec, g: float, z, n12, sign: int, finite: bool = False, tol: float = DEFAULT_TOL) -> complex:
    """``Sigma_e + sign * Sigma_12`` for the (anti)symmetric two-emitter state."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if tuple(n12) == (0, 0):
        return (1 + sign) * complex(self_energy(spec, g, z, finite, tol))
    return complex(self_energy(spec, g, z, finite, tol)) + sign * sigma12(spec, g, z, n12, finite, tol)


def markov_ratio(spec: LatticeSpec, n12, etas=(1e-4, 1e-6, 1e-8), tol: float = 1e-10):
    """``Sigma_12(i0+) / Sigma_e(i0+)`` by extrapolation along the imaginary axis.

    Both functions diverge logarithmically as ``z = i*eta -> 0``, so the
    ratio approaches its limit like ``1/log(1/eta)``. The samples are fitted
    to ``r0 + c / (log(1/eta) + d)`` and ``r0`` is returned.

    Returns:
        ``(r0, samples)`` with ``samples`` the ratios at each ``eta``.
    """
    etas = np.asarray(etas, dtype=float)
    samples = np.array(
        [(lattice_green(spec, 1j * e * spec.J, n12, tol) / g00(spec, 1j * e * spec.J, tol)).real for e in etas]
    )
    if np.ptp(samples) < 1e-13:
        return float(samples[-1]), samples
    L = np.log(spec.J / etas)

    def resid(p):
        return p[0] + p[1] / (L + p[2]) - samples

    guess = [samples[-1], (samples[-1] - samples[0]) * (L[0] + 2.8) * (L[-1] + 2.8) / (L[0] - L[-1]), math.log(16.0)]
    fit = optimize.least_squares(resid, guess, xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return float(fit.x[0]), samples


def sigma_4minus(spec: LatticeSpec, g: float, z, n: int, tol: float = DEFAULT_TOL) -> complex:
    """Self-energy of the four-emitter subradiant state.

    Evaluates ``(4g^2/pi^2) int_0^pi int_0^pi sin^2(2n qx) sin^2(2n qy)
    / (z + 4J cos qx cos qy)`` with the ``qy`` integral done in closed form,
    leaving a 1D quadrature over ``qx``.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    z = _as_energy(z)
    if z.sheet != PHYSICAL:
        raise ValueError("sigma_4minus is only defined on the physical sheet")
    if z.imag < 0:
        return sigma_4minus(spec, g, z.conjugate(), n, tol).conjugate()
    zz = complex(z.z.real, abs(z.z.imag))
    J = spec.J
    m = 4 * n

    def integrand(qx):
        b = 4 * J * np.cos(qx)
        s = np.sqrt(zz - b) * np.sqrt(zz + b)
        lam = -b / (zz + s)
        return np.sin(2 * n * qx) ** 2 * (1 - lam**m) / s

    pts = _breakpoints(zz, (zz.real / (4 * J), -zz.real / (4 * J)), 4 * J)
    val = _quad_complex(integrand, 0.0, np.pi, pts, np.pi * tol / 2)
    return 2 * g * g / np.pi * val


def sigma_4minus_derivative(spec: LatticeSpec, g: float, n: int, h: float = 1e-4, tol: float = 1e-12) -> complex:
    """Central finite difference of :func:`sigma_4minus` at ``z = 0`` with step ``h*J``."""
    step = h * spec.J
    plus = sigma_4minus(spec, g, complex(step, 0.0), n, tol)
    minus = sigma_4minus(spec, g, complex(-step, 0.0), n, tol)
    return (plus - minus) / (2 * step)
