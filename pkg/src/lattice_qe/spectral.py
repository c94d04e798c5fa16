"""Resolvent analysis of emitters coupled to the lattice bath.

Covers golden-rule rates, the pair of unstable mid-band poles, residues and
steady-state populations, asymptotic bath amplitudes, and the
thermodynamic-limit emitter amplitude obtained by Fourier transforming the
resolvent along the real axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .bath import LatticeSpec, dispersion, dos
from .errors import ConfigError, DivergenceError, NumericalFailure, TailWindowError
from .greens import (
    DEFAULT_TOL,
    SECOND,
    ComplexEnergy,
    _g00_outside,
    _g00_outside_derivative,
    g00_boundary,
    lattice_green,
    midband_self_energy_continued,
    self_energy,
    sigma_4minus_derivative,
)

__all__ = [
    "EmitterSet",
    "SpectralResult",
    "TailFit",
    "state_self_energy",
    "resolvent_e",
    "fgr_rate",
    "midband_rate_estimate",
    "unstable_poles",
    "pole_residue",
    "analyze_midband",
    "band_bound_states",
    "amplitude_via_resolvent",
    "long_time_tail_exponent",
    "asymptotic_bath_amplitude",
    "four_emitter_steady_population",
    "four_emitter_residue_numeric",
]

RATE_CONVENTION = "population decay rate = 2 |Im z_pole|"


@dataclass(frozen=True)
class EmitterSet:
    """Identical two-level emitters at lattice sites ``positions``."""

    positions: tuple
    delta: float
    g: float

    def __post_init__(self):
        if any(len(p) != 2 or any(float(v) != int(v) for v in p) for p in self.positions):
            raise ConfigError(f"emitter positions must be integer lattice sites: {self.positions}")
        pos = tuple((int(p[0]), int(p[1])) for p in self.positions)
        if not pos:
            raise ConfigError("at least one emitter is required")
        if len(set(pos)) != len(pos):
            raise ConfigError(f"emitter positions must be distinct: {pos}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "g", float(self.g))

    @property
    def M(self) -> int:
        return len(self.positions)

    def in_band(self, spec: LatticeSpec) -> bool:
        return abs(self.delta) < spec.band_edge

    @classmethod
    def single(cls, delta: float, g: float, position=(0, 0)) -> "EmitterSet":
        return cls((position,), delta, g)


@dataclass
class SpectralResult:
    """Poles, residues and rates extracted from a resolvent."""

    poles: list
    fgr_rate: float
    nonperturbative_rate: float
    steady_population: float
    rate_convention: str = RATE_CONVENTION
    notes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TailFit:
    constant: float
    drift: float
    window: tuple
    local_exponents: np.ndarray


def state_self_energy(spec: LatticeSpec, emitters: EmitterSet, z, pattern=None, finite: bool = False, tol: float = DEFAULT_TOL) -> complex:
    """Effective self-energy ``<a| Sigma |a>`` of the emitter superposition ``a``.

    ``Sigma_jl = g^2 G(n_j - n_l)``. Meaningful as a single-mode self-energy
    only when ``a`` is an eigenvector of that matrix, which holds for the
    symmetric configurations used here.
    """
    a = _pattern(emitters, pattern)
    g = emitters.g
    if g == 0:
        return 0j
    total = 0j
    cache = {}
    for j, nj in enumerate(emitters.positions):
        for l, nl in enumerate(emitters.positions):
            if a[j] == 0 or a[l] == 0:
                continue
            d = tuple(sorted((abs(nj[0] - nl[0]), abs(nj[1] - nl[1]))))
            if d not in cache:
                if finite:
                    from .greens import finite_lattice_green

                    cache[d] = finite_lattice_green(spec, complex(z), d)
                else:
                    cache[d] = lattice_green(spec, z, d, tol)
            total += np.conj(a[j]) * a[l] * cache[d]
    return complex(g * g * total)


def _pattern(emitters: EmitterSet, pattern):
    if pattern is None:
        if emitters.M != 1:
            raise ValueError("a pattern is required for more than one emitter")
        return np.array([1.0 + 0j])
    a = np.asarray(pattern, dtype=complex)
    if a.shape != (emitters.M,):
        raise ValueError(f"pattern has shape {a.shape}, expected ({emitters.M},)")
    return a / np.linalg.norm(a)


def resolvent_e(spec: LatticeSpec, emitters: EmitterSet, z, pattern=None, tol: float = DEFAULT_TOL) -> complex:
    """``G_e(z) = 1 / (z - Delta - Sigma(z))``.

    ``Sigma`` is the single-emitter self-energy, or the effective one of
    ``pattern`` for several emitters. A :class:`ComplexEnergy` on the second
    sheet uses the continued mid-band expansion (single emitter only).
    """
    zc = complex(z)
    if emitters.g == 0:
        return 1.0 / (zc - emitters.delta)
    if isinstance(z, ComplexEnergy) and z.sheet == SECOND:
        if emitters.M != 1:
            raise ValueError("second-sheet resolvent is only available for a single emitter")
        sigma = midband_self_energy_continued(spec, emitters.g, z)
    elif emitters.M == 1 and pattern is None:
        sigma = complex(self_energy(spec, emitters.g, z, tol=tol))
    else:
        sigma = state_self_energy(spec, emitters, z, pattern, tol=tol)
    return 1.0 / (zc - emitters.delta - sigma)


def fgr_rate(spec: LatticeSpec, g: float, delta: float, resolution: float | None = None, grid: int = 16384) -> float:
    """Golden-rule decay rate ``2 pi g^2 D(delta)`` from the histogram DOS.

    Raises:
        DivergenceError: ``delta == 0``, where the density of states diverges.
    """
    if abs(delta) >= spec.band_edge:
        return 0.0
    if delta == 0:
        raise DivergenceError("golden-rule rate is infinite at the band centre")
    if resolution is None:
        resolution = 0.01 * spec.J
    return 2 * np.pi * g * g * dos(spec, delta, resolution, grid)


def midband_rate_estimate(spec: LatticeSpec, g: float) -> float:
    """Leading-log population decay rate at ``Delta = 0``: ``(g^2/pi J) log(32 pi J^2/g^2)``."""
    J = spec.J
    return g * g / (np.pi * J) * math.log(32 * np.pi * J * J / (g * g))


def _second_sheet_f(spec, g, delta, z):
    sigma = midband_self_energy_continued(spec, g, ComplexEnergy(z, SECOND))
    dsigma = 1j * g * g / (2 * np.pi * spec.J * z)
    return z - delta - sigma, 1.0 - dsigma


def _newton(spec, g, delta, z, tol, max_iter=200):
    f, fp = _second_sheet_f(spec, g, delta, z)
    for _ in range(max_iter):
        step = f / fp
        lam = 1.0
        while True:
            trial = z - lam * step
            if trial != 0:
                f_new, fp_new = _second_sheet_f(spec, g, delta, trial)
                if abs(f_new) < abs(f) or lam < 1e-6:
                    break
            lam *= 0.5
        z, f, fp = trial, f_new, fp_new
        if abs(lam * step) < tol:
            return z
    raise NumericalFailure(f"pole search did not converge from seed (last |f| = {abs(f):.3g})", achieved=abs(f))


def unstable_poles(spec: LatticeSpec, g: float, delta: float = 0.0, tol: float = 1e-10):
    """The two second-sheet poles of ``G_e`` near the band centre.

    Solves ``z - Delta - Sigma_II(z) = 0`` by damped Newton iteration, seeded
    at ``+-g^2/2J - i Gamma/2`` with ``Gamma`` from :func:`midband_rate_estimate`.

    Returns:
        ``(z_plus, z_minus)`` as :class:`ComplexEnergy` on the second sheet,
        ordered by decreasing real part.

    Raises:
        ValueError: ``|Delta| > g^2/2J`` (outside the two-pole regime).
        NumericalFailure: Newton did not converge, a root landed in the upper
            half plane, or both seeds found the same root.
    """
    J = spec.J
    if g <= 0:
        raise ValueError("g must be positive")
    if abs(delta) > g * g / (2 * J):
        raise ValueError(f"|Delta| = {abs(delta)} outside the two-pole regime |Delta| <= g^2/2J")
    half_rate = 0.5 * midband_rate_estimate(spec, g)
    roots = []
    for sign in (1, -1):
        seed = complex(sign * g * g / (2 * J), -half_rate)
        z = _newton(spec, g, delta, seed, tol)
        if z.imag >= 0:
            raise NumericalFailure(f"pole {z} is not below the real axis (wrong sheet)")
        roots.append(z)
    if abs(roots[0] - roots[1]) < 1e3 * tol:
        raise NumericalFailure("both seeds converged to the same pole")
    roots.sort(key=lambda r: -r.real)
    return tuple(ComplexEnergy(r, SECOND) for r in roots)


def pole_residue(spec: LatticeSpec, g: float, z) -> complex:
    """Residue ``1 / (1 - dSigma_II/dz)`` of ``G_e`` at a second-sheet pole."""
    zc = complex(z)
    return 1.0 / (1.0 - 1j * g * g / (2 * np.pi * spec.J * zc))


def analyze_midband(spec: LatticeSpec, g: float, delta: float = 0.0) -> SpectralResult:
    """Pole pair, residues and rates for a single emitter near the band centre."""
    poles = unstable_poles(spec, g, delta)
    pairs = [(p, pole_residue(spec, g, p)) for p in poles]
    rate = 2 * abs(poles[0].imag)
    try:
        fgr = fgr_rate(spec, g, delta)
    except DivergenceError:
        fgr = math.inf
    notes = {"leading_log_rate": midband_rate_estimate(spec, g)}
    return SpectralResult(pairs, fgr, rate, 0.0, notes=notes)


def band_bound_states(spec: LatticeSpec, g: float, delta: float, min_offset: float = 1e-300):
    """Real poles of the single-emitter resolvent outside the band.

    A 2D band edge makes the real part of ``Sigma`` diverge logarithmically,
    so a bound state exists on each side for any ``g > 0``; for in-band
    emitters it sits exponentially close to the edge with an exponentially
    small residue. States closer than ``min_offset * J`` are dropped.

    Returns:
        List of ``(energy, residue)``.
    """
    if g == 0:
        return []
    W = spec.band_edge
    g2 = g * g
    out = []
    for side in (1, -1):
        # energy side*(W + d); f(d) changes sign once on (0, inf)
        def f(logd):
            d = math.exp(logd)
            return side * (W + d) - delta - g2 * side * float(_g00_outside(spec, d))

        lo = math.log(min_offset * spec.J)
        hi = math.log(10 * W + abs(delta) + 10 * g)
        f_lo, f_hi = f(lo), f(hi)
        if not (f_lo * side < 0 and f_hi * side > 0):
            continue
        logd = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
        d = math.exp(logd)
        dsigma = g2 * float(_g00_outside_derivative(spec, d))
        out.append((side * (W + d), 1.0 / (1.0 - dsigma)))
    return out


def _spectral_density(spec, g, delta):
    W = spec.band_edge
    g2 = g * g

    def rho(E):
        if E == 0.0 or abs(E) >= W:
            return 0.0
        G = 1.0 / (E - delta - g2 * complex(g00_boundary(spec, E)))
        return -G.imag / np.pi

    return rho


def amplitude_via_resolvent(spec: LatticeSpec, emitters: EmitterSet, t, tol: float = 1e-13, max_error: float = 1e-6):
    """Thermodynamic-limit emitter amplitude ``C_e(t)`` for a single emitter.

    ``C_e(t) = int rho(E) exp(-iEt) dE + sum_b R_b exp(-i E_b t)`` with
    ``rho = -Im G_e(E + i0+) / pi`` supported on the band and ``(E_b, R_b)``
    the bound states from :func:`band_bound_states`. The band integral is
    split at the band edges, at the centre (log singularity) and around
    ``Delta``; each panel uses an oscillatory-weight adaptive rule.

    Args:
        spec: Lattice (``J`` only).
        emitters: A single emitter.
        t: Time or array of times (``t >= 0``).
        tol: Absolute tolerance per panel.
        max_error: Raise if the summed error estimate exceeds this.
    """
    if emitters.M != 1:
        raise ValueError("amplitude_via_resolvent handles a single emitter")
    g, delta = emitters.g, emitters.delta
    scalar = np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise ValueError("t must be non-negative")
    if g == 0:
        out = np.exp(-1j * delta * times)
        return complex(out[0]) if scalar else out

    W = spec.band_edge
    rho = _spectral_density(spec, g, delta)
    width = max(g * g / spec.J, 1e-3 * spec.J)
    cuts = {-W, 0.0, W}
    if abs(delta) < W:
        for c in (delta - 5 * width, delta, delta + 5 * width):
            if -W < c < W:
                cuts.add(c)
    cuts = sorted(cuts)
    bound = band_bound_states(spec, g, delta)

    result = np.empty(times.shape, dtype=complex)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for i, ti in enumerate(times):
            total = 0j
            err = 0.0
            for a, b in zip(cuts[:-1], cuts[1:]):
                if ti == 0:
                    v, e = integrate.quad(rho, a, b, limit=4000, epsabs=tol, epsrel=1e-12)
                    total += v
                    err += e
                else:
                    c, ec = integrate.quad(rho, a, b, weight="cos", wvar=ti, limit=4000, epsabs=tol, epsrel=1e-12)
                    s, es = integrate.quad(rho, a, b, weight="sin", wvar=ti, limit=4000, epsabs=tol, epsrel=1e-12)
                    total += c - 1j * s
                    err += ec + es
            if err > max_error:
                raise NumericalFailure(f"resolvent amplitude at t={ti}: error estimate {err:.3g}", achieved=err)
            for Eb, Rb in bound:
                total += Rb * np.exp(-1j * Eb * ti)
            result[i] = total
    return complex(result[0]) if scalar else result


def long_time_tail_exponent(t, population, J: float = 1.0, max_exponent_spread: float | None = None) -> TailFit:
    """Test samples against the ``[t log^2(16 J t)]^-2`` long-time law.

    The compensated product ``population * [t log^2(16Jt)]^2`` is fitted to
    a constant; ``drift = max/min - 1`` of the product over the window.

    The local exponent ``s = d log p / d log t`` is nearly constant for an
    algebraic tail but grows like ``t`` for an exponential, i.e. by the
    factor ``t_max / t_min`` across the window. Samples whose ``|s|`` varies
    by more than ``max_exponent_spread`` (default: the geometric midpoint
    ``sqrt(t_max / t_min)``) are rejected as still exponential.

    Raises:
        TailWindowError: The window is still in the exponential regime or
            spans less than a factor 2 in time.
    """
    t = np.asarray(t, dtype=float)
    p = np.asarray(population, dtype=float)
    if t.shape != p.shape or t.size < 3:
        raise ValueError("need at least three (t, population) samples of equal length")
    if np.any(p <= 0) or np.any(t <= 0):
        raise ValueError("times and populations must be positive")
    order = np.argsort(t)
    t, p = t[order], p[order]
    span = t[-1] / t[0]
    if span < 2:
        raise TailWindowError(f"window spans only a factor {span:.3g} in time")
    if max_exponent_spread is None:
        max_exponent_spread = math.sqrt(span)
    slopes = np.gradient(np.log(p), np.log(t))
    mags = np.abs(slopes)
    if mags.min() == 0 or mags.max() / mags.min() > max_exponent_spread:
        raise TailWindowError(
            f"local exponent ranges {mags.min():.3g}..{mags.max():.3g}; window is not in the algebraic tail"
        )
    product = p * (t * np.log(16 * J * t) ** 2) ** 2
    return TailFit(float(product.mean()), float(product.max() / product.min() - 1.0), (float(t[0]), float(t[-1])), slopes)


def asymptotic_bath_amplitude(spec: LatticeSpec, emitters: EmitterSet, kx, ky=None):
    """Long-time bath amplitude with ``exp(-i w(k) t)`` factored out.

    ``g / (w(k) - Delta - Sigma_e(w(k) + i0+))``, vectorised over ``k``.
    Modes exactly at the band centre or edges get the ``eta -> 0`` limit,
    which is 0.
    """
    if emitters.M != 1:
        raise ValueError("asymptotic_bath_amplitude handles a single emitter")
    w = np.asarray(dispersion(spec, kx, ky), dtype=float)
    g, delta = emitters.g, emitters.delta
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = g * g * g00_boundary(spec, w)
        amp = g / (w - delta - sigma)
    # Sigma diverges at the band centre and edges, so the limit there is 0
    amp = np.where((w == 0) | (np.abs(w) >= spec.band_edge), 0j, amp)
    return amp[()] if amp.ndim == 0 else amp


def four_emitter_steady_population(spec: LatticeSpec, g: float, n: int):
    """Trapped amplitude and population of the four-emitter subradiant state.

    Amplitude ``1 / (1 + g^2 n^2 / J^2)`` (residue of the in-band real pole at
    ``z = 0``); population is its square.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    amp = 1.0 / (1.0 + (g * n / spec.J) ** 2)
    return amp, amp * amp


def four_emitter_residue_numeric(spec: LatticeSpec, g: float, n: int, h: float = 1e-4) -> float:
    """Same residue from a finite-difference derivative of ``Sigma_4-`` at 0."""
    d = sigma_4minus_derivative(spec, g, n, h)
    return float((1.0 / (1.0 - d)).real)
