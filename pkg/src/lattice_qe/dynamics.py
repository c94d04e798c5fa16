"""Exact single-excitation propagation of emitters coupled to the lattice bath.

The state is ``C_e^j`` for the ``M`` emitters plus momentum amplitudes
``C_k`` on the ``N x N`` grid. The bath is diagonal in ``k`` and each emitter
couples to every mode with phase ``exp(i k.n_j) / N``, so one application of
the Hamiltonian costs ``O(M N^2)``.

When the bath starts empty the bath amplitudes stay of the form
``C_k = sum_j exp(-i k.n_j) beta_j(k)`` where ``beta_j`` depends on ``k`` only
through its orbit under the lattice point group. Propagation then runs on the
``beta_j`` of the roughly ``N^2 / 8`` orbits instead of on the full grid.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .bath import LatticeSpec, inverse_k_transform
from .errors import ConfigError, NormDriftError
from .spectral import EmitterSet

__all__ = [
    "StateKind",
    "InitialState",
    "SingleExcitationState",
    "HamiltonianAction",
    "OrbitReducedAction",
    "Trajectory",
    "RevivalWarning",
    "build_hamiltonian_action",
    "initial_state",
    "evolve",
    "population_map_real_space",
    "state_population",
    "anisotropy_metric",
    "write_trajectory_csv",
    "write_map",
    "read_map",
    "TRAJECTORY_HEADER",
]

TRAJECTORY_HEADER = ["t", "pop_emitter_total", "pop_state_initial", "norm", "pop_bath"]


class RevivalWarning(UserWarning):
    """The run extends past the point where periodic images can return."""


class StateKind(str, enum.Enum):
    SINGLE = "single_excited"
    TWO_PM = "two_pm"
    FOUR_PM = "four_pm"


@dataclass(frozen=True)
class InitialState:
    """Emitter-sector initial condition with an empty bath.

    ``two_pm`` places emitters at ``base`` and ``base + n12`` with pattern
    ``(1, sign) / sqrt(2)``. ``four_pm`` places them at offsets
    ``(2n, 0), (0, 2n), (2n, 4n), (4n, 2n)`` from ``base`` with pattern
    ``(1, sign, 1, sign) / 2``; with ``sign = -1`` this is the state whose
    form factor vanishes on the whole ``omega = 0`` contour.
    """

    kind: StateKind = StateKind.SINGLE
    sign: int = 1
    n12: tuple = (0, 0)
    n: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", StateKind(self.kind))
        if self.sign not in (1, -1):
            raise ConfigError(f"sign must be +1 or -1, got {self.sign}")
        object.__setattr__(self, "n12", tuple(int(v) for v in self.n12))
        if self.kind is StateKind.TWO_PM and self.n12 == (0, 0):
            raise ConfigError("two_pm needs a non-zero separation n12")
        if self.kind is StateKind.FOUR_PM and self.n < 1:
            raise ConfigError("four_pm needs n >= 1")

    @classmethod
    def single(cls) -> "InitialState":
        return cls(StateKind.SINGLE)

    @classmethod
    def two_pm(cls, sign: int, n12) -> "InitialState":
        return cls(StateKind.TWO_PM, sign, tuple(n12))

    @classmethod
    def four_pm(cls, sign: int, n: int) -> "InitialState":
        return cls(StateKind.FOUR_PM, sign, n=int(n))

    def offsets(self):
        if self.kind is StateKind.SINGLE:
            return [(0, 0)]
        if self.kind is StateKind.TWO_PM:
            return [(0, 0), self.n12]
        m = 2 * self.n
        return [(m, 0), (0, m), (m, 2 * m), (2 * m, m)]

    def pattern(self) -> np.ndarray:
        if self.kind is StateKind.SINGLE:
            a = np.array([1.0])
        elif self.kind is StateKind.TWO_PM:
            a = np.array([1.0, self.sign])
        else:
            a = np.array([1.0, self.sign, 1.0, self.sign])
        return (a / np.linalg.norm(a)).astype(complex)

    def positions(self, spec: LatticeSpec):
        """Absolute sites with the configuration centred on the lattice."""
        offs = np.array(self.offsets())
        centre = np.array([spec.N // 2, spec.N // 2])
        shift = centre - np.round(offs.mean(axis=0)).astype(int)
        pos = [tuple(int(v) for v in (o + shift) % spec.N) for o in offs]
        if len(set(pos)) != len(pos):
            raise ConfigError(f"lattice N={spec.N} too small for configuration {self.offsets()}")
        return pos

    def emitters(self, spec: LatticeSpec, delta: float, g: float) -> EmitterSet:
        return EmitterSet(self.positions(spec), delta, g)


@dataclass
class SingleExcitationState:
    emitter_amps: np.ndarray
    bath_amps_k: np.ndarray
    time: float = 0.0

    @property
    def pop_emitters(self) -> float:
        return float(np.sum(np.abs(self.emitter_amps) ** 2))

    @property
    def pop_bath(self) -> float:
        return float(np.sum(np.abs(self.bath_amps_k) ** 2))

    @property
    def norm(self) -> float:
        return self.pop_emitters + self.pop_bath


def initial_state(spec: LatticeSpec, init: InitialState) -> SingleExcitationState:
    return SingleExcitationState(init.pattern(), np.zeros((spec.N, spec.N), complex), 0.0)


def _phases(spec: LatticeSpec, positions) -> np.ndarray:
    """``exp(i k.n_j)`` on the grid, shape ``(M, N, N)``."""
    kx, ky = spec.k_grid()
    return np.stack([np.exp(1j * (kx * nx + ky * ny)) for nx, ny in positions])


class HamiltonianAction:
    """Action of ``H`` on ``(C_e, C_k)`` in the momentum representation."""

    def __init__(self, spec: LatticeSpec, emitters: EmitterSet):
        self.spec = spec
        self.emitters = emitters
        self.omega = spec.dispersion_grid()
        self.phases = _phases(spec, emitters.positions)
        self.coupling = emitters.g / spec.N

    @property
    def M(self) -> int:
        return self.emitters.M

    def __call__(self, ce: np.ndarray, ck: np.ndarray):
        ce = np.asarray(ce, dtype=complex)
        h_ce = self.emitters.delta * ce + self.coupling * np.sum(self.phases * ck, axis=(1, 2))
        h_ck = self.omega * ck + self.coupling * np.sum(np.conj(self.phases) * ce[:, None, None], axis=0)
        return h_ce, h_ck

    def spectrum_bounds(self):
        spread = self.emitters.g * math.sqrt(self.M)
        lo = min(-self.spec.band_edge, self.emitters.delta) - spread
        hi = max(self.spec.band_edge, self.emitters.delta) + spread
        pad = 0.01 * (hi - lo)
        return lo - pad, hi + pad

    # flat-vector interface shared with OrbitReducedAction
    def pack(self, state: SingleExcitationState) -> np.ndarray:
        return np.concatenate([np.asarray(state.emitter_amps, complex), state.bath_amps_k.ravel()])

    def apply(self, v: np.ndarray) -> np.ndarray:
        M = self.M
        h_ce, h_ck = self(v[:M], v[M:].reshape(self.spec.N, self.spec.N))
        return np.concatenate([h_ce, h_ck.ravel()])

    def emitter_amps(self, v: np.ndarray) -> np.ndarray:
        return v[: self.M]

    def bath_population(self, v: np.ndarray) -> float:
        return float(np.sum(np.abs(v[self.M :]) ** 2))

    def bath_k(self, v: np.ndarray) -> np.ndarray:
        return v[self.M :].reshape(self.spec.N, self.spec.N).copy()


class OrbitReducedAction:
    """Exact propagation on point-group orbits, valid for an initially empty bath.

    Unknowns are ``C_e^j`` and ``beta_j(o)`` for each orbit ``o`` of
    ``(|ix|, |iy|)`` up to exchange, with
    ``C_k = sum_j exp(-i k.n_j) beta_j(o(k))``.
    """

    def __init__(self, spec: LatticeSpec, emitters: EmitterSet):
        self.spec = spec
        self.emitters = emitters
        N = spec.N
        idx = np.abs(np.arange(-N // 2, N // 2))
        ax, ay = np.meshgrid(idx, idx, indexing="ij")
        key = np.minimum(ax, ay) * (N // 2 + 1) + np.maximum(ax, ay)
        keys, inverse = np.unique(key.ravel(), return_inverse=True)
        self.orbit_index = inverse.reshape(N, N)
        self.n_orbits = keys.size
        a, b = np.divmod(keys, N // 2 + 1)
        step = 2 * np.pi / N
        self.omega = -2 * spec.J * (np.cos(a * step) + np.cos(b * step))
        kx, ky = spec.k_grid()
        pos = emitters.positions
        M = len(pos)
        flat = inverse.ravel()
        W = np.empty((M, M, self.n_orbits), dtype=complex)
        for j in range(M):
            for l in range(j, M):
                dx = pos[j][0] - pos[l][0]
                dy = pos[j][1] - pos[l][1]
                arg = (kx * dx + ky * dy).ravel()
                re = np.bincount(flat, weights=np.cos(arg), minlength=self.n_orbits)
                im = np.bincount(flat, weights=np.sin(arg), minlength=self.n_orbits)
                W[j, l] = re + 1j * im
                W[l, j] = re - 1j * im
        self.W = W
        self.coupling = emitters.g / N
        self._full = None

    @property
    def M(self) -> int:
        return self.emitters.M

    def spectrum_bounds(self):
        return HamiltonianAction.spectrum_bounds(self)

    def pack(self, state: SingleExcitationState) -> np.ndarray:
        if np.any(state.bath_amps_k != 0):
            raise ValueError("orbit reduction requires an empty initial bath")
        v = np.zeros(self.M * (1 + self.n_orbits), dtype=complex)
        v[: self.M] = state.emitter_amps
        return v

    def _beta(self, v):
        return v[self.M :].reshape(self.M, self.n_orbits)

    def apply(self, v: np.ndarray) -> np.ndarray:
        M = self.M
        ce = v[:M]
        beta = self._beta(v)
        out = np.empty_like(v)
        # plain einsum loop (no BLAS) keeps the reduction order fixed
        out[:M] = self.emitters.delta * ce + self.coupling * np.einsum("jlo,lo->j", self.W, beta, optimize=False)
        ob = out[M:].reshape(M, self.n_orbits)
        np.multiply(self.omega[None, :], beta, out=ob)
        ob += self.coupling * ce[:, None]
        return out

    def emitter_amps(self, v: np.ndarray) -> np.ndarray:
        return v[: self.M]

    def bath_population(self, v: np.ndarray) -> float:
        beta = self._beta(v)
        quad = np.sum(np.conj(beta)[:, None, :] * self.W * beta[None, :, :])
        return float(quad.real)

    def bath_k(self, v: np.ndarray) -> np.ndarray:
        if self._full is None:
            self._full = _phases(self.spec, self.emitters.positions)
        beta = self._beta(v)
        return np.sum(np.conj(self._full) * beta[:, self.orbit_index], axis=0)


def build_hamiltonian_action(spec: LatticeSpec, emitters: EmitterSet) -> HamiltonianAction:
    """Momentum-space Hamiltonian action for ``emitters`` on ``spec``."""
    N = spec.N
    for p in emitters.positions:
        if not all(isinstance(v, (int, np.integer)) for v in p):
            raise ConfigError(f"emitter position {p} is not a lattice site")
    if len({(p[0] % N, p[1] % N) for p in emitters.positions}) != emitters.M:
        raise ConfigError("emitters coincide modulo the lattice period")
    return HamiltonianAction(spec, emitters)


@dataclass
class Trajectory:
    """Sampled observables plus the final state.

    Attributes:
        times, pop_emitter_total, pop_state_initial, norm, pop_bath: Samples.
        emitter_amps: ``(n_samples, M)`` complex emitter amplitudes.
        final_state: State at the last sample time.
        snapshots: Map from requested time to the state at that time.
        warnings: Human-readable diagnostics (e.g. revival guard).
        max_norm_drift: ``max |norm - 1|`` over the samples.
    """

    times: np.ndarray
    pop_emitter_total: np.ndarray
    pop_state_initial: np.ndarray
    norm: np.ndarray
    pop_bath: np.ndarray
    emitter_amps: np.ndarray
    final_state: SingleExcitationState
    snapshots: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    max_norm_drift: float = 0.0


def _chebyshev_step(apply, v, tau, bounds):
    lo, hi = bounds
    c = 0.5 * (hi + lo)
    r = 0.5 * (hi - lo)
    x = r * tau
    # J_k(x) decays faster than exponentially once k > x
    n_terms = int(x) + 4
    while abs(special.jv(n_terms, x)) > 1e-17:
        n_terms += 2
    coeff = special.jv(np.arange(n_terms), x) * (-1j) ** np.arange(n_terms)
    coeff[1:] *= 2

    def h_tilde(u):
        w = apply(u)
        w -= c * u
        w /= r
        return w

    prev = v
    cur = h_tilde(v)
    acc = coeff[0] * prev + coeff[1] * cur
    for k in range(2, n_terms):
        nxt = h_tilde(cur)
        nxt *= 2
        nxt -= prev
        acc += coeff[k] * nxt
        prev, cur = cur, nxt
    acc *= np.exp(-1j * c * tau)
    return acc


def _rk4_step(apply, v, h):
    k1 = -1j * apply(v)
    k2 = -1j * apply(v + 0.5 * h * k1)
    k3 = -1j * apply(v + 0.5 * h * k2)
    k4 = -1j * apply(v + h * k3)
    return v + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(
    state: SingleExcitationState,
    action: HamiltonianAction,
    t_final: float,
    dt: float | None = None,
    tolerance: float = 1e-6,
    *,
    method: str = "chebyshev",
    sample_every: float | None = None,
    initial_pattern=None,
    snapshot_times=(),
    reduce: bool = True,
) -> Trajectory:
    """Propagate ``state`` to ``t_final`` under ``action``.

    Args:
        state: Initial state (its ``time`` is the start time).
        action: From :func:`build_hamiltonian_action`.
        t_final: End time (absolute).
        dt: Step. Chebyshev steps are exact to ~1e-15 for any size, so the
            default 1/J only sets the cost per step; RK4 defaults to
            ``0.05 / (4J)``.
        tolerance: Maximum accepted ``|norm - 1|``.
        method: ``"chebyshev"`` or ``"rk4"``. RK4 compares two half steps
            against one full step every 100 steps (Richardson estimate).
        sample_every: Observable stride; defaults to ``dt`` rounded to a
            whole number of steps, at least 1/J.
        initial_pattern: Emitter pattern whose overlap defines
            ``pop_state_initial``; defaults to the normalised initial
            emitter amplitudes.
        snapshot_times: Sample times at which full states are kept.
        reduce: Use the orbit-reduced representation when the bath starts
            empty.

    Raises:
        NormDriftError: Norm drift above ``tolerance``.
    """
    spec = action.spec
    if t_final < state.time:
        raise ConfigError("t_final precedes the initial time")
    if method not in ("chebyshev", "rk4"):
        raise ConfigError(f"unknown method {method!r}")
    if dt is None:
        dt = 1.0 / spec.J if method == "chebyshev" else 0.05 / spec.band_edge
    if not dt > 0:
        raise ConfigError("dt must be positive")
    if sample_every is None:
        sample_every = max(dt, 1.0 / spec.J)
    stride = max(1, int(round(sample_every / dt)))

    notes = []
    t_rev = spec.revival_time
    if t_final > 0.8 * t_rev:
        msg = f"t_final={t_final:g} exceeds 0.8 * revival time {t_rev:.4g} for N={spec.N}"
        warnings.warn(msg, RevivalWarning, stacklevel=2)
        notes.append(msg)

    rep = action
    if reduce and not np.any(state.bath_amps_k) and not isinstance(action, OrbitReducedAction):
        rep = OrbitReducedAction(spec, action.emitters)
    v = rep.pack(state)
    a0 = np.asarray(state.emitter_amps if initial_pattern is None else initial_pattern, dtype=complex)
    a0 = a0 / np.linalg.norm(a0)
    n0 = float(np.sum(np.abs(v[: rep.M]) ** 2)) + rep.bath_population(v)

    duration = t_final - state.time
    n_steps = int(math.ceil(duration / dt - 1e-9))
    h = duration / n_steps if n_steps else 0.0
    bounds = rep.spectrum_bounds()
    snap_steps = {int(round((ts - state.time) / h)) if h else 0: ts for ts in snapshot_times}

    rows = []
    amps = []
    snapshots = {}
    richardson = 0.0

    def record(step, vec):
        ce = rep.emitter_amps(vec).copy()
        pe = float(np.sum(np.abs(ce) ** 2))
        pb = rep.bath_population(vec)
        ov = np.sum(np.conj(a0) * ce)
        t = state.time + step * h
        rows.append((t, pe, float(abs(ov) ** 2), (pe + pb) / n0, pb))
        amps.append(ce)

    record(0, v)
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = SingleExcitationState(v[: rep.M].copy(), rep.bath_k(v), state.time)
    for step in range(1, n_steps + 1):
        if method == "chebyshev":
            v = _chebyshev_step(rep.apply, v, h, bounds)
        else:
            if step % 100 == 0:
                full = _rk4_step(rep.apply, v, h)
                half = _rk4_step(rep.apply, _rk4_step(rep.apply, v, h / 2), h / 2)
                richardson = max(richardson, float(np.max(np.abs(full - half))) / 15)
                v = half
            else:
                v = _rk4_step(rep.apply, v, h)
        if step % stride == 0 or step == n_steps:
            record(step, v)
            drift = abs(rows[-1][3] - 1)
            if drift > tolerance:
                raise NormDriftError(f"norm drift {drift:.3g} at t={rows[-1][0]:.6g} exceeds {tolerance:g}", achieved=drift)
        if step in snap_steps:
            snapshots[snap_steps[step]] = SingleExcitationState(v[: rep.M].copy(), rep.bath_k(v), state.time + step * h)

    data = np.array(rows)
    if method == "rk4" and richardson > tolerance:
        notes.append(f"Richardson error estimate {richardson:.3g} exceeds tolerance")
    final = SingleExcitationState(v[: rep.M].copy(), rep.bath_k(v), state.time + n_steps * h)
    return Trajectory(
        times=data[:, 0],
        pop_emitter_total=data[:, 1],
        pop_state_initial=data[:, 2],
        norm=data[:, 3],
        pop_bath=data[:, 4],
        emitter_amps=np.array(amps),
        final_state=final,
        snapshots=snapshots,
        warnings=notes,
        max_norm_drift=float(np.max(np.abs(data[:, 3] - 1))),
    )


def population_map_real_space(state: SingleExcitationState, spec: LatticeSpec | None = None, workers: int | None = None) -> np.ndarray:
    """``|C_n|`` on the lattice, indexed ``[nx, ny]`` with ``n`` in ``[0, N)``."""
    ck = state.bath_amps_k
    if spec is None:
        spec = LatticeSpec(ck.shape[0])
    return np.abs(inverse_k_transform(spec, ck, workers=workers))


def state_population(state: SingleExcitationState, initial) -> float:
    """``|<Phi_0|psi>|^2`` restricted to the emitter sector.

    ``initial`` is an :class:`InitialState` or an explicit pattern vector.
    """
    a = initial.pattern() if isinstance(initial, InitialState) else np.asarray(initial, dtype=complex)
    a = a / np.linalg.norm(a)
    return float(abs(np.sum(np.conj(a) * state.emitter_amps)) ** 2)


def anisotropy_metric(amplitude_map: np.ndarray, centre, half_width: float = 3.0) -> float:
    """Diagonal-to-axis emission ratio around ``centre``.

    Per-site mean of ``|C_n|^2`` over sites within Euclidean distance
    ``half_width`` of either diagonal through ``centre``, divided by the
    per-site mean over sites within ``half_width`` of either axis. Both bands
    are cut to the disc of radius ``N/2`` (minimum-image displacements), so
    they have equal width and length and an isotropic map gives 1.
    """
    p = np.asarray(amplitude_map, dtype=float) ** 2
    N = p.shape[0]
    if p.shape != (N, N):
        raise ValueError("map must be square")

    def wrap(u):
        return (u + N // 2) % N - N // 2

    x = np.arange(N)
    dx = wrap(x[:, None] - centre[0]) * np.ones((1, N))
    dy = wrap(x[None, :] - centre[1]) * np.ones((N, 1))
    disc = np.hypot(dx, dy) <= N / 2
    diag = disc & (np.minimum(np.abs(dx - dy), np.abs(dx + dy)) / np.sqrt(2) <= half_width)
    axes = disc & (np.minimum(np.abs(dx), np.abs(dy)) <= half_width)
    denom = p[axes].mean()
    if denom == 0:
        raise ValueError("no population along the axes")
    return float(p[diag].mean() / denom)


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        fh.write(", ".join(TRAJECTORY_HEADER) + "\n")
        for row in zip(traj.times, traj.pop_emitter_total, traj.pop_state_initial, traj.norm, traj.pop_bath):
            w.writerow([repr(float(v)) for v in row])
    return path


def write_map(path, grid: np.ndarray, t: float, binary: bool = False) -> Path:
    """Write an ``N x N`` real grid with header line ``N <N> t <t>``.

    Text files follow the header with one whitespace-separated row per
    ``nx``; binary files follow it with little-endian float64, row-major.
    """
    path = Path(path)
    grid = np.asarray(grid, dtype=float)
    header = f"N {grid.shape[0]} t {float(t)!r}\n"
    if binary:
        with path.open("wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(grid, dtype="<f8").tobytes())
    else:
        with path.open("w") as fh:
            fh.write(header)
            np.savetxt(fh, grid, fmt="%.17g")
    return path


def read_map(path, binary: bool = False):
    """Inverse of :func:`write_map`; returns ``(grid, t)``."""
    path = Path(path)
    with path.open("rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 4 or header[0] != "N" or header[2] != "t":
            raise ValueError(f"bad map header in {path}")
        N, t = int(header[1]), float(header[3])
        if binary:
            grid = np.frombuffer(fh.read(), dtype="<f8")
            if grid.size != N * N:
                raise ValueError(f"{path}: expected {N * N} values, found {grid.size}")
            grid = grid.reshape(N, N).copy()
        else:
            grid = np.loadtxt(fh, ndmin=2)
    return grid, t
