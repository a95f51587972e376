"""State-dependent force dynamics on one motional mode.

Two routes to the same gate: closed-form coherent-state bookkeeping
(trajectories, loop areas, residual displacements) and a truncated Fock
space integration used as an independent check.

Basis order for two-qubit quantities is ``(dd, du, ud, uu)`` with qubit a
first, i.e. index ``2 * s_a + s_b`` where ``s = 1`` means up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import eval_genlaguerre

from . import kernels
from .crystal import MotionalMode

BASIS_LABELS = ("dd", "du", "ud", "uu")
FLIP = np.array([3, 2, 1, 0])  # index map under a spin flip of both qubits
MIN_SAMPLES_PER_PERIOD = 40
DEFAULT_SAMPLES_PER_PERIOD = 100
N_PHASE_GRID = 64


class SamplingError(ValueError):
    """Time grid too coarse for the fast oscillation in the problem."""


def basis_spins(index: int) -> tuple[int, int]:
    return index >> 1, index & 1


@dataclass(frozen=True)
class DriveConfig:
    """Raman drive parameters. Frequencies in Hz, phases in radians.

    ``omega_*`` are the force couplings of each internal state of each ion
    before Lamb-Dicke weighting; their sign encodes the force direction.
    """

    difference_frequency: float
    gate_detuning: float
    omega_a_up: float = 0.0
    omega_a_down: float = 0.0
    omega_b_up: float = 0.0
    omega_b_down: float = 0.0
    optical_phase: float = 0.0
    raman_detuning: float = -1.04e12
    light_shift_a: float = 0.0
    light_shift_b: float = 0.0
    light_shift_offset_a: float = 0.0
    light_shift_offset_b: float = 0.0

    def __post_init__(self):
        if not self.difference_frequency > 0:
            raise ValueError("difference_frequency must be positive")
        if self.gate_detuning == 0:
            raise ValueError("gate_detuning must be non-zero")

    def omega(self, ion: str, up: int) -> float:
        return getattr(self, f"omega_{ion}_{'up' if up else 'down'}")

    def scaled(self, factor: float) -> "DriveConfig":
        return replace(
            self,
            omega_a_up=self.omega_a_up * factor,
            omega_a_down=self.omega_a_down * factor,
            omega_b_up=self.omega_b_up * factor,
            omega_b_down=self.omega_b_down * factor,
        )

    @property
    def mode_frequency(self) -> float:
        return self.difference_frequency - self.gate_detuning


@dataclass(frozen=True)
class Envelope:
    """Pulse envelope on ``[0, duration]``.

    ``shaped`` is a flat top of area ``duration - ramp_time`` convolved with
    a Gaussian (sigma = ramp_time / 6, truncated at 3 sigma), so the ramps
    last ``ramp_time`` and the pulse area does not depend on it.
    """

    duration: float
    shape: str = "square"
    ramp_time: float = 0.0

    def __post_init__(self):
        if self.shape not in kernels.SHAPE_CODES:
            raise ValueError(f"unknown envelope shape {self.shape!r}")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not 0 <= self.ramp_time <= self.duration / 2:
            raise ValueError("ramp_time must lie in [0, duration/2]")

    @property
    def code(self) -> int:
        return kernels.SHAPE_CODES[self.shape]

    @property
    def effective_ramp(self) -> float:
        return self.ramp_time if self.shape == "shaped" else 0.0

    @property
    def area(self) -> float:
        return self.duration - self.effective_ramp

    def breakpoints(self) -> list[float]:
        r = self.effective_ramp
        if r <= 0:
            return [0.0, self.duration]
        return [0.0, r, self.duration - r, self.duration]

    def __call__(self, u):
        u = np.ascontiguousarray(np.atleast_1d(u), dtype=np.float64)
        return kernels.envelope_samples(self.code, u, self.duration, self.effective_ramp)

    @classmethod
    def with_area(cls, area: float, shape: str = "square", ramp_time: float = 0.0) -> "Envelope":
        ramp = ramp_time if shape == "shaped" else 0.0
        return cls(area + ramp, shape, ramp_time if shape == "shaped" else 0.0)


@dataclass
class BasisStateTrajectory:
    basis_state: str
    times: np.ndarray
    alpha_samples: np.ndarray
    geometric_phase: float
    final_displacement: complex


def _grid(duration: float, fastest: float, samples_per_period: float) -> tuple[int, float]:
    if samples_per_period < MIN_SAMPLES_PER_PERIOD:
        raise SamplingError(
            f"{samples_per_period} samples per period is below the minimum "
            f"{MIN_SAMPLES_PER_PERIOD}"
        )
    intervals = int(math.ceil(duration * abs(fastest) * samples_per_period))
    intervals = max(intervals + (intervals % 2), 2)
    return intervals, duration / intervals


def displacement_trajectory(
    drive: DriveConfig,
    env: Envelope,
    state_coupling: float,
    *,
    t_start: float = 0.0,
    samples_per_period: float = DEFAULT_SAMPLES_PER_PERIOD,
    basis_state: str = "",
) -> BasisStateTrajectory:
    """Phase-space trajectory of the mode for one internal state.

    alpha(t) = -i int 2 pi c env(t') exp(i(2 pi delta_g t' + phi)) dt', on a
    fixed grid resolving the difference frequency. Loop area and end point
    are Richardson-extrapolated from the grid and its every-other-sample
    subgrid.
    """
    fastest = max(drive.difference_frequency, abs(drive.gate_detuning))
    n, h = _grid(env.duration, fastest, samples_per_period)
    u = np.linspace(0.0, env.duration, n + 1)
    coupling = np.ascontiguousarray(state_coupling * env(u))
    omega = 2 * math.pi * drive.gate_detuning
    phase0 = drive.optical_phase + omega * t_start
    alpha, area = kernels.trapezoid_loop(0.0, h, coupling, omega, phase0)
    alpha2, area2 = kernels.trapezoid_loop(0.0, 2 * h, np.ascontiguousarray(coupling[::2]), omega, phase0)
    phase = (4 * area - area2) / 3
    final = (4 * alpha[-1] - alpha2[-1]) / 3
    return BasisStateTrajectory(basis_state, t_start + u, alpha, float(phase), complex(final))


def square_loop(coupling: float, gate_detuning: float, duration: float) -> tuple[complex, float]:
    """Closed form end point and loop area for a square pulse starting at zero phase."""
    w = 2 * math.pi * gate_detuning
    final = -(coupling / gate_detuning) * (np.exp(1j * w * duration) - 1)
    area = (2 * math.pi * coupling) ** 2 * (duration - math.sin(w * duration) / w) / w
    return complex(final), float(area)


def thermal_overlap(beta, nbar: float):
    """<D(beta)> in a thermal state of mean occupation ``nbar``."""
    return np.exp(-np.abs(beta) ** 2 * (2 * nbar + 1) / 2)


@dataclass
class GateChannel:
    """Diagonal two-qubit map left after tracing out the mode.

    rho_ij -> rho_ij * exp(i(phase_i - phase_j)) * <D(alpha_j)^dag D(alpha_i)>
    """

    phases: np.ndarray
    residuals: np.ndarray
    nbar: float = 0.0
    trajectories: list = field(default_factory=list, repr=False)

    @property
    def coherence_factors(self) -> np.ndarray:
        diff = self.residuals[:, None] - self.residuals[None, :]
        return thermal_overlap(diff, self.nbar)

    def multipliers(self) -> np.ndarray:
        a = self.residuals
        cross = np.imag(a[:, None] * np.conj(a[None, :]))
        ph = self.phases[:, None] - self.phases[None, :]
        return self.coherence_factors * np.exp(1j * (ph + cross))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return rho * self.multipliers()

    def relative_phases(self) -> np.ndarray:
        rel = self.phases - self.phases[0]
        return np.angle(np.exp(1j * rel))

    @property
    def entangling_phase(self) -> float:
        """Phi in relative phases (0, Phi, Phi, 0): (phi_du + phi_ud - phi_dd - phi_uu) / 2."""
        p = self.phases
        return float(p[1] + p[2] - p[0] - p[3]) / 2


def state_couplings(drive: DriveConfig, mode: MotionalMode, sign: int) -> np.ndarray:
    """Effective coupling per basis state: eta_a Om_a(s_a) + sign * eta_b Om_b(s_b)."""
    if mode.eta_a is None or mode.eta_b is None:
        raise ValueError("mode has no Lamb-Dicke parameters; run crystal.lamb_dicke first")
    out = np.empty(4)
    for idx in range(4):
        sa, sb = basis_spins(idx)
        out[idx] = mode.eta_a * drive.omega("a", sa) + sign * mode.eta_b * drive.omega("b", sb)
    return out


def gate_half_channel(
    drive: DriveConfig,
    env: Envelope,
    mode: MotionalMode,
    sign: int,
    *,
    nbar: float = 0.0,
    t_start: float = 0.0,
    samples_per_period: float = DEFAULT_SAMPLES_PER_PERIOD,
) -> GateChannel:
    couplings = state_couplings(drive, mode, sign)
    trajs = [
        displacement_trajectory(
            drive, env, c, t_start=t_start, samples_per_period=samples_per_period,
            basis_state=BASIS_LABELS[i],
        )
        for i, c in enumerate(couplings)
    ]
    phases = np.array([t.geometric_phase for t in trajs])
    residuals = np.array([t.final_displacement for t in trajs])
    return GateChannel(phases, residuals, nbar, trajs)


def compose_symmetrized_gate(half1: GateChannel, half2: GateChannel) -> GateChannel:
    """Two halves separated by a spin flip of both qubits, labelled by the initial state.

    A state ``s`` runs the first half as ``s`` and the second as ``flip(s)``;
    the displacements compose as D(b) D(a) = D(a + b) exp(i Im(b a*)).
    """
    a = half1.residuals
    b = half2.residuals[FLIP]
    phases = half1.phases + half2.phases[FLIP] + np.imag(b * np.conj(a))
    return GateChannel(phases, a + b, max(half1.nbar, half2.nbar))


def calibrate_drive(
    drive: DriveConfig,
    env: Envelope,
    mode: MotionalMode,
    sign: int,
    target: float = math.pi / 2,
    **kw,
) -> DriveConfig:
    """Rescale all couplings so the symmetrised gate has Phi = ``target`` mod 2 pi.

    The loop area is quadratic in the coupling, so one evaluation fixes the scale.
    """
    h1 = gate_half_channel(drive, env, mode, sign, **kw)
    h2 = gate_half_channel(drive, env, mode, sign, t_start=env.duration, **kw)
    phi = compose_symmetrized_gate(h1, h2).entangling_phase
    if phi == 0:
        raise ValueError("drive produces no entangling phase; couplings cannot be scaled")
    goal = target % (2 * math.pi)
    if phi < 0:
        goal -= 2 * math.pi
    return drive.scaled(math.sqrt(goal / phi))


# ---------------------------------------------------------------------------
# light shift


@dataclass
class LightShiftResult:
    optical_phases: np.ndarray
    theta_a: np.ndarray
    theta_b: np.ndarray
    infidelity: np.ndarray

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.infidelity))


def light_shift_amplitudes(
    drive: DriveConfig,
    env: Envelope,
    *,
    t_start: float = 0.0,
    samples_per_period: float = DEFAULT_SAMPLES_PER_PERIOD,
) -> tuple[complex, complex]:
    """Complex amplitudes Z_j with theta_j(phi) = Re(Z_j exp(i phi))."""
    n, h = _grid(env.duration, drive.difference_frequency, samples_per_period)
    u = np.linspace(0.0, env.duration, n + 1)
    carrier = np.exp(1j * 2 * math.pi * drive.difference_frequency * (t_start + u))
    integrand = 2 * math.pi * env(u) * carrier

    def trap(y, step):
        return step * (np.sum(y) - 0.5 * (y[0] + y[-1]))

    z = (4 * trap(integrand, h) - trap(integrand[::2], 2 * h)) / 3
    za = drive.light_shift_a * z * np.exp(1j * drive.light_shift_offset_a)
    zb = drive.light_shift_b * z * np.exp(1j * drive.light_shift_offset_b)
    return complex(za), complex(zb)


def light_shift_phase(
    drive: DriveConfig,
    env: Envelope,
    *,
    t_start: float = 0.0,
    n_phases: int = N_PHASE_GRID,
    samples_per_period: float = DEFAULT_SAMPLES_PER_PERIOD,
) -> LightShiftResult:
    """Single-qubit phases from the oscillating light shift and the resulting
    Bell-state infidelity, on a uniform grid of the uncontrolled optical phase."""
    za, zb = light_shift_amplitudes(drive, env, t_start=t_start, samples_per_period=samples_per_period)
    phis = 2 * math.pi * np.arange(n_phases) / n_phases
    rot = np.exp(1j * phis)
    theta_a = np.real(za * rot)
    theta_b = np.real(zb * rot)
    infidelity = np.sin((theta_a + theta_b) / 2) ** 2
    return LightShiftResult(phis, theta_a, theta_b, infidelity)


def calibrate_light_shift(
    drive: DriveConfig,
    env: Envelope,
    target_error: float,
    *,
    ratio_b: float = 1.0,
    **kw,
) -> DriveConfig:
    """Choose A_a (with A_b = ratio_b * A_a) so the phase-averaged error equals ``target_error``."""
    from scipy.optimize import brentq

    def miss(amp):
        d = replace(drive, light_shift_a=amp, light_shift_b=ratio_b * amp)
        return light_shift_phase(d, env, **kw).mean_error - target_error

    # first bracket where the error is still monotone in the amplitude
    hi = drive.difference_frequency * 1e-3
    while miss(hi) < 0:
        hi *= 2
        if hi > 1e3 * drive.difference_frequency:
            raise ValueError("light-shift target error not reachable")
    amp = brentq(miss, 0.0, hi, xtol=1e-9, rtol=1e-13)
    return replace(drive, light_shift_a=amp, light_shift_b=ratio_b * amp)


# ---------------------------------------------------------------------------
# truncated Fock-space oracle


def thermal_weights(nbar: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    if nbar <= 0:
        w = np.zeros(n_max + 1)
        w[0] = 1.0
        return w
    q = nbar / (1 + nbar)
    w = q**n
    return w / w.sum()


def ladder_coefficients(
    drive: DriveConfig,
    mode: MotionalMode,
    sign: int,
    basis_index: int,
    n_max: int,
    coupling_model: str = "lamb-dicke",
) -> np.ndarray:
    """<n+1| H |n> / (2 pi env exp(i theta)) for n = 0 .. n_max - 1.

    ``full`` replaces eta sqrt(n+1) by the exact sideband element
    eta exp(-eta^2/2) L_n^1(eta^2) / sqrt(n+1) for each ion (experimental).
    """
    sa, sb = basis_spins(basis_index)
    n = np.arange(n_max, dtype=float)
    if coupling_model == "lamb-dicke":
        c = mode.eta_a * drive.omega("a", sa) + sign * mode.eta_b * drive.omega("b", sb)
        return c * np.sqrt(n + 1)
    if coupling_model == "full":
        out = np.zeros(n_max)
        for eta, om in ((mode.eta_a, drive.omega("a", sa)), (sign * mode.eta_b, drive.omega("b", sb))):
            e = abs(eta)
            elem = e * math.exp(-e * e / 2) * eval_genlaguerre(n, 1, e * e) / np.sqrt(n + 1)
            out += math.copysign(1.0, eta) * om * elem
        return out
    raise ValueError(f"unknown coupling model {coupling_model!r}")


@dataclass
class OracleResult:
    unitaries: np.ndarray  # (4, N, N)
    weights: np.ndarray  # thermal weights of the initial Fock states
    leakage: float
    converged: bool
    steps: int

    @property
    def n_max(self) -> int:
        return self.unitaries.shape[1] - 1

    def multipliers(self) -> np.ndarray:
        """M_ij = sum_n p_n <n| U_j^dag U_i |n>."""
        U = self.unitaries
        w = self.weights
        # columns of U_i are U_i|n>
        return np.einsum("n,ikn,jkn->ij", w, U, np.conj(U))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return rho * self.multipliers()

    def joint_state(self, rho_qubits: np.ndarray) -> np.ndarray:
        """Full (4N x 4N) qubit-mode density matrix for qubit input ``rho_qubits``."""
        N = self.unitaries.shape[1]
        big = np.zeros((4 * N, 4 * N), dtype=complex)
        rho_m = np.diag(self.weights).astype(complex)
        for i in range(4):
            for j in range(4):
                blk = rho_qubits[i, j] * self.unitaries[i] @ rho_m @ self.unitaries[j].conj().T
                big[i * N:(i + 1) * N, j * N:(j + 1) * N] = blk
        return big


LEAKAGE_LIMIT = 1e-8


def propagate_mode(
    ladder: np.ndarray,
    drive: DriveConfig,
    env: Envelope,
    y0: np.ndarray,
    *,
    t_start: float = 0.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    max_steps: int = 2_000_000,
) -> tuple[np.ndarray, int, bool]:
    """Integrate the driven mode over one envelope, segment by segment between
    the envelope's kinks so the stepper never straddles one."""
    omega = 2 * math.pi * drive.gate_detuning
    y = np.ascontiguousarray(y0, dtype=np.complex128)
    ladder = np.ascontiguousarray(ladder, dtype=np.float64)
    steps, ok = 0, True
    bps = env.breakpoints()
    for lo, hi in zip(bps[:-1], bps[1:]):
        h0 = (hi - lo) * 1e-3
        y, acc, rej, done = kernels.propagate_ladder(
            y, ladder, omega, drive.optical_phase, env.code, t_start, env.duration,
            env.effective_ramp, t_start + lo, t_start + hi, rtol, atol, h0, max_steps,
        )
        steps += acc + rej
        ok = ok and done
    return np.asarray(y), steps, ok


def fock_oracle(
    drive: DriveConfig,
    env: Envelope,
    mode: MotionalMode,
    sign: int,
    *,
    n_max: int = 30,
    nbar: float = 0.0,
    t_start: float = 0.0,
    coupling_model: str = "lamb-dicke",
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> OracleResult:
    """Integrate each basis state's driven mode in a number basis truncated at ``n_max``."""
    if n_max < 10:
        raise ValueError("n_max must be at least 10")
    N = n_max + 1
    weights = thermal_weights(nbar, n_max)
    unitaries = np.empty((4, N, N), dtype=complex)
    steps, ok = 0, True
    for s in range(4):
        lad = ladder_coefficients(drive, mode, sign, s, n_max, coupling_model)
        U, st, done = propagate_mode(
            lad, drive, env, np.eye(N, dtype=complex), t_start=t_start, rtol=rtol, atol=atol
        )
        unitaries[s] = U
        steps += st
        ok = ok and done
    leakage = float(np.max(np.einsum("n,skn->sk", weights, np.abs(unitaries) ** 2)[:, -1]))
    converged = ok and leakage <= LEAKAGE_LIMIT
    return OracleResult(unitaries, weights, leakage, converged, steps)
