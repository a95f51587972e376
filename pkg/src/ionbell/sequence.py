"""Pulse programs for the two-qubit gate experiment and their execution.

Each qubit is tracked in the rotating frame of its own local oscillator.
Rotations use R(theta, phi) = cos(theta/2) I - i sin(theta/2)(cos phi X + sin phi Y)
with |down> = (1, 0); free precession at detuning f applies exp(-i 2 pi f t sigma_z / 2)
where sigma_z |up> = +|up>.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .crystal import MotionalMode
from .noise import DriftModel, DriftState, ScatteringChannel, depolarize, drift_step, prepared_state

PHI_PLUS = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)

# Calibrated phases of the Ramsey pi/2 pulses (both pairs) and the echo pi pulses.
RAMSEY_PHASE_A = 0.0
RAMSEY_PHASE_B = math.pi / 2
ECHO_PHASE = 0.0
# Phase of the CHSH analysis pulses; gives E = cos(theta_a - theta_b) on the Bell state.
CHSH_PHASE = math.pi / 2
# P_odd(phi) = (1 - C sin(2 phi + PARITY_OFFSET)) / 2 for the ideal output state.
PARITY_OFFSET = -math.pi / 2

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


class SequenceError(ValueError):
    """Malformed pulse program."""


def rotation_unitary(theta: float, phi: float) -> np.ndarray:
    axis = math.cos(phi) * _X + math.sin(phi) * _Y
    return math.cos(theta / 2) * _I2 - 1j * math.sin(theta / 2) * axis


def z_unitary(angle: float) -> np.ndarray:
    """exp(-i angle sigma_z / 2)."""
    return np.diag([np.exp(1j * angle / 2), np.exp(-1j * angle / 2)])


def embed(u: np.ndarray, target: str) -> np.ndarray:
    if target == "a":
        return np.kron(u, _I2)
    if target == "b":
        return np.kron(_I2, u)
    raise SequenceError(f"unknown qubit {target!r}")


# ---------------------------------------------------------------------------
# program representation


@dataclass(frozen=True)
class Prepare:
    op = "prepare"


@dataclass(frozen=True)
class Rotate:
    target: str
    theta: float
    phase: float = 0.0
    duration: float = 0.0
    op = "rotate"

    def __post_init__(self):
        if self.target not in ("a", "b"):
            raise SequenceError(f"rotation target must be 'a' or 'b', got {self.target!r}")
        if not 0 <= self.theta < 2 * math.pi:
            raise SequenceError(f"theta must lie in [0, 2 pi), got {self.theta}")
        if self.duration < 0:
            raise SequenceError("duration must be non-negative")


@dataclass(frozen=True)
class GateHalf:
    drive: str = "main"
    op = "gate_half"


@dataclass(frozen=True)
class Wait:
    duration: float
    op = "wait"

    def __post_init__(self):
        if self.duration < 0:
            raise SequenceError("duration must be non-negative")


@dataclass(frozen=True)
class Measure:
    op = "measure"


_OPS = {cls.op: cls for cls in (Prepare, Rotate, GateHalf, Wait, Measure)}


def op_to_dict(op) -> dict:
    return {"op": op.op, **asdict(op)}


def op_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("op", None)
    if kind not in _OPS:
        raise SequenceError(f"unknown op {kind!r}")
    try:
        return _OPS[kind](**d)
    except TypeError as exc:
        raise SequenceError(f"bad fields for {kind}: {exc}") from None


def program_to_json(program) -> str:
    return json.dumps([op_to_dict(op) for op in program], indent=1, sort_keys=True)


def program_from_json(text: str) -> list:
    return [op_from_dict(d) for d in json.loads(text)]


def validate_program(program) -> None:
    if not program or not isinstance(program[0], Prepare):
        raise SequenceError("program must start with Prepare")
    for k, op in enumerate(program):
        if k > 0 and isinstance(op, Prepare):
            raise SequenceError(f"Prepare at position {k}; only the first op may prepare")
        if isinstance(op, Measure) and k != len(program) - 1:
            raise SequenceError(f"Measure at position {k} is not the last op")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GateSetup:
    """Everything a GateHalf needs: drive, envelope, mode and force sign."""

    drive: dyn.DriveConfig
    envelope: dyn.Envelope
    mode: MotionalMode
    sign: int = -1
    nbar: float = 0.0
    samples_per_period: float = dyn.DEFAULT_SAMPLES_PER_PERIOD
    n_max: int = 30
    coupling_model: str = "lamb-dicke"

    def with_phase_offset(self, offset: float) -> "GateSetup":
        d = replace(self.drive, optical_phase=self.drive.optical_phase + offset)
        return replace(self, drive=d)


@dataclass(frozen=True)
class SequenceNoise:
    prep_error_a: float = 0.0
    prep_error_b: float = 0.0
    p_scat: float = 0.0
    detuning_a: float = 0.0  # qubit minus LO frequency, Hz
    detuning_b: float = 0.0
    drift: DriftModel | None = None
    light_shift: bool = True


@dataclass
class PhaseTracker:
    """Per-qubit LO phase and accumulated qubit-vs-LO precession."""

    lo_frequency: tuple[float, float] = (0.0, 0.0)
    detuning: tuple[float, float] = (0.0, 0.0)
    elapsed: float = 0.0

    def advance(self, dt: float) -> None:
        if dt < 0:
            raise ValueError("time only runs forward")
        self.elapsed += dt

    @property
    def lo_phase(self) -> tuple[float, float]:
        return tuple(2 * math.pi * f * self.elapsed for f in self.lo_frequency)

    @property
    def precession(self) -> tuple[float, float]:
        return tuple(2 * math.pi * f * self.elapsed for f in self.detuning)


@dataclass
class TwoQubitState:
    rho: np.ndarray
    displacements: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=complex))
    nbar: float = 0.0
    collapsed: int = 0  # times the mode record had to be traced out mid-program
    time: float = 0.0

    def validate(self, tol: float = 1e-12, psd_tol: float = 1e-9) -> None:
        r = self.rho
        if np.max(np.abs(r - r.conj().T)) > tol:
            raise AssertionError("density matrix not Hermitian")
        if abs(np.trace(r).real - 1) > tol:
            raise AssertionError(f"trace {np.trace(r).real!r} != 1")
        if np.min(np.linalg.eigvalsh(r)) < -psd_tol:
            raise AssertionError("density matrix has a negative eigenvalue")

    @property
    def populations(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.rho)), 0.0, None)

    def fidelity(self, target: np.ndarray = PHI_PLUS) -> float:
        return float(np.real(np.conj(target) @ self.rho @ target))


# ---------------------------------------------------------------------------
# engines


def _is_monomial(u: np.ndarray) -> np.ndarray | None:
    """Return the column -> row permutation if ``u`` has one non-zero per column."""
    nz = np.abs(u) > 1e-12
    if not np.all(nz.sum(axis=0) == 1):
        return None
    return np.argmax(nz, axis=0)


class _AnalyticEngine:
    """Qubit density matrix plus one coherent displacement per basis state.

    Exact while every non-diagonal operation is monomial or acts while all
    displacements coincide; otherwise the mode is traced out (counted in
    ``state.collapsed``) and the record restarts from zero.
    """

    def __init__(self, rho0: np.ndarray, nbar: float):
        self.state = TwoQubitState(rho0.astype(complex), np.zeros(4, dtype=complex), nbar)

    @property
    def _uniform(self) -> bool:
        b = self.state.displacements
        # differences this small change coherences by O(1e-24)
        return bool(np.all(np.abs(b - b[0]) < 1e-12))

    def collapse(self) -> None:
        s = self.state
        if self._uniform:
            return
        b = s.displacements
        cross = np.imag(b[:, None] * np.conj(b[None, :]))
        s.rho = s.rho * np.exp(1j * cross) * dyn.thermal_overlap(b[:, None] - b[None, :], s.nbar)
        s.displacements = np.zeros(4, dtype=complex)
        s.collapsed += 1

    def unitary(self, u: np.ndarray) -> None:
        s = self.state
        perm = _is_monomial(u)
        if perm is not None:
            new = np.empty(4, dtype=complex)
            new[perm] = s.displacements
            s.displacements = new
        elif not self._uniform:
            self.collapse()
        s.rho = u @ s.rho @ u.conj().T

    def gate(self, half: dyn.GateChannel) -> None:
        s = self.state
        b = s.displacements
        a = half.residuals
        ph = half.phases + np.imag(a * np.conj(b))
        s.rho = s.rho * np.exp(1j * (ph[:, None] - ph[None, :]))
        s.displacements = a + b

    def channel(self, fn) -> None:
        self.collapse()
        self.state.rho = fn(self.state.rho)

    def result(self) -> TwoQubitState:
        self.collapse()
        return self.state


class _OracleEngine:
    """Joint (4N x 4N) density matrix of the qubits and the truncated mode."""

    def __init__(self, rho0: np.ndarray, nbar: float, n_max: int):
        self.N = n_max + 1
        self.nbar = nbar
        w = dyn.thermal_weights(nbar, n_max)
        self.rho = np.kron(rho0.astype(complex), np.diag(w).astype(complex))
        self.leakage = 0.0
        self.converged = True

    def unitary(self, u: np.ndarray) -> None:
        big = np.kron(u, np.eye(self.N))
        self.rho = big @ self.rho @ big.conj().T

    def gate_oracle(self, res: dyn.OracleResult) -> None:
        N = self.N
        big = np.zeros((4 * N, 4 * N), dtype=complex)
        for s in range(4):
            big[s * N:(s + 1) * N, s * N:(s + 1) * N] = res.unitaries[s]
        self.rho = big @ self.rho @ big.conj().T
        self.leakage = max(self.leakage, res.leakage)
        self.converged = self.converged and res.converged

    def channel(self, fn) -> None:
        # the qubit channels used here are affine in rho and act blockwise on the mode index
        N = self.N
        r = self.rho.reshape(4, N, 4, N)
        out = np.empty_like(r)
        for m in range(N):
            for n in range(N):
                out[:, m, :, n] = fn(r[:, m, :, n])
        self.rho = out.reshape(4 * N, 4 * N)

    def reduced(self) -> np.ndarray:
        N = self.N
        return np.einsum("imjm->ij", self.rho.reshape(4, N, 4, N))


def _prepare_noise(noise: SequenceNoise, seed) -> tuple[float, float]:
    """Static qubit detunings for one run, including a sampled field drift."""
    da, db = noise.detuning_a, noise.detuning_b
    model = noise.drift
    if model is not None:
        rng = np.random.default_rng(seed)
        st = DriftState(model.b0, model.order)
        st = drift_step(model, st, model.correlation_time, rng)
        fa, fb = model.qubit_frequencies(st.b_common, st.order)
        la, lb = model.qubit_frequencies(model.b0, "AB")
        da, db = da + fa - la, db + fb - lb
    return da, db


def _lookup(gates, name: str) -> GateSetup:
    if gates is None:
        raise SequenceError("GateHalf used but no gate drive is configured")
    if isinstance(gates, GateSetup):
        gates = {"main": gates}
    if name not in gates:
        raise SequenceError(f"GateHalf refers to unknown drive {name!r}")
    return gates[name]


def _light_shift_unitary(setup: GateSetup, t_start: float) -> np.ndarray | None:
    d = setup.drive
    if d.light_shift_a == 0 and d.light_shift_b == 0:
        return None
    za, zb = dyn.light_shift_amplitudes(
        d, setup.envelope, t_start=t_start, samples_per_period=setup.samples_per_period
    )
    rot = np.exp(1j * d.optical_phase)
    ta, tb = float(np.real(za * rot)), float(np.real(zb * rot))
    return np.kron(z_unitary(ta), z_unitary(tb))


def _precession(da: float, db: float, dt: float) -> np.ndarray:
    # exp(-i 2 pi f dt sigma_z / 2) per qubit
    return np.kron(z_unitary(2 * math.pi * da * dt), z_unitary(2 * math.pi * db * dt))


def run_sequence(
    program,
    gates: GateSetup | dict | None = None,
    noise: SequenceNoise | None = None,
    *,
    seed=None,
    engine: str = "analytic",
    tracker: PhaseTracker | None = None,
    check_invariants: bool = False,
) -> TwoQubitState:
    """Execute ``program`` and return the final two-qubit state.

    ``engine`` is ``"analytic"`` (coherent-state bookkeeping) or ``"oracle"``
    (truncated Fock space). Deterministic for fixed inputs and seed.
    """
    validate_program(program)
    noise = noise or SequenceNoise()
    da, db = _prepare_noise(noise, seed)
    tracker = tracker or PhaseTracker()
    tracker.detuning = (da, db)
    n_halves = sum(isinstance(op, GateHalf) for op in program)
    scatter = ScatteringChannel(noise.p_scat, max(n_halves, 1)) if noise.p_scat > 0 else None

    nbar, n_max = 0.0, 30
    for op in program:
        if isinstance(op, GateHalf):
            setup = _lookup(gates, op.drive)
            nbar, n_max = setup.nbar, setup.n_max
            break
    rho0 = prepared_state(noise.prep_error_a, noise.prep_error_b)
    if engine == "analytic":
        eng = _AnalyticEngine(rho0, nbar)
    elif engine == "oracle":
        eng = _OracleEngine(rho0, nbar, n_max)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    def idle(dt):
        if dt > 0 and (da or db):
            eng.unitary(_precession(da, db, dt))
        tracker.advance(dt)

    def check():
        if not check_invariants:
            return
        rho = eng.state.rho if engine == "analytic" else eng.reduced()
        TwoQubitState(rho).validate()

    for op in program[1:]:
        if isinstance(op, Rotate):
            idle(op.duration)
            eng.unitary(embed(rotation_unitary(op.theta, op.phase), op.target))
        elif isinstance(op, Wait):
            idle(op.duration)
        elif isinstance(op, GateHalf):
            setup = _lookup(gates, op.drive)
            t0 = tracker.elapsed
            if engine == "analytic":
                half = dyn.gate_half_channel(
                    setup.drive, setup.envelope, setup.mode, setup.sign,
                    nbar=setup.nbar, t_start=t0, samples_per_period=setup.samples_per_period,
                )
                eng.gate(half)
            else:
                res = dyn.fock_oracle(
                    setup.drive, setup.envelope, setup.mode, setup.sign, n_max=setup.n_max,
                    nbar=setup.nbar, t_start=t0, coupling_model=setup.coupling_model,
                )
                eng.gate_oracle(res)
            if noise.light_shift:
                u = _light_shift_unitary(setup, t0)
                if u is not None:
                    eng.unitary(u)
            idle(setup.envelope.duration)
            if scatter is not None:
                eng.channel(scatter.apply)
        check()

    if engine == "analytic":
        out = eng.result()
    else:
        out = TwoQubitState(eng.reduced(), nbar=nbar)
    out.rho = 0.5 * (out.rho + out.rho.conj().T)
    out.time = tracker.elapsed
    return out


# ---------------------------------------------------------------------------
# canonical programs


def analysis_pulses(kind: str | None, **kw) -> list:
    """Pulses placed after the Ramsey interferometer.

    ``parity``: R(pi/2, phi) on both qubits. ``chsh``: R(theta_a, CHSH_PHASE)
    on a and R(theta_b, CHSH_PHASE) on b. ``tomography``: the pair of local
    basis changes named by ``setting`` (e.g. ``"XZ"``).
    """
    if kind is None:
        return []
    if kind == "parity":
        phi = kw["phi"]
        return [Rotate("a", math.pi / 2, phi), Rotate("b", math.pi / 2, phi)]
    if kind == "chsh":
        out = []
        for q, th in (("a", kw["theta_a"]), ("b", kw["theta_b"])):
            th = th % (2 * math.pi)
            if th:
                out.append(Rotate(q, th, CHSH_PHASE))
        return out
    if kind == "tomography":
        out = []
        for q, basis in zip("ab", kw["setting"]):
            rot = TOMOGRAPHY_ROTATIONS[basis]
            if rot is not None:
                out.append(Rotate(q, *rot))
        return out
    raise SequenceError(f"unknown analysis {kind!r}")


# (theta, phi) mapping each Pauli eigenbasis onto the measured z basis
TOMOGRAPHY_ROTATIONS = {"Z": None, "X": (math.pi / 2, math.pi / 2), "Y": (math.pi / 2, 0.0)}


def bell_program(
    analysis: str | None = None,
    *,
    echo: bool = True,
    drive: str = "main",
    pulse_duration: float = 0.0,
    **analysis_kw,
) -> list:
    """Ramsey pi/2 pair, gate half, echo pi pair, gate half, echo pi pair,
    Ramsey pi/2 pair, optional analysis pulses, measurement."""

    def pair(theta, pa, pb):
        return [Rotate("a", theta, pa, pulse_duration), Rotate("b", theta, pb, pulse_duration)]

    prog = [Prepare()]
    prog += pair(math.pi / 2, RAMSEY_PHASE_A, RAMSEY_PHASE_B)
    prog.append(GateHalf(drive))
    if echo:
        prog += pair(math.pi, ECHO_PHASE, ECHO_PHASE)
    prog.append(GateHalf(drive))
    if echo:
        prog += pair(math.pi, ECHO_PHASE, ECHO_PHASE)
    prog += pair(math.pi / 2, RAMSEY_PHASE_A, RAMSEY_PHASE_B)
    prog += analysis_pulses(analysis, **analysis_kw)
    prog.append(Measure())
    return prog


def gate_phase_independence_check(program, setup: GateSetup, offsets, **kw) -> float:
    """Spread (max - min) of the Bell fidelity over gate-drive phase offsets."""
    fids = [run_sequence(program, setup.with_phase_offset(o), **kw).fidelity() for o in offsets]
    return float(max(fids) - min(fids))
