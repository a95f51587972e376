"""Readout, sampling and environmental error models.

Readout is a per-ion 2x2 column-stochastic confusion matrix (columns are the
true state, rows the recorded outcome, both ordered ``(down, up)``). The
up state is the shelved, dark one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit

from .constants import SENSITIVITY_CA40, SENSITIVITY_CA43, SPLITTING_CA40, SPLITTING_CA43
from .crystal import Order

OUTCOMES = ("dd", "du", "ud", "uu")
MAX_P_SCAT = 0.1


@dataclass(frozen=True)
class ConfusionMatrix:
    eps_dark: float = 0.0  # P(read down | up prepared)
    eps_bright: float = 0.0  # P(read up | down prepared)

    def __post_init__(self):
        for name in ("eps_dark", "eps_bright"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @classmethod
    def symmetric(cls, eps: float) -> "ConfusionMatrix":
        return cls(eps, eps)

    @property
    def mean_error(self) -> float:
        return 0.5 * (self.eps_dark + self.eps_bright)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[1 - self.eps_bright, self.eps_dark], [self.eps_bright, 1 - self.eps_dark]]
        )


IDEAL_READOUT = ConfusionMatrix()


def joint_confusion(ca: ConfusionMatrix, cb: ConfusionMatrix) -> np.ndarray:
    return np.kron(ca.matrix, cb.matrix)


def apply_confusion(true_populations, ca: ConfusionMatrix, cb: ConfusionMatrix) -> np.ndarray:
    p = np.asarray(true_populations, dtype=float)
    return joint_confusion(ca, cb) @ p


@dataclass
class ShotSet:
    """Outcome counts for one measurement setting, ordered (dd, du, ud, uu)."""

    counts: np.ndarray
    seed: int | None = None
    setting: str = ""

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (4,):
            raise ValueError("ShotSet needs exactly four outcome counts")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def to_dict(self) -> dict:
        return {
            "setting": self.setting,
            "counts": {k: int(v) for k, v in zip(OUTCOMES, self.counts)},
            "total": self.total,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShotSet":
        counts = d["counts"]
        if isinstance(counts, dict):
            counts = [counts[k] for k in OUTCOMES]
        shots = cls(np.asarray(counts), d.get("seed"), d.get("setting", ""))
        if "total" in d and d["total"] != shots.total:
            raise ValueError(f"setting {shots.setting!r}: counts do not sum to total")
        return shots


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_shots(distribution, n: int, seed=None, setting: str = "") -> ShotSet:
    """Multinomial sample of ``n`` shots; reproducible for a fixed integer seed."""
    if n <= 0:
        raise ValueError("number of shots must be positive")
    p = np.clip(np.asarray(distribution, dtype=float), 0.0, None)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"distribution sums to {p.sum()}, not 1")
    p = p / p.sum()
    counts = _rng(seed).multinomial(n, p)
    return ShotSet(counts, seed if isinstance(seed, (int, np.integer)) else None, setting)


# ---------------------------------------------------------------------------
# quantum channels on the two-qubit density matrix


def _partial_replace(rho: np.ndarray, qubit: int) -> np.ndarray:
    """Trace out ``qubit`` and put back the maximally mixed state."""
    r = rho.reshape(2, 2, 2, 2)
    if qubit == 0:
        red = np.einsum("ajak->jk", r)
        return np.kron(np.eye(2) / 2, red)
    red = np.einsum("iaja->ij", r)
    return np.kron(red, np.eye(2) / 2)


def depolarize(rho: np.ndarray, strength_a: float, strength_b: float) -> np.ndarray:
    out = (1 - strength_a) * rho + strength_a * _partial_replace(rho, 0)
    return (1 - strength_b) * out + strength_b * _partial_replace(out, 1)


@dataclass(frozen=True)
class ScatteringChannel:
    """Per-qubit depolarisation whose ``applications`` uses together cost the
    Bell state a fidelity ``p_scat``."""

    p_scat: float
    applications: int = 1

    def __post_init__(self):
        if not 0 <= self.p_scat <= MAX_P_SCAT:
            raise ValueError(f"p_scat must lie in [0, {MAX_P_SCAT}]")
        if self.applications < 1:
            raise ValueError("applications must be >= 1")

    @property
    def strength(self) -> float:
        # Bell fidelity after both qubits depolarised with x: 1 - 3x/2 + 3x^2/4
        total = 1 - math.sqrt(1 - 4 * self.p_scat / 3)
        return 1 - (1 - total) ** (1 / self.applications)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        x = self.strength
        return depolarize(rho, x, x) if x else rho


def scattering_channel(p_scat: float, applications: int = 1) -> ScatteringChannel:
    return ScatteringChannel(p_scat, applications)


def prepared_state(error_a: float = 0.0, error_b: float = 0.0) -> np.ndarray:
    """|dd><dd| with each qubit leaking to |u> with its preparation error."""
    ra = np.diag([1 - error_a, error_a])
    rb = np.diag([1 - error_b, error_b])
    return np.kron(ra, rb).astype(complex)


# ---------------------------------------------------------------------------
# magnetic-field drift, ion order and calibration


@dataclass(frozen=True)
class DriftModel:
    """Common field drift (Ornstein-Uhlenbeck about ``b0``) plus a static axial gradient.

    The field at the left ion is ``B - delta_b / 2`` and at the right ion
    ``B + delta_b / 2``; order ``AB`` puts species a on the left.
    """

    b0: float = 0.2e-3  # T
    delta_b: float = 0.18e-6  # T
    volatility: float = 0.0  # T / sqrt(s)
    correlation_time: float = 1.0  # s
    sensitivity_a: float = SENSITIVITY_CA40  # Hz / T
    sensitivity_b: float = SENSITIVITY_CA43
    splitting_a: float = SPLITTING_CA40  # Hz at b0
    splitting_b: float = SPLITTING_CA43
    order: Order = Order.AB
    flip_probability: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "order", Order(self.order))
        if self.b0 <= 0:
            raise ValueError("b0 must be positive")

    def ion_fields(self, b_common: float, order: Order | None = None) -> tuple[float, float]:
        order = self.order if order is None else Order(order)
        left, right = b_common - self.delta_b / 2, b_common + self.delta_b / 2
        return (left, right) if order is Order.AB else (right, left)

    def qubit_frequencies(self, b_common: float | None = None, order: Order | None = None):
        b = self.b0 if b_common is None else b_common
        ba, bb = self.ion_fields(b, order)
        fa = self.splitting_a + self.sensitivity_a * (ba - self.b0)
        fb = self.splitting_b + self.sensitivity_b * (bb - self.b0)
        return fa, fb

    def order_signature(self) -> tuple[float, float]:
        """Qubit-frequency change of each ion when the crystal order is reversed."""
        f_ab = self.qubit_frequencies(self.b0, Order.AB)
        f_ba = self.qubit_frequencies(self.b0, Order.BA)
        return f_ba[0] - f_ab[0], f_ba[1] - f_ab[1]


@dataclass
class DriftState:
    b_common: float
    order: Order
    time: float = 0.0


def drift_step(model: DriftModel, state: DriftState, dt: float, rng=None) -> DriftState:
    """Advance the common field by ``dt`` with the exact OU transition."""
    if model.volatility == 0 or dt == 0:
        return replace(state, time=state.time + dt)
    rng = _rng(rng)
    tau = model.correlation_time
    decay = math.exp(-dt / tau)
    sd = model.volatility * math.sqrt(tau / 2 * (1 - decay**2))
    b = model.b0 + (state.b_common - model.b0) * decay + sd * rng.standard_normal()
    return replace(state, b_common=b, time=state.time + dt)


def detect_order(model: DriftModel, detuning_a: float, detuning_b: float, target: Order = Order.AB):
    """Split measured qubit detunings into a common field shift and an order flag.

    Detunings are measured against local oscillators set up for ``target``.
    Returns ``(order_estimate, common_field_shift)``.
    """
    ua = detuning_a / model.sensitivity_a
    ub = detuning_b / model.sensitivity_b
    # swapping moves ion a by +delta_b and ion b by -delta_b when target is AB
    direction = 1.0 if Order(target) is Order.AB else -1.0
    w = direction * (ua - ub) / (2 * model.delta_b)
    common = 0.5 * (ua + ub)
    wrong = w > 0.5
    other = Order.BA if Order(target) is Order.AB else Order.AB
    return (other if wrong else Order(target)), common


def reorder(model: DriftModel, current: Order, rng=None, target: Order = Order.AB,
            max_cycles: int = 10_000) -> tuple[Order, int]:
    """Melt and recool until the crystal is in ``target`` order.

    Each cycle leaves the crystal reversed with ``flip_probability``.
    Returns the final order and the number of cycles used.
    """
    rng = _rng(rng)
    order, cycles = Order(current), 0
    while order is not Order(target):
        if cycles >= max_cycles:
            break
        cycles += 1
        if rng.random() < model.flip_probability:
            order = Order.BA if order is Order.AB else Order.AB
    return order, cycles


def rabi_lineshape(detuning, duration: float, amplitude: float = 1.0):
    """Excitation probability after a resonant pi-pulse time ``duration`` at ``detuning`` (Hz)."""
    rabi = 1 / (2 * duration)
    gen = np.sqrt(rabi**2 + np.asarray(detuning) ** 2)
    return amplitude * (rabi / gen) ** 2 * np.sin(np.pi * gen * duration) ** 2


@dataclass
class ProbeResult:
    estimate: float
    sigma: float
    converged: bool
    scan: np.ndarray = field(repr=False, default=None)
    counts: np.ndarray = field(repr=False, default=None)


def calibration_probe(
    true_detuning: float,
    duration: float = 100e-6,
    rng=None,
    *,
    n_points: int = 41,
    shots: int = 100,
    span: float = 2.0,
) -> ProbeResult:
    """Scan a slow carrier pi-pulse across +-``span``/duration and fit the line centre."""
    if not duration > 0:
        raise ValueError("probe duration must be positive")
    rng = _rng(rng)
    scan = np.linspace(-span / duration, span / duration, n_points)
    p = rabi_lineshape(true_detuning - scan, duration)
    counts = rng.binomial(shots, p)
    frac = counts / shots
    guess = scan[int(np.argmax(frac))]

    def model(x, centre, amp):
        return rabi_lineshape(centre - x, duration, amp)

    sig = np.sqrt(np.clip(frac * (1 - frac), 1.0 / shots, None) / shots)
    try:
        popt, pcov = curve_fit(model, scan, frac, p0=[guess, 1.0], sigma=sig, maxfev=2000)
        centre, err = float(popt[0]), float(np.sqrt(pcov[0, 0]))
        ok = bool(np.isfinite(err) and abs(centre) <= span / duration)
    except (RuntimeError, ValueError):
        centre, err, ok = float("nan"), float("inf"), False
    return ProbeResult(centre, err, ok, scan, counts)


@dataclass
class CalibrationReport:
    estimates: tuple[float, float]
    order_flagged: bool
    reorder_cycles: int
    lo_frequencies: tuple[float, float]
    final_order: Order
    converged: bool


def calibration_cycle(
    model: DriftModel,
    actual: DriftState,
    lo_frequencies: tuple[float, float],
    rng=None,
    *,
    probe_duration: float = 100e-6,
    target: Order = Order.AB,
    **probe_kw,
) -> tuple[CalibrationReport, DriftState]:
    """Probe both qubits, fix the order if it is wrong, then retune both LOs.

    A failed fit leaves the previous LO settings in place and marks the
    report unconverged.
    """
    rng = _rng(rng)
    state = actual
    cycles, flagged = 0, False
    for _ in range(2):
        fa, fb = model.qubit_frequencies(state.b_common, state.order)
        pa = calibration_probe(fa - lo_frequencies[0], probe_duration, rng, **probe_kw)
        pb = calibration_probe(fb - lo_frequencies[1], probe_duration, rng, **probe_kw)
        if not (pa.converged and pb.converged):
            report = CalibrationReport(
                (pa.estimate, pb.estimate), flagged, cycles, lo_frequencies, state.order, False
            )
            return report, state
        order_est, _ = detect_order(model, pa.estimate, pb.estimate, target)
        if order_est is Order(target):
            break
        flagged = True
        new_order, used = reorder(model, state.order, rng, target)
        cycles += used
        state = replace(state, order=new_order)
    los = (lo_frequencies[0] + pa.estimate, lo_frequencies[1] + pb.estimate)
    report = CalibrationReport((pa.estimate, pb.estimate), flagged, cycles, los, state.order, True)
    return report, state
