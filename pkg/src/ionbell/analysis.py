"""From outcome counts to physics: readout correction, parity fringes,
Bell-state fidelity, maximum-likelihood tomography and CHSH statistics.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .noise import IDEAL_READOUT, ConfusionMatrix, ShotSet, joint_confusion
from .sequence import PHI_PLUS, TOMOGRAPHY_ROTATIONS, embed, rotation_unitary

# ---------------------------------------------------------------------------
# readout correction


def _frequencies(data) -> np.ndarray:
    if isinstance(data, ShotSet):
        return data.frequencies
    f = np.asarray(data, dtype=float)
    return f / f.sum()


def correct_readout(data, ca: ConfusionMatrix, cb: ConfusionMatrix) -> np.ndarray:
    """Apply the inverse readout map to observed frequencies.

    The result may hold small negative entries; it is not clipped.
    """
    for c in (ca, cb):
        if c.eps_dark + c.eps_bright >= 1 - 1e-12:
            raise ValueError(f"confusion matrix {c} is singular")
    p = np.linalg.solve(joint_confusion(ca, cb), _frequencies(data))
    return p / p.sum()


def corrected_covariance(shots: ShotSet, ca: ConfusionMatrix, cb: ConfusionMatrix) -> np.ndarray:
    """Multinomial covariance of the frequencies pushed through the inverse readout map."""
    f = shots.frequencies
    cov = (np.diag(f) - np.outer(f, f)) / shots.total
    inv = np.linalg.inv(joint_confusion(ca, cb))
    return inv @ cov @ inv.T


# ---------------------------------------------------------------------------
# parity fringe


@dataclass
class ParityFit:
    contrast: float
    phase_offset: float
    baseline: float
    contrast_err: float
    phase_offset_err: float
    baseline_err: float
    chi2: float


def parity_scan_fit(phis, p_odd, sigma=None) -> ParityFit:
    """Weighted least squares of P_odd(phi) = (1 - C sin(2 phi + phi0)) / 2 + baseline.

    The model is linear in (baseline, -C cos(phi0)/2, -C sin(phi0)/2) on the
    basis (1, sin 2phi, cos 2phi). Without ``sigma`` the parameter errors are
    scaled by the residual variance.
    """
    phis = np.asarray(phis, dtype=float)
    y = np.asarray(p_odd, dtype=float)
    if phis.shape != y.shape or phis.ndim != 1:
        raise ValueError("phis and p_odd must be 1-d arrays of equal length")
    if len(np.unique(np.round(phis, 12))) < 5:
        raise ValueError("parity fit needs at least 5 distinct phases")
    design = np.column_stack([np.ones_like(phis), np.sin(2 * phis), np.cos(2 * phis)])
    if np.linalg.matrix_rank(design, tol=1e-9) < 3:
        raise ValueError("degenerate parity scan: phases coincide modulo pi")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    A = design * w[:, None]
    b = (y - 0.5) * w
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ coef
    chi2 = float(resid @ resid)
    cov = np.linalg.inv(A.T @ A)
    if sigma is None:
        dof = max(len(y) - 3, 1)
        cov = cov * chi2 / dof
    base, u, v = coef
    amp = math.hypot(u, v)
    contrast = 2 * amp
    phi0 = math.atan2(-v, -u)
    # gradient of (C, phi0) with respect to (u, v)
    if amp > 0:
        jc = np.array([0.0, 2 * u / amp, 2 * v / amp])
        jp = np.array([0.0, v / amp**2, -u / amp**2])
    else:
        jc = jp = np.zeros(3)
    return ParityFit(
        contrast,
        phi0,
        float(base),
        float(math.sqrt(jc @ cov @ jc)),
        float(math.sqrt(jp @ cov @ jp)),
        float(math.sqrt(cov[0, 0])),
        chi2,
    )


def fidelity_from_parity(p_dd, p_uu, contrast, sigma_dd=0.0, sigma_uu=0.0, sigma_c=0.0,
                         cov_dd_uu=0.0):
    """F = (P_dd + P_uu) / 2 + C / 2 with linear error propagation."""
    f = 0.5 * (p_dd + p_uu) + 0.5 * contrast
    err = 0.5 * math.sqrt(max(sigma_dd**2 + sigma_uu**2 + 2 * cov_dd_uu + sigma_c**2, 0.0))
    return float(f), float(err)


# ---------------------------------------------------------------------------
# tomography


def tomography_settings() -> list[str]:
    """The nine local measurement bases, qubit a first."""
    return ["".join(p) for p in itertools.product("ZXY", repeat=2)]


def setting_unitary(setting: str) -> np.ndarray:
    u = np.eye(4, dtype=complex)
    for q, basis in zip("ab", setting):
        rot = TOMOGRAPHY_ROTATIONS[basis]
        if rot is not None:
            u = embed(rotation_unitary(*rot), q) @ u
    return u


def measurement_operators(setting: str, ca=IDEAL_READOUT, cb=IDEAL_READOUT) -> np.ndarray:
    """POVM elements (4, 4, 4) for the recorded outcomes of one setting."""
    u = setting_unitary(setting)
    proj = np.einsum("ki,kj->kij", u.conj(), u)  # U^dag |k><k| U
    return np.einsum("mk,kij->mij", joint_confusion(ca, cb), proj)


@dataclass
class TomographyResult:
    rho: np.ndarray
    log_likelihood: float
    fidelity: float
    iterations: int
    converged: bool
    method: str = "gradient"
    history: list = field(default_factory=list, repr=False)


def _rho_from_params(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.zeros((4, 4), dtype=complex)
    t[np.diag_indices(4)] = x[:4]
    il = np.tril_indices(4, -1)
    t[il] = x[4:10] + 1j * x[10:16]
    a = t.conj().T @ t
    return a / np.trace(a).real, t


def _params_from_rho(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0, None) + 1e-3
    rho = (v * w) @ v.conj().T
    rho /= np.trace(rho).real
    J = np.eye(4)[::-1]
    low = np.linalg.cholesky(J @ rho @ J)
    t = J @ low.conj().T @ J
    # make the diagonal real and positive
    d = np.diag(t)
    t = np.diag(np.conj(d) / np.abs(d)) @ t
    il = np.tril_indices(4, -1)
    return np.concatenate([np.diag(t).real, t[il].real, t[il].imag])


class _Likelihood:
    def __init__(self, povm: np.ndarray, counts: np.ndarray):
        keep = counts > 0
        self.povm = povm[keep]
        self.counts = counts[keep].astype(float)
        self.total = float(counts.sum())

    def value(self, x) -> float:
        rho, _ = _rho_from_params(x)
        p = np.einsum("kij,ji->k", self.povm, rho).real
        if np.any(p <= 0):
            return -np.inf
        return float(self.counts @ np.log(p)) / self.total

    def value_and_grad(self, x):
        rho, t = _rho_from_params(x)
        p = np.einsum("kij,ji->k", self.povm, rho).real
        if np.any(p <= 0):
            return -np.inf, np.zeros_like(x)
        ll = float(self.counts @ np.log(p)) / self.total
        R = np.einsum("k,kij->ij", self.counts / p, self.povm) / self.total
        norm = np.trace(t.conj().T @ t).real
        G = (R - np.trace(R @ rho).real * np.eye(4)) / norm
        M = G @ t.conj().T  # dL/dRe T_ij = 2 Re M_ji, dL/dIm T_ij = -2 Im M_ji
        il = np.tril_indices(4, -1)
        grad = np.concatenate(
            [2 * np.diag(M).real, 2 * M.T[il].real, -2 * M.T[il].imag]
        )
        return ll, grad


def _stack(shots: dict, ca, cb, correction: str):
    povms, counts = [], []
    for setting in tomography_settings():
        if setting not in shots:
            raise ValueError(f"tomography setting {setting!r} missing")
        s = shots[setting]
        if s.total < 100:
            raise ValueError(f"setting {setting!r} has {s.total} shots; at least 100 needed")
        if correction == "folded":
            povms.append(measurement_operators(setting, ca, cb))
            counts.append(s.counts)
        elif correction == "inverted":
            povms.append(measurement_operators(setting))
            # quasi-probabilities from inversion are clipped so the multinomial stays defined
            p = np.clip(correct_readout(s, ca, cb), 0, None)
            counts.append(s.total * p / p.sum())
        else:
            raise ValueError(f"unknown readout correction {correction!r}")
    return np.concatenate(povms), np.concatenate(counts)


def _linear_inversion(povm: np.ndarray, counts: np.ndarray, n_settings: int) -> np.ndarray:
    per = counts.reshape(n_settings, -1)
    freq = (per / per.sum(axis=1, keepdims=True)).ravel()
    A = povm.reshape(len(povm), 16).conj()  # tr(E rho) = sum conj(E)_ij rho_ij for Hermitian E
    vec, *_ = np.linalg.lstsq(A, freq.astype(complex), rcond=None)
    return vec.reshape(4, 4)


def mle_tomography(
    shots: dict,
    ca: ConfusionMatrix = IDEAL_READOUT,
    cb: ConfusionMatrix = IDEAL_READOUT,
    *,
    correction: str = "folded",
    method: str = "gradient",
    max_iter: int = 100_000,
    tol: float = 1e-10,
    target: np.ndarray = PHI_PLUS,
) -> TomographyResult:
    """Maximum-likelihood two-qubit state from the nine tomography settings.

    ``correction="folded"`` puts the readout confusion into the measurement
    operators; ``"inverted"`` corrects frequencies first. ``method="simplex"``
    runs a derivative-free Nelder-Mead search instead of gradient ascent.
    """
    povm, counts = _stack(shots, ca, cb, correction)
    lik = _Likelihood(povm, counts)
    x0 = _params_from_rho(_linear_inversion(povm, counts, 9))
    if method == "gradient":
        x, ll, it, ok, hist = _gradient_ascent(lik, x0, max_iter, tol)
    elif method == "simplex":
        res = minimize(
            lambda v: -lik.value(v), x0, method="Nelder-Mead",
            options={"maxiter": max_iter, "maxfev": 4 * max_iter, "xatol": 1e-9, "fatol": 1e-13,
                     "adaptive": True},
        )
        x, ll, it, ok, hist = res.x, -float(res.fun), int(res.nit), bool(res.success), []
    else:
        raise ValueError(f"unknown method {method!r}")
    rho, _ = _rho_from_params(x)
    rho = 0.5 * (rho + rho.conj().T)
    fid = float(np.real(np.conj(target) @ rho @ target))
    return TomographyResult(rho, ll, fid, it, ok, method, hist)


def _gradient_ascent(lik: _Likelihood, x, max_iter: int, tol: float):
    """Gradient ascent with Barzilai-Borwein trial steps and Armijo backtracking.

    Converged once the per-shot log-likelihood improves by less than ``tol``
    on three consecutive steps.
    """
    ll, g = lik.value_and_grad(x)
    step = 1e-2
    x_prev = g_prev = None
    streak, history = 0, [ll]
    for it in range(1, max_iter + 1):
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = float(s @ y)
            if sy < 0:
                step = float(s @ s) / -sy
        gg = float(g @ g)
        if gg == 0:
            return x, ll, it, True, history
        while True:
            trial = x + step * g
            ll_t, g_t = lik.value_and_grad(trial)
            if ll_t >= ll + 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-30:
                return x, ll, it, streak > 0, history
        # T -> c T leaves rho unchanged; renormalise to keep the parameters bounded
        scale = math.sqrt(float(trial @ trial))
        x_prev, g_prev = x / scale, g * scale
        gain = ll_t - ll
        x, ll, g = trial / scale, ll_t, g_t * scale
        history.append(ll)
        streak = streak + 1 if gain < tol else 0
        if streak >= 3:
            return x, ll, it, True, history
    return x, ll, max_iter, False, history


# ---------------------------------------------------------------------------
# CHSH

PUBLISHED_ANGLES = ((math.pi / 4, math.pi / 2), (3 * math.pi / 4, math.pi / 2),
                  (math.pi / 4, 0.0), (3 * math.pi / 4, 0.0))
PUBLISHED_E = (0.565, 0.530, 0.560, -0.573)
PUBLISHED_SIGMA_E = (0.007, 0.007, 0.007, 0.008)


def chsh_E(data) -> tuple[float, float]:
    """E = P(same) - P(different) from raw frequencies, with sqrt((1 - E^2) / N)."""
    f = _frequencies(data)
    e = float(f[0] + f[3] - f[1] - f[2])
    n = data.total if isinstance(data, ShotSet) else float(np.sum(data))
    return e, math.sqrt(max(1 - e * e, 0.0) / n)


@dataclass
class CHSHResult:
    angles: tuple
    E: np.ndarray
    sigma_E: np.ndarray
    S: float
    sigma_S: float
    s_max: float | None = None

    @property
    def violation_sigmas(self) -> float:
        return (self.S - 2) / self.sigma_S if self.sigma_S > 0 else math.inf


def chsh_S(E, sigma_E=None, angles=PUBLISHED_ANGLES, s_max_value=None) -> CHSHResult:
    """S = |E1 + E2| + |E3 - E4| for settings ordered (a,b), (a',b), (a,b'), (a',b')."""
    E = np.asarray(E, dtype=float)
    if E.shape != (4,):
        raise ValueError("need exactly four correlation values")
    sig = np.zeros(4) if sigma_E is None else np.asarray(sigma_E, dtype=float)
    S = abs(E[0] + E[1]) + abs(E[2] - E[3])
    return CHSHResult(tuple(angles), E, sig, float(S), float(np.sqrt(np.sum(sig**2))), s_max_value)


def chsh_from_shots(shots, angles=PUBLISHED_ANGLES, s_max_value=None) -> CHSHResult:
    if len(shots) != 4:
        raise ValueError("CHSH needs four settings")
    vals = [chsh_E(s) for s in shots]
    return chsh_S([v[0] for v in vals], [v[1] for v in vals], angles, s_max_value)


def _readout_terms(c: ConfusionMatrix) -> tuple[float, float]:
    # recorded +-1 value given true value t: c0 + c1 t, with down = +1
    return c.eps_dark - c.eps_bright, 1 - c.eps_dark - c.eps_bright


def s_max_closed_form(ca: ConfusionMatrix, cb: ConfusionMatrix) -> float:
    _, c1a = _readout_terms(ca)
    _, c1b = _readout_terms(cb)
    return 2 * math.sqrt(2) * c1a * c1b


def s_max(ca: ConfusionMatrix, cb: ConfusionMatrix) -> float:
    """Largest S an ideal Bell state can show through the given readout.

    The recorded correlation at analysis angles (x, y) is
    c0a c0b + c1a c1b cos(x - y); S is maximised over the four angles.
    """
    c0a, c1a = _readout_terms(ca)
    c0b, c1b = _readout_terms(cb)
    k, c = c0a * c0b, c1a * c1b

    def neg_s(v):
        ta, tpa, tb, tpb = v
        e = [k + c * math.cos(ta - tb), k + c * math.cos(tpa - tb),
             k + c * math.cos(ta - tpb), k + c * math.cos(tpa - tpb)]
        return -(abs(e[0] + e[1]) + abs(e[2] - e[3]))

    starts = [np.array(a) for a in (
        (math.pi / 4, 3 * math.pi / 4, math.pi / 2, 0.0),
        (-math.pi / 4, math.pi / 4, 0.0, math.pi / 2),
        (0.3, 1.9, 1.0, 0.2),
    )]
    best = max(-minimize(neg_s, s, method="Nelder-Mead",
                         options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000}).fun
               for s in starts)
    return float(best)


def bootstrap_sigma_E(shots: ShotSet, n_rep: int = 1000, seed=None) -> float:
    """Standard deviation of E over multinomial resamples of ``shots``."""
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots.total, shots.frequencies, size=n_rep)
    e = (draws[:, 0] + draws[:, 3] - draws[:, 1] - draws[:, 2]) / shots.total
    return float(np.std(e, ddof=1))


def _pi_label(angle: float) -> str:
    return f"{angle / math.pi:.2f}pi"


def chsh_report(result: CHSHResult, labels=("40Ca+", "43Ca+"), reference=PUBLISHED_E) -> str:
    """Aligned text table in the layout of the published CHSH table."""
    rows = [
        [f"theta_a ({labels[0]})"] + [_pi_label(a) for a, _ in result.angles],
        [f"theta_b ({labels[1]})"] + [_pi_label(b) for _, b in result.angles],
        ["E"] + [f"{e:+.3f}({s:.3f})" for e, s in zip(result.E, result.sigma_E)],
    ]
    if reference is not None:
        rows.append(["E published"] + [f"{e:+.3f}" for e in reference])
    width = max(len(c) for r in rows for c in r) + 2
    lines = ["".join(c.ljust(width) for c in r).rstrip() for r in rows]
    lines.append(f"S = {result.S:.3f} +- {result.sigma_S:.3f}"
                 f"  ({result.violation_sigmas:.1f} sigma above 2)")
    if result.s_max is not None:
        lines.append(f"S_max (readout-limited) = {result.s_max:.3f}")
    return "\n".join(lines)
