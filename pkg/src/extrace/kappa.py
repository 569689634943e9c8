"""Weakly-measured while loops and their Grover instantiation.

The measurement couples a two-level probe to the predicate subspace with
strength kappa: the certifying outcome fires with probability
kappa * p_Q and the other outcome damps the predicate amplitude by
sqrt(1 - kappa).  The Grover loop alternates the amplitude-amplification
step with one such measurement; everything about a run reduces to an
angle in the plane spanned by the off-target and target states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .linalg import LinalgError, adjoint, operator_norm

__all__ = [
    "GroverParams",
    "GroverTrial",
    "KappaMeasurement",
    "MeasurementOutcome",
    "MonteCarloSummary",
    "RuntimeBound",
    "build_E",
    "grover_montecarlo",
    "grover_recurrence",
    "grover_runtime_bound",
    "grover_statevector",
    "guarantee_f",
    "kappa_measure",
    "robustness_g",
    "runtime_bound",
    "theta",
    "verify_guarantee",
]

STATEVECTOR_CAP = 4096

R_PERP = 0  # probe basis index for the "keep looping" outcome
R_TOP = 1


@dataclass(frozen=True)
class KappaMeasurement:
    kappa: float
    predicate_projector: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise LinalgError("kappa must lie in [0, 1]")
        p = np.asarray(self.predicate_projector, dtype=np.complex128)
        object.__setattr__(self, "predicate_projector", p)
        if p.shape[0] != p.shape[1]:
            raise LinalgError("predicate projector must be square")
        if operator_norm(p @ p - p) > 1e-10 or operator_norm(p - adjoint(p)) > 1e-10:
            raise LinalgError("predicate_projector is not an orthogonal projector")


def probe_rotation(kappa: float) -> np.ndarray:
    """2x2 rotation sending |bot> to sqrt(1-k)|bot> + sqrt(k)|top>.

    The strength-k coupling is only fixed up to Z-rotations on the probe;
    this representative is the proper rotation, so zero strength is the
    identity.
    """
    xi = math.sqrt(1.0 - kappa)
    sk = math.sqrt(kappa)
    return np.array([[xi, -sk], [sk, xi]], dtype=np.complex128)


def build_E(km: KappaMeasurement) -> np.ndarray:
    """The coupling unitary on H (x) C^2: identity off the predicate
    subspace, the probe rotation on it."""
    p = km.predicate_projector
    ident = np.eye(p.shape[0], dtype=np.complex128)
    return np.kron(ident - p, np.eye(2)) + np.kron(p, probe_rotation(km.kappa))


@dataclass(frozen=True)
class MeasurementOutcome:
    certified: bool
    post_state: np.ndarray
    p_top: float


def kappa_measure(state: np.ndarray, km: KappaMeasurement, rng) -> MeasurementOutcome:
    state = np.asarray(state, dtype=np.complex128).reshape(-1)
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-9:
        raise LinalgError(f"state norm {norm:.3e} is not 1")
    p = km.predicate_projector
    in_q = p @ state
    p_q = float(np.vdot(in_q, in_q).real)
    p_top = km.kappa * p_q
    if rng.random() < p_top:
        post = in_q / np.linalg.norm(in_q)
        return MeasurementOutcome(True, post, p_top)
    xi = math.sqrt(1.0 - km.kappa)
    post = (state - in_q) + xi * in_q
    post /= np.linalg.norm(post)
    return MeasurementOutcome(False, post, p_top)


def theta(a: float, kappa: float) -> float:
    """Signed angular collapse: the keep-looping branch maps angle a to
    a - theta(a, kappa).

    Evaluated through atan2 of the damped components, which is the
    algebraic equivalent of arctan((1-xi) tan a / (1 + xi tan^2 a)) with
    the quadrant sign rules built in and no pole at a = pi/2.
    """
    if not 0.0 <= kappa <= 1.0:
        raise LinalgError("kappa must lie in [0, 1]")
    xi = math.sqrt(1.0 - kappa)
    collapsed = math.atan2(xi * math.sin(a), math.cos(a))
    d = a - collapsed
    return d - 2.0 * math.pi * round(d / (2.0 * math.pi))


def theta_bound(kappa: float) -> float:
    """Tight supremum of |theta(., kappa)|: arcsin((1-xi)/(1+xi))."""
    xi = math.sqrt(1.0 - kappa)
    return math.asin((1.0 - xi) / (1.0 + xi))


@dataclass(frozen=True)
class GroverParams:
    B_size: int
    kappa: float | None = None
    seed: int = 0
    max_iterations: int | None = None

    def __post_init__(self):
        if self.B_size < 2:
            raise LinalgError("B_size must be >= 2")
        kappa = self.kappa if self.kappa is not None else self.B_size ** -0.5
        if not 0.0 < kappa <= 1.0:
            raise LinalgError("kappa must lie in (0, 1]")
        object.__setattr__(self, "kappa", float(kappa))
        if self.max_iterations is None:
            object.__setattr__(self, "max_iterations", int(math.ceil(50.0 / kappa)))
        if self.max_iterations < 1:
            raise LinalgError("max_iterations must be >= 1")

    @property
    def alpha(self) -> float:
        return math.asin(self.B_size ** -0.5)


def _recurrence_step(a: float, alpha: float, kappa: float) -> float:
    # One loop iteration: the amplification step advances by 2*alpha,
    # then the keep-looping collapse acts on the advanced angle.
    advanced = a + 2.0 * alpha
    return advanced - theta(advanced, kappa)


def grover_recurrence(p: GroverParams, n_steps: int | None = None) -> np.ndarray:
    """Deterministic all-keep-looping angle trajectory b_0..b_N
    (b_0 = alpha is the initial state, b_n the angle after iteration n)."""
    n = p.max_iterations if n_steps is None else n_steps
    alpha = p.alpha
    out = np.empty(n + 1)
    out[0] = alpha
    a = alpha
    for i in range(1, n + 1):
        a = _recurrence_step(a, alpha, p.kappa)
        out[i] = a
    return out


def premeasurement_angles(p: GroverParams, n_steps: int | None = None) -> np.ndarray:
    """Angle seen by the measurement at each iteration (1-indexed)."""
    traj = grover_recurrence(p, n_steps)
    return traj[:-1] + 2.0 * p.alpha


def halting_probabilities(p: GroverParams, n_steps: int | None = None) -> np.ndarray:
    """Per-iteration certify probability kappa * sin^2(angle)."""
    return p.kappa * np.sin(premeasurement_angles(p, n_steps)) ** 2


@dataclass
class StatevectorRun:
    angles: list  # folded angle asin|<star|state>| after each iteration
    halted_at: int | None
    state: np.ndarray
    plane_residuals: list


def grover_statevector(p: GroverParams, *, force_keep_looping: bool = False) -> StatevectorRun:
    """Full statevector run of the weakly-measured Grover loop.

    With force_keep_looping the measurement never certifies, giving the
    deterministic conditional evolution used to cross-check the angle
    recurrence.
    """
    b = p.B_size
    if b > STATEVECTOR_CAP:
        raise LinalgError(f"B_size {b} exceeds the statevector cap {STATEVECTOR_CAP}")
    rng = np.random.default_rng(np.random.SeedSequence(p.seed))
    star = 0
    psi = np.full(b, b ** -0.5, dtype=np.complex128)
    psi1 = np.zeros(b, dtype=np.complex128)
    psi1[star] = 1.0
    psi0 = (math.sqrt(b) * psi - psi1) / math.sqrt(b - 1)
    xi = math.sqrt(1.0 - p.kappa)

    def grover_step(v):
        v = 2.0 * psi0 * np.vdot(psi0, v) - v
        return 2.0 * psi * np.vdot(psi, v) - v

    v = psi.copy()
    angles = []
    residuals = []
    halted = None
    for it in range(1, p.max_iterations + 1):
        v = grover_step(v)
        p_top = p.kappa * float(abs(v[star]) ** 2)
        if not force_keep_looping and rng.random() < p_top:
            v = psi1 * (v[star] / abs(v[star]))
            angles.append(math.pi / 2.0)
            residuals.append(0.0)
            halted = it
            break
        v = v.copy()
        v[star] *= xi
        v /= np.linalg.norm(v)
        angles.append(math.asin(min(1.0, abs(v[star]))))
        plane = psi0 * np.vdot(psi0, v) + psi1 * np.vdot(psi1, v)
        residuals.append(float(np.linalg.norm(v - plane)))
    return StatevectorRun(angles, halted, v, residuals)


@dataclass(frozen=True)
class GroverTrial:
    iterations_to_success: int
    censored: bool
    angle_at_halt: float
    trial_index: int


@dataclass
class MonteCarloSummary:
    median: float
    mean: float
    n_trials: int
    censored: int
    histogram: list  # [[bucket_lo, count], ...]
    bucket_width: int

    def to_json(self) -> dict:
        return {
            "median": self.median,
            "mean": self.mean,
            "n_trials": self.n_trials,
            "censored": self.censored,
            "bucket_width": self.bucket_width,
            "histogram": self.histogram,
        }


def grover_montecarlo(
    p: GroverParams, n_trials: int, bucket_width: int | None = None
) -> tuple[list, MonteCarloSummary]:
    """Sample halting times of the weakly-measured loop.

    The conditional angle trajectory is shared by all trials, so each
    trial reduces to one inverse-CDF draw against the per-iteration
    certify probabilities; trial i owns the stream spawned from
    (seed, i), keeping runs reproducible under any parallel schedule.
    """
    if n_trials < 1:
        raise LinalgError("n_trials must be >= 1")
    probs = halting_probabilities(p)
    angles = premeasurement_angles(p)
    with np.errstate(divide="ignore"):
        log_survival = np.cumsum(np.log1p(-np.minimum(probs, 1.0)))
    cdf = 1.0 - np.exp(log_survival)

    trials = []
    for i in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=p.seed, spawn_key=(i,)))
        u = rng.random()
        idx = int(np.searchsorted(cdf, u, side="right"))
        if idx >= p.max_iterations:
            trials.append(GroverTrial(p.max_iterations, True, float(angles[-1]), i))
        else:
            trials.append(GroverTrial(idx + 1, False, float(angles[idx]), i))

    uncensored = [t.iterations_to_success for t in trials if not t.censored]
    n_censored = n_trials - len(uncensored)
    median = float(np.median(uncensored)) if uncensored else math.nan
    mean = float(np.mean(uncensored)) if uncensored else math.nan

    if bucket_width is None:
        # A few dozen buckets per oscillation period of the halting
        # probability, so the periodic peaks stay visible.
        period = math.pi / (2.0 * p.alpha)
        bucket_width = max(1, int(round(period / 24.0)))
    counts: dict = {}
    for t in trials:
        if t.censored:
            continue
        lo = ((t.iterations_to_success - 1) // bucket_width) * bucket_width + 1
        counts[lo] = counts.get(lo, 0) + 1
    histogram = [[lo, counts[lo]] for lo in sorted(counts)]
    summary = MonteCarloSummary(median, mean, n_trials, n_censored, histogram, bucket_width)
    return trials, summary


# ---------------------------------------------------------------------------
# Bound calculators


def guarantee_f(n: int, B_size: int) -> int:
    """f(n) = 2n + floor(pi sqrt(B) / 4): at least n active iterations
    occur within the first f(n) unmeasured steps."""
    k = math.floor(math.pi * math.sqrt(B_size) / 4.0)
    return 2 * n + k


def robustness_g(n: int) -> int:
    """g(n) = 2n: the measured evolution lags the unmeasured one by at
    most a factor of two."""
    return 2 * n


@dataclass(frozen=True)
class RuntimeBound:
    kappa: float
    epsilon: float
    f: Callable[[int], int]
    g: Callable[[int], int]

    def __post_init__(self):
        if not self.epsilon < 0.5:
            raise LinalgError("epsilon must be < 1/2")
        if not 0.0 < self.kappa <= 1.0:
            raise LinalgError("kappa must lie in (0, 1]")


def runtime_bound(rb: RuntimeBound, c: int = 1) -> int:
    """T_c = g(f(ceil(2c / (kappa (1 - 2 epsilon))))): the loop halts
    within T_c iterations with probability > 1 - e^{-c}."""
    n = math.ceil(2.0 * c / (rb.kappa * (1.0 - 2.0 * rb.epsilon)))
    return rb.g(rb.f(n))


def grover_runtime_bound(B_size: int, kappa: float | None = None, c: int = 1) -> int:
    if kappa is None:
        kappa = B_size ** -0.5
    alpha = math.asin(B_size ** -0.5)
    rb = RuntimeBound(kappa, math.sin(3.0 * alpha), lambda n: guarantee_f(n, B_size), robustness_g)
    return runtime_bound(rb, c)


# ---------------------------------------------------------------------------
# Guarantee / robustness verification


@dataclass
class GuaranteeReport:
    B_size: int
    n_checked: int
    guarantee_violations: list = field(default_factory=list)
    robustness_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.guarantee_violations and not self.robustness_violations


def verify_guarantee(p: GroverParams, n_max: int = 50) -> GuaranteeReport:
    """Exhaustively check the active-iteration guarantee on the
    unmeasured evolution and the robustness witness against the measured
    keep-looping recurrence."""
    report = GuaranteeReport(p.B_size, n_max)
    alpha = p.alpha
    horizon = guarantee_f(n_max, p.B_size)

    # Unmeasured evolution: angle alpha + 2k alpha after k steps.
    ks = np.arange(horizon + 1)
    unmeasured = alpha + 2.0 * ks * alpha
    active = np.sin(unmeasured) ** 2 > 0.5
    active_cum = np.cumsum(active)
    for n in range(1, n_max + 1):
        f_n = guarantee_f(n, p.B_size)
        if active_cum[f_n] < n:
            report.guarantee_violations.append(
                f"n={n}: only {int(active_cum[f_n])} active iterations within f(n)={f_n}"
            )

    # Robustness: for every n there is m <= g(n) with success
    # probabilities within epsilon = sin(3 alpha).
    eps = math.sin(3.0 * alpha)
    measured = grover_recurrence(p, robustness_g(n_max))
    p_meas = np.sin(measured) ** 2
    p_unmeas = np.sin(unmeasured) ** 2
    for n in range(1, n_max + 1):
        m_hi = robustness_g(n)
        gap = np.min(np.abs(p_unmeas[n] - p_meas[: m_hi + 1]))
        if gap > eps:
            report.robustness_violations.append(
                f"n={n}: min probability gap {gap:.3e} exceeds eps={eps:.3e}"
            )
    return report
