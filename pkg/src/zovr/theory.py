"""Constants and feasibility conditions from the convergence analysis.

Notation: ``L`` bounds the Lipschitz constant of every component gradient,
``Lt`` (L-tilde) that of the per-component field of smoothed partials (the
central-difference vector), and ``Lh`` (L-hat) relates the smoothed partials to
the true gradient. All three are per component and follow the ``N/Y`` block
scaling used throughout the package.

Nothing here gates a run. Each function evaluates formulas and reports margins;
only :func:`check_feasible` and the functions that divide by the delay factor
``Y - 2 N Lt^2 gamma^2 tau^2`` raise when it is not positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InfeasibleSettingsError
from .objectives import FiniteSumObjective, LinearModelObjective
from .zo_estimator import SmoothingSchedule, component_differences

FEASIBILITY_CONDITION = "Y - 2*N*Lt^2*gamma^2*tau^2 > 0"


@dataclass(frozen=True)
class SmoothnessConstants:
    L: float
    L_tilde: float
    L_hat: float
    source: str = "analytic"
    analytic_L: float | None = None

    def __post_init__(self):
        for name in ("L", "L_tilde", "L_hat"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {v}", key=name)
        if self.source not in ("analytic", "empirical-estimate"):
            raise ConfigurationError(f"unknown constants source {self.source!r}", key="constants")


@dataclass(frozen=True)
class AnalysisSettings:
    """Problem sizes, step-size parameters and constants for one certificate.

    ``gamma`` and ``m`` default to the prescribed values
    ``u0 b / (Lt l^alpha)`` and ``floor(Y l^alpha / (5 u0 b N^2))``.
    """

    N: int
    l: int
    Y: int
    b: int
    constants: SmoothnessConstants
    tau: int = 0
    S: int = 1
    alpha: float = 0.5
    u0: float = 0.1
    mu: float | np.ndarray | None = None
    m: int | None = None
    gamma: float | None = None

    def __post_init__(self):
        if min(self.N, self.l, self.Y, self.b, self.S) < 1:
            raise ConfigurationError("N, l, Y, b, S must all be >= 1")
        if self.Y > self.N:
            raise ConfigurationError(f"Y={self.Y} exceeds N={self.N}", key="Y")
        if self.tau < 0:
            raise ConfigurationError("tau must be >= 0", key="tau")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}", key="alpha")
        if not 0 < self.u0 < 1:
            raise ConfigurationError(f"u0 must lie in (0, 1), got {self.u0}", key="u0")
        if not self.b < self.l**self.alpha:
            raise ConfigurationError(
                f"need b < l^alpha, got b={self.b}, l^alpha={self.l ** self.alpha:.6g}", key="b"
            )
        if self.m is not None and self.m < 0:
            raise ConfigurationError("m must be >= 0", key="m")
        if self.gamma is not None and not self.gamma >= 0:
            raise ConfigurationError("gamma must be >= 0", key="gamma")

    @property
    def l_alpha(self) -> float:
        return self.l**self.alpha

    @property
    def prescribed_gamma(self) -> float:
        return self.u0 * self.b / (self.constants.L_tilde * self.l_alpha)

    @property
    def prescribed_m(self) -> int:
        return math.floor(self.Y * self.l_alpha / (5 * self.u0 * self.b * self.N**2))

    @property
    def step(self) -> float:
        return self.prescribed_gamma if self.gamma is None else self.gamma

    @property
    def inner(self) -> int:
        return self.prescribed_m if self.m is None else self.m

    def mu_array(self) -> np.ndarray:
        if self.mu is None:
            return np.zeros(self.N)
        mu = np.asarray(self.mu, dtype=np.float64)
        return np.full(self.N, float(mu)) if mu.ndim == 0 else mu.reshape(-1)

    def with_(self, **changes) -> "AnalysisSettings":
        return replace(self, **changes)


def compute_omega(constants: SmoothnessConstants, mu, N: int) -> float:
    """``omega = L^2 sum_j mu_j^2 / N``; zero radii are allowed here."""
    if isinstance(mu, SmoothingSchedule):
        mu = mu.mu
    mu = np.asarray(mu, dtype=np.float64)
    mu = np.full(N, float(mu)) if mu.ndim == 0 else mu.reshape(-1)
    if mu.size != N:
        raise ConfigurationError(f"mu has {mu.size} entries, expected {N}", key="mu")
    if np.any(mu < 0) or not np.all(np.isfinite(mu)):
        raise ConfigurationError("smoothing radii must be finite and >= 0", key="mu")
    return constants.L**2 * float(np.sum(mu**2)) / N


def feasibility_margin(N: int, Y: int, L_tilde: float, gamma: float, tau: int) -> float:
    return Y - 2.0 * N * L_tilde**2 * gamma**2 * tau**2


def max_feasible_gamma(N: int, Y: int, L_tilde: float, tau: int) -> float:
    """Supremum of step sizes keeping the delay factor positive."""
    if tau == 0 or L_tilde == 0:
        return math.inf
    return math.sqrt(Y / (2.0 * N)) / (L_tilde * tau)


def check_feasible(N: int, Y: int, L_tilde: float, gamma: float, tau: int) -> float:
    """Return the margin ``Y - 2 N Lt^2 gamma^2 tau^2``; raise if it is not positive."""
    margin = feasibility_margin(N, Y, L_tilde, gamma, tau)
    if not margin > 0:
        raise InfeasibleSettingsError(
            f"{FEASIBILITY_CONDITION} violated: margin {margin:.6g} (gamma={gamma:.6g}, tau={tau})",
            condition=FEASIBILITY_CONDITION,
            margin=margin,
        )
    return margin


@dataclass(frozen=True)
class StepSettings:
    gamma: float
    beta: float
    m_theorem: int
    theta: float
    margin: float


def theorem2_settings(settings: AnalysisSettings) -> StepSettings:
    """Prescribed ``gamma``, ``beta``, ``m`` and the growth factor ``theta``.

    ``theta = gamma beta + 4 N^2 gamma^2 Lt^2 / (b (Y - 2 N Lt^2 gamma^2 tau^2))``.
    """
    s = settings
    Lt = s.constants.L_tilde
    gamma = s.prescribed_gamma
    beta = Lt * s.N**2 / s.Y
    margin = check_feasible(s.N, s.Y, Lt, gamma, s.tau)
    theta = gamma * beta + 4 * s.N**2 * gamma**2 * Lt**2 / (s.b * margin)
    return StepSettings(gamma, beta, s.prescribed_m, theta, margin)


@dataclass(frozen=True)
class CSequence:
    """``c[t]`` for ``t = 0..m`` (``c[m] = 0``) and ``Gamma[t]`` for ``t = 0..m-1``."""

    c: np.ndarray
    Gamma: np.ndarray
    beta: float
    gamma: float

    @property
    def min_Gamma(self) -> float:
        return float(np.min(self.Gamma)) if self.Gamma.size else math.nan

    @property
    def beta_ok(self) -> bool:
        """``beta >= 2 c_{t+1}`` for every ``t``."""
        return bool(np.all(self.beta >= 2 * self.c[1:])) if self.c.size > 1 else True

    @property
    def nonincreasing(self) -> bool:
        # Pairwise rather than np.diff: the recurrence may overflow to inf, and inf - inf is nan.
        return bool(np.all(self.c[:-1] >= self.c[1:]))


def _bracket(c_next: float, s: AnalysisSettings, gamma: float) -> float:
    L = s.constants.L
    return c_next * s.N * gamma**2 / s.Y + L * s.Y * gamma**2 / (2 * s.N) + gamma**3 * s.N * L**2 * s.tau**2 / s.Y


def c_sequence(settings: AnalysisSettings) -> CSequence:
    """Backward recurrence for the potential weights and the descent margins.

    ``c_t = c_{t+1} (1 + gamma beta) + P_t * 4 Y N Lt^2 / (b D)`` and
    ``Gamma_t = gamma/2 - P_t * 4 Y Lh / D`` with
    ``P_t = c_{t+1} N gamma^2 / Y + L Y gamma^2 / (2N) + gamma^3 N L^2 tau^2 / Y``
    and ``D = Y - 2 N Lt^2 gamma^2 tau^2``.
    """
    s = settings
    Lt, Lh = s.constants.L_tilde, s.constants.L_hat
    gamma, m = s.step, s.inner
    D = check_feasible(s.N, s.Y, Lt, gamma, s.tau)
    beta = Lt * s.N**2 / s.Y
    grow = 4 * s.Y * s.N * Lt**2 / (s.b * D)
    cut = 4 * s.Y * Lh / D
    c = np.zeros(m + 1)
    Gamma = np.zeros(m)
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(m - 1, -1, -1):
            P = _bracket(c[t + 1], s, gamma)
            c[t] = c[t + 1] * (1 + gamma * beta) + P * grow
            Gamma[t] = gamma / 2 - P * cut
    return CSequence(c, Gamma, beta, gamma)


@dataclass(frozen=True)
class Certificate:
    settings: AnalysisSettings
    steps: StepSettings
    seq: CSequence
    omega: float
    rho1: float
    rho2: float
    rho3: float
    sigma: float
    theta_bound: float

    @property
    def c0(self) -> float:
        return float(self.seq.c[0])

    @property
    def c0_bound_ok(self) -> bool | None:
        """``c_0 <= rho1``; ``None`` (vacuous) when the prescribed ``m`` is 0."""
        if self.steps.m_theorem < 1:
            return None
        return self.c0 <= self.rho1

    @property
    def theta_ok(self) -> bool:
        return self.steps.theta <= self.theta_bound

    @property
    def rho3_ok(self) -> bool:
        return self.rho3 > 0

    @property
    def gamma_lower_ok(self) -> bool | None:
        """``min_t Gamma_t >= gamma rho3``, the lower bound the rate rests on."""
        if self.seq.Gamma.size == 0:
            return None
        return self.seq.min_Gamma >= self.steps.gamma * self.rho3

    @property
    def ok(self) -> bool:
        checks = (self.c0_bound_ok, self.theta_ok, self.rho3_ok, self.gamma_lower_ok, self.seq.beta_ok)
        return all(c is not False for c in checks)

    def predicted_bound(self, T: int, f0: float, fS: float) -> float:
        """``Lt l^alpha (f0 - fS) / (sigma b T) + N u0 omega / (4 sigma)``."""
        if T < 1:
            raise ConfigurationError("T must be >= 1")
        if not self.sigma > 0:
            raise InfeasibleSettingsError(
                f"u0 too large: rho3 = {self.rho3:.6g} <= 0, so the bound is undefined",
                condition="rho3 > 0",
                margin=self.rho3,
            )
        s = self.settings
        head = s.constants.L_tilde * s.l_alpha * (f0 - fS) / (self.sigma * s.b * T)
        return head + s.N * s.u0 * self.omega / (4 * self.sigma)

    def report(self) -> str:
        s = self.settings
        k = s.constants
        rows = [
            ("N", s.N), ("l", s.l), ("Y", s.Y), ("b", s.b), ("tau", s.tau),
            ("alpha", s.alpha), ("u0", s.u0),
            ("L", k.L), ("L_tilde", k.L_tilde), ("L_hat", k.L_hat), ("constants_source", k.source),
            ("omega", self.omega),
            ("gamma", self.steps.gamma), ("beta", self.steps.beta),
            ("m_theorem", self.steps.m_theorem), ("theta", self.steps.theta),
            ("theta_bound", self.theta_bound), ("theta_ok", self.theta_ok),
            ("feasibility_condition", FEASIBILITY_CONDITION),
            ("feasibility_margin", self.steps.margin),
            ("delay_factor_form", "stated 2*N*Lt^2/b (a derivation variant shows 2*Lt^2/b)"),
            ("c0", self.c0), ("c_m", float(self.seq.c[-1])),
            ("c_nonincreasing", self.seq.nonincreasing), ("beta_ge_2c_next", self.seq.beta_ok),
            ("min_Gamma", self.seq.min_Gamma),
            ("rho1", self.rho1), ("rho2", self.rho2), ("rho3", self.rho3), ("sigma", self.sigma),
            ("c0_bound_ok", _fmt_check(self.c0_bound_ok)),
            ("rho3_ok", self.rho3_ok),
            ("gamma_lower_ok", _fmt_check(self.gamma_lower_ok)),
            ("certificate_ok", self.ok),
        ]
        if not self.rho3_ok:
            rows.append(("diagnosis", f"u0 too large: rho3 = {self.rho3:.6g} <= 0"))
        return "".join(f"{key} = {_fmt(val)}\n" for key, val in rows)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_check(v: bool | None):
    return "vacuous" if v is None else v


def theorem2_certificate(settings: AnalysisSettings) -> Certificate:
    """Evaluate every constant of the rate statement at the prescribed settings.

    The potential sequence is run with the prescribed ``gamma`` and ``m``
    regardless of any overrides in ``settings``.
    """
    s = settings
    k = s.constants
    L, Lt, Lh = k.L, k.L_tilde, k.L_hat
    N, Y, b, tau, u0 = s.N, s.Y, s.b, s.tau, s.u0
    steps = theorem2_settings(s)
    gamma = steps.gamma
    pinned = s.with_(gamma=gamma, m=steps.m_theorem)
    seq = c_sequence(pinned)
    rho1 = ((2 * L * Y**2 / N + 4 * N * L**2 * tau**2 * u0 * b) / (5 * N)) * (math.e - 1)
    rho2 = 4 * Y * Lh / steps.margin
    rho3 = (
        0.5
        - rho1 * N * rho2 * gamma / Y
        - L * Y * rho2 * gamma / (2 * N)
        - rho2 * N * L**2 * tau**2 * gamma**2 / Y
    )
    return Certificate(
        settings=pinned,
        steps=steps,
        seq=seq,
        omega=compute_omega(k, s.mu_array(), N),
        rho1=rho1,
        rho2=rho2,
        rho3=rho3,
        sigma=rho3 * u0,
        theta_bound=5 * u0 * b * N**2 / (Y * s.l_alpha),
    )


def analytic_constants(obj: FiniteSumObjective) -> SmoothnessConstants:
    """Closed-form constants for the built-in linear models.

    ``L = c max_i ||a_i||^2 + lam`` with loss curvature ``c``. For the
    quadratic losses central differences are exact, so ``Lt = L`` and
    ``Lh = 1``. For logistic the same values hold in the small-radius limit.
    """
    if not isinstance(obj, LinearModelObjective) or obj.lipschitz is None:
        raise ConfigurationError("analytic constants need a built-in linear-model objective", key="constants")
    L = float(obj.lipschitz)
    return SmoothnessConstants(L, L, 1.0, "analytic", analytic_L=L)


def _component_gradients(obj: FiniteSumObjective, x: np.ndarray) -> np.ndarray:
    if isinstance(obj, LinearModelObjective):
        w = obj._dloss(obj.features @ x, obj.labels)
        return w[:, None] * obj.features + obj.lam * x
    if obj.has_analytic_gradient:
        return np.stack([obj.component_gradient(i, x) for i in range(obj.n_components)])
    comps = np.arange(obj.n_components, dtype=np.int64)
    return component_differences(obj, comps, x, SmoothingSchedule.constant(1e-5, obj.dim))


def _max_rate(fx: np.ndarray, fy: np.ndarray, dist: float) -> float:
    return float(np.max(np.linalg.norm(fx - fy, axis=1))) / dist


def estimate_constants(
    obj: FiniteSumObjective,
    mu,
    trials: int = 200,
    seed: int = 0,
    scale: float = 1.0,
) -> SmoothnessConstants:
    """Sampled lower bounds on ``L``, ``Lt`` and ``Lh``.

    Each trial draws ``x, y ~ N(0, scale^2 I)``. ``L`` and ``Lt`` are the
    largest observed ``max_i ||F_i(x) - F_i(y)|| / ||x - y||`` for the
    component gradients and the component central-difference fields; ``Lh``
    is the largest ``||g_mu(x)|| / ||grad f(x)||``. Objectives without
    analytic gradients use central differences at radius ``1e-5`` instead.
    """
    if trials < 2:
        raise ConfigurationError(f"trials must be >= 2, got {trials}", key="trials")
    mu = SmoothingSchedule.coerce(mu, obj.dim)
    rng = np.random.default_rng(seed)
    comps = np.arange(obj.n_components, dtype=np.int64)
    L = Lt = Lh = 0.0
    for _ in range(trials):
        x = scale * rng.standard_normal(obj.dim)
        y = scale * rng.standard_normal(obj.dim)
        dist = float(np.linalg.norm(x - y))
        if dist == 0:
            continue
        gx, gy = _component_gradients(obj, x), _component_gradients(obj, y)
        L = max(L, _max_rate(gx, gy, dist))
        dx = component_differences(obj, comps, x, mu)
        dy = component_differences(obj, comps, y, mu)
        Lt = max(Lt, _max_rate(dx, dy, dist))
        true_norm = float(np.linalg.norm(gx.mean(axis=0)))
        smooth_norm = float(np.linalg.norm(dx.mean(axis=0)))
        if true_norm > 0:
            Lh = max(Lh, smooth_norm / true_norm)
    analytic = float(obj.lipschitz) if obj.lipschitz is not None else None
    return SmoothnessConstants(L, Lt, Lh, "empirical-estimate", analytic_L=analytic)
