"""Symmetric equilibrium bid schedules for the two-stage tournament auction.

The weak bidders' common bid function solves the initial value problem

    b'(v) = H(b, v) = (N-1) * (f(v)/F(v)) * (G(b)/g(b)) * (v - m(b)) / (b - v)

on 0 < v <= v_bar, b(0) = 0, where m(b) = E[w | w <= b] and (F, f) / (G, g)
are the weak / strong value laws. Solutions live strictly inside the band
v < b < m^{-1}(v); H blows up at the lower edge and vanishes at the upper one.

Two independent routes are provided:

* ``solve_ode``          adaptive embedded Runge-Kutta (Dormand-Prince 4(5))
                         with band-aware step rejection and a series start at
                         the singular origin;
* ``solve_fixed_point``  damped iteration of the averaging operator
                         T(gamma)(v) = (1/v) * integral of K(gamma(s), s) over [0, v]
                         in bid-ratio space gamma = b/v, clamped to per-node
                         envelopes.

``verify_best_response`` checks the solved schedule against grid deviations of
the reported value (and raw bids above b(v_bar)), which is the acceptance
oracle for equilibrium claims.

The strong side may carry an atom at bid zero (announced auctioneer zeroing
with probability 1-p). The same ODE applies against the effective bid law;
only the singular start changes, to b ~ sqrt(2 (N-1)/N * kappa0 * v) with
kappa0 the atom-to-density ratio at the origin. The ratio-space fixed point
needs gamma(0) = 2N/(N+1) and therefore rejects atom-carrying laws.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .dist import DistributionSpec

__all__ = [
    "BandEscape",
    "BestResponseReport",
    "BidFunction",
    "EquilibriumError",
    "FixedPointDivergence",
    "SingularStartError",
    "SolveOptions",
    "SolveReport",
    "StrongBidLaw",
    "as_strong_law",
    "bid_ode_rhs",
    "deviation_payoff",
    "discrete_atom_equilibrium",
    "initial_bid_ratio",
    "ratio_rhs",
    "raw_bid_payoff",
    "solve_fixed_point",
    "solve_ode",
    "verify_best_response",
]


class EquilibriumError(RuntimeError):
    pass


class BandEscape(EquilibriumError):
    """Integration hit b <= v or m(b) >= v and could not recover."""


class SingularStartError(EquilibriumError):
    """No valid series start at the singular origin."""


class FixedPointDivergence(EquilibriumError):
    """Damped iteration failed to reach tolerance."""

    def __init__(self, message: str, last_delta: float):
        super().__init__(message)
        self.last_delta = last_delta


def initial_bid_ratio(n_weak: int) -> float:
    """Limit of b(v)/v at the origin: 2N/(N+1)."""
    return 2.0 * n_weak / (n_weak + 1.0)


# ---------------------------------------------------------------------------
# effective strong-side bid law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StrongBidLaw:
    """Strong bidder's bid distribution: base value law plus optional atom at 0."""

    dist: DistributionSpec
    zero_bid_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.zero_bid_prob < 1.0:
            raise EquilibriumError(f"zero_bid_prob must be in [0, 1), got {self.zero_bid_prob}")

    @property
    def hi(self) -> float:
        return self.dist.support.hi

    @property
    def atom(self) -> float:
        return self.zero_bid_prob

    @property
    def scale(self) -> float:
        return 1.0 - self.zero_bid_prob

    @cached_property
    def mean(self) -> float:
        return self.scale * self.dist.mean

    def cdf(self, b):
        if isinstance(b, np.ndarray):
            return np.where(b < 0.0, 0.0, self.atom + self.scale * self.dist.cdf(b))
        return 0.0 if b < 0.0 else self.atom + self.scale * self.dist.cdf(b)

    def pdf(self, b):
        return self.scale * self.dist.pdf(b)

    def partial_mean(self, b):
        return self.scale * self.dist.partial_mean(b)

    def mean_below(self, b):
        g = self.cdf(b)
        if isinstance(b, np.ndarray):
            with np.errstate(invalid="ignore", divide="ignore"):
                out = self.partial_mean(b) / g
            return np.where(g <= 0.0, 0.0, out)
        return 0.0 if g <= 0.0 else self.partial_mean(b) / g

    def mean_below_inverse(self, targets: np.ndarray) -> np.ndarray:
        """Vector inverse of mean_below on [0, hi] (leftmost crossing)."""
        t = np.asarray(targets, dtype=float)
        lo = np.zeros(t.shape)
        hi = np.full(t.shape, self.hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            ge = self.mean_below(mid) >= t
            hi = np.where(ge, mid, hi)
            lo = np.where(ge, lo, mid)
        return hi

    def eval3(self, b: float) -> tuple[float, float, float]:
        """(cdf, pdf, partial_mean) at a scalar bid, one component sweep."""
        d = self.dist
        c = p = m = 0.0
        for w, part in zip(d.weights, d.parts):
            c += w * part.cdf_s(b)
            p += w * part.pdf_s(b)
            m += w * part.pm_s(b)
        s = self.scale
        return self.atom + s * c, s * p, s * m


def as_strong_law(strong) -> StrongBidLaw:
    if isinstance(strong, StrongBidLaw):
        return strong
    if isinstance(strong, DistributionSpec):
        return StrongBidLaw(strong, 0.0)
    raise EquilibriumError(f"not a strong-side law: {type(strong).__name__}")


# ---------------------------------------------------------------------------
# bid function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BidFunction:
    """Tabulated strictly increasing bid schedule with monotone-cubic interpolation."""

    grid: np.ndarray
    values: np.ndarray
    slopes: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        if not (g.ndim == 1 and g.shape == v.shape == s.shape and g.size >= 2):
            raise EquilibriumError("grid/values/slopes must be matching 1-D arrays")
        if g[0] != 0.0 or v[0] != 0.0:
            raise EquilibriumError("bid schedule must start at (0, 0)")
        if not np.all(np.diff(g) > 0):
            raise EquilibriumError("grid must be strictly increasing")
        if not np.all(np.diff(v) > 0):
            raise EquilibriumError("bid values must be strictly increasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "slopes", s)

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.grid, self.values, self.slopes)

    @cached_property
    def _dspline(self):
        return self._spline.derivative()

    @property
    def v_top(self) -> float:
        return float(self.grid[-1])

    @property
    def b_top(self) -> float:
        return float(self.values[-1])

    def __call__(self, v):
        x = np.clip(v, self.grid[0], self.grid[-1])
        out = self._spline(x)
        return float(out) if np.isscalar(v) else out

    def deriv(self, v):
        x = np.clip(v, self.grid[0], self.grid[-1])
        out = self._dspline(x)
        return float(out) if np.isscalar(v) else out

    def to_json_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "slopes": self.slopes.tolist(),
        }

    @staticmethod
    def from_json_dict(obj: dict) -> "BidFunction":
        return BidFunction(
            np.asarray(obj["grid"], dtype=float),
            np.asarray(obj["values"], dtype=float),
            np.asarray(obj["slopes"], dtype=float),
        )

    def csv_rows(self):
        for v, b, s in zip(self.grid, self.values, self.slopes):
            yield v, b, s


@dataclass(frozen=True)
class SolveReport:
    method: str
    max_ode_residual: float
    picard_iterations: int
    sup_norm_delta: float
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class BestResponseReport:
    max_regret: float
    worst_pair: tuple[float, float]
    grid_shape: tuple[int, int]
    max_argmax_offset: int


@dataclass(frozen=True)
class SolveOptions:
    v0_fraction: float = 1e-4
    grid_size: int = 1000
    rk_tolerance: float = 1e-10
    residual_tolerance: float = 5e-7   # midpoint |b' - H| / (1 + |H|) gate
    max_iter: int = 1500
    fp_tolerance: float = 1e-9
    damping: float = 0.2   # fixed-point slope at the solution is ~ -5, so < 1/3 is needed


# ---------------------------------------------------------------------------
# ODE right-hand side
# ---------------------------------------------------------------------------


class _OutOfBand(Exception):
    pass


def _rhs_factory(weak: DistributionSpec, law: StrongBidLaw, n_weak: int):
    nm1 = float(n_weak - 1)

    def rhs(v: float, b: float) -> float:
        Fv = weak.cdf(v)
        if Fv <= 0.0 or v <= 0.0:
            raise _OutOfBand
        fv = weak.pdf(v)
        Gb, gb, Mb = law.eval3(b)
        if b <= v:
            raise _OutOfBand
        m = Mb / Gb if Gb > 0.0 else 0.0
        if m >= v:
            raise _OutOfBand
        if gb <= 0.0:
            raise _OutOfBand
        return nm1 * (fv / Fv) * (Gb / gb) * (v - m) / (b - v)

    return rhs


def bid_ode_rhs(b: float, v: float, weak: DistributionSpec, strong, n_weak: int) -> float:
    """Equilibrium bid slope H(b, v); domain error outside the open band."""
    if n_weak < 2:
        raise EquilibriumError(f"need at least 2 weak bidders, got {n_weak}")
    law = as_strong_law(strong)
    v_bar = weak.support.hi
    if not 0.0 < v <= v_bar:
        raise EquilibriumError(f"v={v} outside (0, {v_bar}]")
    try:
        return _rhs_factory(weak, law, n_weak)(v, b)
    except _OutOfBand:
        raise EquilibriumError(
            f"(b, v)=({b}, {v}) outside the bid band v < b < m^-1(v)"
        ) from None


def ratio_rhs(beta: float, v: float, weak: DistributionSpec, strong, n_weak: int) -> float:
    """Slope field in bid-ratio space: K(beta, v) = H(beta*v, v)."""
    return bid_ode_rhs(beta * v, v, weak, strong, n_weak)


# ---------------------------------------------------------------------------
# Dormand-Prince 4(5) with band rejection
# ---------------------------------------------------------------------------

_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)


def _model_warnings(weak: DistributionSpec, law: StrongBidLaw) -> list[str]:
    notes = []
    v_bar = weak.support.hi
    if law.mean < v_bar - 1e-12:
        notes.append(
            f"strength assumption violated: E[strong bid] = {law.mean:.6g} < v_bar = {v_bar:.6g}; "
            "results are outside the model's guarantees"
        )
    if not law.dist.interior_positive:
        notes.append("strong density is not strictly positive on the interior")
    if not law.dist.density_c1:
        notes.append("strong density is not C^1 on its support")
    if not weak.interior_positive:
        notes.append("weak density is not strictly positive on the interior")
    if weak.pdf(weak.support.lo) <= 0.0:
        notes.append(
            "weak density vanishes at the origin; the singular-start bid ratio "
            "assumes f(0) > 0 (the solution self-corrects forward, the start "
            "transient may be off)"
        )
    if law.atom == 0.0 and law.pdf(law.dist.support.lo) <= 0.0:
        notes.append(
            "strong density vanishes at the origin; the singular-start bid ratio "
            "assumes g(0) > 0"
        )
    return notes


def _series_start(weak, law, n_weak, v0_fraction):
    """Starting point (v0, b0, slope0) consistent with the origin asymptotics."""
    v_bar = weak.support.hi
    v0 = v0_fraction * v_bar
    if law.atom == 0.0:
        beta0 = initial_bid_ratio(n_weak)
        for _ in range(40):
            b0 = beta0 * v0
            if law.mean_below(b0) < v0:
                return v0, b0, beta0
            v0 *= 0.1
        raise SingularStartError("no in-band series start found (smooth law)")
    # zero-atom law: b ~ sqrt(2 (N-1)/N * kappa0 * v)
    g0 = law.pdf(law.dist.support.lo)
    if g0 <= 0.0:
        raise SingularStartError("strong density vanishes at 0; atom start undefined")
    kappa0 = law.atom / g0
    for _ in range(60):
        b0 = math.sqrt(2.0 * (n_weak - 1) / n_weak * kappa0 * v0)
        g_at = law.pdf(min(b0, law.hi))
        density_flat = g0 > 0 and abs(g_at - g0) <= 0.25 * g0
        if b0 < law.hi and density_flat and law.mean_below(b0) < v0 and b0 > v0:
            return v0, b0, b0 / v0
        v0 *= 0.1
        if v0 < 1e-300:
            break
    raise SingularStartError("no in-band series start found (zero-atom law)")


def solve_ode(
    weak: DistributionSpec,
    strong,
    n_weak: int,
    opts: SolveOptions = SolveOptions(),
) -> tuple[BidFunction, SolveReport]:
    """Integrate the bid ODE from the singular origin to the top of the support."""
    if n_weak < 2:
        raise EquilibriumError(f"need at least 2 weak bidders, got {n_weak}")
    law = as_strong_law(strong)
    if weak.support.lo != 0.0 or law.dist.support.lo != 0.0:
        raise EquilibriumError("the model requires value supports starting at 0")
    notes = _model_warnings(weak, law)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    v_bar = weak.support.hi
    rhs = _rhs_factory(weak, law, n_weak)
    v0, b0, slope0 = _series_start(weak, law, n_weak, opts.v0_fraction)

    h_max = (v_bar - v0) / max(opts.grid_size, 16)
    h_min = 1e-12 * v_bar
    rtol = opts.rk_tolerance
    atol = 1e-3 * rtol * v_bar

    vs = [0.0, v0]
    bs = [0.0, b0]
    ks = [slope0, rhs(v0, b0)]

    v, b = v0, b0
    k1 = ks[-1]
    h = min(h_max, v0)
    n_stages = 7
    stage = [0.0] * n_stages

    while v < v_bar - 1e-15 * v_bar:
        h = min(h, v_bar - v, h_max)
        if h < h_min:
            raise BandEscape(
                f"step size underflow at v={v:.6g} (b={b:.6g}); band escape"
            )
        stage[0] = k1
        try:
            for i in range(1, n_stages):
                bi = b + h * sum(a * stage[j] for j, a in enumerate(_DP_A[i]))
                stage[i] = rhs(v + _DP_C[i] * h, bi)
            b5 = b + h * sum(w * stage[i] for i, w in enumerate(_DP_B5) if w)
            b4 = b + h * sum(w * stage[i] for i, w in enumerate(_DP_B4) if w)
        except (_OutOfBand, OverflowError, ZeroDivisionError):
            h *= 0.5
            continue
        err = abs(b5 - b4)
        scale = atol + rtol * max(abs(b), abs(b5))
        if not math.isfinite(err) or err > scale:
            h *= max(0.2, 0.9 * (scale / err) ** 0.2) if math.isfinite(err) else 0.5
            continue
        # gate the step on interpolation quality: the cubic-Hermite midpoint of
        # this interval must satisfy the ODE to residual_tolerance, since the
        # returned schedule is exactly that interpolant
        k_end = stage[-1]
        b_mid = 0.5 * (b + b5) + h * (k1 - k_end) / 8.0
        d_mid = 1.5 * (b5 - b) / h - 0.25 * (k1 + k_end)
        try:
            h_mid = rhs(v + 0.5 * h, b_mid)
        except (_OutOfBand, OverflowError, ZeroDivisionError):
            h *= 0.5
            continue
        if abs(d_mid - h_mid) > opts.residual_tolerance * (1.0 + abs(h_mid)):
            h *= 0.5
            continue
        # accepted; stage[-1] is f(v+h, b5) by the FSAL property
        v, b = v + h, b5
        k1 = stage[-1]
        vs.append(v)
        bs.append(b)
        ks.append(k1)
        h *= min(5.0, 0.9 * (scale / max(err, 1e-300)) ** 0.2)

    vs[-1] = v_bar  # the last step lands within an ulp of the top; pin it
    bid = BidFunction(np.asarray(vs), np.asarray(bs), np.asarray(ks))
    residual = _max_residual(bid, rhs)
    report = SolveReport(
        method="ode",
        max_ode_residual=residual,
        picard_iterations=0,
        sup_norm_delta=0.0,
        warnings=tuple(notes),
    )
    return bid, report


def _max_residual(bid: BidFunction, rhs) -> float:
    """max |b' - H(b, v)| / (1 + |H|) at interior midpoints of the solved grid."""
    mids = 0.5 * (bid.grid[1:-1] + bid.grid[2:])
    if mids.size == 0:
        return 0.0
    bb = bid(mids)
    db = bid.deriv(mids)
    worst = 0.0
    for v, b, s in zip(mids, bb, db):
        try:
            hval = rhs(float(v), float(b))
        except _OutOfBand:
            return math.inf
        worst = max(worst, abs(s - hval) / (1.0 + abs(hval)))
    return worst


# ---------------------------------------------------------------------------
# fixed point of the averaging operator in ratio space
# ---------------------------------------------------------------------------


def _ratio_grid(v_bar: float, v0: float, grid_size: int) -> np.ndarray:
    n_geo = max(grid_size // 5, 16)
    n_lin = max(grid_size - n_geo, 16)
    knee = 0.08 * v_bar
    geo = np.geomspace(v0, knee, n_geo, endpoint=False)
    lin = np.linspace(knee, v_bar, n_lin)
    return np.concatenate([[0.0], geo, lin])


def solve_fixed_point(
    weak: DistributionSpec,
    strong,
    n_weak: int,
    opts: SolveOptions = SolveOptions(),
) -> tuple[BidFunction, SolveReport]:
    """Damped iteration of the clamped averaging operator; atom-free laws only."""
    if n_weak < 2:
        raise EquilibriumError(f"need at least 2 weak bidders, got {n_weak}")
    law = as_strong_law(strong)
    if law.atom > 0.0:
        raise EquilibriumError(
            "fixed-point solver requires an atom-free strong law "
            "(the ratio-space boundary value breaks under a zero-bid atom)"
        )
    if weak.support.lo != 0.0 or law.dist.support.lo != 0.0:
        raise EquilibriumError("the model requires value supports starting at 0")
    notes = _model_warnings(weak, law)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    v_bar = weak.support.hi
    beta0 = initial_bid_ratio(n_weak)
    grid = _ratio_grid(v_bar, opts.v0_fraction * v_bar, opts.grid_size)
    vpos = grid[1:]

    # clamp envelopes: [1 + 1e-6, m^-1(v)/v - 1e-6], falling back to the law's
    # top where v exceeds E[strong bid] (no band ceiling exists there)
    ceil_b = law.mean_below_inverse(np.minimum(vpos, law.mean * (1.0 - 1e-12)))
    ceil_b = np.where(vpos >= law.mean, law.hi * (1.0 - 1e-12), ceil_b)
    env_lo = 1.0 + 1e-6
    env_hi = ceil_b / vpos - 1e-6
    if np.any(env_hi <= env_lo):
        raise EquilibriumError("degenerate clamp envelope; strength assumption too tight")

    Fv = weak.cdf(vpos)
    fv = weak.pdf(vpos)
    nm1 = float(n_weak - 1)

    def k_vec(gamma_pos: np.ndarray) -> np.ndarray:
        b = gamma_pos * vpos
        Gb = law.cdf(b)
        gb = law.pdf(b)
        Mb = law.partial_mean(b)
        m = np.where(Gb > 0, Mb / np.where(Gb > 0, Gb, 1.0), 0.0)
        return nm1 * (fv / Fv) * (Gb / gb) * (vpos - m) / (b - vpos)

    def k_origin(beta: float) -> float:
        return nm1 * beta / (beta - 1.0) * (1.0 - 0.5 * beta)

    gamma = np.full(grid.shape, beta0)
    alpha = opts.damping
    delta = math.inf
    grow_streak = 0
    iterations = 0
    t_full = gamma.copy()
    for iterations in range(1, opts.max_iter + 1):
        kk = np.concatenate([[k_origin(gamma[0])], k_vec(gamma[1:])])
        integral = np.concatenate([[0.0], np.cumsum(0.5 * (kk[1:] + kk[:-1]) * np.diff(grid))])
        t_full = np.concatenate([[beta0], integral[1:] / vpos])
        new_delta = float(np.max(np.abs(gamma - t_full)))
        if new_delta <= opts.fp_tolerance:
            delta = new_delta
            break
        grow_streak = grow_streak + 1 if new_delta > delta else 0
        if grow_streak >= 5 and alpha > 0.01:
            alpha *= 0.5
            grow_streak = 0
        delta = new_delta
        clamped = np.concatenate([[beta0], np.clip(t_full[1:], env_lo, env_hi)])
        gamma = (1.0 - alpha) * gamma + alpha * clamped
    else:
        raise FixedPointDivergence(
            f"no convergence after {opts.max_iter} iterations "
            f"(last sup-norm delta {delta:.3g})",
            delta,
        )

    clamp_active = int(np.sum((t_full[1:] < env_lo) | (t_full[1:] > env_hi)))
    if clamp_active:
        notes = notes + [f"clamp active at {clamp_active} nodes on the converged iterate"]

    values = gamma * grid
    slopes = np.concatenate([[beta0], k_vec(gamma[1:])])
    bid = BidFunction(grid, values, slopes)
    rhs = _rhs_factory(weak, law, n_weak)
    report = SolveReport(
        method="picard",
        max_ode_residual=_max_residual(bid, rhs),
        picard_iterations=iterations,
        sup_norm_delta=delta,
        warnings=tuple(notes),
    )
    return bid, report


# ---------------------------------------------------------------------------
# payoffs and best-response verification
# ---------------------------------------------------------------------------


def deviation_payoff(v_true, v_report, bid: BidFunction, weak: DistributionSpec,
                     strong, n_weak: int):
    """Expected payoff of a weak bidder of value v reporting v_report.

    pi(r | v) = F(r)^(N-1) * integral over [0, b(r)] of (v - s) dG(s),
    with the inner integral in closed form v*G(b) - M(b).
    """
    law = as_strong_law(strong)
    r = np.asarray(v_report, dtype=float)
    v = np.asarray(v_true, dtype=float)
    b = bid(r)
    win1 = weak.cdf(r) ** (n_weak - 1)
    out = win1 * (v * law.cdf(b) - law.partial_mean(b))
    return float(out) if out.ndim == 0 else out


def raw_bid_payoff(v_true, raw_bid, weak: DistributionSpec, strong, n_weak: int):
    """Payoff of bidding above the top of the schedule (first stage won surely)."""
    law = as_strong_law(strong)
    b = np.asarray(raw_bid, dtype=float)
    v = np.asarray(v_true, dtype=float)
    out = v * law.cdf(b) - law.partial_mean(b)
    return float(out) if out.ndim == 0 else out


def verify_best_response(
    bid: BidFunction,
    weak: DistributionSpec,
    strong,
    n_weak: int,
    v_grid: np.ndarray | None = None,
    dev_grid: np.ndarray | None = None,
    n_raw_bids: int = 16,
) -> BestResponseReport:
    """Max regret of the schedule against reported-value and raw-bid deviations."""
    law = as_strong_law(strong)
    v_bar = weak.support.hi
    if v_grid is None:
        v_grid = np.linspace(v_bar / 50, v_bar, 50)
    if dev_grid is None:
        dev_grid = np.linspace(0.0, v_bar, 200)
    v_grid = np.asarray(v_grid, dtype=float)
    dev_grid = np.asarray(dev_grid, dtype=float)

    b_dev = bid(dev_grid)
    win1 = weak.cdf(dev_grid) ** (n_weak - 1)
    G = law.cdf(b_dev)
    M = law.partial_mean(b_dev)
    pi = win1[None, :] * (v_grid[:, None] * G[None, :] - M[None, :])

    b_eq = bid(v_grid)
    pi_eq = weak.cdf(v_grid) ** (n_weak - 1) * (v_grid * law.cdf(b_eq) - law.partial_mean(b_eq))

    regret = pi - pi_eq[:, None]
    i, j = np.unravel_index(np.argmax(regret), regret.shape)
    max_regret = float(regret[i, j])
    worst = (float(v_grid[i]), float(dev_grid[j]))

    # raw bids above the top of the schedule (win the first stage outright)
    top = bid.b_top
    if law.hi > top and n_raw_bids > 0:
        raws = np.linspace(top, law.hi, n_raw_bids + 1)[1:]
        pi_raw = v_grid[:, None] * law.cdf(raws)[None, :] - law.partial_mean(raws)[None, :]
        raw_regret = pi_raw - pi_eq[:, None]
        ri, rj = np.unravel_index(np.argmax(raw_regret), raw_regret.shape)
        if float(raw_regret[ri, rj]) > max_regret:
            max_regret = float(raw_regret[ri, rj])
            worst = (float(v_grid[ri]), float(raws[rj]))

    # argmax of pi(. | v) should sit within one dev-grid step of v
    arg = np.argmax(pi, axis=1)
    nearest = np.searchsorted(dev_grid, v_grid)
    nearest = np.clip(nearest, 1, dev_grid.size - 1)
    nearest = np.where(
        np.abs(dev_grid[nearest - 1] - v_grid) <= np.abs(dev_grid[nearest] - v_grid),
        nearest - 1,
        nearest,
    )
    max_offset = int(np.max(np.abs(arg - nearest)))

    return BestResponseReport(
        max_regret=max(max_regret, 0.0),
        worst_pair=worst,
        grid_shape=(v_grid.size, dev_grid.size),
        max_argmax_offset=max_offset,
    )


# ---------------------------------------------------------------------------
# discrete two-point benchmark
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteEquilibrium:
    threshold_bid: float
    expected_revenue: float

    def bid(self, v: float) -> float:
        return self.threshold_bid if v > 0.0 else 0.0


def discrete_atom_equilibrium(p: float, k: float, weak: DistributionSpec,
                              n_weak: int) -> DiscreteEquilibrium:
    """All-in equilibrium of the two-point strong law (bid k when v > 0); revenue p*k."""
    v_bar = weak.support.hi
    if not 0.0 < p < 1.0:
        raise EquilibriumError(f"p must be in (0, 1), got {p}")
    if p * k <= v_bar:
        raise EquilibriumError(
            f"pk = {p * k:.6g} <= v_bar = {v_bar:.6g}: all-in equilibrium not guaranteed"
        )
    return DiscreteEquilibrium(threshold_bid=k, expected_revenue=p * k)
