"""Moment-inequality verdicts for Gaussian-dominated measures.

For a centered Gaussian Y of variance A and X distributed as the tilted
measure of a transport build, three inequalities are checked for each convex
test function psi (all moments centered):

    lower (bl1):   E psi(Y) >= E psi(X)
    sharpened (bl2): E psi(Y) >= E psi(X) + correction(psi, A, var X)
    upper (bl3):   E psi(Y) <= E psi(X) + C(A, psi, q) (A - var X)^{1/(2p)}

together with the p -> 1 finite-mass gap bound and the mean-absolute-
deviation ratio bound E|X - EX| / var(X) >= 1 / sqrt(2 pi A).

Expectations are evaluated by deterministic quadrature: both sides reduce,
through the second-derivative measure of psi, to integrals of call/put
values (analytic for the Gaussian side, partial-moment tables of the
transport build for the tilted side).  Monte Carlo through the embedding is
only a cross-check, never the primary estimator, and the variance entering
the corrections is always the quadrature value.

The appendix route covers non-convex potentials generated by a slope map k
with k' >= sqrt(alpha): the same machinery applies verbatim with effective
Gaussian variance 1/alpha, because the transport derivative is bounded by
1/sqrt(alpha) and the stopping time by 1/alpha.

Infinite sides follow the convention that an inequality with both sides
infinite holds; upper-bound entries with an infinite constant are skipped
and flagged.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bass_embedding import EmbeddingEnsemble
from .convex_tests import (ConvexTest, bl2_correction, bl3_constant,
                           builtin_convex_test, eval_psi,
                           integrate_against_second_derivative, p1_limit_bounds)
from .gaussian_core import std_normal_cdf, std_normal_pdf
from .potentials import Potential, SlopeMap, check_slope_bounds, \
    potential_from_slope_map
from .transport import NonConvexPotentialError, TransportMap, build_transport

__all__ = [
    "Bl3Entry",
    "VerificationReport",
    "McCrossCheck",
    "SlopeBoundError",
    "BL1_TOL",
    "BL2_TOL",
    "BL3_TOL",
    "MAD_TOL",
    "moment_lhs",
    "moment_rhs",
    "verify_theorem",
    "verify_appendix",
    "gaussianized_potential",
    "appendix_transport",
    "mc_crosscheck",
    "format_float",
]

BL1_TOL = 1e-8
BL2_TOL = 1e-8 + 1e-6   # sharpening term carries nested-quadrature error
BL3_TOL = 1e-8
MAD_TOL = 1e-9
GAP_P1_TOL = 1e-8


class SlopeBoundError(ValueError):
    """Declared slope bound fails on the verification grid."""


def format_float(x) -> str | None:
    """Decimal string with 17 significant digits (None passes through)."""
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return f"{x:.17g}"


@dataclass(frozen=True)
class Bl3Entry:
    p: float
    q: float
    constant: float
    upper_correction: float
    margin: float
    skipped: bool
    passed: bool


@dataclass(frozen=True)
class McCrossCheck:
    estimate: float
    std_error: float
    reference: float
    within_3se: bool


@dataclass
class VerificationReport:
    """All numbers behind one (potential, psi) verdict.

    ``passes`` holds one boolean per inequality actually evaluated; margins
    are stored so every flag can be recomputed from the report alone.
    """

    kind: str                   # "theorem" or "appendix"
    potential_label: str
    psi_label: str
    gaussian_variance: float
    lhs: float
    rhs: float
    mean_x: float
    var_x: float
    bl1_margin: float
    bl2_correction: float
    bl2_margin: float
    bl3: tuple[Bl3Entry, ...]
    lhs_infinite: bool
    rhs_infinite: bool
    mad_ratio: float | None = None
    mad_lower_bound: float | None = None
    gap_p1_bound: float | None = None
    gap_p1_margin: float | None = None
    lower_variance: float | None = None
    lower_lhs: float | None = None
    lower_margin: float | None = None
    normalizer_residual: float | None = None
    slope_min: float | None = None
    slope_max: float | None = None
    mc: McCrossCheck | None = None
    passes: dict = dataclasses.field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.passes.values())

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "potential": self.potential_label,
            "psi": self.psi_label,
            "gaussian_variance": format_float(self.gaussian_variance),
            "lhs": format_float(self.lhs),
            "rhs": format_float(self.rhs),
            "mean_x": format_float(self.mean_x),
            "var_x": format_float(self.var_x),
            "bl1_margin": format_float(self.bl1_margin),
            "bl2_correction": format_float(self.bl2_correction),
            "bl2_margin": format_float(self.bl2_margin),
            "bl3": [
                {"p": format_float(e.p), "q": format_float(e.q),
                 "constant": format_float(e.constant),
                 "upper_correction": format_float(e.upper_correction),
                 "margin": format_float(e.margin),
                 "skipped": e.skipped, "passed": e.passed}
                for e in self.bl3
            ],
            "lhs_infinite": self.lhs_infinite,
            "rhs_infinite": self.rhs_infinite,
            "mad_ratio": format_float(self.mad_ratio),
            "mad_lower_bound": format_float(self.mad_lower_bound),
            "gap_p1_bound": format_float(self.gap_p1_bound),
            "gap_p1_margin": format_float(self.gap_p1_margin),
            "lower_variance": format_float(self.lower_variance),
            "lower_lhs": format_float(self.lower_lhs),
            "lower_margin": format_float(self.lower_margin),
            "normalizer_residual": format_float(self.normalizer_residual),
            "slope_min": format_float(self.slope_min),
            "slope_max": format_float(self.slope_max),
            "mc": None if self.mc is None else {
                "estimate": format_float(self.mc.estimate),
                "std_error": format_float(self.mc.std_error),
                "reference": format_float(self.mc.reference),
                "within_3se": self.mc.within_3se,
            },
            "passes": dict(sorted(self.passes.items())),
        }
        return out


# ---------------------------------------------------------------------------
# moment sides
# ---------------------------------------------------------------------------

def _gaussian_call(variance: float) -> Callable:
    sd = math.sqrt(variance)

    def call(y):
        k = np.abs(np.asarray(y, float)) / sd
        return sd * (std_normal_pdf(k) - k * std_normal_cdf(-k))

    return call


def moment_lhs(psi: ConvexTest, variance: float) -> float:
    """E[psi(Y - EY)] for Gaussian Y of the given variance, by quadrature of
    analytic call values against psi''; +inf when the psi'' integral
    diverges."""
    if not (variance > 0.0):
        raise ValueError("variance must be positive")
    window = 12.0 * math.sqrt(variance) + 10.0
    val = integrate_against_second_derivative(
        psi, _gaussian_call(variance), window=window)
    if math.isinf(val):
        return math.inf
    return psi.value_at_zero + val


def moment_rhs(psi: ConvexTest, tmap: TransportMap) -> float:
    """E[psi(X - EX)] against the transport build of mu, by quadrature of
    table call/put values against psi''."""
    m = tmap.mean_mu

    def centered_option(y):
        y = float(y)
        if y >= 0.0:
            return float(tmap.upper_call_value(m + y))
        return float(tmap.lower_put_value(m + y))

    # Call/put values vanish identically beyond the quadrature window of the
    # build, so the divergence-detection strips must stay inside the region
    # the tables actually resolve.
    reach = min(m - tmap.window[0], tmap.window[1] - m)
    window = (reach - 0.5) / 1.05
    val = integrate_against_second_derivative(psi, centered_option,
                                              window=window)
    if math.isinf(val):
        return math.inf
    return psi.value_at_zero + val


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------

def _bl3_entries(psi, variance, rhs, lhs, delta, p_list):
    entries = []
    for p in p_list:
        if not (p > 1.0):
            raise ValueError(f"upper-bound exponents must exceed 1, got {p}")
        q = p / (p - 1.0)
        c = bl3_constant(psi, variance, q)
        if math.isinf(c) or math.isinf(lhs) or math.isinf(rhs):
            entries.append(Bl3Entry(p=p, q=q, constant=c,
                                    upper_correction=math.inf,
                                    margin=math.nan, skipped=True,
                                    passed=True))
            continue
        corr = c * delta ** (1.0 / (2.0 * p))
        margin = rhs + corr - lhs
        entries.append(Bl3Entry(p=p, q=q, constant=c, upper_correction=corr,
                                margin=margin, skipped=False,
                                passed=bool(margin >= -BL3_TOL)))
    return tuple(entries)


def _margins(lhs: float, rhs: float, corr: float) -> tuple[float, float]:
    if math.isinf(lhs) and math.isinf(rhs):
        return math.inf, math.inf   # both-infinite convention: holds
    return lhs - rhs, lhs - rhs - corr


def _mad_fields(tmap: TransportMap, variance: float) -> tuple[float, float]:
    abs_psi = builtin_convex_test("abs")
    mad = moment_rhs(abs_psi, tmap)
    return mad / tmap.var_mu, 1.0 / math.sqrt(2.0 * math.pi * variance)


def verify_theorem(psi: ConvexTest, tmap: TransportMap,
                   p_list=(1.5, 2.0, 4.0)) -> VerificationReport:
    """Full verdict for a convex potential: bl1/bl2/bl3 margins, the p -> 1
    gap bound when psi'' has finite mass, and the MAD ratio bound.

    Raises
    ------
    NonConvexPotentialError
        For non-convex potentials; those go through :func:`verify_appendix`.
    """
    if not tmap.potential.convex:
        raise NonConvexPotentialError(
            f"potential {tmap.potential.label!r} is not convex; "
            "use verify_appendix with its slope map")
    variance = tmap.A
    lhs = moment_lhs(psi, variance)
    rhs = moment_rhs(psi, tmap)
    var_x = tmap.var_mu
    delta = max(variance - var_x, 0.0)
    corr = bl2_correction(psi, variance, var_x)
    bl1_margin, bl2_margin = _margins(lhs, rhs, corr)
    bl3 = _bl3_entries(psi, variance, rhs, lhs, delta, p_list)
    mad_ratio, mad_lower = _mad_fields(tmap, variance)

    rb = p1_limit_bounds(psi, variance, var_x)
    gap_bound = rb.finite_mass_bound
    gap_margin = None
    if gap_bound is not None and not math.isinf(lhs):
        gap_margin = gap_bound - (lhs - rhs)

    passes = {
        "bl1": bool(bl1_margin >= -BL1_TOL),
        "bl2": bool(bl2_margin >= -BL2_TOL),
        "bl3": all(e.passed for e in bl3),
        "mad": bool(mad_ratio >= mad_lower - MAD_TOL),
    }
    if gap_margin is not None:
        passes["gap_p1"] = bool(gap_margin >= -GAP_P1_TOL)

    return VerificationReport(
        kind="theorem", potential_label=tmap.potential.label,
        psi_label=psi.label, gaussian_variance=variance,
        lhs=lhs, rhs=rhs, mean_x=tmap.mean_mu, var_x=var_x,
        bl1_margin=bl1_margin, bl2_correction=corr, bl2_margin=bl2_margin,
        bl3=bl3, lhs_infinite=math.isinf(lhs), rhs_infinite=math.isinf(rhs),
        mad_ratio=mad_ratio, mad_lower_bound=mad_lower,
        gap_p1_bound=gap_bound, gap_p1_margin=gap_margin, passes=passes)


def gaussianized_potential(lebesgue_potential: Potential,
                           variance: float) -> Potential:
    """Rewrite a Lebesgue-reference potential U as a tilt of N(0, variance):

        exp(-U(x)) dx  =  const * exp(-V(x)) N(0, variance)(dx),
        V(x) = U(x) - x^2 / (2 variance).

    The convexity flag is decided by a derivative-monotonicity grid test.
    """
    inv2a = 0.5 / variance

    def val(x):
        x = np.asarray(x, float)
        return np.asarray(lebesgue_potential.value(x), float) - inv2a * x * x

    def make_der(base):
        def der(x):
            x = np.asarray(x, float)
            return np.asarray(base(x), float) - 2.0 * inv2a * x
        return der

    left = make_der(lebesgue_potential.left_derivative)
    right = make_der(lebesgue_potential.right_derivative)
    grid = np.linspace(-8.0, 8.0, 1601)
    convex = bool(np.all(np.diff(np.asarray(right(grid), float)) >= -1e-10))
    return Potential(label=f"{lebesgue_potential.label}~gauss",
                     value=val, left_derivative=left, right_derivative=right,
                     convex=convex, kinks=lebesgue_potential.kinks)


def appendix_transport(slope_map: SlopeMap, alpha: float | None = None,
                       quadrature_tol: float = 1e-12) -> TransportMap:
    """Transport build for mu = exp(-U) dx / Z' with U = k^2/2 - log k',
    expressed against the effective Gaussian N(0, 1/alpha)."""
    a = float(alpha if alpha is not None else slope_map.alpha)
    if not (a > 0.0):
        raise ValueError("alpha must be positive")
    u_pot = potential_from_slope_map(slope_map)
    return build_transport(gaussianized_potential(u_pot, 1.0 / a), 1.0 / a,
                           quadrature_tol)


def verify_appendix(psi: ConvexTest, slope_map: SlopeMap,
                    alpha: float | None = None, beta: float | None = None,
                    p_list=(1.5, 2.0, 4.0), grid=None,
                    require_slope_bound: bool = True,
                    tmap: TransportMap | None = None) -> VerificationReport:
    """Verdict for a slope-map measure against N(0, 1/alpha).

    The declared lower slope bound is checked on a grid first (|x| <= 8 by
    default); a failure raises unless ``require_slope_bound`` is False, which
    is how the sharper comparison variances that hold without a pointwise
    slope bound are verified.  With ``beta`` set, the reverse inequality
    against N(0, 1/beta) is checked as well.
    """
    a = float(alpha if alpha is not None else slope_map.alpha)
    declared = dataclasses.replace(slope_map, alpha=a, beta=beta)
    if grid is None:
        grid = np.linspace(-8.0, 8.0, 1601)
    slope_report = check_slope_bounds(declared, grid)
    if require_slope_bound and not slope_report.passed:
        raise SlopeBoundError(
            f"slope map {slope_map.label!r} violates k' >= sqrt({a:g}) on "
            f"the grid (min k' = {slope_report.min_kprime:.12g})")

    variance = 1.0 / a
    if tmap is None:
        tmap = appendix_transport(slope_map, a)
    lhs = moment_lhs(psi, variance)
    rhs = moment_rhs(psi, tmap)
    var_x = tmap.var_mu
    delta = max(variance - var_x, 0.0)
    corr = bl2_correction(psi, variance, var_x)
    bl1_margin, bl2_margin = _margins(lhs, rhs, corr)
    bl3 = _bl3_entries(psi, variance, rhs, lhs, delta, p_list)

    # Lebesgue normalizer of exp(-U) is sqrt(2 pi), i.e. Z = 1/sqrt(variance)
    norm_resid = tmap.Z * math.sqrt(variance) - 1.0

    lower_variance = lower_lhs = lower_margin = None
    passes = {
        "bl1": bool(bl1_margin >= -BL1_TOL),
        "bl2": bool(bl2_margin >= -BL2_TOL),
        "bl3": all(e.passed for e in bl3),
        "slope_bounds": slope_report.passed,
    }
    if not require_slope_bound:
        # comparison-variance override: the grid report is informational
        passes.pop("slope_bounds")
    if beta is not None:
        lower_variance = 1.0 / float(beta)
        lower_lhs = moment_lhs(psi, lower_variance)
        lower_margin = rhs - lower_lhs
        passes["lower"] = bool(lower_margin >= -BL1_TOL)

    return VerificationReport(
        kind="appendix", potential_label=tmap.potential.label,
        psi_label=psi.label, gaussian_variance=variance,
        lhs=lhs, rhs=rhs, mean_x=tmap.mean_mu, var_x=var_x,
        bl1_margin=bl1_margin, bl2_correction=corr, bl2_margin=bl2_margin,
        bl3=bl3, lhs_infinite=math.isinf(lhs), rhs_infinite=math.isinf(rhs),
        lower_variance=lower_variance, lower_lhs=lower_lhs,
        lower_margin=lower_margin, normalizer_residual=norm_resid,
        slope_min=slope_report.min_kprime, slope_max=slope_report.max_kprime,
        passes=passes)


# ---------------------------------------------------------------------------
# Monte Carlo cross-check
# ---------------------------------------------------------------------------

def _eval_psi_samples(psi: ConvexTest, x: np.ndarray) -> np.ndarray:
    if psi.closed_form is not None:
        return np.asarray(psi.closed_form(x), float)
    out = np.full_like(x, psi.value_at_zero) + psi.left_slope_at_zero * x
    for loc, mass in psi.atoms:
        if loc >= 0.0:
            out += mass * np.maximum(x - loc, 0.0)
        else:
            out += mass * np.maximum(loc - x, 0.0)
    if psi.density is not None:
        out += np.array([eval_psi(
            ConvexTest("d", 0.0, 0.0, density=psi.density,
                       density_degree=psi.density_degree), v) for v in x])
    return out


def mc_crosscheck(psi: ConvexTest, ensemble: EmbeddingEnsemble,
                  tmap: TransportMap,
                  reference: float | None = None) -> McCrossCheck:
    """Sample mean of psi over the embedded values, against the quadrature
    moment.  The ensemble must come from the same transport build.

    Raises
    ------
    ValueError
        On mismatched provenance (different potential label or variance).
    """
    if (ensemble.potential_label != tmap.potential.label
            or ensemble.A != tmap.A):
        raise ValueError(
            "ensemble provenance mismatch: ensemble is for "
            f"({ensemble.potential_label!r}, A={ensemble.A}) but the "
            f"transport is ({tmap.potential.label!r}, A={tmap.A})")
    vals = _eval_psi_samples(psi, ensemble.bt)
    n = ensemble.n_paths
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    ref = moment_rhs(psi, tmap) if reference is None else float(reference)
    ok = bool(abs(est - ref) <= 3.0 * se) if not math.isinf(ref) else True
    return McCrossCheck(estimate=est, std_error=se, reference=ref,
                        within_3se=ok)
