"""Monotone transport from a Gaussian to a tilted measure.

Given a potential V and a Gaussian reference law nu = N(0, A), the measure

    mu(dx) = (1/Z) exp(-V(x)) nu(dx)

is represented through composite Gauss-Legendre panel integrals of its
unnormalized density on an adaptively refined edge grid.  Cumulative masses
are accumulated from *both* ends, so the CDF keeps full relative accuracy in
the left tail and the survival function in the right tail; quantiles, the
increasing rearrangement map g = F_mu^{-1} o Phi and its derivative

    g'(x) = Phi'(x) / F_mu'(g(x))

are then accurate deep into both tails.  The derivative is always evaluated
through this density ratio, never by finite differences.

For convex V the map satisfies g' <= sqrt(A); ``check_g_prime_bound``,
``check_hazard_bounds`` and ``check_density_quantile_gap`` probe that bound
and the two pointwise inequalities behind it on evaluation grids, after an
internal reduction to unit Gaussian variance (V~(x) = V(sqrt(A) x), A~ = 1,
under which g_A(x) = sqrt(A) g_1(x)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian_core import std_normal_cdf, std_normal_pdf, std_normal_quantile
from .potentials import Potential, rescale_potential

__all__ = [
    "TransportMap",
    "DivergentNormalizerError",
    "NonFinitePotentialError",
    "NonConvexPotentialError",
    "GPrimeBoundReport",
    "HazardBoundReport",
    "DensityQuantileGapReport",
    "build_transport",
    "check_g_prime_bound",
    "check_hazard_bounds",
    "check_density_quantile_gap",
]


class DivergentNormalizerError(ValueError):
    """The normalizer integral of exp(-V) d nu did not converge."""


class NonFinitePotentialError(ValueError):
    """The potential is not finite on the evaluation window."""


class NonConvexPotentialError(ValueError):
    """An operation that requires a convex potential got a non-convex one."""


# Gauss-Legendre panel rule; 7 points is exact through degree 13 and leaves
# composite errors far below every tolerance in use for panels <= 0.05 sd.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(7)

_WINDOW_SIGMA = 12.0       # window half width in units of sqrt(A), plus pad
_WINDOW_PAD = 2.0
_INITIAL_PANELS = 4096
_MAX_EDGES = 9000
_MAX_REFINE_ROUNDS = 30
_BOUNDARY_MASS_LIMIT = 1e-6   # relative tail-panel mass that flags divergence
_G_XMAX = 11.5                # |x| beyond which g is linearly extrapolated
_NEWTON_ITERS = 6
_TINY = 5e-324


def _panel_nodes(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return mid[:, None] + half[:, None] * _GL_X[None, :], half


class TransportMap:
    """Quadrature representation of mu and of the transport map g.

    Build once via :func:`build_transport`; evaluation methods are read-only
    and safe for concurrent use (the extrapolation counter is advisory).
    """

    def __init__(self, potential: Potential, variance: float,
                 quadrature_tol: float = 1e-12):
        if not (variance > 0.0 and np.isfinite(variance)):
            raise ValueError(f"Gaussian variance must be positive, got {variance}")
        if not (quadrature_tol > 0.0):
            raise ValueError("quadrature tolerance must be positive")
        self.potential = potential
        self.A = float(variance)
        self.quadrature_tol = float(quadrature_tol)
        self.extrapolation_count = 0
        self._unit_map: "TransportMap | None" = None

        sd = np.sqrt(self.A)
        self._log_norm = np.log(np.sqrt(2.0 * np.pi) * sd)

        # Window centered at the coarse argmin of the tilted exponent
        # V(x) + x^2/(2A); the Gaussian mass outside is < 1e-31.
        coarse = np.linspace(-_WINDOW_SIGMA * sd - 8.0,
                             _WINDOW_SIGMA * sd + 8.0, 4097)
        expo = np.asarray(potential.value(coarse), float) + coarse**2 / (2 * self.A)
        if not np.all(np.isfinite(expo)):
            raise NonFinitePotentialError(
                f"potential {potential.label!r} is not finite on the window")
        center = float(coarse[np.argmin(expo)])
        half = _WINDOW_SIGMA * sd + _WINDOW_PAD
        self.window = (center - half, center + half)

        self._build_tables()
        self._finalize_moments()
        self._prepare_extrapolation()

    # -- construction ------------------------------------------------------

    def _unnormalized_density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        expo = np.asarray(self.potential.value(x), float) + x * x / (2.0 * self.A)
        return np.exp(-expo - self._log_norm)

    def _build_tables(self) -> None:
        lo, hi = self.window
        edges = np.linspace(lo, hi, _INITIAL_PANELS + 1)
        interior_kinks = [k for k in self.potential.kinks if lo < k < hi]
        if interior_kinks:
            edges = np.unique(np.concatenate([edges, np.asarray(interior_kinks)]))

        for _ in range(_MAX_REFINE_ROUNDS):
            nodes, half = _panel_nodes(edges[:-1], edges[1:])
            vals = self._unnormalized_density(nodes)
            if not np.all(np.isfinite(vals)):
                raise NonFinitePotentialError(
                    f"density of {self.potential.label!r} is not finite "
                    "inside the window")
            panel = half * (vals @ _GL_W)
            mids = 0.5 * (edges[:-1] + edges[1:])
            ln, lh = _panel_nodes(edges[:-1], mids)
            rn, rh = _panel_nodes(mids, edges[1:])
            refined = (lh * (self._unnormalized_density(ln) @ _GL_W)
                       + rh * (self._unnormalized_density(rn) @ _GL_W))
            err = np.abs(panel - refined)
            total = float(np.sum(refined))
            bad = err > max(self.quadrature_tol, 1e-15) * max(total, 1e-300)
            if not np.any(bad) or len(edges) + int(np.sum(bad)) > _MAX_EDGES:
                if np.any(bad) and len(edges) + int(np.sum(bad)) > _MAX_EDGES:
                    raise DivergentNormalizerError(
                        f"normalizer quadrature for {self.potential.label!r} "
                        "did not converge within the node budget")
                break
            edges = np.unique(np.concatenate([edges, mids[bad]]))
        else:
            raise DivergentNormalizerError(
                f"normalizer quadrature for {self.potential.label!r} did not "
                f"converge after {_MAX_REFINE_ROUNDS} refinement rounds")

        nodes, half = _panel_nodes(edges[:-1], edges[1:])
        vals = self._unnormalized_density(nodes)
        mass = half * (vals @ _GL_W)
        mass_x = half * ((vals * nodes) @ _GL_W)
        mass_x2 = half * ((vals * nodes * nodes) @ _GL_W)
        if np.any(mass < 0.0):
            raise DivergentNormalizerError("negative panel mass encountered")

        z = float(np.sum(mass))
        if not (np.isfinite(z) and z > 0.0):
            raise DivergentNormalizerError(
                f"normalizer of {self.potential.label!r} evaluated to {z}")
        # A heavy boundary panel means the integrand has not decayed: the
        # normalizer (or a moment) is effectively divergent on R.
        edge_mass = float(mass[0] + mass[-1])
        if edge_mass > _BOUNDARY_MASS_LIMIT * z:
            raise DivergentNormalizerError(
                f"integrand of {self.potential.label!r} has relative mass "
                f"{edge_mass / z:.2e} in the boundary panels; "
                "exp(-V) d nu appears divergent")

        self.edges = edges
        self._mass = mass
        self._mass_x = mass_x
        self.Z = z
        self._cum_lo = np.concatenate([[0.0], np.cumsum(mass)])
        self._cum_hi = np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]])
        self._cum_x_lo = np.concatenate([[0.0], np.cumsum(mass_x)])
        self._cum_x_hi = np.concatenate([np.cumsum(mass_x[::-1])[::-1], [0.0]])
        self._sum_x2 = float(np.sum(mass_x2))

    def _finalize_moments(self) -> None:
        self.mean_mu = float(np.sum(self._mass_x) / self.Z)
        self.var_mu = float(self._sum_x2 / self.Z - self.mean_mu**2)

    def _prepare_extrapolation(self) -> None:
        self._g_edge_x = np.array([-_G_XMAX, _G_XMAX])
        self._g_edge_val = self._g_core(self._g_edge_x)
        self._g_edge_slope = self._g_prime_core(self._g_edge_x)

    # -- elementary evaluations ---------------------------------------------

    def density(self, x):
        """Density of mu: exp(-V(x)) nu'(x) / Z (zero outside the window)."""
        arr = np.atleast_1d(np.asarray(x, float))
        out = self._unnormalized_density(arr) / self.Z
        out[(arr < self.window[0]) | (arr > self.window[1])] = 0.0
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def _partial_mass(self, lo: np.ndarray, hi: np.ndarray,
                      weighted: bool = False) -> np.ndarray:
        nodes, half = _panel_nodes(lo, hi)
        vals = self._unnormalized_density(nodes)
        if weighted:
            vals = vals * nodes
        return half * (vals @ _GL_W)

    def _bracket(self, x: np.ndarray) -> np.ndarray:
        j = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(j, 0, len(self.edges) - 2)

    def cdf(self, x):
        """F_mu(x), formed from left-accumulated panel masses."""
        arr = np.atleast_1d(np.asarray(x, float))
        j = self._bracket(arr)
        inside = self._cum_lo[j] + self._partial_mass(self.edges[j], np.clip(
            arr, self.window[0], self.window[1]))
        out = np.clip(inside / self.Z, 0.0, 1.0)
        out[arr <= self.window[0]] = 0.0
        out[arr >= self.window[1]] = 1.0
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def survival(self, x):
        """1 - F_mu(x), formed from right-accumulated masses (tail accurate)."""
        arr = np.atleast_1d(np.asarray(x, float))
        j = self._bracket(arr)
        inside = self._cum_hi[j + 1] + self._partial_mass(
            np.clip(arr, self.window[0], self.window[1]), self.edges[j + 1])
        out = np.clip(inside / self.Z, 0.0, 1.0)
        out[arr <= self.window[0]] = 1.0
        out[arr >= self.window[1]] = 0.0
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    # -- quantiles -----------------------------------------------------------

    def _invert_lower(self, target: np.ndarray) -> np.ndarray:
        """Solve cum_lo(x) = target (unnormalized mass scale)."""
        cum = self._cum_lo
        j = np.clip(np.searchsorted(cum, target, side="right") - 1,
                    0, len(cum) - 2)
        lo, hi = self.edges[j], self.edges[j + 1]
        frac = (target - cum[j]) / np.maximum(self._mass[j], _TINY)
        x = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        for _ in range(_NEWTON_ITERS):
            resid = self._cache_free_cdf_mass(j, x) - target
            x = np.clip(x - resid / np.maximum(self._unnormalized_density(x), _TINY),
                        lo, hi)
        return x

    def _invert_upper(self, target: np.ndarray) -> np.ndarray:
        """Solve cum_hi(x) = target (unnormalized survival mass scale)."""
        cum = self._cum_hi
        j = np.clip(np.searchsorted(-cum, -target, side="right") - 1,
                    0, len(cum) - 2)
        lo, hi = self.edges[j], self.edges[j + 1]
        frac = (target - cum[j + 1]) / np.maximum(self._mass[j], _TINY)
        x = hi - np.clip(frac, 0.0, 1.0) * (hi - lo)
        for _ in range(_NEWTON_ITERS):
            resid = (cum[j + 1] + self._partial_mass(x, hi)) - target
            x = np.clip(x + resid / np.maximum(self._unnormalized_density(x), _TINY),
                        lo, hi)
        return x

    def _cache_free_cdf_mass(self, j: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self._cum_lo[j] + self._partial_mass(self.edges[j], x)

    def quantile(self, u):
        """F_mu^{-1}(u) for u in (0, 1); inverse of :meth:`cdf` to build tol."""
        arr = np.atleast_1d(np.asarray(u, float))
        if not np.all((arr > 0.0) & (arr < 1.0)):
            raise ValueError("quantile requires u strictly inside (0, 1)")
        out = np.empty_like(arr)
        lo_side = arr <= 0.5
        if np.any(lo_side):
            out[lo_side] = self._invert_lower(arr[lo_side] * self.Z)
        if np.any(~lo_side):
            # 1 - u is exact for u >= 1/2, so the right tail loses nothing.
            out[~lo_side] = self._invert_upper((1.0 - arr[~lo_side]) * self.Z)
        return float(out[0]) if np.ndim(u) == 0 else out.reshape(np.shape(u))

    # -- the transport map ----------------------------------------------------

    def _g_core(self, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        neg = x <= 0.0
        if np.any(neg):
            out[neg] = self._invert_lower(std_normal_cdf(x[neg]) * self.Z)
        if np.any(~neg):
            out[~neg] = self._invert_upper(std_normal_cdf(-x[~neg]) * self.Z)
        return out

    def _g_prime_core(self, x: np.ndarray) -> np.ndarray:
        gx = self._g_core(x)
        dens = self._unnormalized_density(gx) / self.Z
        return std_normal_pdf(x) / np.maximum(dens, _TINY)

    def g(self, x):
        """The transport map g(x) = F_mu^{-1}(Phi(x)).

        Beyond |x| = 11.5 the map is extended linearly with the edge slope
        (the Gaussian mass there is below 1e-30); such calls are tallied in
        ``extrapolation_count``.
        """
        arr = np.atleast_1d(np.asarray(x, float))
        out = np.empty_like(arr)
        inside = np.abs(arr) <= _G_XMAX
        if np.any(inside):
            out[inside] = self._g_core(arr[inside])
        n_out = int(arr.size - np.count_nonzero(inside))
        if n_out:
            self.extrapolation_count += n_out
            side = (arr[~inside] > 0).astype(int)
            out[~inside] = (self._g_edge_val[side]
                            + self._g_edge_slope[side]
                            * (arr[~inside] - self._g_edge_x[side]))
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def g_prime(self, x):
        """g'(x) = Phi'(x) / F_mu'(g(x)), by the density ratio."""
        arr = np.atleast_1d(np.asarray(x, float))
        out = np.empty_like(arr)
        inside = np.abs(arr) <= _G_XMAX
        if np.any(inside):
            out[inside] = self._g_prime_core(arr[inside])
        n_out = int(arr.size - np.count_nonzero(inside))
        if n_out:
            self.extrapolation_count += n_out
            side = (arr[~inside] > 0).astype(int)
            out[~inside] = self._g_edge_slope[side]
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    # -- partial first moments (used by the moment verifier) -------------------

    def upper_call_value(self, c):
        """E[(X - c)^+] via right-accumulated partial first moments."""
        arr = np.atleast_1d(np.asarray(c, float))
        j = self._bracket(arr)
        cx = np.clip(arr, self.window[0], self.window[1])
        pm = (self._cum_x_hi[j + 1]
              + self._partial_mass(cx, self.edges[j + 1], weighted=True)) / self.Z
        out = pm - arr * self.survival(arr)
        out[arr <= self.window[0]] = self.mean_mu - arr[arr <= self.window[0]]
        out[arr >= self.window[1]] = 0.0
        out = np.maximum(out, 0.0)
        return float(out[0]) if np.ndim(c) == 0 else out.reshape(np.shape(c))

    def lower_put_value(self, c):
        """E[(c - X)^+] via left-accumulated partial first moments."""
        arr = np.atleast_1d(np.asarray(c, float))
        j = self._bracket(arr)
        cx = np.clip(arr, self.window[0], self.window[1])
        pm = (self._cum_x_lo[j]
              + self._partial_mass(self.edges[j], cx, weighted=True)) / self.Z
        out = arr * self.cdf(arr) - pm
        out[arr <= self.window[0]] = 0.0
        out[arr >= self.window[1]] = arr[arr >= self.window[1]] - self.mean_mu
        out = np.maximum(out, 0.0)
        return float(out[0]) if np.ndim(c) == 0 else out.reshape(np.shape(c))

    # -- unit-variance reduction ----------------------------------------------

    def unit_variance_map(self) -> "TransportMap":
        """The reduced build with V~(x) = V(sqrt(A) x) and A~ = 1 (cached)."""
        if self.A == 1.0:
            return self
        if self._unit_map is None:
            self._unit_map = TransportMap(
                rescale_potential(self.potential, np.sqrt(self.A)),
                1.0, self.quadrature_tol)
        return self._unit_map


def build_transport(potential: Potential, variance: float,
                    quadrature_tol: float = 1e-12) -> TransportMap:
    """Construct the transport representation of mu = exp(-V) d N(0, A) / Z.

    Raises
    ------
    DivergentNormalizerError
        If the normalizer quadrature fails to converge or the integrand has
        not decayed at the window boundary.
    NonFinitePotentialError
        If V takes non-finite values on the evaluation window.
    """
    return TransportMap(potential, variance, quadrature_tol)


# ---------------------------------------------------------------------------
# grid checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GPrimeBoundReport:
    max_g_prime: float
    arg_max: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class HazardBoundReport:
    """Worst relative deficits of the two supporting-line inequalities.

    In unit-variance coordinates, with z = x + V'(x) taken for both one-sided
    derivatives, the checks are F'/F (x) >= Phi'/Phi (z) and F'(x) >= Phi'(z).
    """

    max_ratio_deficit: float
    max_density_deficit: float
    violations: tuple[float, ...]
    passed: bool


@dataclass(frozen=True)
class DensityQuantileGapReport:
    min_gap: float
    arg_min: float
    passed: bool


def check_g_prime_bound(tmap: TransportMap, grid) -> GPrimeBoundReport:
    """Check g' <= sqrt(A) on a grid, with 1e-8 relative headroom."""
    grid = np.asarray(grid, float)
    gp = np.asarray(tmap.g_prime(grid), float)
    i = int(np.argmax(gp))
    bound = np.sqrt(tmap.A)
    return GPrimeBoundReport(
        max_g_prime=float(gp[i]), arg_max=float(grid[i]), bound=float(bound),
        passed=bool(gp[i] <= bound * (1.0 + 1e-8)))


_HAZARD_REL_SLACK = 1e-9


def check_hazard_bounds(tmap: TransportMap, grid=None) -> HazardBoundReport:
    """Verify the one-sided tilted-hazard inequalities for convex potentials.

    The build is reduced to unit Gaussian variance first.  Non-convex
    potentials are rejected: the supporting-line argument behind the
    inequalities needs convexity.
    """
    if not tmap.potential.convex:
        raise NonConvexPotentialError(
            "hazard bounds require a convex potential; got "
            f"{tmap.potential.label!r}")
    unit = tmap.unit_variance_map()
    if grid is None:
        grid = np.linspace(-5.0, 5.0, 201)
    grid = np.unique(np.concatenate(
        [np.asarray(grid, float), np.asarray(unit.potential.kinks, float)]))

    dens = np.asarray(unit.density(grid), float)
    cdf = np.asarray(unit.cdf(grid), float)
    ratio_deficit = np.full_like(grid, -np.inf)
    dens_deficit = np.full_like(grid, -np.inf)
    for deriv in (unit.potential.left_derivative, unit.potential.right_derivative):
        z = grid + np.asarray(deriv(grid), float)
        phi_z = std_normal_pdf(z)
        cdf_z = std_normal_cdf(z)
        rd = (phi_z / cdf_z - dens / np.maximum(cdf, _TINY)) / (phi_z / cdf_z)
        dd = (phi_z - dens) / phi_z
        ratio_deficit = np.maximum(ratio_deficit, rd)
        dens_deficit = np.maximum(dens_deficit, dd)
    worst = np.maximum(ratio_deficit, dens_deficit)
    bad = grid[worst > _HAZARD_REL_SLACK]
    return HazardBoundReport(
        max_ratio_deficit=float(np.max(ratio_deficit)),
        max_density_deficit=float(np.max(dens_deficit)),
        violations=tuple(float(v) for v in bad),
        passed=(bad.size == 0))


def check_density_quantile_gap(tmap: TransportMap,
                               xi_grid=None) -> DensityQuantileGapReport:
    """Check F'(F^{-1}(xi)) >= Phi'(Phi^{-1}(xi)) on a quantile grid.

    Equivalent to the g' bound in unit-variance coordinates; requires a
    convex potential and reduces to A = 1 internally.
    """
    if not tmap.potential.convex:
        raise NonConvexPotentialError(
            "density-quantile gap requires a convex potential; got "
            f"{tmap.potential.label!r}")
    unit = tmap.unit_variance_map()
    if xi_grid is None:
        xi_grid = np.linspace(0.0005, 0.9995, 1999)
    xi_grid = np.asarray(xi_grid, float)
    gap = (np.asarray(unit.density(unit.quantile(xi_grid)), float)
           - std_normal_pdf(std_normal_quantile(xi_grid)))
    i = int(np.argmin(gap))
    return DensityQuantileGapReport(
        min_gap=float(gap[i]), arg_min=float(xi_grid[i]),
        passed=bool(gap[i] >= -1e-9))
