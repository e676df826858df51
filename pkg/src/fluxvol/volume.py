"""Volume computations between flux surfaces.

Five routes to the same volumes, kept deliberately independent so they
cross-validate each other:

* ``volume_grid``      -- 2D grid sum of transit-time x section flux
                          density over the poloidal plane (the general
                          return-time formula, discretised),
* ``dVdPsi_contour``   -- line integral of T * i_eps(lambda) around a
                          discretised level set (the contour form of the
                          same formula),
* ``dVdPsi_thm1``      -- quasisymmetric form 2*pi*T_pol (axisymmetric),
* ``dVdPsi_thm3p``     -- density-preserving-symmetry form Delta/rho_hat,
* ``dVdPsi_thm4``      -- integrable form 2*pi*T_bar from averaged
                          returns along the unscaled field.

The dV/dPsi routes are turned into V(Psi) by trapezoidal integration on a
uniform ladder.  Ladders are clipped away from separatrices (where return
times diverge logarithmically) and degenerate centers (axis, island
O-points, where the contour collapses); the clipped slivers are accounted
for with linearly extrapolated endpoint values.  All dV/dPsi values are
taken as absolute magnitudes; orientation signs are chart noise.
"""

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import surfaces, tracer
from .coords import adapted_of_symplectic
from .surfaces import Region

TWO_PI = 2.0 * math.pi
FOUR_PI2 = 4.0 * math.pi**2


@dataclass(frozen=True)
class GridSpec:
    center: tuple            # (x0, y0)
    half_extents: tuple      # (L1, L2)
    counts: tuple            # (N1, N2)

    def __post_init__(self):
        if min(self.counts) < 2:
            raise ValueError("grid needs at least 2 nodes per direction")
        if min(self.half_extents) <= 0.0:
            raise ValueError("half extents must be positive")

    def nodes(self):
        # cell-centered placement: the midpoint rule matching the
        # 4*L1*L2/(N1*N2) cell weight
        x0, y0 = self.center
        L1, L2 = self.half_extents
        N1, N2 = self.counts
        xs = x0 - L1 + (np.arange(N1) + 0.5) * (2.0 * L1 / N1)
        ys = y0 - L2 + (np.arange(N2) + 0.5) * (2.0 * L2 / N2)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return X.ravel(), Y.ravel()

    @property
    def cell_weight(self):
        L1, L2 = self.half_extents
        N1, N2 = self.counts
        return 4.0 * L1 * L2 / (N1 * N2)


@dataclass
class PsiLadder:
    region: object           # Region or None (axisymmetric)
    values: np.ndarray       # evaluation points, anchor side first
    clamped_from: float      # true integration bounds after clamping to
    clamped_to: float        # the region interval
    requested: tuple         # (psi_from, psi_to) as asked for
    sep_clip: float          # delta used to stand off the separatrix


@dataclass
class VolumeProfile:
    method: str
    region: str
    Psi: np.ndarray
    dVdPsi: np.ndarray
    V_cum: np.ndarray
    total: float
    meta: dict = dc_field(default_factory=dict)


# ---------------------------------------------------------------------------
# ladders
# ---------------------------------------------------------------------------

def _region_interval(field, region, crit):
    """(lo, hi, lo_kind, hi_kind) of the open Psi interval of a region,
    endpoint kinds in {"sep", "deg", "free"}."""
    if field.chart == "cylindrical":
        return 0.0, 0.5 * field.r0**2, "deg", "free"
    if crit is None or not crit.has_island:
        raise ValueError("helical ladders need the critical set")
    if region is Region.INNER:
        return crit.psi_sep, crit.psi_axis, "sep", "deg"
    if region is Region.ISLAND:
        return crit.psi_o, crit.psi_sep, "deg", "sep"
    if region is Region.OUTER:
        return crit.psi_sep, math.inf, "sep", "free"
    raise ValueError(f"unknown region {region!r}")


def build_ladder(field, region, psi_from, psi_to, n, crit=None):
    """Uniform evaluation ladder from the anchor (psi_from side) to
    psi_to, clamped into the region interval and stood off its dangerous
    endpoints."""
    if n < 2:
        raise ValueError("ladder needs n >= 2")
    lo, hi, lo_kind, hi_kind = _region_interval(field, region, crit)
    width = abs(psi_to - psi_from)
    if width == 0.0:
        raise ValueError("empty Psi interval")
    d_sep = max(1e-4 * width, 1e-6)
    d_deg = max(1e-6 * width, 1e-9)
    # endpoints strictly inside the region are honored as given (return
    # times there are finite); the stand-off distances protect only
    # requests at or beyond a region boundary, where T or the contour
    # genuinely degenerates
    d_hard = 1e-11 * max(1.0, abs(lo) if math.isfinite(lo) else 0.0,
                         abs(hi) if math.isfinite(hi) else 0.0)

    def clamp(v):
        c = min(max(v, lo), hi)
        guard_lo = (d_sep if lo_kind == "sep" else d_deg) if v <= lo else d_hard
        guard_hi = (d_sep if hi_kind == "sep" else d_deg) if v >= hi else d_hard
        if lo_kind != "free" and c - lo < guard_lo:
            c = lo + guard_lo
        if hi_kind != "free" and hi - c < guard_hi:
            c = hi - guard_hi
        return c

    eff_from, eff_to = clamp(psi_from), clamp(psi_to)
    clamped_from = min(max(psi_from, lo), hi) if math.isfinite(hi) else max(psi_from, lo)
    clamped_to = min(max(psi_to, lo), hi) if math.isfinite(hi) else max(psi_to, lo)
    values = np.linspace(eff_from, eff_to, n)
    return PsiLadder(region=region, values=values,
                     clamped_from=clamped_from, clamped_to=clamped_to,
                     requested=(psi_from, psi_to), sep_clip=d_sep)


def integrate_profile(ladder, samples, method="", meta=None):
    """Cumulative trapezoid of |dV/dPsi| along the ladder, plus sliver
    corrections between the clamped bounds and the evaluation endpoints
    using linearly extrapolated endpoint values.  NaN samples (failed
    rows) are rejected with a warning."""
    x = np.asarray(ladder.values, dtype=float)
    f = np.abs(np.asarray(samples, dtype=float))
    good = np.isfinite(f)
    if not np.all(good):
        warnings.warn(f"dropping {np.count_nonzero(~good)} non-finite dV/dPsi rows")
        x, f = x[good], f[good]
    if x.size < 2:
        raise ValueError("not enough valid samples to integrate")

    ds = np.abs(np.diff(x))
    seg = 0.5 * (f[:-1] + f[1:]) * ds
    V = np.concatenate([[0.0], np.cumsum(seg)])

    def extrap(x_target, i0, i1):
        if x[i1] == x[i0]:
            return f[i0]
        t = (x_target - x[i0]) / (x[i1] - x[i0])
        return max(f[i0] + t * (f[i1] - f[i0]), 0.0)

    gap_lo = abs(x[0] - ladder.clamped_from)
    sliver_lo = 0.5 * (extrap(ladder.clamped_from, 0, 1) + f[0]) * gap_lo
    gap_hi = abs(ladder.clamped_to - x[-1])
    sliver_hi = 0.5 * (extrap(ladder.clamped_to, -1, -2) + f[-1]) * gap_hi

    V_cum = V + sliver_lo
    total = float(V_cum[-1] + sliver_hi)
    region = ladder.region.value if isinstance(ladder.region, Region) else "all"
    info = dict(meta or {})
    info.update(sliver_lo=sliver_lo, sliver_hi=sliver_hi,
                clamped_bounds=(ladder.clamped_from, ladder.clamped_to),
                requested=ladder.requested, n_ladder=int(x.size))
    return VolumeProfile(method=method, region=region, Psi=x, dVdPsi=f,
                         V_cum=V_cum, total=total, meta=info)


# ---------------------------------------------------------------------------
# Eq-(1) grid method
# ---------------------------------------------------------------------------

def volume_grid(field, Psi0, Psi1, grid, region=None, crit=None,
                rtol=1e-9, atol=1e-11):
    """Volume between the surfaces Psi0 and Psi1 by the return-time grid
    sum: (4 L1 L2 / N1 N2) * sum of T * |f| over member nodes.

    Membership is by strict Psi interval, plus region classification when
    ``region`` is given (needed where distinct regions share Psi values).
    For the helical model nodes are symplectic (ytil, ztil), |f| = B0; for
    the axisymmetric model nodes are (R, z), |f| = C/R.
    """
    X, Y = grid.nodes()
    lo, hi = sorted((Psi0, Psi1))
    if field.chart == "adapted":
        Psi = field.psi_label_section(X, Y)
    else:
        Psi = field.psi_label(np.stack([X, np.zeros_like(X), Y]))
    mask = (Psi > lo) & (Psi < hi)
    if region is not None and field.chart == "adapted":
        regions, _ = surfaces.classify_batch(field, crit, X[mask], Y[mask])
        keep = regions == region
        idx = np.nonzero(mask)[0][keep]
        mask = np.zeros_like(mask)
        mask[idx] = True
    if not np.any(mask):
        warnings.warn("empty membership set; volume is 0")
        return 0.0
    Xs, Ys = X[mask], Y[mask]
    if field.chart == "adapted":
        psi, vth = adapted_of_symplectic(Xs, Ys, field.B0)
        T = tracer.toroidal_transit_times(field, psi, vth, rtol=rtol, atol=atol)
        fdens = field.section_flux_density(Xs, Ys)
    else:
        T = tracer.toroidal_transit_times(field, Xs, Ys, rtol=rtol, atol=atol)
        fdens = field.section_flux_density(Xs)
    return float(grid.cell_weight * np.sum(T * fdens))


# ---------------------------------------------------------------------------
# contour (A1) method
# ---------------------------------------------------------------------------

def axisym_circle_contour(Psi, N_g):
    """Exact level-set discretisation for the axisymmetric model: the
    circle of radius sqrt(2 Psi) about (R, z) = (1, 0)."""
    if Psi <= 0.0:
        raise ValueError("Psi must be positive")
    th = TWO_PI * np.arange(N_g) / N_g
    rad = math.sqrt(2.0 * Psi)
    nodes = np.column_stack([1.0 + rad * np.cos(th), rad * np.sin(th)])
    return surfaces.LevelSetContour(region=Region.INNER, Psi0=float(Psi),
                                    loops=[nodes])


def _cyclic_half_diffs(values, closure):
    """eps_j = (v_{j+1} - v_{j-1})/2 around a closed loop; ``closure`` is
    the increment of an unwrapped angle over one full loop (0 for loops
    that do not encircle the chart center)."""
    ext = np.concatenate([[values[-1] - closure], values, [values[0] + closure]])
    return 0.5 * (ext[2:] - ext[:-2])


def _contour_geometry(field, contour, loop):
    """Per-node (point, n, B, sqrt_g, eps) arrays for one contour loop."""
    if field.chart == "adapted":
        psi, vth = adapted_of_symplectic(loop[:, 0], loop[:, 1], field.B0)
        vth = np.unwrap(vth)
        closure = TWO_PI if contour.region is not Region.ISLAND else 0.0
        eps = np.stack([_cyclic_half_diffs(psi, 0.0),
                        _cyclic_half_diffs(vth, closure),
                        np.zeros_like(psi)], axis=-1)
        pts = np.stack([psi, vth, np.zeros_like(psi)])
        G = field.grad_psi_label(pts)
        ginv = np.stack([2.0 * field.B0 * psi,
                         field.B0 / (2.0 * psi),
                         np.full_like(psi, 1.0 / field.R0**2)])
        D = np.sum(ginv * G * G, axis=0)
        nvec = (ginv * G / D).T
    else:
        Rn, zn = loop[:, 0], loop[:, 1]
        eps = np.stack([_cyclic_half_diffs(Rn, 0.0),
                        np.zeros_like(Rn),
                        _cyclic_half_diffs(zn, 0.0)], axis=-1)
        pts = np.stack([Rn, np.zeros_like(Rn), zn])
        G = field.grad_psi_label(pts)
        D = np.sum(G * G, axis=0)
        nvec = (G / D).T
    return pts, nvec, field.b_contra(pts).T, field.sqrt_g(pts), eps


def contour_section_coords(field, contour):
    """Section coordinates of all contour nodes, loop-concatenated, in the
    form :func:`tracer.toroidal_transit_times` expects."""
    nodes = contour.nodes
    if field.chart == "adapted":
        psi, vth = adapted_of_symplectic(nodes[:, 0], nodes[:, 1], field.B0)
        return psi, vth
    return nodes[:, 0], nodes[:, 1]


def dVdPsi_contour(field, contour, T=None, rtol=1e-9, atol=1e-11):
    """Contour discretisation of dV/dPsi = integral of T * lambda along
    the level set, with lambda = i_B i_n Omega and n = grad(Psi)/|grad(Psi)|^2.

    Per node: i_eps(lambda) = sqrt|g| * det W, where the columns of W are
    the contravariant components of (n, B, eps_j) and eps_j is half the
    displacement between the node's cyclic neighbours.  T is one toroidal
    transit per node (computed here unless supplied, loop-concatenated).
    Island contours contribute all their loops.
    """
    if T is None:
        a, b = contour_section_coords(field, contour)
        T = tracer.toroidal_transit_times(field, a, b, rtol=rtol, atol=atol)
    T = np.asarray(T, dtype=float)
    total, k = 0.0, 0
    for loop in contour.loops:
        pts, nvec, B, sqrtg, eps = _contour_geometry(field, contour, loop)
        W = np.stack([nvec, B, eps], axis=-1)
        total += float(np.sum(T[k:k + len(loop)] * sqrtg * np.linalg.det(W)))
        k += len(loop)
    return abs(total)


def dVdPsi_contour_axisym_closed(field, Psi, T, N_g):
    """Closed-form reduction of the axisymmetric contour sum:
    C * sum_j T_j sin(2 pi/N) / (1 + sqrt(2 Psi) cos(theta_j)); used as an
    independent check of the determinant path."""
    th = TWO_PI * np.arange(N_g) / N_g
    R = 1.0 + math.sqrt(2.0 * Psi) * np.cos(th)
    return float(field.C * math.sin(TWO_PI / N_g) * np.sum(np.asarray(T) / R))


# ---------------------------------------------------------------------------
# theorem routes
# ---------------------------------------------------------------------------

def dVdPsi_thm1(field, Psi, rel_tol=1e-10, abs_tol=1e-12):
    """Quasisymmetric route for the axisymmetric model: tau * T(Psi) with
    tau = 2*pi and T the poloidal return time from the single outboard
    seed (1 + sqrt(2 Psi), 0)."""
    if field.chart != "cylindrical":
        raise ValueError("theorem-1 route applies to the axisymmetric model")
    if Psi <= 0.0:
        raise ValueError("Psi must be positive")
    x0 = (field.axis_R + math.sqrt(2.0 * Psi), 0.0, 0.0)
    spec = tracer.TraceSpec(field=field, x0=x0, rhs="B",
                            rel_tol=rel_tol, abs_tol=abs_tol)
    ev = tracer.return_to_section(spec, section="poloidal_angle", count=1)[0]
    return TWO_PI * ev.t


def _seed_point(field, Psi, region, crit):
    cont = surfaces.extract_contour(field, Psi, region, N_g=8, crit=crit)
    y, z = cont.loops[0][0]
    psi, vth = adapted_of_symplectic(y, z, field.B0)
    return (psi, vth, 0.0)


def dVdPsi_thm3p(field, Psi, region, q=6, crit=None, unit_density=False,
                 rel_tol=1e-10, abs_tol=1e-12, max_time=None):
    """Density-preserving-symmetry route: Delta(Psi) / rho_hat(Psi).

    Delta = u_period * T from the lattice generators (T along v = B/rho),
    rho_hat the harmonic average of the density over the surface on a
    q x q lattice subdivision.  ``unit_density=True`` skips rho_hat
    (the volume-preserving-symmetry degenerate case).
    """
    if crit is None:
        crit = surfaces.find_critical_points(field)
    point = _seed_point(field, Psi, region, crit)
    gens = surfaces.lattice_generators(field, point, rel_tol=rel_tol,
                                       abs_tol=abs_tol, max_time=max_time)
    if unit_density:
        return gens.Delta
    rho_hat = surfaces.harmonic_average_rho(field, point, gens, q=q,
                                            rel_tol=rel_tol, abs_tol=abs_tol)
    return gens.Delta / rho_hat


def dVdPsi_thm4(field, Psi, region, n_avg=10, crit=None,
                rel_tol=1e-10, abs_tol=1e-12, max_time=None):
    """Integrable-field route: |dPhi/dPsi| * T_bar = 2*pi * T_bar, with
    T_bar the average over the first ``n_avg`` valid u-line returns along
    the unscaled field B."""
    if crit is None:
        crit = surfaces.find_critical_points(field)
    point = _seed_point(field, Psi, region, crit)
    spec = tracer.TraceSpec(field=field, x0=point, rhs="B",
                            rel_tol=rel_tol, abs_tol=abs_tol, max_time=max_time,
                            max_crossings=8 * n_avg)
    events = tracer.uline_crossings(spec, n_valid=n_avg)
    valid_t = [ev.t for ev in events if ev.valid]
    T_bar = valid_t[n_avg - 1] / n_avg
    return TWO_PI * T_bar


def phi_flux(field, point, n_samples=256):
    """Loop integral of the covariant potential along the u-line through
    ``point`` (adapted chart), by periodic-trapezoid quadrature.  Equals
    -u_period * Psi for the helical model."""
    psi0, vth0, phi0 = (float(v) for v in point)
    u_period = getattr(field, "u_period", TWO_PI)
    ts = u_period * np.arange(n_samples) / n_samples
    pts = np.stack([np.full(n_samples, psi0),
                    vth0 + field.n * ts,
                    phi0 + field.m * ts])
    A = field.a_cov(pts)
    integrand = field.n * A[1] + field.m * A[2]
    return float(np.mean(integrand) * u_period)


# ---------------------------------------------------------------------------
# profile orchestration
# ---------------------------------------------------------------------------

def _contour_samples(field, ladder, region, N_g, crit):
    """Contour-method dV/dPsi on a whole ladder, with the transit times of
    every node of every contour integrated in a single batched call."""
    contours = []
    for P in ladder.values:
        if field.chart == "adapted":
            contours.append(surfaces.extract_contour(field, P, region, N_g, crit=crit))
        else:
            contours.append(axisym_circle_contour(P, N_g))
    coords_ab = [contour_section_coords(field, c) for c in contours]
    a_all = np.concatenate([ab[0] for ab in coords_ab])
    b_all = np.concatenate([ab[1] for ab in coords_ab])
    T_all = tracer.toroidal_transit_times(field, a_all, b_all)
    samples = np.empty(len(contours))
    k = 0
    for i, cont in enumerate(contours):
        nn = len(cont.nodes)
        samples[i] = dVdPsi_contour(field, cont, T=T_all[k:k + nn])
        k += nn
    return samples


def profile(field, method, psi_from, psi_to, n, region=None, crit=None,
            q=6, n_avg=10, N_g=100, rel_tol=1e-10, abs_tol=1e-12,
            add_enclosed=0.0):
    """V(Psi) profile for one region by one of the dV/dPsi methods
    ("thm1", "thm3p", "thm4", "contour").  ``add_enclosed`` is an offset
    added to the cumulative volume (to stack inner + island volumes onto
    an outer profile)."""
    if field.chart == "adapted" and crit is None:
        crit = surfaces.find_critical_points(field)
    ladder = build_ladder(field, region, psi_from, psi_to, n, crit=crit)
    if method == "contour":
        samples = _contour_samples(field, ladder, region, N_g, crit)
    else:
        samples = np.empty(ladder.values.size)
        for i, P in enumerate(ladder.values):
            try:
                if method == "thm1":
                    samples[i] = dVdPsi_thm1(field, P, rel_tol=rel_tol, abs_tol=abs_tol)
                elif method == "thm3p":
                    samples[i] = dVdPsi_thm3p(field, P, region, q=q, crit=crit,
                                              rel_tol=rel_tol, abs_tol=abs_tol)
                elif method == "thm4":
                    samples[i] = dVdPsi_thm4(field, P, region, n_avg=n_avg, crit=crit,
                                             rel_tol=rel_tol, abs_tol=abs_tol)
                else:
                    raise ValueError(f"unknown profile method {method!r}")
            except tracer.MaxTimeExceeded:
                warnings.warn(f"row Psi={P:g}: max_time exceeded (near separatrix?)")
                samples[i] = np.nan
    prof = integrate_profile(ladder, samples, method=method,
                             meta=dict(q=q, n_avg=n_avg, N_g=N_g,
                                       rel_tol=rel_tol, abs_tol=abs_tol))
    if add_enclosed:
        prof.V_cum = prof.V_cum + add_enclosed
        prof.total += add_enclosed
    return prof
