"""Geometry of the flux foliation on the phi = 0 poloidal section.

Critical points of the label Psi in symplectic plane coordinates, the
inner / island / outer region split, level-set contours by radial
root-finding, lattice generators of the (u, v)-action on a flux surface,
and the harmonic average of the density over a surface.

Region anatomy for the helical model (single mode, m >= 2): the magnetic
axis sits at the origin with Psi = 0; m island O-points (Psi = psi_o) and
m X-points (Psi = psi_sep) surround it, with psi_o < psi_sep < 0.  Inner
tori have Psi in (psi_sep, 0] below the resonant ridge, island tori have
Psi in (psi_o, psi_sep), outer tori have Psi > psi_sep beyond the ridge.
"""

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq, root

from . import tracer
from .coords import adapted_of_symplectic, symplectic_of_adapted

TWO_PI = 2.0 * math.pi


class Region(enum.Enum):
    INNER = "inner"
    ISLAND = "island"
    OUTER = "outer"


@dataclass(frozen=True)
class RegionTag:
    region: Region
    on_separatrix: bool = False


@dataclass
class CriticalSet:
    o_points: list              # [(ytil, ztil, Psi)] island O-points
    x_points: list              # [(ytil, ztil, Psi)]
    psi_axis: float             # Psi at the magnetic axis (origin)
    psi_o: float                # Psi at the island O-points (None if no island)
    psi_sep: float              # Psi on the separatrix (None if no island)

    @property
    def has_island(self):
        return self.psi_o is not None


@dataclass
class LevelSetContour:
    region: Region
    Psi0: float
    loops: list                 # one (N_g, 2) array of (ytil, ztil) per loop
    multi_root: bool = False    # a ray met the level more than once

    @property
    def components(self):
        return len(self.loops)

    @property
    def nodes(self):
        return np.vstack(self.loops)


@dataclass
class LatticeGenerators:
    T1: tuple                   # (u-time, v-time)
    T2: tuple
    Delta: float
    c_known: bool = False       # u-closure time in T2 is not computed


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

def find_critical_points(field, seed_radii=None, n_seed_angles=16,
                         dedupe_tol=1e-8):
    """Locate nondegenerate critical points of Psi on the phi = 0 section.

    Newton (via scipy root on the analytic gradient) from a polar seed
    grid; converged points are deduplicated and classified by the Hessian
    signature.  Degenerate critical circles (the eps = 0 resonant circle)
    are discarded by a determinant threshold.
    """
    if field.chart != "adapted":
        raise ValueError("critical-point search applies to the helical model")
    rho_res = math.sqrt(2.0 * field.resonant_psi() / field.B0)
    if seed_radii is None:
        seed_radii = rho_res * np.array([0.35, 0.7, 0.9, 1.0, 1.1, 1.3, 1.6])

    def grad(x):
        return field.grad_psi_label_section(x[0], x[1])

    def hess(x, h=1e-6):
        cols = []
        for d in (np.array([h, 0.0]), np.array([0.0, h])):
            cols.append((grad(x + d) - grad(x - d)) / (2.0 * h))
        H = np.column_stack(cols)
        return 0.5 * (H + H.T)

    found = []
    angles = np.linspace(0.0, TWO_PI, n_seed_angles, endpoint=False)
    seeds = [np.array([rr * math.cos(a), rr * math.sin(a)])
             for rr in seed_radii for a in angles]
    for s in seeds:
        res = root(grad, s, method="hybr", tol=1e-13)
        if not res.success or np.linalg.norm(grad(res.x)) > 1e-9:
            continue
        x = res.x
        if any(np.hypot(x[0] - p[0], x[1] - p[1]) < dedupe_tol for p in found):
            continue
        found.append(x)

    o_points, x_points = [], []
    psi_axis = float(field.psi_label_section(0.0, 0.0))
    for x in found:
        if np.hypot(*x) < dedupe_tol:     # the axis itself
            continue
        H = hess(x)
        det = float(np.linalg.det(H))
        scale = max(np.abs(H).max() ** 2, 1e-30)
        if abs(det) < 1e-6 * scale:       # degenerate (eps = 0 circle)
            continue
        val = float(field.psi_label_section(x[0], x[1]))
        entry = (float(x[0]), float(x[1]), val)
        (o_points if det > 0.0 else x_points).append(entry)

    o_points.sort(key=lambda p: math.atan2(p[1], p[0]) % TWO_PI)
    x_points.sort(key=lambda p: math.atan2(p[1], p[0]) % TWO_PI)
    if not o_points and not x_points:
        return CriticalSet([], [], psi_axis, None, None)
    if not o_points or not x_points:
        raise RuntimeError("found O-points without X-points (or vice versa); "
                           "seed grid too coarse?")
    psi_o = float(np.mean([p[2] for p in o_points]))
    psi_sep = float(np.mean([p[2] for p in x_points]))
    return CriticalSet(o_points, x_points, psi_axis, psi_o, psi_sep)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _ridge_psi(field, vtheta):
    return field.resonant_psi(vtheta)


def classify(field, crit, ytil, ztil, boundary_tol=1e-9):
    """Region of a section point (scalar); see :func:`classify_batch`."""
    tag = classify_batch(field, crit, np.array([ytil]), np.array([ztil]),
                         boundary_tol=boundary_tol)
    return RegionTag(region=tag[0][0], on_separatrix=bool(tag[1][0]))


def classify_batch(field, crit, ytil, ztil, boundary_tol=1e-9):
    """Vectorised region classification.

    Returns (regions, on_separatrix) where regions is an object array of
    :class:`Region` members.  Points with Psi below the separatrix value
    are island points; otherwise the point is inner or outer according to
    whether it lies inside the resonant ridge radius along its own ray.
    """
    ytil = np.asarray(ytil, dtype=float)
    ztil = np.asarray(ztil, dtype=float)
    Psi = field.psi_label_section(ytil, ztil)
    psi, vth = adapted_of_symplectic(ytil, ztil, field.B0)
    psi = np.atleast_1d(psi)
    vth = np.atleast_1d(vth)
    Psi = np.atleast_1d(Psi)

    if crit is not None and crit.has_island:
        psi_sep = crit.psi_sep
    else:
        # unperturbed (or islandless) field: degenerate separatrix on the
        # resonant circle
        pr = field.resonant_psi()
        psi_sep = float(field.psi_label_section(math.sqrt(2.0 * pr / field.B0), 0.0))

    on_sep = np.abs(Psi - psi_sep) <= boundary_tol * max(1.0, abs(psi_sep))
    regions = np.empty(Psi.shape, dtype=object)
    island = Psi < psi_sep
    regions[island] = Region.ISLAND
    rest = ~island
    if np.any(rest):
        ridge = np.atleast_1d(_ridge_psi(field, vth[rest]))
        inner = psi[rest] < ridge
        sub = np.where(inner, Region.INNER, Region.OUTER)
        regions[rest] = sub
    return regions, on_sep


# ---------------------------------------------------------------------------
# level-set contours
# ---------------------------------------------------------------------------

def _ray_root(field, center, direction, Psi0, s_lo, s_hi, scale):
    cy, cz = center
    dy, dz = direction

    def f(s):
        return field.psi_label_section(cy + s * dy, cz + s * dz) - Psi0

    s = brentq(f, s_lo, s_hi, xtol=1e-15, rtol=8.9e-16)
    if abs(f(s)) > 1e-10 * scale:
        raise RuntimeError("contour root did not meet tolerance")
    return s


def extract_contour(field, Psi0, region, N_g, crit=None):
    """Discretise one flux-surface section into N_g nodes per loop.

    Radial root-finding from the region's natural center along uniformly
    spaced rays: the symplectic origin for inner/outer contours, each
    island O-point for island contours (one loop per O-point, i.e. m
    loops).  Nodes are ordered by the ray angle.
    """
    if field.chart != "adapted":
        raise ValueError("contour extraction applies to the helical model")
    if N_g < 4:
        raise ValueError("N_g must be at least 4")
    if crit is None:
        crit = find_critical_points(field)
    scale = max(abs(Psi0), abs(crit.psi_sep or 0.0), 1e-6)
    angles = TWO_PI * np.arange(N_g) / N_g

    if region is Region.ISLAND:
        if not crit.has_island:
            raise ValueError("field has no island region")
        if not crit.psi_o < Psi0 < crit.psi_sep:
            raise ValueError(f"Psi0={Psi0} outside island interval "
                             f"({crit.psi_o}, {crit.psi_sep})")
        loops = []
        for (oy, oz, _) in crit.o_points:
            lobe_scale = 0.25 * math.hypot(oy, oz)
            nodes = np.empty((N_g, 2))
            for j, a in enumerate(angles):
                d = (math.cos(a), math.sin(a))
                s = _march_bracket(field, (oy, oz), d, Psi0, lobe_scale)
                nodes[j] = (oy + s * d[0], oz + s * d[1])
            loops.append(nodes)
        return LevelSetContour(region=region, Psi0=Psi0, loops=loops)

    # inner / outer: rays from the origin, split by the resonant ridge
    multi = False
    nodes = np.empty((N_g, 2))
    for j, a in enumerate(angles):
        d = (math.cos(a), math.sin(a))
        s_ridge = math.sqrt(2.0 * field.resonant_psi(a) / field.B0)
        if region is Region.INNER:
            lo, hi = 1e-12, s_ridge
            f_lo = field.psi_label_section(lo * d[0], lo * d[1]) - Psi0
            f_hi = field.psi_label_section(s_ridge * d[0], s_ridge * d[1]) - Psi0
            if f_lo * f_hi > 0.0:
                raise ValueError(f"Psi0={Psi0} not reached along inner ray {a:.3f}")
        else:
            lo = s_ridge
            hi = _march_out(field, d, Psi0, s_ridge)
        s = _ray_root(field, (0.0, 0.0), d, Psi0, lo, hi, scale)
        nodes[j] = (s * d[0], s * d[1])
    return LevelSetContour(region=region, Psi0=Psi0, loops=[nodes],
                           multi_root=multi)


def _march_bracket(field, center, direction, Psi0, step):
    """First bracketing radius from an island O-point: Psi rises from
    psi_o toward the separatrix along the ray."""
    cy, cz = center
    s_prev, f_prev = 0.0, field.psi_label_section(cy, cz) - Psi0
    s = step
    for _ in range(200):
        f = field.psi_label_section(cy + s * direction[0], cz + s * direction[1]) - Psi0
        if f_prev * f <= 0.0:
            return _refine_bracket(field, center, direction, Psi0, s_prev, s)
        s_prev, f_prev = s, f
        s += step
    raise ValueError("island ray never met the requested level")


def _refine_bracket(field, center, direction, Psi0, s_lo, s_hi):
    cy, cz = center

    def f(s):
        return field.psi_label_section(cy + s * direction[0], cz + s * direction[1]) - Psi0

    return brentq(f, s_lo, s_hi, xtol=1e-15, rtol=8.9e-16)


def _march_out(field, direction, Psi0, s_start):
    """Outward bracket for an outer contour: Psi increases beyond the ridge."""
    s = s_start
    step = max(0.1 * s_start, 0.05)
    for _ in range(400):
        s += step
        if field.psi_label_section(s * direction[0], s * direction[1]) >= Psi0:
            return s
    raise ValueError("outer ray never reached the requested level")


# ---------------------------------------------------------------------------
# lattice generators and harmonic average
# ---------------------------------------------------------------------------

def lattice_generators(field, point, rel_tol=1e-10, abs_tol=1e-12,
                       max_time=None, _return_trace=False):
    """Generators of the identity lattice of the (u, v)-action on the flux
    surface through ``point`` (an adapted-chart point).

    T1 = (u-period, 0); T2 = (-c, T) with T the first valid return time to
    the u-line along v.  The u-closure time c is irrelevant to the volume
    formulas and is stored as 0 with ``c_known=False``.  Delta is the
    lattice determinant, u_period * T.
    """
    spec = tracer.TraceSpec(field=field, x0=tuple(point), rhs="v",
                            rel_tol=rel_tol, abs_tol=abs_tol, max_time=max_time)
    ev = tracer.return_to_uline(spec)
    u_period = getattr(field, "u_period", TWO_PI)
    gens = LatticeGenerators(T1=(u_period, 0.0), T2=(0.0, ev.t),
                             Delta=u_period * ev.t, c_known=False)
    return (gens, spec) if _return_trace else gens


def harmonic_average_rho(field, point, generators, q=6,
                         rel_tol=1e-10, abs_tol=1e-12):
    """Harmonic average of the density over the flux surface through
    ``point``: reciprocal of the mean of 1/rho over the q x q lattice
    subdivision, reached by composing the closed-form u-flow with the
    traced v-flow for times (n1*T1 + n2*T2)/q."""
    if q < 2:
        raise ValueError("q must be >= 2")
    T = generators.T2[1]
    spec = tracer.TraceSpec(field=field, x0=tuple(point), rhs="v",
                            rel_tol=rel_tol, abs_tol=abs_tol)
    traj = tracer.trace(spec, T)
    tv = np.arange(q) * (T / q)
    base = traj(tv)[:3]                      # (3, q) points along v
    u_period = getattr(field, "u_period", TWO_PI)
    su = np.arange(q) * (u_period / q)
    inv_rho = np.empty((q, q))
    for i, s in enumerate(su):
        shifted = base.copy()
        shifted[1] += field.n * s            # u-flow in closed form
        shifted[2] += field.m * s
        inv_rho[i] = 1.0 / field.density(shifted)
    return 1.0 / float(np.mean(inv_rho))
