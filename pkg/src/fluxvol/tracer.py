"""Field-line integration with event detection.

Integrates dx/dt = W(x) for W in {B, v = B/rho, u} in the model's own
chart and locates

* returns to a section (toroidal plane, or poloidal-angle advance), and
* returns to the u-line through the start point,

on the solver's dense output.  Angles are carried unwrapped in the state
vector, so crossing detection reduces to root-finding on smooth monitor
functions.

The u-line through ``x0`` is, for the helical model, the closed curve
``psi = psi0``, ``m*vtheta - n*phi = const``; a field line crosses it when
``xi(t) = m*(vtheta - vtheta0) - n*(phi - phi0)`` hits a multiple of 2*pi
*and* psi matches psi0.  On island surfaces the (vtheta, phi) projection
is two-to-one, so xi can vanish at a point whose psi differs from psi0;
such candidates are spurious and are rejected by the psi-match test (or,
in ``mode="count"``, by simply taking a later candidate).

For the axisymmetric model u = d_phi, the u-line is a toroidal circle and
a return to it is one full poloidal turn about the magnetic axis; the
unwrapped poloidal angle is carried as a fourth state component.

A vectorised fast path :func:`toroidal_transit_times` computes one-transit
return times for many section points at once by integrating with phi as
the independent variable (valid because B^phi > 0 for both models); it is
cross-checked against the event-located path in the test suite.
"""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

TWO_PI = 2.0 * math.pi


class TraceError(RuntimeError):
    """Integration failed (step failure / singularity approach)."""


class SectionMonotonicityError(TraceError):
    """The section angle stopped advancing monotonically."""


class MaxTimeExceeded(TraceError):
    """max_time reached before the requested crossings were found.

    Expected near separatrices where return times diverge; carries the
    events found so far so profile builders can degrade gracefully.
    """

    def __init__(self, msg, events=(), t_reached=0.0):
        super().__init__(msg)
        self.events = list(events)
        self.t_reached = t_reached


@dataclass
class TraceSpec:
    field: object
    x0: tuple
    rhs: str = "B"                 # one of "B", "v", "u"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_time: float = None         # None -> 100 x characteristic period
    max_crossings: int = 64

    def __post_init__(self):
        if self.rhs not in ("B", "v", "u"):
            raise ValueError(f"unknown rhs {self.rhs!r}")
        if self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.max_time is not None and self.max_time <= 0.0:
            raise ValueError("max_time must be positive")

    def resolved_max_time(self):
        if self.max_time is not None:
            return self.max_time
        return 100.0 * self.field.characteristic_period(self.rhs)


@dataclass
class CrossingEvent:
    t: float
    point: tuple          # chart point (3 components) at the crossing
    index: int            # 1-based crossing count (candidates, in time order)
    valid: bool           # False only for spurious island projections


class Trajectory:
    """Dense-output sampler over one or more contiguous solver chunks."""

    def __init__(self, pieces, t_end):
        self._pieces = pieces            # list of OdeSolution
        self._t_breaks = np.array([p.t_max for p in pieces])
        self.t_end = t_end

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tq = np.atleast_1d(t)
        idx = np.searchsorted(self._t_breaks, tq, side="left")
        idx = np.minimum(idx, len(self._pieces) - 1)
        out = np.empty((self._pieces[0](tq[0:1]).shape[0], tq.size))
        for i in np.unique(idx):
            sel = idx == i
            out[:, sel] = self._pieces[i](tq[sel])
        return out[:, 0] if scalar else out


# ---------------------------------------------------------------------------
# chart plumbing
# ---------------------------------------------------------------------------

def _state0(spec):
    x0 = np.asarray(spec.x0, dtype=float)
    if spec.field.chart == "adapted":
        return x0.copy()
    R, phi, z = x0
    chi0 = math.atan2(z, R - spec.field.axis_R)
    return np.array([R, phi, z, chi0])


def _point_of_state(spec, y):
    return tuple(np.asarray(y, dtype=float)[:3])


def _rhs_func(spec):
    fld = spec.field
    kind = spec.rhs
    if fld.chart == "adapted":
        if kind == "u":
            const = np.array([0.0, float(fld.n), float(fld.m)])
            return lambda t, y: const
        evaluate = fld.v_contra if kind == "v" else fld.b_contra

        def rhs(t, y):
            return evaluate(y)
        return rhs

    # cylindrical chart with an extra unwrapped poloidal angle chi
    if kind == "u":
        const = np.array([0.0, 1.0, 0.0, 0.0])
        return lambda t, y: const
    axis_R = fld.axis_R

    def rhs(t, y):
        bR, bphi, bz = fld.b_contra(y[:3])
        r, z = y[0] - axis_R, y[2]
        rho2 = r * r + z * z
        # d(chi)/dt = (r*Bz - z*BR)/rho^2, which limits to 1/R on the axis
        chidot = (r * bz - z * bR) / rho2 if rho2 > 1e-24 else 1.0 / y[0]
        return np.array([bR, bphi, bz, chidot])
    return rhs


def _solve(spec, rhs, t_span, y0):
    sol = solve_ivp(rhs, t_span, y0, method="DOP853",
                    rtol=spec.rel_tol, atol=spec.abs_tol, dense_output=True)
    if not sol.success:
        raise TraceError(f"integration failed on {t_span}: {sol.message}")
    return sol


def trace(spec, t_end):
    """Integrate the requested field for time ``t_end``; returns a dense
    :class:`Trajectory` evaluable at any t in [0, t_end]."""
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    sol = _solve(spec, _rhs_func(spec), (0.0, float(t_end)), _state0(spec))
    return Trajectory([sol.sol], float(t_end))


# ---------------------------------------------------------------------------
# event scanning on dense output
# ---------------------------------------------------------------------------

def _angle_samples(piece, t_lo, t_hi, alpha_of, max_step=0.8):
    """Sample alpha(t) densely enough that no interval advances more than
    ``max_step`` radians (so each interval holds at most one crossing)."""
    n = 33
    for _ in range(12):
        ts = np.linspace(t_lo, t_hi, n)
        alpha = alpha_of(piece(ts))
        if np.max(np.abs(np.diff(alpha))) <= max_step:
            return ts, alpha
        n = 2 * (n - 1) + 1
    raise TraceError("angle monitor varies too rapidly to bracket")


def _scan_crossings(piece, t_lo, t_hi, alpha_of, carry):
    """Yield refined zeros of sin(alpha/2) on (t_lo, t_hi].

    ``carry`` holds the last (t, alpha) sample of the previous chunk so a
    crossing straddling the boundary is not lost.
    """
    ts, alpha = _angle_samples(piece, t_lo, t_hi, alpha_of)
    if carry is not None:
        ts = np.concatenate([[carry[0]], ts])
        alpha = np.concatenate([[carry[1]], alpha])
    g = np.sin(0.5 * alpha)
    hits = []
    for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
        a, b = ts[i], ts[i + 1]
        tstar = brentq(lambda t: math.sin(0.5 * alpha_of(piece(np.array([t]))[..., 0])),
                       a, b, xtol=1e-12, rtol=8.9e-16)
        hits.append(tstar)
    return hits, (ts[-1], alpha[-1])


def _alpha_spec(spec, kind, state0):
    """Monitor alpha(t) whose 2*pi-multiples mark the requested crossings."""
    fld = spec.field
    if kind == "uline":
        if fld.chart == "adapted":
            m, n = fld.m, fld.n
            vth0, phi0 = state0[1], state0[2]

            def alpha(y):
                return m * (y[1] - vth0) - n * (y[2] - phi0)
            return alpha, False
        chi0 = state0[3]
        return (lambda y: y[3] - chi0), True
    if kind == "phi_plane":
        j = 2 if fld.chart == "adapted" else 1
        a0 = state0[j]
        return (lambda y: y[j] - a0), True
    if kind == "poloidal_angle":
        if fld.chart == "adapted":
            a0 = state0[1]
            return (lambda y: y[1] - a0), True
        chi0 = state0[3]
        return (lambda y: y[3] - chi0), True
    raise ValueError(f"unknown section kind {kind!r}")


def _collect_crossings(spec, kind, want):
    """Integrate in doubling chunks, harvesting crossings until ``want``
    returns True; yields the CrossingEvent list (candidates in time order)."""
    fld = spec.field
    rhs = _rhs_func(spec)
    y0 = _state0(spec)
    alpha_of, monotone = _alpha_spec(spec, kind, y0)
    max_time = spec.resolved_max_time()
    horizon = min(2.0 * fld.characteristic_period(spec.rhs), max_time)

    events = []
    carry = None
    t0, state = 0.0, y0
    t_prev_hit = 0.0
    while True:
        t1 = min(t0 + horizon, max_time)
        sol = _solve(spec, rhs, (t0, t1), state)
        hits, carry = _scan_crossings(sol.sol, t0, t1, alpha_of, carry)
        if monotone:
            a0, a1 = alpha_of(sol.sol(np.array([t0]))[..., 0]), alpha_of(sol.sol(np.array([t1]))[..., 0])
            if a1 < a0 - 1e-9:
                raise SectionMonotonicityError(
                    "section angle decreased along the trajectory")
        for tstar in hits:
            if tstar - t_prev_hit < 1e-10 * max(1.0, tstar):
                continue  # duplicate root at a chunk seam
            t_prev_hit = tstar
            ystar = sol.sol(np.array([tstar]))[..., 0]
            events.append(CrossingEvent(t=float(tstar),
                                        point=_point_of_state(spec, ystar),
                                        index=len(events) + 1, valid=True))
            if want(events):
                return events
        if t1 >= max_time:
            raise MaxTimeExceeded(
                f"max_time={max_time:g} reached with {len(events)} crossings",
                events=events, t_reached=t1)
        t0, state = t1, sol.y[:, -1]
        horizon *= 2.0


def return_to_section(spec, section="phi_plane", count=1):
    """Crossings of a section: the unwrapped section angle has advanced by
    2*pi*k, k = 1..count.  ``section`` is ``"phi_plane"`` (toroidal transit)
    or ``"poloidal_angle"``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return _collect_crossings(spec, section, lambda evs: len(evs) >= count)


def uline_crossings(spec, n_valid=1, n_candidates=None, tol_match=None):
    """Candidate u-line crossings, with validity flags.

    Stops once ``n_valid`` valid crossings were found (or ``n_candidates``
    candidates, if given).  A candidate at xi = 0 (mod 2*pi) is valid iff
    |psi - psi0| <= tol_match; for the axisymmetric model every poloidal
    turn is a valid return.
    """
    fld = spec.field
    if spec.rhs not in ("B", "v"):
        raise ValueError("u-line returns are meaningful for rhs B or v")
    if fld.chart != "adapted":
        events = _collect_crossings(
            spec, "uline",
            lambda evs: len(evs) >= max(n_valid, n_candidates or 0))
        return events

    psi0 = float(np.asarray(spec.x0, dtype=float)[0])
    if tol_match is None:
        tol_match = 1e-6 * max(1.0, abs(psi0))

    def want(evs):
        ev = evs[-1]
        ev.valid = abs(ev.point[0] - psi0) <= tol_match
        n_ok = sum(1 for e in evs if e.valid)
        if n_candidates is not None and len(evs) >= n_candidates:
            return True
        return n_ok >= n_valid

    return _collect_crossings(spec, "uline", want)


def return_to_uline(spec, count_required=1, mode="psi_match", tol_match=None):
    """First return to the u-line through the start point.

    mode="psi_match" (default): first *valid* crossing, spurious island
    projections rejected by the psi-match test.  mode="count": the
    ``count_required``-th candidate regardless of validity (the published
    workaround of counting N_c crossings on island surfaces).
    """
    if mode == "psi_match":
        events = uline_crossings(spec, n_valid=1, tol_match=tol_match)
        for ev in events:
            if ev.valid:
                return ev
        raise TraceError("no valid u-line return found")  # pragma: no cover
    if mode == "count":
        events = uline_crossings(spec, n_valid=count_required,
                                 n_candidates=count_required,
                                 tol_match=tol_match)
        return events[count_required - 1]
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# batched one-transit times (phi as independent variable)
# ---------------------------------------------------------------------------

def toroidal_transit_times(field, a, b, rtol=1e-9, atol=1e-11):
    """Times of one full toroidal transit (delta phi = 2*pi) along B from
    many phi = 0 section points at once.

    For the helical model ``(a, b) = (psi, vtheta)`` arrays; for the
    axisymmetric model ``(a, b) = (R, z)`` arrays.  Both models have
    B^phi > 0, so phi serves as the independent variable and the transit
    time is the integral of 1/B^phi along the line -- no event detection
    is needed.  Returns an array of times matching the input shape.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("section coordinate arrays must have equal shapes")
    npts = a.size
    if npts == 0:
        return np.zeros(0)

    if field.chart == "adapted":
        def rhs(phi, y):
            psi, vth = y[:npts], y[npts:2 * npts]
            vpsi, vthdot, _ = field._v_components(psi, vth, phi)
            R = field.R_of(psi, vth)
            return np.concatenate([vpsi, vthdot, R * R / (field.B0 * field.R0)])
    else:
        C, axis_R = field.C, field.axis_R
        def rhs(phi, y):
            R, z = y[:npts], y[npts:2 * npts]
            return np.concatenate([-z * R / C, (R - axis_R) * R / C, R * R / C])

    y0 = np.concatenate([a.ravel(), b.ravel(), np.zeros(npts)])
    sol = solve_ivp(rhs, (0.0, TWO_PI), y0, method="DOP853",
                    rtol=rtol, atol=atol, t_eval=[TWO_PI])
    if not sol.success:
        raise TraceError(f"batched transit integration failed: {sol.message}")
    return sol.y[2 * npts:, -1].reshape(a.shape)


def psi_drift(spec, t_end, n_samples=200):
    """Max relative drift of the flux label along a traced line (diagnostic)."""
    traj = trace(spec, t_end)
    ts = np.linspace(0.0, t_end, n_samples)
    ys = traj(ts)
    lab = spec.field.psi_label(ys[:3])
    scale = max(abs(lab[0]), 1e-3)
    return float(np.max(np.abs(lab - lab[0])) / scale)
