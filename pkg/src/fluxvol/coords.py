"""Coordinate charts for toroidal field-line computations.

Four charts are used, all restricted to what the two analytic field models
need (this is deliberately not a general curvilinear framework):

* cylindrical ``(R, phi, z)`` about the vertical axis,
* standard toroidal ``(r, theta, phi)`` about a circular axis of radius
  ``R0`` in the midplane:  ``R = R0 + r*cos(theta)``, ``z = r*sin(theta)``,
* adapted toroidal ``(psi, vtheta, phi)`` where ``psi`` is the toroidal
  flux through the poloidal disk of radius ``r`` and ``vtheta`` is the
  straightened poloidal angle,
* symplectic section coordinates ``(ytil, ztil)`` on a poloidal plane,
  in which area equals toroidal flux.

Cartesian conversions follow the convention ``x = R sin(phi)``,
``y = R cos(phi)``.

Angles are kept unwrapped wherever the caller tracks winding (field-line
tracing); the transforms here commute with adding full turns.
"""

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def _check_minor_radius(r, R0):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0) or np.any(r >= R0):
        raise ValueError(f"minor radius must satisfy 0 <= r < R0={R0}")


# ---------------------------------------------------------------------------
# radial label psi <-> geometric minor radius r
# ---------------------------------------------------------------------------

def psi_of_r(r, B0, R0):
    """Toroidal-flux label of the circle of minor radius ``r``.

    psi = B0*R0^2*(1 - sqrt(1 - r^2/R0^2)); strictly increasing on [0, R0).
    """
    _check_minor_radius(r, R0)
    r = np.asarray(r, dtype=float)
    out = B0 * R0**2 * (1.0 - np.sqrt(1.0 - (r / R0) ** 2))
    return out if out.ndim else float(out)


def r_of_psi(psi, B0, R0):
    """Inverse of :func:`psi_of_r`:  r = R0*sqrt(1 - (1 - psi/(B0*R0^2))^2)."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0.0) or np.any(psi >= B0 * R0**2):
        raise ValueError(f"flux label must satisfy 0 <= psi < B0*R0^2={B0 * R0**2}")
    u = 1.0 - psi / (B0 * R0**2)
    out = R0 * np.sqrt(np.maximum(1.0 - u * u, 0.0))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# poloidal angle theta <-> straightened angle vtheta
# ---------------------------------------------------------------------------

def vtheta_of_theta(theta, r, R0):
    """Straightened poloidal angle.

    Defined by tan(vtheta/2) = sqrt((R0-r)/(R0+r)) * tan(theta/2), realised
    through a half-angle atan2 so the tangent poles at theta = pi cause no
    branch trouble.  Odd in theta, fixes 0 and pi, commutes with full turns.
    """
    _check_minor_radius(r, R0)
    theta = np.asarray(theta, dtype=float)
    k = np.round(theta / TWO_PI)
    th = theta - TWO_PI * k
    half = np.arctan2(np.sqrt(R0 - r) * np.sin(0.5 * th),
                      np.sqrt(R0 + r) * np.cos(0.5 * th))
    out = 2.0 * half + TWO_PI * k
    return out if out.ndim else float(out)


def theta_of_vtheta(vtheta, r, R0):
    """Inverse of :func:`vtheta_of_theta` (same half-angle construction)."""
    _check_minor_radius(r, R0)
    vtheta = np.asarray(vtheta, dtype=float)
    k = np.round(vtheta / TWO_PI)
    vt = vtheta - TWO_PI * k
    half = np.arctan2(np.sqrt(R0 + r) * np.sin(0.5 * vt),
                      np.sqrt(R0 - r) * np.cos(0.5 * vt))
    out = 2.0 * half + TWO_PI * k
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# chart conversions
# ---------------------------------------------------------------------------

def cyl_of_torus(r, theta, phi, R0):
    """Standard toroidal -> cylindrical."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    R = R0 + r * np.cos(theta)
    z = r * np.sin(theta)
    return R, np.asarray(phi, dtype=float), z


def torus_of_cyl(R, phi, z, R0):
    """Cylindrical -> standard toroidal."""
    R = np.asarray(R, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.hypot(R - R0, z)
    theta = np.arctan2(z, R - R0)
    return r, theta, np.asarray(phi, dtype=float)


def cart_of_cyl(R, phi, z):
    """Cylindrical -> Cartesian with x = R sin(phi), y = R cos(phi)."""
    R = np.asarray(R, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return R * np.sin(phi), R * np.cos(phi), np.asarray(z, dtype=float)


def cyl_of_cart(x, y, z):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.hypot(x, y), np.arctan2(x, y), np.asarray(z, dtype=float)


def R_of_adapted(psi, vtheta, B0, R0):
    """Cylindrical radius at an adapted-chart point:

    R = (R0^2 - r^2) / (R0 - r*cos(vtheta)),  r = r_of_psi(psi).
    """
    r = r_of_psi(psi, B0, R0)
    vtheta = np.asarray(vtheta, dtype=float)
    out = (R0**2 - r * r) / (R0 - r * np.cos(vtheta))
    return out if np.ndim(out) else float(out)


def adapted_of_torus(r, theta, phi, B0, R0):
    return psi_of_r(r, B0, R0), vtheta_of_theta(theta, r, R0), np.asarray(phi, dtype=float)


def torus_of_adapted(psi, vtheta, phi, B0, R0):
    r = r_of_psi(psi, B0, R0)
    return r, theta_of_vtheta(vtheta, r, R0), np.asarray(phi, dtype=float)


def cyl_of_adapted(psi, vtheta, phi, B0, R0):
    r, theta, phi = torus_of_adapted(psi, vtheta, phi, B0, R0)
    return cyl_of_torus(r, theta, phi, R0)


def adapted_of_cyl(R, phi, z, B0, R0):
    r, theta, phi = torus_of_cyl(R, phi, z, R0)
    return adapted_of_torus(r, theta, phi, B0, R0)


def symplectic_of_adapted(psi, vtheta, B0):
    """(psi, vtheta) -> (ytil, ztil) with ytil^2 + ztil^2 = 2 psi / B0."""
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0.0):
        raise ValueError("psi must be non-negative")
    rho = np.sqrt(2.0 * psi / B0)
    vtheta = np.asarray(vtheta, dtype=float)
    ytil, ztil = rho * np.cos(vtheta), rho * np.sin(vtheta)
    if ytil.ndim:
        return ytil, ztil
    return float(ytil), float(ztil)


def adapted_of_symplectic(ytil, ztil, B0):
    """Inverse of :func:`symplectic_of_adapted`.

    At the origin psi = 0 and the angle is undefined; 0.0 is returned there
    (callers that care should test psi > 0).
    """
    ytil = np.asarray(ytil, dtype=float)
    ztil = np.asarray(ztil, dtype=float)
    psi = 0.5 * B0 * (ytil * ytil + ztil * ztil)
    vtheta = np.arctan2(ztil, ytil)
    vtheta = np.where(psi > 0.0, vtheta, 0.0)
    if psi.ndim:
        return psi, vtheta
    return float(psi), float(vtheta)


# ---------------------------------------------------------------------------
# metric data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricInfo:
    """Volume factor and diagonal metric components for one chart point.

    For the standard toroidal chart the two entries are consistent
    (sqrt_g equals the square root of the product of g_diag).  For the
    adapted chart, sqrt_g carries the true chart volume factor
    R^2/(B0*R0) while g_diag carries the diagonal proxy metric

        ds^2 = dpsi^2/(2 B0 psi) + (2 psi/B0) dvtheta^2 + R0^2 dphi^2

    used only to build the normal n = grad(Psi)/|grad(Psi)|^2; any metric
    with i_n dPsi = 1 is admissible there.
    """

    sqrt_g: float
    g_diag: tuple


def metric_standard_toroidal(r, theta, R0):
    r = float(r)
    R = R0 + r * math.cos(float(theta))
    return MetricInfo(sqrt_g=r * R, g_diag=(1.0, r * r, R * R))


def metric_adapted(psi, vtheta, B0, R0):
    R = float(R_of_adapted(psi, vtheta, B0, R0))
    psi = float(psi)
    return MetricInfo(sqrt_g=R * R / (B0 * R0),
                      g_diag=(1.0 / (2.0 * B0 * psi), 2.0 * psi / B0, R0 * R0))
