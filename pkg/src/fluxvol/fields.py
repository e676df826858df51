"""The two analytic integrable field models.

Every evaluator takes a chart point ``p`` as an array-like whose leading
axis holds the three coordinates, so both single points (shape ``(3,)``)
and batches (shape ``(3, n)``) work.  Components returned are contravariant
in the model's own chart.

AxisymmetricField  -- tokamak-like field in cylindrical ``(R, phi, z)``:

    B^R = -z/R,   B^phi = C/R^2,   B^z = (R-1)/R

on a solid torus ``(R-1)^2 + z^2 <= r0^2`` about the magnetic axis
``R = 1, z = 0``, with flux label Psi = ((R-1)^2 + z^2)/2 and exact
enclosed volume V = 4 pi^2 Psi.

HelicalField  -- axisymmetric background plus a single helical mode, in
adapted toroidal ``(psi, vtheta, phi)``.  The covariant vector potential is

    A = (0, psi, -[w1 psi + w2 psi^2 + eps psi^(m/2) f(psi) cos(m vtheta - n phi + zeta)])

whose curl gives B with B^phi = B0 R0 / R^2.  The field is integrable with
label Psi = -n psi - m A_phi and symmetry field u = n d_vtheta + m d_phi,
which preserves the density rho = B^phi (but not the volume).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import coords

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class AxisymParams:
    C: float = 1.0
    r0: float = 0.95

    def __post_init__(self):
        if self.C <= 0.0:
            raise ValueError("C must be positive")
        if not 0.0 < self.r0 < 1.0:
            raise ValueError("r0 must lie in (0, 1)")


@dataclass(frozen=True)
class HelicalParams:
    w1: float = 0.25
    w2: float = 1.0
    B0: float = 1.0
    R0: float = 2.0
    m: int = 2
    n: int = 1
    eps: float = 0.007
    zeta: float = 0.0
    # polynomial coefficients of f(psi), ascending order; default f = psi - R0^2/B0
    f_coeffs: tuple = field(default=None)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.w2 == 0.0:
            raise ValueError("w2 must be nonzero")
        if self.B0 <= 0.0 or self.R0 <= 0.0:
            raise ValueError("B0 and R0 must be positive")
        if self.f_coeffs is None:
            object.__setattr__(self, "f_coeffs",
                               (-self.R0**2 / self.B0, 1.0))


class AxisymmetricField:
    """Axisymmetric tokamak model; quasisymmetric with u = d_phi, tau = 2 pi."""

    chart = "cylindrical"

    def __init__(self, C=1.0, r0=0.95):
        self.params = AxisymParams(C=C, r0=r0)
        self.C = self.params.C
        self.r0 = self.params.r0
        self.axis_R = 1.0

    def b_contra(self, p):
        R, _, z = np.asarray(p, dtype=float)
        r = R - self.axis_R
        return np.stack([-z / R, self.C / R**2, r / R])

    def psi_label(self, p):
        R, _, z = np.asarray(p, dtype=float)
        r = R - self.axis_R
        return 0.5 * (r * r + z * z)

    def grad_psi_label(self, p):
        R, _, z = np.asarray(p, dtype=float)
        return np.stack([R - self.axis_R, np.zeros_like(R), z])

    def a_cov(self, p):
        # A_phi = Psi reproduces the poloidal field; A_z = -C ln R the toroidal.
        R, _, z = np.asarray(p, dtype=float)
        return np.stack([np.zeros_like(R), self.psi_label(p), -self.C * np.log(R)])

    def density(self, p):
        R = np.asarray(p, dtype=float)[0]
        return np.ones_like(R)

    def u_contra(self, p):
        R = np.asarray(p, dtype=float)[0]
        zero = np.zeros_like(R)
        return np.stack([zero, np.ones_like(R), zero])

    def sqrt_g(self, p):
        return np.asarray(p, dtype=float)[0].copy()

    def v_contra(self, p):
        return self.b_contra(p)  # rho = 1

    def section_flux_density(self, R, z=None):
        """|f| in beta_P = -(C/R) dR ^ dz on a poloidal plane."""
        return self.C / np.asarray(R, dtype=float)

    def exact_volume(self, Psi):
        """Closed-form enclosed volume 4 pi^2 Psi."""
        Psi = np.asarray(Psi, dtype=float)
        if np.any(Psi < 0.0):
            raise ValueError("Psi must be non-negative")
        out = 4.0 * math.pi**2 * Psi
        return out if out.ndim else float(out)

    def characteristic_period(self, rhs="B"):
        # poloidal turnaround time is exactly 2 pi for this model
        return TWO_PI

    def in_domain(self, p):
        R, _, z = np.asarray(p, dtype=float)
        r = R - self.axis_R
        return r * r + z * z <= self.r0**2


class HelicalField:
    """Toroidal field with one helical mode in adapted coordinates."""

    chart = "adapted"

    def __init__(self, params=None, **overrides):
        if params is None:
            params = HelicalParams(**overrides)
        elif overrides:
            raise TypeError("pass either params or keyword overrides, not both")
        self.params = params
        p = params
        self.w1, self.w2, self.B0, self.R0 = p.w1, p.w2, p.B0, p.R0
        self.m, self.n, self.eps, self.zeta = p.m, p.n, p.eps, p.zeta
        self.f_coeffs = np.asarray(p.f_coeffs, dtype=float)
        self.df_coeffs = npoly.polyder(self.f_coeffs)
        self.u_period = TWO_PI / math.gcd(p.m, abs(p.n)) if p.n != 0 else TWO_PI

    # -- scalar building blocks -------------------------------------------

    def _f(self, psi):
        return npoly.polyval(psi, self.f_coeffs)

    def _df(self, psi):
        return npoly.polyval(psi, self.df_coeffs)

    def R_of(self, psi, vtheta):
        return coords.R_of_adapted(psi, vtheta, self.B0, self.R0)

    def helical_phase(self, vtheta, phi):
        return self.m * np.asarray(vtheta, dtype=float) - self.n * np.asarray(phi, dtype=float) + self.zeta

    # -- field evaluators ---------------------------------------------------

    def a_cov(self, p):
        psi, vtheta, phi = np.asarray(p, dtype=float)
        th = self.helical_phase(vtheta, phi)
        a_phi = -(self.w1 * psi + self.w2 * psi**2
                  + self.eps * psi**(self.m / 2.0) * self._f(psi) * np.cos(th))
        return np.stack([np.zeros_like(psi), psi.copy(), a_phi])

    def b_contra(self, p):
        psi, vtheta, phi = np.asarray(p, dtype=float)
        pref = self.B0 * self.R0 / self.R_of(psi, vtheta) ** 2
        bpsi, bth, bphi = self._v_components(psi, vtheta, phi)
        return np.stack([pref * bpsi, pref * bth, pref * bphi])

    def _v_components(self, psi, vtheta, phi):
        """Components of v = B/rho (the R^2/(B0 R0)-scaled field); v^phi = 1."""
        m, eps = self.m, self.eps
        th = self.helical_phase(vtheta, phi)
        f, df = self._f(psi), self._df(psi)
        vpsi = m * eps * psi**(m / 2.0) * f * np.sin(th)
        vth = (self.w1 + 2.0 * self.w2 * psi
               + eps * psi**(m / 2.0 - 1.0) * (0.5 * m * f + psi * df) * np.cos(th))
        return vpsi, vth, np.ones_like(psi)

    def v_contra(self, p):
        psi, vtheta, phi = np.asarray(p, dtype=float)
        return np.stack(self._v_components(psi, vtheta, phi))

    def density(self, p):
        psi, vtheta, _ = np.asarray(p, dtype=float)
        return self.B0 * self.R0 / self.R_of(psi, vtheta) ** 2

    def u_contra(self, p):
        psi = np.asarray(p, dtype=float)[0]
        zero = np.zeros_like(psi)
        return np.stack([zero, zero + self.n, zero + self.m])

    def sqrt_g(self, p):
        psi, vtheta, _ = np.asarray(p, dtype=float)
        return self.R_of(psi, vtheta) ** 2 / (self.B0 * self.R0)

    def psi_label(self, p):
        pcov = self.a_cov(p)
        psi = np.asarray(p, dtype=float)[0]
        return -self.n * psi - self.m * pcov[2]

    def grad_psi_label(self, p):
        """(d/dpsi, d/dvtheta, d/dphi) of the label Psi."""
        psi, vtheta, phi = np.asarray(p, dtype=float)
        m, n, eps = self.m, self.n, self.eps
        th = self.helical_phase(vtheta, phi)
        f, df = self._f(psi), self._df(psi)
        hel = eps * psi**(m / 2.0) * f
        dpsi = -n + m * (self.w1 + 2.0 * self.w2 * psi
                         + eps * psi**(m / 2.0 - 1.0) * (0.5 * m * f + psi * df) * np.cos(th))
        dvth = -m * m * hel * np.sin(th)
        dphi = m * n * hel * np.sin(th)
        return np.stack([dpsi, dvth, dphi])

    def section_flux_density(self, ytil=None, ztil=None):
        """|f| = B0 in beta_P = B0 dytil ^ dztil on the phi = 0 plane."""
        if ytil is None:
            return self.B0
        return np.full_like(np.asarray(ytil, dtype=float), self.B0)

    # -- poloidal-section (symplectic-plane) helpers ------------------------

    def psi_label_section(self, ytil, ztil):
        """Psi on the phi = 0 section as a smooth function of (ytil, ztil)."""
        ytil = np.asarray(ytil, dtype=float)
        ztil = np.asarray(ztil, dtype=float)
        psi = 0.5 * self.B0 * (ytil * ytil + ztil * ztil)
        w = ytil + 1j * ztil
        # psi^(m/2) cos(m vtheta + zeta) = (B0/2)^(m/2) Re(e^{i zeta} w^m)
        mode = (0.5 * self.B0) ** (self.m / 2.0) * np.real(np.exp(1j * self.zeta) * w**self.m)
        a_phi = -(self.w1 * psi + self.w2 * psi**2 + self.eps * self._f(psi) * mode)
        return -self.n * psi - self.m * a_phi

    def grad_psi_label_section(self, ytil, ztil):
        """Analytic (d/dytil, d/dztil) of :meth:`psi_label_section`."""
        ytil = np.asarray(ytil, dtype=float)
        ztil = np.asarray(ztil, dtype=float)
        psi = 0.5 * self.B0 * (ytil * ytil + ztil * ztil)
        w = ytil + 1j * ztil
        scale = (0.5 * self.B0) ** (self.m / 2.0)
        ph = np.exp(1j * self.zeta)
        mode = scale * np.real(ph * w**self.m)
        dmode_dy = scale * self.m * np.real(ph * w**(self.m - 1))
        dmode_dz = -scale * self.m * np.imag(ph * w**(self.m - 1))
        f, df = self._f(psi), self._df(psi)
        # d(-n psi - m A_phi)/dpsi without the mode part, then chain rules
        base = -self.n + self.m * (self.w1 + 2.0 * self.w2 * psi)
        gy = base * self.B0 * ytil + self.m * self.eps * (df * self.B0 * ytil * mode + f * dmode_dy)
        gz = base * self.B0 * ztil + self.m * self.eps * (df * self.B0 * ztil * mode + f * dmode_dz)
        return np.stack([gy, gz])

    def resonant_psi(self, vtheta=None):
        """psi where dPsi/dpsi vanishes along a section ray (the ridge
        separating the inner and outer branches); vtheta = None gives the
        eps = 0 resonance (n/m - w1)/(2 w2)."""
        psi0 = (self.n / self.m - self.w1) / (2.0 * self.w2)
        if vtheta is None or self.eps == 0.0:
            return psi0
        vtheta = np.asarray(vtheta, dtype=float)
        c = np.cos(self.m * vtheta + self.zeta)
        psi = np.broadcast_to(np.float64(psi0), vtheta.shape).copy()
        for _ in range(60):  # plain Newton; the residual is smooth in psi
            m = self.m
            f, df = self._f(psi), self._df(psi)
            g = (-self.n + m * (self.w1 + 2.0 * self.w2 * psi)
                 + m * self.eps * psi**(m / 2.0 - 1.0) * (0.5 * m * f + psi * df) * c)
            ddf = npoly.polyval(psi, npoly.polyder(self.df_coeffs))
            dg = (2.0 * m * self.w2
                  + m * self.eps * c * ((m / 2.0 - 1.0) * psi**(m / 2.0 - 2.0) * (0.5 * m * f + psi * df)
                                        + psi**(m / 2.0 - 1.0) * (0.5 * m * df + df + psi * ddf)))
            step = g / dg
            psi = psi - step
            if np.all(np.abs(step) < 1e-14 * max(1.0, psi0)):
                break
        return psi if psi.ndim else float(psi)

    def characteristic_period(self, rhs="v"):
        drift = abs(self.m * self.w1 - self.n)
        base = TWO_PI / drift if drift > 1e-6 else 100.0
        if rhs == "B":
            base *= self.R0 / self.B0  # B is slower than v by ~ rho^-1
        return base

    def in_domain(self, p):
        psi = np.asarray(p, dtype=float)[0]
        return (psi >= 0.0) & (psi < self.B0 * self.R0**2)
