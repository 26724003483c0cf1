"""Eddy-viscosity subgrid closures (Smagorinsky, Leith) and their dynamic baselines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import SpectralField, SpectralGrid, fwd, inv, make_grid

SMAGORINSKY = "smagorinsky"
LEITH = "leith"
KINDS = (SMAGORINSKY, LEITH)


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"closure kind must be one of {KINDS}, got {kind!r}")
    return kind


@dataclass
class ClosureField:
    """Pointwise coefficient ``c(x, y)`` of an eddy-viscosity closure."""

    c: np.ndarray
    kind: str
    delta: float

    def __post_init__(self):
        check_kind(self.kind)
        if not self.delta > 0:
            raise ValueError(f"filter width must be positive, got {self.delta}")
        self.c = np.asarray(self.c, dtype=float)
        if np.any(self.c < 0):
            raise ValueError("closure coefficient must be non-negative everywhere")

    @classmethod
    def uniform(cls, value: float, n: int, kind: str) -> "ClosureField":
        grid = make_grid(n)
        return cls(np.full(grid.physical_shape, float(value)), kind, grid.dx)


@dataclass
class StrainFields:
    s11: np.ndarray
    s12: np.ndarray
    s_mag: np.ndarray
    grad_omega_mag: np.ndarray

    @property
    def s22(self) -> np.ndarray:
        return -self.s11


def velocities(omega_bar: SpectralField, mean_flow=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Physical ``u = psi_y + U``, ``v = -psi_x + V``."""
    g = omega_bar.grid
    psi = omega_bar.coeffs * g.inv_k2
    uv = inv(np.stack([g.iky * psi, -g.ikx * psi]), g.n)
    return uv[0] + mean_flow[0], uv[1] + mean_flow[1]


def strain_fields(omega_bar: SpectralField, mean_flow=(0.0, 0.0)) -> StrainFields:
    """Resolved strain rate and vorticity-gradient magnitude in physical space.

    Derivatives are taken of the physical velocity, so a uniform ``mean_flow``
    is carried through and drops out exactly.
    """
    g = omega_bar.grid
    u, v = velocities(omega_bar, mean_flow)
    uh, vh = fwd(np.stack([u, v]))
    w = omega_bar.coeffs
    d = inv(np.stack([g.ikx * uh, 0.5 * (g.iky * uh + g.ikx * vh), g.ikx * w, g.iky * w]), g.n)
    s11, s12 = d[0], d[1]
    return StrainFields(
        s11=s11,
        s12=s12,
        s_mag=2.0 * np.sqrt(s11**2 + s12**2),
        grad_omega_mag=np.sqrt(d[2] ** 2 + d[3] ** 2),
    )


def _strain_parts(grid: SpectralGrid, w: np.ndarray):
    """``s11, s12, omega_x, omega_y`` physical, from vorticity coefficients."""
    psi = w * grid.inv_k2
    s11 = grid.ikx * grid.iky * psi  # psi_xy
    s12 = 0.5 * (grid.iky**2 - grid.ikx**2) * psi  # (psi_yy - psi_xx)/2
    return inv(np.stack([s11, s12, grid.ikx * w, grid.iky * w]), grid.n)


def closure_scale(kind: str, delta: float, s_mag: np.ndarray, grad_omega_mag: np.ndarray) -> np.ndarray:
    """Eddy viscosity per unit coefficient: ``delta^2 |S|`` or ``delta^3 |grad omega|``."""
    if kind == SMAGORINSKY:
        return delta**2 * s_mag
    if kind == LEITH:
        return delta**3 * grad_omega_mag
    raise ValueError(f"unknown closure kind {kind!r}")


def eddy_viscosity(closure: ClosureField, sf: StrainFields) -> np.ndarray:
    if closure.c.shape != sf.s_mag.shape[-2:]:
        raise ValueError(f"coefficient shape {closure.c.shape} != field shape {sf.s_mag.shape}")
    if np.any(closure.c < 0):
        raise ValueError("closure coefficient must be non-negative everywhere")
    return closure.c * closure_scale(closure.kind, closure.delta, sf.s_mag, sf.grad_omega_mag)


def _pi_from_stress(grid: SpectralGrid, nu: np.ndarray, s11: np.ndarray, s12: np.ndarray) -> np.ndarray:
    # tau = -2 nu S; vorticity tendency is curl(-div tau), so uniform nu gives nu*lap(omega)
    t11, t12 = fwd(np.stack([-2.0 * nu * s11, -2.0 * nu * s12]))
    out = ((grid.kx**2 - grid.ky**2) * t12 - 2.0 * grid.kx * grid.ky * t11) * grid.dealias_mask
    out[..., 0, 0] = 0.0
    return out


def sgs_pi(nu_e: np.ndarray, omega_bar: SpectralField) -> SpectralField:
    """Closure tendency ``Pi`` for eddy viscosity ``nu_e`` (dealiased)."""
    nu_e = np.asarray(nu_e, dtype=float)
    if not np.all(np.isfinite(nu_e)):
        raise ValueError("eddy viscosity contains non-finite values")
    if np.any(nu_e < 0):
        raise ValueError("eddy viscosity must be non-negative")
    g = omega_bar.grid
    d = _strain_parts(g, omega_bar.coeffs)
    return SpectralField(g, _pi_from_stress(g, nu_e, d[0], d[1]))


def closure_tendency(grid: SpectralGrid, w: np.ndarray, c: np.ndarray, kind: str) -> np.ndarray:
    """``Pi`` coefficients for coefficient field ``c`` (fast path used by the solvers)."""
    d = _strain_parts(grid, w)
    s_mag = 2.0 * np.sqrt(d[0] ** 2 + d[1] ** 2)
    gmag = np.sqrt(d[2] ** 2 + d[3] ** 2) if kind == LEITH else None
    nu = c * closure_scale(kind, grid.dx, s_mag, gmag)
    return _pi_from_stress(grid, nu, d[0], d[1])


# --------------------------------------------------------------------------
# localized dynamic procedure

DENOM_FLOOR = 1e-14


def dynamic_coefficient_array(grid: SpectralGrid, w: np.ndarray, kind: str) -> np.ndarray:
    """Pointwise Germano least-squares coefficient, negative values clipped to 0.

    Works on the vorticity flux ``sigma_i = -nu_e d_i(omega)``. With a sharp test
    filter (hat) at half the grid cutoff,
    ``L_i = hat(u_i w) - hat(u_i) hat(w)`` and
    ``M_i = hat(D d_i w) - D_hat d_i hat(w)``, where ``D`` is the closure scale at
    width ``delta`` and ``D_hat`` the same at ``2*delta``; ``c = L.M / M.M``.
    """
    check_kind(kind)
    n = grid.n
    test = ((np.abs(grid.kx) < n // 4) & (np.abs(grid.ky) < n // 4))
    psi = w * grid.inv_k2
    wt = w * test
    psit = psi * test

    def phys_parts(wc, pc):
        s11 = grid.ikx * grid.iky * pc
        s12 = 0.5 * (grid.iky**2 - grid.ikx**2) * pc
        return inv(np.stack([
            grid.iky * pc, -grid.ikx * pc, wc, grid.ikx * wc, grid.iky * wc, s11, s12,
        ]), n)

    u, v, om, wx, wy, s11, s12 = phys_parts(w, psi)
    ut, vt, omt, wxt, wyt, s11t, s12t = phys_parts(wt, psit)

    delta = grid.dx
    d_res = closure_scale(kind, delta, 2.0 * np.sqrt(s11**2 + s12**2), np.sqrt(wx**2 + wy**2))
    d_test = closure_scale(kind, 2.0 * delta, 2.0 * np.sqrt(s11t**2 + s12t**2), np.sqrt(wxt**2 + wyt**2))

    filt = inv(fwd(np.stack([u * om, v * om, d_res * wx, d_res * wy])) * test, n)
    lx = filt[0] - ut * omt
    ly = filt[1] - vt * omt
    mx = filt[2] - d_test * wxt
    my = filt[3] - d_test * wyt

    num = lx * mx + ly * my
    den = mx * mx + my * my
    ok = den >= DENOM_FLOOR
    c = np.zeros_like(num)
    np.divide(num, den, out=c, where=ok)
    return np.maximum(c, 0.0)


def dynamic_coefficient(omega_bar: SpectralField, kind: str) -> ClosureField:
    g = omega_bar.grid
    if g.n < 8:
        raise ValueError("dynamic procedure needs n >= 8 to resolve a test filter at 2*delta")
    return ClosureField(dynamic_coefficient_array(g, omega_bar.coeffs, kind), kind, g.dx)


def dynamic_tendency(grid: SpectralGrid, w: np.ndarray, kind: str) -> np.ndarray:
    return closure_tendency(grid, w, dynamic_coefficient_array(grid, w, kind), kind)
