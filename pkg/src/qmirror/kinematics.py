"""Pair kinematics for parametric down-conversion.

A pump photon of frequency omega_p splits into a signal/idler pair subject
to exact energy and momentum conservation,

    omega_p = omega_s + omega_i,       k_p = k_s + k_i.

Inside a dispersive crystal each leg carries |k| = n(omega) * omega / c, so
the momentum triangle only closes for emission angles set by the law of
cosines.  The same vertex read with the signal leg reversed (k -> -k,
helicity -> -helicity) describes the phase-conjugating "reflection" a
returned photon undergoes: pump + reversed signal -> idler.

All functions accept an explicit speed of light so the natural-unit
convention c = 1 used throughout the analytic examples is a plain argument,
not a mode switch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FrequencyOrder,
    OutOfDispersionRange,
    ParseError,
    PhaseMatchImpossible,
)

__all__ = [
    "C_LIGHT",
    "Photon",
    "CrystalMedium",
    "PairState",
    "load_dispersion_table",
    "emission_angles",
    "split_pump",
    "check_coherence",
    "conjugate_photon",
    "cross_convert",
]

C_LIGHT = 299_792_458.0  # m/s; pass c=1.0 for natural units

_REL_TOL = 1e-12


@dataclass(frozen=True)
class Photon:
    """Monochromatic photon: angular frequency, wavevector, helicity.

    Attributes:
        omega: angular frequency, rad/s (or 1/length in natural units).
        k: wavevector as a length-3 array, 1/m.
        helicity: spin projection on k, +1 or -1.
    """

    omega: float
    k: np.ndarray
    helicity: int = +1

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.helicity not in (-1, +1):
            raise ValueError(f"helicity must be +1 or -1, got {self.helicity}")
        k = np.asarray(self.k, dtype=float)
        if k.shape != (3,):
            raise ValueError(f"k must be a 3-vector, got shape {k.shape}")
        if not np.all(np.isfinite(k)) or float(np.dot(k, k)) == 0.0:
            raise ValueError("k must be finite and nonzero")
        k.flags.writeable = False
        object.__setattr__(self, "k", k)

    @property
    def wavenumber(self) -> float:
        return float(np.linalg.norm(self.k))

    def is_on_shell(self, c: float = C_LIGHT, rel_tol: float = _REL_TOL) -> bool:
        """True when |k| matches omega/c, i.e. a free-space leg."""
        k0 = self.omega / c
        return abs(self.wavenumber - k0) <= rel_tol * k0


@dataclass(frozen=True)
class CrystalMedium:
    """Nonlinear slab: tabulated real index, coupling strength, thickness.

    The dispersion table holds Re n(omega) at strictly increasing
    frequencies; lookups interpolate linearly and refuse to extrapolate.

    Attributes:
        omegas: sample frequencies, strictly increasing, length >= 2.
        indices: Re n at each sample, every entry >= 1.
        g: effective three-wave coupling (complex), 1/m.
        thickness: slab length L > 0, m.
    """

    omegas: np.ndarray
    indices: np.ndarray
    g: complex = 0.0 + 0.0j
    thickness: float = 1.0

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        ns = np.asarray(self.indices, dtype=float)
        if om.ndim != 1 or om.size < 2:
            raise ValueError("dispersion table needs at least two entries")
        if ns.shape != om.shape:
            raise ValueError("omegas and indices must have matching shape")
        if not np.all(np.diff(om) > 0.0):
            raise ValueError("dispersion frequencies must be strictly increasing")
        if np.any(ns < 1.0):
            raise ValueError("refractive index below 1 is not supported")
        if not self.thickness > 0.0:
            raise ValueError(f"thickness must be positive, got {self.thickness}")
        om.flags.writeable = False
        ns.flags.writeable = False
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "indices", ns)
        object.__setattr__(self, "g", complex(self.g))

    @classmethod
    def constant_index(
        cls,
        n: float = 1.0,
        omega_span: tuple[float, float] = (1e-30, 1e30),
        g: complex = 0.0,
        thickness: float = 1.0,
    ) -> "CrystalMedium":
        """Flat dispersion over a wide window; handy for analytic checks."""
        return cls(
            omegas=np.array(omega_span, dtype=float),
            indices=np.array([n, n], dtype=float),
            g=g,
            thickness=thickness,
        )

    @classmethod
    def from_file(cls, path, g: complex = 0.0, thickness: float = 1.0) -> "CrystalMedium":
        omegas, indices = load_dispersion_table(path)
        return cls(omegas=omegas, indices=indices, g=g, thickness=thickness)

    def index_at(self, omega: float) -> float:
        """Linear interpolation of Re n; raises outside the table window."""
        lo, hi = float(self.omegas[0]), float(self.omegas[-1])
        if not (lo <= omega <= hi):
            raise OutOfDispersionRange(
                f"omega={omega} outside dispersion window [{lo}, {hi}]"
            )
        return float(np.interp(omega, self.omegas, self.indices))

    def wavenumber(self, omega: float, c: float = C_LIGHT) -> float:
        """|k| = n(omega) * omega / c inside the slab."""
        return self.index_at(omega) * omega / c


@dataclass(frozen=True)
class PairState:
    """One down-conversion event: both daughters plus their cone angles.

    theta_ps and theta_pi are the angles each daughter makes with the pump
    direction; they satisfy the momentum triangle by construction.
    """

    signal: Photon
    idler: Photon
    theta_ps: float
    theta_pi: float

    @property
    def pump_omega(self) -> float:
        return self.signal.omega + self.idler.omega

    @property
    def pump_k(self) -> np.ndarray:
        return self.signal.k + self.idler.k

    def conservation_residual(self, pump: Photon) -> float:
        """Worst relative defect of energy and momentum against a pump.

        The daughters alone cannot know which pump generated them, so
        the pump must be passed in; audits build the nominal one.
        """
        e_res = abs(self.pump_omega - pump.omega) / pump.omega
        dk = self.signal.k + self.idler.k - pump.k
        scale = float(np.linalg.norm(pump.k))
        k_res = float(np.linalg.norm(dk)) / scale if scale > 0.0 else float(np.linalg.norm(dk))
        return max(e_res, k_res)


def load_dispersion_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column text table: omega <TAB> n, '#' starts a comment.

    Columns may equally be separated by spaces.  Rows must be sorted by
    strictly increasing omega; that is validated here so a bad file fails
    at load time rather than mid-run.
    """
    try:
        data = np.loadtxt(path, comments="#", dtype=float, ndmin=2)
    except (ValueError, OSError) as exc:
        raise ParseError(f"cannot parse dispersion table {path!r}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 2:
        raise ParseError(
            f"dispersion table {path!r} must have exactly two columns"
        )
    if data.shape[0] < 2:
        raise ParseError(f"dispersion table {path!r} needs at least two rows")
    omegas, indices = data[:, 0].copy(), data[:, 1].copy()
    if not np.all(np.diff(omegas) > 0.0):
        raise ParseError(f"dispersion table {path!r} is not strictly increasing")
    if np.any(indices < 1.0):
        raise ParseError(f"dispersion table {path!r} contains n < 1")
    return omegas, indices


def emission_angles(k_p: float, k_s: float, k_i: float) -> tuple[float, float]:
    """Cone angles closing the momentum triangle k_p = k_s + k_i.

    Law of cosines at the emission vertex:

        cos(theta_ps) = (k_p^2 + k_s^2 - k_i^2) / (2 k_p k_s)
        cos(theta_pi) = (k_p^2 + k_i^2 - k_s^2) / (2 k_p k_i)

    The second line is the first with the daughter roles swapped; both
    angles are measured from the pump direction, daughters on opposite
    sides of it.

    Raises:
        PhaseMatchImpossible: magnitudes violate the triangle inequality.
    """
    for name, val in (("k_p", k_p), ("k_s", k_s), ("k_i", k_i)):
        if not val > 0.0:
            raise ValueError(f"{name} must be positive, got {val}")
    # Exact triangle test on the inputs; the cosines are then clamped so
    # boundary cases do not fall to rounding.
    if k_p > k_s + k_i or k_s > k_p + k_i or k_i > k_p + k_s:
        raise PhaseMatchImpossible(
            f"no closing triangle for k_p={k_p}, k_s={k_s}, k_i={k_i}"
        )
    cos_ps = (k_p * k_p + k_s * k_s - k_i * k_i) / (2.0 * k_p * k_s)
    cos_pi = (k_p * k_p + k_i * k_i - k_s * k_s) / (2.0 * k_p * k_i)
    cos_ps = min(1.0, max(-1.0, cos_ps))
    cos_pi = min(1.0, max(-1.0, cos_pi))
    return math.acos(cos_ps), math.acos(cos_pi)


def _transverse_frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors orthogonal to axis and to each other."""
    a = axis / np.linalg.norm(axis)
    # pick the seed axis least aligned with a for numerical stability
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(a)))] = 1.0
    u = np.cross(a, seed)
    u /= np.linalg.norm(u)
    v = np.cross(a, u)
    return u, v


def split_pump(
    pump: Photon,
    omega_s: float,
    medium: CrystalMedium,
    azimuth: float = 0.0,
    c: float = C_LIGHT,
) -> PairState:
    """Split a pump photon at a chosen signal frequency.

    The idler takes omega_i = pump.omega - omega_s.  Daughter wavenumbers
    are n(omega) * omega / c from the medium table; directions follow
    emission_angles, the signal rotated by `azimuth` about the pump axis
    and the idler diametrically opposite so the transverse momenta cancel
    identically.

    Helicity convention: the signal carries the pump helicity and the
    idler the opposite one, so the pair helicities sum to zero.

    Raises:
        FrequencyOrder: omega_s not strictly inside (0, pump.omega).
        PhaseMatchImpossible: no emission triangle at these frequencies.
        OutOfDispersionRange: a daughter frequency leaves the table.
    """
    if not 0.0 < omega_s < pump.omega:
        raise FrequencyOrder(
            f"signal frequency {omega_s} must lie strictly inside "
            f"(0, {pump.omega})"
        )
    omega_i = pump.omega - omega_s
    k_p = pump.wavenumber
    k_s = medium.wavenumber(omega_s, c=c)
    k_i = medium.wavenumber(omega_i, c=c)
    theta_ps, theta_pi = emission_angles(k_p, k_s, k_i)

    axis = pump.k / k_p
    u, v = _transverse_frame(pump.k)
    t_hat = math.cos(azimuth) * u + math.sin(azimuth) * v

    # share one transverse magnitude so the transverse momenta cancel
    # exactly; near collinear emission the two acos results carry
    # sqrt(eps)-level noise that would otherwise fail to cancel
    q = k_s * math.sin(theta_ps)
    k_sig = (k_s * math.cos(theta_ps)) * axis + q * t_hat
    k_idl = (k_i * math.cos(theta_pi)) * axis - q * t_hat

    signal = Photon(omega=omega_s, k=k_sig, helicity=pump.helicity)
    idler = Photon(omega=omega_i, k=k_idl, helicity=-pump.helicity)

    pair = PairState(signal=signal, idler=idler, theta_ps=theta_ps, theta_pi=theta_pi)
    residual = float(np.linalg.norm(pair.pump_k - pump.k)) / k_p
    if residual > 1e-9:
        # cannot happen for a closing triangle; guards the construction
        raise PhaseMatchImpossible(f"momentum closure failed, residual {residual}")
    return pair


def check_coherence(medium: CrystalMedium, omega_p: float, omega_f: float) -> bool:
    """Cherenkov-type condition for a sustained conversion cone.

    The pump phase front must run at least as fast as the converted
    field's: Re n(omega_p) <= Re n(omega_f), equivalently c/n(omega_p) >=
    c/n(omega_f).  Raises OutOfDispersionRange off the table.
    """
    return medium.index_at(omega_p) <= medium.index_at(omega_f)


def conjugate_photon(photon: Photon) -> Photon:
    """Phase-conjugate replica: k -> -k, helicity -> -helicity.

    omega is untouched.  Applying this twice restores the original photon
    field-for-field (IEEE negation is exact).
    """
    return Photon(omega=photon.omega, k=-photon.k, helicity=-photon.helicity)


def cross_convert(pump: Photon, returned: Photon) -> Photon:
    """Convert a returned (conjugated) daughter into its partner.

    Reading the emission vertex with one daughter in the initial state:
    pump + returned -> partner, with

        omega_out = omega_p - omega_returned
        k_out     = k_p + k_returned

    Since the returned photon carries the reversed daughter momentum,
    k_out equals k_p - k_daughter: exactly the partner produced in the
    original split.  The partner keeps the returned photon's helicity
    (pair helicities sum to zero under the split convention).

    Raises:
        FrequencyOrder: returned.omega >= pump.omega.
    """
    if returned.omega >= pump.omega:
        raise FrequencyOrder(
            f"returned frequency {returned.omega} must be below pump "
            f"frequency {pump.omega}"
        )
    omega_out = pump.omega - returned.omega
    k_out = pump.k + returned.k
    return Photon(omega=omega_out, k=k_out, helicity=returned.helicity)
