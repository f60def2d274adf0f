"""Paraxial layout elements and conjugate-mirror geometry.

Everything lives in the meridional plane: positions are (x, z) with z the
layout axis, directions are unit 2-vectors.  Layouts are written along a
single unfolded axis with strictly increasing element positions; a
phase-conjugating mirror element converts the through-going ray in place
(transverse momentum preserved, frequency swapped), which is the unfolded
reading of its folded retro-reflection.

Core relations:

    thin lens          1/S + 1/S' = 1/f
    exit refraction    omega_s sin(beta_ps) = omega_i sin(beta_pi)
    conjugate mirror   omega_s/Z_s + omega_i/Z_i = (omega_p / R) cos(beta)
    magnification      M = -(Z_i omega_s) / (Z_s omega_i)

with cos(beta) the frequency-weighted mean of the two exit-angle cosines.
The mirror law is equivalent to the statement that the object point, the
curvature centre and the image point are collinear; verify_area_identity
checks exactly that through signed triangle areas.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np
import yaml

from . import kinematics
from .errors import (
    CollimatedOutput,
    DegenerateConjugate,
    DegenerateTriangle,
    NoExitAngle,
    ParseError,
    RayBlocked,
    ValidationError,
)

__all__ = [
    "ThinLens",
    "Mask",
    "QuantumMirror",
    "DetectorPlane",
    "OpticalLayout",
    "Ray",
    "SqmImage",
    "thin_lens_image",
    "snell_exit_angles",
    "sqm_image_distance",
    "magnification",
    "paraxial_sqm_law",
    "verify_area_identity",
    "conjugate_exit_direction",
    "trace_ray",
    "load_layout",
]

AREA_FLOOR = 1e-18  # m^2, below this a triangle counts as collapsed


@dataclass(frozen=True)
class ThinLens:
    """Ideal thin lens: focal length f != 0 at an axial position."""

    focal_length: float
    position: float

    def __post_init__(self):
        if self.focal_length == 0.0 or not math.isfinite(self.focal_length):
            raise ValueError("focal length must be finite and nonzero")


@dataclass(frozen=True)
class Mask:
    """Transmission screen: open windows on a uniform background.

    windows is a sequence of (lo, hi, transmission) cells; x outside every
    window sees `base`.  Values live in [0, 1].
    """

    position: float
    windows: tuple = ()
    base: float = 0.0

    def __post_init__(self):
        wins = []
        last_hi = -math.inf
        for lo, hi, t in self.windows:
            if not lo < hi:
                raise ValueError(f"mask window [{lo}, {hi}) is empty")
            if lo < last_hi:
                raise ValueError("mask windows must be ascending and disjoint")
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"transmission {t} outside [0, 1]")
            wins.append((float(lo), float(hi), float(t)))
            last_hi = hi
        if not 0.0 <= self.base <= 1.0:
            raise ValueError(f"base transmission {self.base} outside [0, 1]")
        object.__setattr__(self, "windows", tuple(wins))

    @classmethod
    def open(cls, position: float) -> "Mask":
        return cls(position=position, windows=(), base=1.0)

    @classmethod
    def opaque(cls, position: float) -> "Mask":
        return cls(position=position, windows=(), base=0.0)

    @classmethod
    def from_apertures(cls, position: float, centers, widths) -> "Mask":
        """Fully open holes at the given centers on an opaque background."""
        if np.isscalar(widths):
            widths = [widths] * len(centers)
        wins = sorted(
            (c - w / 2.0, c + w / 2.0, 1.0) for c, w in zip(centers, widths)
        )
        return cls(position=position, windows=tuple(wins), base=0.0)

    def transmission_at(self, x):
        """Transmission at scalar or array x."""
        xa = np.asarray(x, dtype=float)
        out = np.full(xa.shape, self.base)
        for lo, hi, t in self.windows:
            out = np.where((xa >= lo) & (xa < hi), t, out)
        if np.isscalar(x) or xa.ndim == 0:
            return float(out)
        return out


@dataclass(frozen=True)
class QuantumMirror:
    """Phase-conjugating crystal plane.

    kind "planar" ignores radius; "spherical" uses the pump wavefront
    curvature radius (curvature centre R downstream of the plane in
    unfolded coordinates, on the object side once folded).  pump_omega
    sets the frequency bookkeeping of the conversion; None means a
    degenerate mirror (frequency kept).  medium optionally carries the
    slab whose coupling fixes the conversion probability.
    """

    position: float
    kind: str = "planar"
    radius: Optional[float] = None
    pump_omega: Optional[float] = None
    medium: Optional[kinematics.CrystalMedium] = None

    def __post_init__(self):
        if self.kind not in ("planar", "spherical"):
            raise ValueError(f"mirror kind must be planar or spherical, got {self.kind!r}")
        if self.kind == "spherical":
            if self.radius is None or self.radius == 0.0 or not math.isfinite(self.radius):
                raise ValueError("spherical mirror needs a finite nonzero radius")

    def normal_tilt(self, x: float) -> float:
        """Paraxial tilt of the local pump direction at height x."""
        if self.kind == "planar":
            return 0.0
        return -x / self.radius


@dataclass(frozen=True)
class DetectorPlane:
    """Scan plane: pixel pitch and bin count along the transverse axis."""

    position: float
    pitch: float
    bins: int = 201

    def __post_init__(self):
        if not self.pitch > 0.0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")

    def bin_centers(self) -> np.ndarray:
        idx = np.arange(self.bins, dtype=float) - (self.bins - 1) / 2.0
        return idx * self.pitch

    def bin_edges(self) -> np.ndarray:
        c = self.bin_centers()
        return np.concatenate([c - self.pitch / 2.0, [c[-1] + self.pitch / 2.0]])

    @property
    def halfspan(self) -> float:
        return self.bins * self.pitch / 2.0


LayoutElement = Union[ThinLens, Mask, QuantumMirror, DetectorPlane]


@dataclass(frozen=True)
class OpticalLayout:
    """Ordered element stack along one unfolded propagation axis."""

    elements: tuple

    def __post_init__(self):
        elems = tuple(self.elements)
        if not elems:
            raise ValueError("layout needs at least one element")
        pos = [e.position for e in elems]
        if not all(b > a for a, b in zip(pos, pos[1:])):
            raise ValueError("element positions must be strictly increasing")
        object.__setattr__(self, "elements", elems)

    def only(self, cls):
        """The single element of a type; None if absent, error if several."""
        found = [e for e in self.elements if isinstance(e, cls)]
        if len(found) > 1:
            raise ValueError(f"layout has {len(found)} {cls.__name__} elements")
        return found[0] if found else None

    def all_of(self, cls) -> list:
        return [e for e in self.elements if isinstance(e, cls)]


@dataclass(frozen=True)
class Ray:
    """Meridional ray: origin (x, z), unit direction (dx, dz), frequency."""

    x: float
    z: float
    dx: float
    dz: float
    omega: float

    def __post_init__(self):
        norm = math.hypot(self.dx, self.dz)
        if norm == 0.0:
            raise ValueError("ray direction cannot be zero")
        object.__setattr__(self, "dx", self.dx / norm)
        object.__setattr__(self, "dz", self.dz / norm)
        if self.omega <= 0.0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def slope(self) -> float:
        return self.dx / self.dz


class SqmImage(NamedTuple):
    z_i: float
    virtual: bool


def thin_lens_image(s: float, f: float) -> float:
    """Image distance from 1/S + 1/S' = 1/f.

    Raises CollimatedOutput when the object sits in the focal plane.
    """
    if f == 0.0:
        raise ValueError("focal length must be nonzero")
    if s == f:
        raise CollimatedOutput(f"object at focal distance {f}; image at infinity")
    inv = 1.0 / f - 1.0 / s
    if inv == 0.0:
        raise CollimatedOutput(f"object at focal distance {f}; image at infinity")
    return 1.0 / inv


def snell_exit_angles(omega_s: float, omega_i: float, beta_ps: float) -> float:
    """Idler exit angle from omega_s sin(beta_ps) = omega_i sin(beta_pi)."""
    arg = omega_s * math.sin(beta_ps) / omega_i
    if abs(arg) > 1.0:
        raise NoExitAngle(
            f"omega_s/omega_i sin(beta_ps) = {arg:.6g} has no real angle"
        )
    return math.asin(arg)


def sqm_image_distance(
    z_s: float,
    omega_s: float,
    omega_i: float,
    radius: float,
    beta_ps: float = 0.0,
) -> SqmImage:
    """Conjugate distance of the spherical quantum mirror.

    Solves omega_s/Z_s + omega_i/Z_i = (omega_p / R) cos(beta) for Z_i,
    where omega_p = omega_s + omega_i and cos(beta) mixes the two exit
    cosines weighted by frequency.  radius = inf is the planar mirror.
    Negative Z_i marks a virtual image and is returned as-is with the
    flag set.

    Raises DegenerateConjugate when the denominator vanishes (conjugate
    at infinity) and NoExitAngle through the refraction relation.
    """
    if z_s == 0.0:
        raise ValueError("object distance z_s must be nonzero")
    beta_pi = snell_exit_angles(omega_s, omega_i, beta_ps)
    omega_p = omega_s + omega_i
    cos_beta = (omega_s * math.cos(beta_ps) + omega_i * math.cos(beta_pi)) / omega_p
    curvature = 0.0 if math.isinf(radius) else omega_p * cos_beta / radius
    denom = curvature - omega_s / z_s
    if denom == 0.0:
        raise DegenerateConjugate(
            f"conjugate denominator vanished (z_s={z_s}, R={radius})"
        )
    z_i = omega_i / denom
    return SqmImage(z_i=z_i, virtual=z_i < 0.0)


def magnification(z_s: float, z_i: float, omega_s: float, omega_i: float) -> float:
    """Transverse magnification M = -(Z_i omega_s) / (Z_s omega_i)."""
    return -(z_i * omega_s) / (z_s * omega_i)


def paraxial_sqm_law(
    z_s: float,
    z_i: float,
    lambda_s: float,
    lambda_i: float,
    lambda_p: float,
    f: float,
    d: float,
) -> float:
    """Residual of the wavelength form of the small-angle mirror law.

    Zero when (lambda_p/lambda_s)/Z_s + (lambda_p/lambda_i)/Z_i equals
    1/(f - d), the pump focusing geometry that sets R = f - d.
    """
    if f == d:
        raise DegenerateConjugate("pump focus on the crystal plane: R = 0")
    return (lambda_p / lambda_s) / z_s + (lambda_p / lambda_i) / z_i - 1.0 / (f - d)


def _signed_area(p1, p2, p3) -> float:
    (x1, y1), (x2, y2), (x3, y3) = p1, p2, p3
    return 0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1))


def verify_area_identity(p, a, p_prime, c) -> float:
    """Signed-area residual of the conjugate collinearity identity.

    For a conjugate solution the curvature centre C lies on the line
    through the object P and image P', so the triangle P-A-P' splits
    exactly:

        Area(P, A, P') - Area(P, A, C) - Area(A, P', C) = 0.

    All areas are signed; the identity is orientation-free.  Fully
    collinear input (all three areas below the floor) is the on-axis
    limit and returns 0.  If only some triangles collapse the
    configuration is genuinely degenerate and DegenerateTriangle is
    raised.
    """
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    pp = np.asarray(p_prime, dtype=float)
    c = np.asarray(c, dtype=float)
    for name, pt in (("p", p), ("a", a), ("p_prime", pp), ("c", c)):
        if pt.shape != (2,):
            raise ValueError(f"{name} must be a 2-d point")

    t_main = _signed_area(p, a, pp)
    t_left = _signed_area(p, a, c)
    t_right = _signed_area(a, pp, c)
    small = [abs(t) < AREA_FLOOR for t in (t_main, t_left, t_right)]
    if all(small):
        return 0.0
    if any(small):
        raise DegenerateTriangle(
            f"triangle areas {t_main:.3e}, {t_left:.3e}, {t_right:.3e} "
            f"include a collapse below {AREA_FLOOR:.0e} m^2"
        )
    return t_main - t_left - t_right


def conjugate_exit_direction(d_in, m, freq_ratio: float):
    """Exit direction of the conjugate reflection about local normal m.

    d_in must run into the surface (d_in . m < 0).  The tangential
    component keeps its direction while its sine scales by freq_ratio =
    omega_in / omega_out; the exit leaves along +m.  freq_ratio = 1 with
    a tilted m reduces to an ordinary mirror.

    Raises NoExitAngle when the scaled sine exceeds 1.
    """
    d_in = np.asarray(d_in, dtype=float)
    m = np.asarray(m, dtype=float)
    m = m / np.linalg.norm(m)
    proj = float(np.dot(d_in, m))
    if proj >= 0.0:
        raise ValueError("d_in must point into the surface (d_in . m < 0)")
    tang = d_in - proj * m
    sin_in = float(np.linalg.norm(tang))
    sin_out = freq_ratio * sin_in
    if sin_out > 1.0:
        raise NoExitAngle(f"scaled sine {sin_out:.6g} exceeds 1")
    if sin_in == 0.0:
        return m.copy()
    t_hat = tang / sin_in
    cos_out = math.sqrt(1.0 - sin_out * sin_out)
    return cos_out * m + sin_out * t_hat


def _apply_mirror(ray: Ray, qm: QuantumMirror) -> Ray:
    # Unfolded pass: fold the incoming direction, reflect about the local
    # pump direction, keep the exit as the downstream continuation.
    tilt = qm.normal_tilt(ray.x)
    m = np.array([math.sin(tilt), math.cos(tilt)])
    d_folded = np.array([ray.dx, -ray.dz])
    if qm.pump_omega is None:
        omega_out = ray.omega
        ratio = 1.0
    else:
        # frequency and helicity bookkeeping through the emission vertex
        pump = kinematics.Photon(
            omega=qm.pump_omega, k=qm.pump_omega * np.array([m[0], 0.0, m[1]])
        )
        returned = kinematics.Photon(
            omega=ray.omega,
            k=ray.omega * np.array([d_folded[0], 0.0, d_folded[1]]),
            helicity=-1,
        )
        converted = kinematics.cross_convert(pump, returned)
        omega_out = converted.omega
        ratio = ray.omega / omega_out
    d_out = conjugate_exit_direction(d_folded, m, ratio)
    return Ray(x=ray.x, z=ray.z, dx=float(d_out[0]), dz=float(d_out[1]), omega=omega_out)


def trace_ray(ray: Ray, layout: OpticalLayout) -> Ray:
    """Push a ray through every element of an unfolded layout in order.

    Free propagation between planes, paraxial lens deflection
    (slope -> slope - x/f), mask transmission test, conjugate-mirror
    conversion.  The returned ray sits on the last element's plane.

    Raises RayBlocked on a zero-transmission mask cell and ValueError if
    an element plane is unreachable.
    """
    r = ray
    for elem in layout.elements:
        dz_plane = elem.position - r.z
        if dz_plane < 0.0:
            raise ValueError(f"element at {elem.position} lies behind the ray")
        if r.dz <= 0.0:
            raise ValueError("ray does not propagate forward along the axis")
        t = dz_plane / r.dz
        x_hit = r.x + t * r.dx
        r = Ray(x=x_hit, z=elem.position, dx=r.dx, dz=r.dz, omega=r.omega)

        if isinstance(elem, ThinLens):
            new_slope = r.slope - x_hit / elem.focal_length
            r = Ray(x=x_hit, z=r.z, dx=new_slope, dz=1.0, omega=r.omega)
        elif isinstance(elem, Mask):
            if elem.transmission_at(x_hit) == 0.0:
                raise RayBlocked(
                    f"mask at z={elem.position} blocks the ray at x={x_hit:.6g}"
                )
        elif isinstance(elem, QuantumMirror):
            r = _apply_mirror(r, elem)
        elif isinstance(elem, DetectorPlane):
            pass
        else:
            raise TypeError(f"unknown element type {type(elem).__name__}")
    return r


# ---------------------------------------------------------------------------
# layout files

_ELEMENT_KEYS = {
    "lens": {"type", "position", "f"},
    "mask": {"type", "position", "kind", "centers", "widths", "base"},
    "mirror": {"type", "position", "kind", "radius", "pump_omega"},
    "detector": {"type", "position", "pitch", "bins"},
}


def _build_element(entry: dict, index: int):
    import difflib

    if not isinstance(entry, dict):
        raise ValidationError(f"layout element #{index} must be a mapping")
    etype = entry.get("type")
    if etype not in _ELEMENT_KEYS:
        guess = difflib.get_close_matches(str(etype), _ELEMENT_KEYS, n=1)
        hint = f"; did you mean {guess[0]!r}?" if guess else ""
        raise ValidationError(f"unknown element type {etype!r}{hint}")
    allowed = _ELEMENT_KEYS[etype]
    for key in entry:
        if key not in allowed:
            guess = difflib.get_close_matches(key, allowed, n=1)
            hint = f"; did you mean {guess[0]!r}?" if guess else ""
            raise ValidationError(
                f"unknown key {key!r} in {etype} element #{index}{hint}"
            )
    if "position" not in entry:
        raise ValidationError(f"{etype} element #{index} needs a position")
    pos = float(entry["position"])
    try:
        if etype == "lens":
            return ThinLens(focal_length=float(entry["f"]), position=pos)
        if etype == "mask":
            kind = entry.get("kind", "apertures")
            if kind == "open":
                return Mask.open(pos)
            if kind == "opaque":
                return Mask.opaque(pos)
            if kind == "apertures":
                return Mask.from_apertures(
                    pos, entry.get("centers", []), entry.get("widths", [])
                )
            raise ValidationError(f"unknown mask kind {kind!r}")
        if etype == "mirror":
            radius = entry.get("radius")
            return QuantumMirror(
                position=pos,
                kind=entry.get("kind", "planar"),
                radius=None if radius is None else float(radius),
                pump_omega=entry.get("pump_omega"),
            )
        return DetectorPlane(
            position=pos,
            pitch=float(entry["pitch"]),
            bins=int(entry.get("bins", 201)),
        )
    except KeyError as exc:
        raise ValidationError(
            f"{etype} element #{index} is missing {exc.args[0]!r}"
        ) from exc


def layout_from_dict(spec: dict) -> OpticalLayout:
    """Build a layout from its mapping form (the `layout:` config block)."""
    if not isinstance(spec, dict) or "elements" not in spec:
        raise ValidationError("layout must be a mapping with an 'elements' list")
    elements = [
        _build_element(e, i) for i, e in enumerate(spec["elements"])
    ]
    try:
        return OpticalLayout(elements=tuple(elements))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def load_layout(path) -> OpticalLayout:
    """Read a layout file (YAML mapping with an `elements` list)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            spec = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ParseError(f"cannot parse layout file {path!r}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read layout file {path!r}: {exc}") from exc
    return layout_from_dict(spec)
