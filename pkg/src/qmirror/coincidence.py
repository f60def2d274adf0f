"""Monte Carlo coincidence engines for the two-photon experiments.

Each engine unfolds the two arms of the source into one axis: the
trigger-side elements sit upstream of the crystal plane, the scanning
detector downstream, and the return leg through the crystal continues as
the cross-converted ray.  Trials are vectorized over numpy arrays; a
trial produces at most one arrival on the scan detector (there is one
partner photon per pair), so the per-bin coincidence count can never
exceed the per-bin scan singles, and every coincidence consumes one
bucket click, bounding the coincidence total by the bucket total.

Statistical model of the source: the pair shares a transverse wavevector
q drawn zero-mean Gaussian with spread sigma_q, signal +q and idler -q,
birth position Gaussian with the pump waist.  Energy and momentum close
exactly by construction and a configurable fraction of recorded
coincidences is audited against the conservation laws through the
kinematics types.

Sharding contract: a run with seed s and shard index j consumes the
stream seeded by (s, j); histograms from independently seeded shards
merge by addition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from . import wavemix
from .errors import ConfigInvalid, InsufficientCounts, ValidationError
from .geometry import (
    DetectorPlane,
    Mask,
    OpticalLayout,
    QuantumMirror,
    ThinLens,
)
from .kinematics import C_LIGHT, PairState, Photon

__all__ = [
    "SourceModel",
    "CoincidenceHistogram",
    "DirectQmResult",
    "FocusScanResult",
    "sample_pair",
    "run_ghost_image",
    "run_ghost_diffraction",
    "run_direct_qm",
    "ghost_image_focus_scan",
    "flatness_test",
    "merge_histograms",
    "run_in_shards",
    "image_sharpness",
]

_AUDIT_TOL = 1e-12


@dataclass(frozen=True)
class SourceModel:
    """Statistical model of the pair source.

    pump_omega: pump angular frequency (rad/s, or arbitrary units with
    c = 1).  sigma_q: transverse wavevector spread of the pair (1/m).
    waist: rms transverse birth position (m).  signal_fraction: the
    signal takes this fraction of the pump frequency (0.5 = degenerate).
    pair_rate: pairs per trial (Bernoulli thinning below 1).  seed:
    64-bit stream seed.
    """

    pump_omega: float
    sigma_q: float
    seed: int
    waist: float = 0.0
    signal_fraction: float = 0.5
    pair_rate: float = 1.0

    def __post_init__(self):
        if not self.pump_omega > 0.0:
            raise ValueError(f"pump_omega must be positive, got {self.pump_omega}")
        if not self.sigma_q > 0.0:
            raise ValueError(f"sigma_q must be positive, got {self.sigma_q}")
        if self.waist < 0.0:
            raise ValueError(f"waist must be nonnegative, got {self.waist}")
        if not 0.0 < self.signal_fraction < 1.0:
            raise ValueError(
                f"signal_fraction must lie strictly inside (0, 1), got {self.signal_fraction}"
            )
        if not 0.0 < self.pair_rate <= 1.0:
            raise ValueError(f"pair_rate must lie in (0, 1], got {self.pair_rate}")
        if not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed must be an integer")

    @property
    def omega_signal(self) -> float:
        return self.signal_fraction * self.pump_omega

    @property
    def omega_idler(self) -> float:
        return self.pump_omega - self.omega_signal

    def rng(self, shard: int = 0) -> np.random.Generator:
        """Stream for one shard; shard 0 is the default single-run stream."""
        return np.random.default_rng([int(self.seed) & (2**64 - 1), int(shard)])


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Per-bin coincidence and singles counts along the scan axis."""

    bin_centers: np.ndarray
    coincidences: np.ndarray
    singles_d1: np.ndarray
    singles_d2: np.ndarray
    trials: int

    def __post_init__(self):
        centers = np.asarray(self.bin_centers, dtype=float)
        cols = {}
        for name in ("coincidences", "singles_d1", "singles_d2"):
            arr = np.asarray(getattr(self, name))
            if not np.issubdtype(arr.dtype, np.integer):
                if not np.all(arr == np.floor(arr)):
                    raise ValidationError(f"{name} must hold integer counts")
                arr = arr.astype(np.int64)
            else:
                arr = arr.astype(np.int64)
            if arr.shape != centers.shape:
                raise ValidationError(f"{name} shape does not match bin_centers")
            if np.any(arr < 0):
                raise ValidationError(f"{name} holds negative counts")
            cols[name] = arr
        if centers.ndim != 1 or centers.size == 0:
            raise ValidationError("bin_centers must be a nonempty 1-d array")
        if self.trials < 0:
            raise ValidationError(f"trials must be nonnegative, got {self.trials}")
        # the scan-side singles share the coincidence axis, so the bound
        # holds bin by bin; the bucket side is attributed to scan steps by
        # dwell order, so only its total bounds the coincidences
        if np.any(cols["coincidences"] > cols["singles_d2"]):
            raise ValidationError(
                "coincidences exceed the scan singles in at least one bin"
            )
        if int(cols["coincidences"].sum()) > int(cols["singles_d1"].sum()):
            raise ValidationError("total coincidences exceed the bucket singles")
        if int(cols["coincidences"].sum()) > self.trials:
            raise ValidationError("total coincidences exceed the trial count")
        object.__setattr__(self, "bin_centers", centers)
        for name, arr in cols.items():
            object.__setattr__(self, name, arr)
        for arr in (self.bin_centers, *cols.values()):
            arr.setflags(write=False)

    @property
    def bins(self) -> int:
        return self.bin_centers.size

    def normalized(self) -> np.ndarray:
        """Coincidence profile scaled to unit maximum (zeros stay zero)."""
        peak = self.coincidences.max()
        if peak == 0:
            return self.coincidences.astype(float)
        return self.coincidences / float(peak)


def merge_histograms(histos: Sequence[CoincidenceHistogram]) -> CoincidenceHistogram:
    """Sum shard histograms over identical bin grids."""
    if not histos:
        raise ValueError("nothing to merge")
    first = histos[0]
    for h in histos[1:]:
        if not np.array_equal(h.bin_centers, first.bin_centers):
            raise ValidationError("histograms use different bin grids")
    return CoincidenceHistogram(
        bin_centers=first.bin_centers.copy(),
        coincidences=sum(h.coincidences for h in histos),
        singles_d1=sum(h.singles_d1 for h in histos),
        singles_d2=sum(h.singles_d2 for h in histos),
        trials=sum(h.trials for h in histos),
    )


def _sample_q(src: SourceModel, rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.normal(0.0, src.sigma_q, n)


def sample_pair(src: SourceModel, rng: np.random.Generator, c: float = C_LIGHT):
    """Draw one pair as on-shell photons with exactly opposite transverse q.

    The axial components follow from the vacuum dispersion at each
    frequency, so energy and transverse momentum close identically and
    the implied pump wavevector is the exact sum of the daughters.
    """
    omega_s = src.omega_signal
    omega_i = src.omega_idler
    k_s_mag = omega_s / c
    k_i_mag = omega_i / c
    qx, qy = rng.normal(0.0, src.sigma_q, 2)
    q2 = qx * qx + qy * qy
    if q2 >= min(k_s_mag, k_i_mag) ** 2:
        raise ValueError(
            "sampled transverse momentum exceeds a daughter wavenumber; "
            "sigma_q is unphysically large for these frequencies"
        )
    k_sig = np.array([qx, qy, math.sqrt(k_s_mag**2 - q2)])
    k_idl = np.array([-qx, -qy, math.sqrt(k_i_mag**2 - q2)])
    signal = Photon(omega=omega_s, k=k_sig, helicity=+1)
    idler = Photon(omega=omega_i, k=k_idl, helicity=-1)
    return signal, idler


def _conversion_probability(qm: QuantumMirror) -> float:
    """Conversion probability of the crystal plane, 1 for an ideal mirror."""
    if qm.medium is None:
        return 1.0
    return wavemix.conjugate_reflectivity(qm.medium.g, qm.medium.thickness)


def _audit_pairs(
    q: np.ndarray,
    omega_s: float,
    omega_i: float,
    c: float,
    rng: np.random.Generator,
    fraction: float,
) -> int:
    """Rebuild a random sample of recorded pairs and check conservation.

    Returns the number audited; raises ValidationError on any violation
    of the energy or momentum closure at 1e-12 relative.
    """
    n = q.size
    if n == 0 or fraction <= 0.0:
        return 0
    m = max(1, int(round(fraction * n)))
    idx = rng.choice(n, size=min(m, n), replace=False)
    k_s_mag = omega_s / c
    k_i_mag = omega_i / c
    for qx in q[idx]:
        kz_s = math.sqrt(k_s_mag**2 - qx * qx)
        kz_i = math.sqrt(k_i_mag**2 - qx * qx)
        signal = Photon(omega=omega_s, k=np.array([qx, 0.0, kz_s]), helicity=+1)
        idler = Photon(omega=omega_i, k=np.array([-qx, 0.0, kz_i]), helicity=-1)
        pair = PairState(signal=signal, idler=idler, theta_ps=0.0, theta_pi=0.0)
        # the source emits on axis, so the nominal pump carries the summed
        # longitudinal momentum and no transverse component at all
        pump = Photon(
            omega=omega_s + omega_i,
            k=np.array([0.0, 0.0, kz_s + kz_i]),
            helicity=+1,
        )
        resid = pair.conservation_residual(pump)
        if resid > _AUDIT_TOL:
            raise ValidationError(
                f"audited pair violates conservation at {resid:.3e}"
            )
    return idx.size


def _thin(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Bernoulli mask; always consumes one uniform block for stream stability."""
    u = rng.random(n)
    if p >= 1.0:
        return np.ones(n, dtype=bool)
    return u < p


def _bin_arrivals(x: np.ndarray, det: DetectorPlane):
    """(in-scan mask, bin index) for arrival positions on the scan plane."""
    edges = det.bin_edges()
    inside = (x >= edges[0]) & (x < edges[-1])
    idx = np.zeros(x.shape, dtype=np.int64)
    idx[inside] = np.floor((x[inside] - edges[0]) / det.pitch).astype(np.int64)
    np.clip(idx, 0, det.bins - 1, out=idx)
    return inside, idx


def _dwell_bins(n: int, bins: int) -> np.ndarray:
    """Dwell attribution of bucket-detector clicks: trial t belongs to the
    scan step t mod bins, mirroring a detector stepped once per trial."""
    return np.arange(n, dtype=np.int64) % bins


def _ghost_elements(layout: OpticalLayout, need_lens: bool):
    mask = layout.only(Mask)
    lens = layout.only(ThinLens)
    qm = layout.only(QuantumMirror)
    det = layout.only(DetectorPlane)
    missing = [
        name
        for name, el in (("mask", mask), ("mirror", qm), ("detector", det))
        if el is None
    ]
    if need_lens and lens is None:
        missing.append("lens")
    if missing:
        raise ConfigInvalid(f"layout is missing: {', '.join(missing)}")
    order = [e for e in (mask, lens, qm, det) if e is not None]
    if [e.position for e in order] != sorted(e.position for e in order):
        raise ConfigInvalid(
            "expected mask, lens, mirror, detector in increasing position"
        )
    if not isinstance(layout.elements[-1], DetectorPlane):
        raise ConfigInvalid("the scan detector must be last on the axis")
    return mask, lens, qm, det


def run_ghost_image(
    layout: OpticalLayout,
    src: SourceModel,
    trials: int,
    *,
    shard: int = 0,
    efficiency_d1: float = 1.0,
    efficiency_d2: float = 1.0,
    background: float = 0.0,
    audit_fraction: float = 0.01,
    c: float = C_LIGHT,
) -> CoincidenceHistogram:
    """Unfolded ghost-imaging run: mask, lens, crystal plane, scan detector.

    Per trial the signal is traced backward from the crystal through the
    lens to the mask; the trigger detector is a bucket behind the mask.
    The idler leaves along the exactly anticorrelated direction, and on a
    trigger the return leg retraces the signal path so the converted ray
    continues on the idler trajectory to the scan plane.  Coincidences
    therefore land in the bin of the same arrival that fed the scan
    singles, which keeps the per-bin ordering automatic.

    singles_d2 records the partner arrival on every trial whether or not
    the mask blocked the signal; singles_d1 records bucket clicks
    attributed to scan steps round-robin.
    """
    mask, lens, qm, det = _ghost_elements(layout, need_lens=True)
    if trials < 0:
        raise ConfigInvalid(f"trials must be nonnegative, got {trials}")
    rng = src.rng(shard)
    omega_s, omega_i = src.omega_signal, src.omega_idler
    k_s, k_i = omega_s / c, omega_i / c
    s_dist = lens.position - mask.position
    l1 = qm.position - lens.position
    l2 = det.position - qm.position
    p_conv = _conversion_probability(qm)
    bins = det.bins
    n = int(trials)

    coinc = np.zeros(bins, dtype=np.int64)
    s1 = np.zeros(bins, dtype=np.int64)
    s2 = np.zeros(bins, dtype=np.int64)
    if n > 0:
        live = _thin(rng, n, src.pair_rate)
        x_c = rng.normal(0.0, src.waist, n) if src.waist > 0.0 else np.zeros(n)
        q = _sample_q(src, rng, n)
        th_s = q / k_s
        th_i = -q / k_i

        # backward signal leg: crystal -> lens -> mask
        x_lens = x_c + th_s * l1
        slope = th_s - x_lens / lens.focal_length
        x_mask = x_lens + slope * s_dist
        passed = live & (rng.random(n) < mask.transmission_at(x_mask))
        d1 = passed & _thin(rng, n, efficiency_d1)

        # partner leg: crystal -> scan plane (retraced return rejoins it)
        x2 = x_c + th_i * l2
        inside, idx = _bin_arrivals(x2, det)
        d2 = live & inside & _thin(rng, n, efficiency_d2)
        converted = d1 & d2 & _thin(rng, n, p_conv)

        s2 = np.bincount(idx[d2], minlength=bins)
        s1 = np.bincount(_dwell_bins(n, bins)[d1], minlength=bins)
        coinc = np.bincount(idx[converted], minlength=bins)
        _audit_pairs(q[converted], omega_s, omega_i, c, rng, audit_fraction)

    if background > 0.0:
        acc = rng.poisson(background, bins)
        coinc = coinc + acc
        s1 = s1 + acc
        s2 = s2 + acc

    return CoincidenceHistogram(
        bin_centers=det.bin_centers(),
        coincidences=coinc,
        singles_d1=s1,
        singles_d2=s2,
        trials=n,
    )


def run_ghost_diffraction(
    layout: OpticalLayout,
    src: SourceModel,
    trials: int,
    *,
    shard: int = 0,
    trigger_halfangle: float = 1e-3,
    efficiency_d1: float = 1.0,
    efficiency_d2: float = 1.0,
    background: float = 0.0,
    audit_fraction: float = 0.01,
    farfield_points: int = 2001,
    c: float = C_LIGHT,
) -> CoincidenceHistogram:
    """Unfolded ghost-diffraction run: slit, crystal plane, scan detector.

    The trigger is a pinhole behind a collection lens, modelled as an
    acceptance window of half-width trigger_halfangle on the outbound
    signal direction.  A triggered trial re-emits the return from the
    aperture as a pointlike coherent source: the conversion direction is
    drawn from the aperture far-field intensity (tabulated by phasor
    quadrature) and the converted ray replaces the direct partner
    arrival on the scan plane for that trial.  The effective propagation
    length scales the post-conversion leg by k_s/k_i so non-degenerate
    pairs magnify the pattern.
    """
    from .diffraction import tabulated_farfield

    mask, _, qm, det = _ghost_elements(layout, need_lens=False)
    if trials < 0:
        raise ConfigInvalid(f"trials must be nonnegative, got {trials}")
    if not trigger_halfangle > 0.0:
        raise ConfigInvalid(
            f"trigger_halfangle must be positive, got {trigger_halfangle}"
        )
    rng = src.rng(shard)
    omega_s, omega_i = src.omega_signal, src.omega_idler
    k_s, k_i = omega_s / c, omega_i / c
    z_sc = qm.position - mask.position
    z_cd = det.position - qm.position
    z2_eff = z_sc + (k_s / k_i) * z_cd
    lambda_s = 2.0 * math.pi / k_s
    p_conv = _conversion_probability(qm)
    bins = det.bins
    n = int(trials)

    open_windows = [w for w in mask.windows if w[2] > 0.0]
    if not open_windows:
        raise ConfigInvalid("the aperture mask has no open window")
    centers = [0.5 * (lo + hi) for lo, hi, _ in open_windows]
    aperture_center = float(np.mean(centers))

    # return-direction law: far-field intensity of the aperture, tabulated
    # on an angle grid wide enough to cover the scan with margin
    theta_max = 1.2 * (det.halfspan + abs(aperture_center)) / z2_eff
    theta_grid = np.linspace(-theta_max, theta_max, farfield_points)
    weights = tabulated_farfield(mask.windows, lambda_s, theta_grid)
    weights = weights / weights.sum()
    dtheta = theta_grid[1] - theta_grid[0]

    coinc = np.zeros(bins, dtype=np.int64)
    s1 = np.zeros(bins, dtype=np.int64)
    s2 = np.zeros(bins, dtype=np.int64)
    if n > 0:
        live = _thin(rng, n, src.pair_rate)
        x_c = rng.normal(0.0, src.waist, n) if src.waist > 0.0 else np.zeros(n)
        q = _sample_q(src, rng, n)
        th_s = q / k_s
        th_i = -q / k_i

        # outbound signal leg: crystal -> aperture -> pinhole trigger
        x_ap = x_c + th_s * z_sc
        passed = live & (rng.random(n) < mask.transmission_at(x_ap))
        d1 = (
            passed
            & (np.abs(th_s) <= trigger_halfangle)
            & _thin(rng, n, efficiency_d1)
        )

        converted = d1 & _thin(rng, n, p_conv)
        nc = int(converted.sum())
        # conversion direction from the aperture far field, with uniform
        # jitter inside each tabulated cell
        kick_idx = rng.choice(theta_grid.size, size=nc, p=weights)
        kick = theta_grid[kick_idx] + dtheta * (rng.random(nc) - 0.5)
        x2_conv = aperture_center + kick * z2_eff

        # partner arrival: direct idler, replaced by the converted ray on
        # converted trials (one partner photon per pair)
        x2 = x_c + th_i * z_cd
        x2[converted] = x2_conv
        inside, idx = _bin_arrivals(x2, det)
        d2 = live & inside & _thin(rng, n, efficiency_d2)

        s2 = np.bincount(idx[d2], minlength=bins)
        s1 = np.bincount(_dwell_bins(n, bins)[d1], minlength=bins)
        coinc = np.bincount(idx[converted & d2], minlength=bins)
        _audit_pairs(q[converted & d2], omega_s, omega_i, c, rng, audit_fraction)

    if background > 0.0:
        acc = rng.poisson(background, bins)
        coinc = coinc + acc
        s1 = s1 + acc
        s2 = s2 + acc

    return CoincidenceHistogram(
        bin_centers=det.bin_centers(),
        coincidences=coinc,
        singles_d1=s1,
        singles_d2=s2,
        trials=n,
    )


@dataclass(frozen=True)
class DirectQmResult:
    """Focus scan of the folded conjugate-mirror image.

    z_planes: candidate image distances from the mirror vertex (positive
    toward the object).  spot_rms: residual blur after removing the best
    linear object-to-image map at each plane.  best_z: plane of minimum
    blur.  magnification: slope of the linear map at the best plane.
    image_x: converted-ray positions on the best plane.
    """

    z_planes: np.ndarray
    spot_rms: np.ndarray
    best_z: float
    magnification: float
    rays_used: int
    image_x: np.ndarray


def run_direct_qm(
    layout: OpticalLayout,
    src: SourceModel,
    trials: int,
    coincidence_enabled: bool,
    *,
    z_planes: Optional[np.ndarray] = None,
    aperture_halfangle: float = 5e-3,
    shard: int = 0,
    c: float = C_LIGHT,
) -> DirectQmResult:
    """Image an object through the spherical crystal mirror, no unfolding.

    The object is the open part of the layout's mask, illuminated at the
    signal frequency; rays hit the spherical conversion surface (exact
    circle intersection), exit along the conjugate direction and are
    intersected with candidate image planes.  The sharpest plane is the
    one minimizing the rms residual of a straight-line fit of image
    position against object position, so the metric does not depend on
    the object's shape.

    coincidence_enabled gates rays by the conversion probability of the
    mirror's medium; disabled, every converted ray contributes.  The ray
    sample itself is drawn identically either way, so the toggle changes
    statistics only.
    """
    mask = layout.only(Mask)
    qm = layout.only(QuantumMirror)
    if mask is None or qm is None:
        raise ConfigInvalid("direct imaging needs an object mask and a mirror")
    if qm.kind != "spherical":
        raise ConfigInvalid("direct imaging needs a spherical mirror")
    if trials <= 0:
        raise ConfigInvalid(f"trials must be positive, got {trials}")
    open_windows = [w for w in mask.windows if w[2] > 0.0]
    if not open_windows:
        raise ConfigInvalid("the object mask has no open window")

    rng = src.rng(shard)
    omega_s, omega_i = src.omega_signal, src.omega_idler
    ratio = omega_s / omega_i
    d_vertex = qm.position - mask.position
    radius = qm.radius

    if z_planes is None:
        denom = (omega_s + omega_i) / (omega_i * radius) - omega_s / (omega_i * d_vertex)
        if denom <= 0.0:
            raise ConfigInvalid(
                "conjugate image is virtual or at infinity; pass z_planes explicitly"
            )
        nominal = 1.0 / denom
        z_planes = np.linspace(0.7 * nominal, 1.3 * nominal, 41)
    z_planes = np.asarray(z_planes, dtype=float)

    n = int(trials)
    # object positions: uniform over the open windows, area-weighted
    widths = np.array([hi - lo for lo, hi, _ in open_windows])
    pick = rng.choice(len(open_windows), size=n, p=widths / widths.sum())
    u = rng.random(n)
    lows = np.array([lo for lo, _, _ in open_windows])
    x0 = lows[pick] + u * widths[pick]
    # aim points on the vertex plane fill the mirror aperture
    x_aim = rng.uniform(-1.0, 1.0, n) * aperture_halfangle * d_vertex
    gate = _thin(rng, n, _conversion_probability(qm) if coincidence_enabled else 1.0)

    dx = x_aim - x0
    dz = np.full(n, d_vertex)
    norm = np.hypot(dx, dz)
    dx, dz = dx / norm, dz / norm

    # exact intersection with the conversion surface: circle of radius R
    # centred on the axis at z = d_vertex - R (curvature centre on the
    # object side, concave toward the object)
    zc = d_vertex - radius
    # |(x0 + t dx, t dz) - (0, zc)|^2 = R^2
    b = dx * x0 - dz * zc
    cc = x0 * x0 + zc * zc - radius * radius
    disc = b * b - cc
    if np.any(disc <= 0.0):
        raise ConfigInvalid("a ray misses the conversion surface; shrink the aperture")
    sq = np.sqrt(disc)
    # the branch of the surface near the vertex is the larger-z crossing
    t = np.where(dz > 0, -b + sq, -b - sq)
    x_hit = x0 + t * dx
    z_hit = t * dz

    # conjugate exit direction about the local pump direction (toward the
    # curvature centre), vectorized over rays
    mx = (0.0 - x_hit)
    mz = (zc - z_hit)
    mn = np.hypot(mx, mz)
    mx, mz = mx / mn, mz / mn
    proj = dx * mx + dz * mz
    tx, tz = dx - proj * mx, dz - proj * mz
    sin_in = np.hypot(tx, tz)
    sin_out = ratio * sin_in
    if np.any(sin_out > 1.0):
        raise ConfigInvalid("conjugate exit angle does not exist; shrink the aperture")
    cos_out = np.sqrt(1.0 - sin_out * sin_out)
    with np.errstate(invalid="ignore"):
        tnx = np.where(sin_in > 0.0, tx / np.where(sin_in > 0, sin_in, 1.0), 0.0)
        tnz = np.where(sin_in > 0.0, tz / np.where(sin_in > 0, sin_in, 1.0), 0.0)
    ox = cos_out * mx + sin_out * tnx
    oz = cos_out * mz + sin_out * tnz

    keep = gate
    if int(keep.sum()) < 8:
        raise InsufficientCounts(
            f"only {int(keep.sum())} converted rays survive the gate"
        )
    x0k, xh, zh = x0[keep], x_hit[keep], z_hit[keep]
    oxk, ozk = ox[keep], oz[keep]

    # intersect with each candidate plane z = d_vertex - z_i and score the
    # residual blur around the best linear object-to-image map
    rms = np.empty(z_planes.size)
    slopes = np.empty(z_planes.size)
    var0 = np.var(x0k)
    if var0 == 0.0:
        raise ConfigInvalid("object has no transverse extent; use a wider mask")
    for j, z_i in enumerate(z_planes):
        z_target = d_vertex - z_i
        tt = (z_target - zh) / ozk
        xi = xh + tt * oxk
        beta = float(np.cov(x0k, xi, bias=True)[0, 1] / var0)
        alpha = float(np.mean(xi) - beta * np.mean(x0k))
        resid = xi - (alpha + beta * x0k)
        rms[j] = float(np.sqrt(np.mean(resid * resid)))
        slopes[j] = beta
    best = int(np.argmin(rms))
    z_best = float(z_planes[best])
    tt = (d_vertex - z_best - zh) / ozk
    image_x = xh + tt * oxk
    return DirectQmResult(
        z_planes=z_planes,
        spot_rms=rms,
        best_z=z_best,
        magnification=float(slopes[best]),
        rays_used=int(keep.sum()),
        image_x=image_x,
    )


def image_sharpness(counts: np.ndarray) -> float:
    """Scale-free sharpness of a profile: concentration times rms width.

    The inverse participation ratio sum(p^2) rewards steep, concentrated
    structure but also grows when the whole image merely shrinks with
    the scan distance; multiplying by the rms width (in bins) cancels
    that pure rescaling, so the score responds to focal blur only.
    Sharp-edged focused images score high, smeared ones low.
    """
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0.0:
        return 0.0
    p = counts / total
    idx = np.arange(p.size, dtype=float)
    mu = float((idx * p).sum())
    width = math.sqrt(float((((idx - mu) ** 2) * p).sum()))
    return float((p * p).sum() * width)


@dataclass(frozen=True)
class FocusScanResult:
    """Sharpness of the coincidence image against the image-side distance."""

    s_prime: np.ndarray
    sharpness: np.ndarray
    best_s_prime: float
    histograms: tuple


def ghost_image_focus_scan(
    layout: OpticalLayout,
    src: SourceModel,
    trials: int,
    s_prime_values: Sequence[float],
    *,
    metric: Callable[[np.ndarray], float] = image_sharpness,
    **engine_kwargs,
) -> FocusScanResult:
    """Re-run the ghost-imaging engine while stepping the scan detector.

    s_prime is the lens-to-detector distance along the unfolded axis
    (through the crystal plane).  Every step reuses the same seed, so
    the scan isolates the geometry change.
    """
    mask, lens, qm, det = _ghost_elements(layout, need_lens=True)
    values = np.asarray(list(s_prime_values), dtype=float)
    if values.size == 0:
        raise ConfigInvalid("empty focus scan")
    l1 = qm.position - lens.position
    if np.any(values <= l1):
        raise ConfigInvalid("scan would place the detector before the crystal plane")
    histos = []
    scores = np.empty(values.size)
    for j, sp in enumerate(values):
        det_j = DetectorPlane(
            position=lens.position + sp, pitch=det.pitch, bins=det.bins
        )
        lay_j = OpticalLayout(elements=(mask, lens, qm, det_j))
        h = run_ghost_image(lay_j, src, trials, **engine_kwargs)
        histos.append(h)
        scores[j] = metric(h.coincidences)
    best = int(np.argmax(scores))
    return FocusScanResult(
        s_prime=values,
        sharpness=scores,
        best_s_prime=float(values[best]),
        histograms=tuple(histos),
    )


def flatness_test(singles: np.ndarray) -> float:
    """Chi-square p-value of per-bin counts against the uniform hypothesis.

    Requires at least 5 expected counts per bin for the chi-square
    approximation to hold; below that raises InsufficientCounts.
    """
    obs = np.asarray(singles, dtype=float)
    if obs.ndim != 1 or obs.size < 2:
        raise ValueError("singles must be a 1-d array of at least two bins")
    expected = obs.sum() / obs.size
    if expected < 5.0:
        raise InsufficientCounts(
            f"expected {expected:.2f} counts per bin, need at least 5"
        )
    _, p = stats.chisquare(obs)
    return float(p)


def run_in_shards(
    engine: Callable[..., CoincidenceHistogram],
    layout: OpticalLayout,
    src: SourceModel,
    trials: int,
    shards: int,
    **engine_kwargs,
) -> CoincidenceHistogram:
    """Split trials across independently seeded shards and merge by addition."""
    if shards < 1:
        raise ValueError(f"shards must be >= 1, got {shards}")
    base = trials // shards
    counts = [base + (1 if i < trials % shards else 0) for i in range(shards)]
    histos = [
        engine(layout, src, counts[i], shard=i, **engine_kwargs)
        for i in range(shards)
    ]
    return merge_histograms(histos)
