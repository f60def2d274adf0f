"""Command-line entry point.

    qmirror <kind> --config experiment.yaml [--seed N] [--trials N]
                   [--out DIR] [--format csv|json]

Runs one configured experiment and writes its tables, figures and JSON
summary.  Exit status is 0 when every configured check passed, 1 when a
check failed or the run aborted, 2 for config problems.  `--explain
<kind>` prints the physics each experiment exercises.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__, harness
from .errors import ConfigInvalid, IoError, QmirrorError

_EXPLAIN = {
    "phasematch": """\
phasematch: pair emission angles from conservation laws.

A pump photon splits into a signal and idler pair inside the crystal.
Energy fixes omega_i = omega_p - omega_s, and the wavevector triangle
k_p = k_s + k_i fixes the cone angles through the law of cosines,

    cos(theta_ps) = (k_p^2 + k_s^2 - k_i^2) / (2 k_p k_s),

with |k| = n(omega) omega / c from the dispersion table.  The sweep
walks the signal frequency and reports both emission angles; points
where the triangle cannot close are skipped.""",
    "twm": """\
twm: parametric amplification in the mixing slab.

The coupled envelope equations for the probe and conjugate waves in a
pumped slab of length L with coupling g and phase mismatch dk have the
closed-form transfer

    AF = -2i (g*/b) sinh(bL/2) exp(-i dk L / 2),  b = sqrt(4|g|^2 - dk^2),

which this kind evaluates over a (|g|, dk) grid and cross-checks
against a fixed-step integration of the same equations.  The photon
flux difference |E_pw|^2 - |E_c|^2 is conserved along the slab, and
mirrorless oscillation requires |g| L > pi/4 at dk = 0.""",
    "mirror": """\
mirror: conjugate distances of the spherical two-photon mirror.

With the object (signal source) a distance Z_s from the conversion
point on a spherical cap of radius R, the returned idler focuses at
Z_i given by

    omega_s / Z_s + omega_i / Z_i = (omega_p / R) cos(beta),

the two-color generalization of the concave-mirror law, with
transverse magnification M = -(Z_i omega_s)/(Z_s omega_i).  In the
degenerate limit omega_s = omega_i this is the familiar 1/Z_s + 1/Z_i
= 2/R.  Each solution is audited with a signed-area collinearity
identity: the curvature center must lie on the object-image line.""",
    "diffract": """\
diffract: reference slit patterns.

Far-field intensity behind a slit of width a at distance z,

    I(x) = I0 sinc^2(pi a x / (lambda z)),

and for a double slit with separation d an additional fringe factor
(1 + gamma cos(2 pi d x / (lambda z))) whose visibility equals the
mutual coherence degree gamma.  These closed forms are the references
the coincidence scans are compared against.""",
    "ghost-image": """\
ghost-image: mask image formed in coincidences only.

The signal passes a mask and a lens and triggers a bucket detector
with no spatial resolution; the crystal converts the partner into a
counter-propagating conjugate ray that retraces the signal path.  The
scanned partner detector therefore sees the mask image at the
image-side distance S' satisfying the lens equation for the unfolded
path, even though neither detector alone resolves any structure.  The
focus scan steps S' and scores the coincidence profile sharpness; the
singles at both detectors stay flat.""",
    "ghost-diffract": """\
ghost-diffract: slit diffraction observed in coincidences.

The trigger arm selects signals near the axis behind a single slit, so
each trigger projects the partner onto the conjugate of a pointlike
source at the slit: the scanned detector collects a far-field slit
pattern in the coincidence rate,

    C(x2) proportional to sinc^2(pi a x2 / (lambda z2)),

with z2 the effective slit-to-detector distance along the unfolded
two-photon path.  Each singles channel alone stays structureless; the
report fits the slit width back out of the coincidence histogram.""",
    "direct-qm": """\
direct-qm: ray-optics image of the spherical conjugating cap.

Rays from a small object are traced to the spherical crystal cap,
converted into frequency-scaled conjugate rays and followed back.  The
sharpest return plane and the transverse magnification are compared
with the two-color mirror law predictions

    omega_s / Z_s + omega_i / Z_i = omega_p / R  (paraxial),
    M = -(Z_i omega_s) / (Z_s omega_i).

Coincidence gating only thins the rays; with the same seed the imaging
answer must not move.""",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmirror",
        description="two-photon optics experiments: configure, run, report",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    parser.add_argument(
        "--explain",
        metavar="KIND",
        choices=harness.KINDS,
        help="describe the physics an experiment kind exercises and exit",
    )
    sub = parser.add_subparsers(dest="kind", metavar="KIND")
    for kind in harness.KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--trials", type=int, default=None, help="override Monte Carlo trials"
        )
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--format", choices=("csv", "json"), default=None, help="table format"
        )
        p.add_argument(
            "--no-figures",
            action="store_true",
            help="skip PNG rendering, write tables and summary only",
        )
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.explain is not None:
        print(_EXPLAIN[args.explain])
        return 0
    if args.kind is None:
        parser.print_help()
        return 2

    try:
        cfg = harness.load_config(args.config)
    except ConfigInvalid as exc:
        print(f"qmirror: config error: {exc}", file=sys.stderr)
        return 2
    if cfg.kind != args.kind:
        print(
            f"qmirror: config declares kind {cfg.kind!r} but the "
            f"command line asked for {args.kind!r}",
            file=sys.stderr,
        )
        return 2
    cfg = cfg.replaced(seed=args.seed, trials=args.trials, format=args.format)
    out_dir = args.out or cfg.out_dir or f"runs/{cfg.kind}"

    try:
        report = harness.run_experiment(
            cfg, out_dir=out_dir, figures=not args.no_figures
        )
    except IoError as exc:
        print(f"qmirror: {exc}", file=sys.stderr)
        return 1
    except QmirrorError as exc:
        print(f"qmirror: {cfg.kind} run failed: {exc}", file=sys.stderr)
        return 1

    for name, ok in report.checks.items():
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
    print(f"wrote {len(report.manifest)} files to {out_dir}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
