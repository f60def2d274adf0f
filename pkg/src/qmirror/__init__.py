"""qmirror: two-photon optics workbench.

Simulates parametric pair production in a nonlinear crystal and the family
of coincidence experiments in which the crystal acts as a phase-conjugating
mirror: ghost imaging, ghost diffraction and direct conjugate imaging.

Modules:
    kinematics   pair emission, crossing symmetry, dispersion tables
    wavemix      three-wave mixing slab: gain, phase mismatch, ODE check
    geometry     paraxial elements, conjugate distances, ray tracing
    diffraction  slit patterns and fringe visibility
    coincidence  Monte Carlo pair engine and histogram statistics
    harness      experiment configs, runners, output writers
"""

__version__ = "0.1.0"

from .errors import QmirrorError  # noqa: F401
