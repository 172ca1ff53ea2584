"""Exception taxonomy shared by all fchkit modules.

Every failure mode that callers are expected to handle gets its own class so
experiment drivers can map them to machine-readable error reports.
"""


class FchkitError(Exception):
    """Base class for all toolkit errors."""


# --- potential ---------------------------------------------------------------

class WellNotTilted(FchkitError):
    """W(b_plus) >= 0: equal-depth wells, no homoclinic connection exists."""


class WellNonconvexAtMinus(FchkitError):
    """W''(b_minus) <= 0: the background state is not a local minimum."""


# --- profile1d ---------------------------------------------------------------

class SpectralGapViolation(FchkitError):
    """Third eigenvalue of L0 too close to the kernel eigenvalue."""


class NotInRange(FchkitError):
    """Right-hand side has a kernel component; L0^{-1} is undefined on it."""


class SolvabilityViolation(FchkitError):
    """The curvature-linear block fails its solvability cancellation."""


# --- geometry ----------------------------------------------------------------

class ImplicitIterationDiverged(FchkitError):
    """Fixed-point construction of the perturbed interface failed."""


class OutsideAdmissibleSet(FchkitError):
    """Meander vector outside the admissible perturbation domain."""


class SelfIntersection(FchkitError):
    """Curve whiskers of the requested length intersect."""


# --- ansatz / pdesolver ------------------------------------------------------

class ResolutionTooCoarse(FchkitError):
    """Grid spacing too large to resolve the interface width."""


class StepRejected(FchkitError):
    """Adaptive control rejected a time step (energy increase)."""


# --- slowspace ---------------------------------------------------------------

class SetsOverlap(FchkitError):
    """Pearling and meander index sets overlap; spectral cutoff too large."""


class NearResonance(FchkitError):
    """Deflated fourth-order solve is ill-conditioned (near-resonant mode)."""


# --- modulation --------------------------------------------------------------

class IllConditioned(FchkitError):
    """Projection tangent matrix condition number too large."""


class ContractionFailed(FchkitError):
    """Manifold projection iteration failed to converge."""


# --- curveflow ---------------------------------------------------------------

class CollapseDetected(FchkitError):
    """Curve radius fell below the interface width."""


class StiffStepRejected(FchkitError):
    """Curve-flow step rejected by the stiff-term controller."""


# --- snapshot I/O ------------------------------------------------------------

class BadMagic(FchkitError):
    """Snapshot file does not start with the expected magic bytes."""


class TruncatedFile(FchkitError):
    """Snapshot file shorter than its header promises."""
