"""Exception hierarchy shared by all blochhom modules."""


class BlochhomError(Exception):
    """Base class for all package errors."""


class ConfigError(BlochhomError):
    """Invalid run configuration or input file."""


# -- geometry ---------------------------------------------------------------

class SingularBasis(BlochhomError):
    """Lattice basis vectors are (numerically) linearly dependent."""


# -- meshing ----------------------------------------------------------------

class MeshError(BlochhomError):
    """Mesh generation or validation failed."""


class DisconnectedDomain(MeshError):
    """The meshed solid region is not connected."""


class UnmatchedPeriodicFace(MeshError):
    """A node on a periodic face has no translated partner on the twin face."""


class ExclusionOverlap(MeshError):
    """Exclusion shapes overlap each other or violate placement rules."""


class ParseError(MeshError):
    """Mesh or lattice text file could not be parsed."""


class InvariantViolation(MeshError):
    """An imported mesh violates a structural invariant; carries the entity id."""


# -- operators / eigensolves ------------------------------------------------

class EmptyFreeSpace(BlochhomError):
    """All degrees of freedom were eliminated by Dirichlet constraints."""


class ConvergenceFailure(BlochhomError):
    """Iterative eigensolver did not converge; message carries diagnostics."""


class NearResonance(BlochhomError):
    """Forced solve requested at a frequency too close to an eigenvalue."""


# -- cell problems ----------------------------------------------------------

class SolvabilityViolation(BlochhomError):
    """Constrained cell-problem right-hand side is not orthogonal to the
    nullspace; carries the offending multiplier magnitude."""


class SingularSaddlePoint(BlochhomError):
    """Augmented saddle-point system could not be factorized."""


# -- effective coefficients -------------------------------------------------

class ToleranceViolation(BlochhomError):
    """A structural property of an effective tensor failed its tolerance;
    message names the violated claim."""


class CrossCheckFailure(BlochhomError):
    """Primary and divergence-theorem tensor expressions disagree."""


# -- model synthesis --------------------------------------------------------

class AmbiguousScaling(BlochhomError):
    """Frequency offset falls between the linear and quadratic scaling bands."""


class DegenerateGEP(BlochhomError):
    """Generalized eigenvalue problem has a numerically singular weight."""


class OrderUnavailable(BlochhomError):
    """Requested expansion order is not defined for this regime."""


class OnBranch(BlochhomError):
    """Effective operator is singular: the drive sits on an approximated branch."""


class InconsistentRank(BlochhomError):
    """Supplied coupling vectors contradict the stated rank hypothesis."""


class GapViolation(BlochhomError):
    """Band-gap denominator changes sign over the wavenumber quadrature grid."""
