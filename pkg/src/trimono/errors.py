"""Exception types shared across the package."""


class TrimonoError(Exception):
    """Base class for all package errors."""


class AngleDomain(TrimonoError):
    """An angle argument is outside its admissible range."""


class ParamDomain(TrimonoError):
    """A non-angle parameter is outside its admissible range."""


class Singular(TrimonoError):
    """A geometric map is undefined because a denominator vanishes."""


class NonPositive(TrimonoError):
    """A quantity that must be strictly positive is not."""


class DegenerateCell(TrimonoError):
    """A mesh cell has non-positive area."""


class NoConvergence(TrimonoError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class OutsideDomain(TrimonoError):
    """A query point lies outside the meshed domain."""


class EmptyDomain(TrimonoError):
    """A moving domain is empty where a nonempty one is required."""


class AsymmetricMesh(TrimonoError):
    """The mirror map x2 -> -x2 is not an automorphism of the mesh."""


class IllConditioned(TrimonoError):
    """A fit has too few samples or a near-singular normal system."""


class TooLarge(TrimonoError):
    """A problem exceeds the size limit of a dense oracle routine."""


class ParallelLines(TrimonoError):
    """Two lines expected to intersect are (numerically) parallel."""
