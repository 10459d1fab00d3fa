"""Exception hierarchy shared by the geometry, mesh and basis modules."""


class FrenetIFEError(Exception):
    """Base class for every error raised by the package."""


class GeometryError(FrenetIFEError):
    pass


class DegenerateTangentError(GeometryError):
    pass


class SingularTubeError(GeometryError):
    """Raised when ``1 + eta * kappa <= 0``: the Frenet map folds over."""


class ConvergenceError(GeometryError):
    pass


class OutOfDomainError(GeometryError):
    pass


class AmbiguousProjectionError(GeometryError):
    pass


class OrientationError(GeometryError):
    """The curve normal does not point from the minus into the plus region."""


class MeshError(FrenetIFEError):
    pass


class MultiCutError(MeshError):
    pass


class TangencyError(MeshError):
    pass


class TubeViolationError(MeshError):
    pass


class BasisError(FrenetIFEError):
    pass


class SideMismatchError(FrenetIFEError):
    pass


class SolverError(FrenetIFEError):
    pass


class ConfigError(FrenetIFEError):
    pass
