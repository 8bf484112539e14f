"""Exception taxonomy shared across the package.

Three broad families: bad caller input, numeric failures (root finders,
estimators), and physical-model violations detected at runtime.
"""


class InputError(ValueError):
    """Caller supplied an argument outside the documented domain."""


class NumericError(RuntimeError):
    """A numeric procedure failed to converge or produced garbage.

    ``residual`` carries the last defect of the failed iteration when the
    failure came from a root finder.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class ModelClassViolation(RuntimeError):
    """A restitution model broke one of its class constraints (monotonicity,
    positivity of the Jacobian, sandwich bounds)."""


class UnsupportedDensityError(TypeError):
    """An estimator needs pointwise-evaluable densities and got something
    else (wrap raw samples in a KDE surrogate first)."""


class UnsupportedKernelError(ValueError):
    """The requested representation is only derived for hard spheres."""


class DegeneratePairError(ValueError):
    """Zero relative velocity: the sigma parametrization is undefined and
    the collision is a no-op; callers should skip the pair."""


class TimestepError(RuntimeError):
    """Per-particle collision probability left the safe range; shrink dt."""


class InstabilityError(RuntimeError):
    """The collision-rate majorant inflated past its allowed ceiling."""


class SelfConsistencyError(RuntimeError):
    """The rescaled solver failed to hold the temperature constant."""


class InsufficientSamplesError(RuntimeError):
    """A Monte Carlo difference is statistically indistinguishable from
    zero, so the requested fit would be meaningless."""


class NonUniformGridError(ValueError):
    """A diagnostic that differentiates in time needs a uniform grid."""
