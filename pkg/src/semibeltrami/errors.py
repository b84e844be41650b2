"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, solver or job configuration."""


class SupportError(ValueError):
    """A field lacks the compact-support declaration an operator needs."""


class NondegeneracyError(ValueError):
    """Beltrami coefficient with sup-norm too close to (or above) one."""


class EllipticityError(ValueError):
    """Matrix field violating det A = 1 or det(I + A) > 0."""


class ConvergenceError(RuntimeError):
    """An iterative procedure stagnated or failed to converge."""


class BlowupError(RuntimeError):
    """Continuation iterate exceeded the a priori guard."""


class OutOfRangeError(ValueError):
    """Point lies outside the region a map was certified on."""


class CertificationError(RuntimeError):
    """A computed map failed a structural check (e.g. Jacobian sign)."""
