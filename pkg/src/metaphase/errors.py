"""Exception hierarchy shared by all metaphase modules."""


class MetaphaseError(Exception):
    """Base class for every error raised by this package."""


class EvanescentRay(MetaphaseError, ValueError):
    """No outgoing direction exists: the law's discriminant is negative."""


class NotUnit(MetaphaseError, ValueError):
    """A direction argument is not a unit vector."""


class MassImbalance(MetaphaseError):
    """Source and target powers disagree beyond tolerance."""

    def __init__(self, source_power: float, target_power: float, rel_err: float):
        self.source_power = source_power
        self.target_power = target_power
        self.rel_err = rel_err
        super().__init__(
            f"source power {source_power:.10g} != target power {target_power:.10g} "
            f"(relative error {rel_err:.3e})"
        )


class DomainTouchesEquator(MetaphaseError, ValueError):
    """The target cap projects onto a set reaching the unit circle."""


class NoConvergence(MetaphaseError, RuntimeError):
    """The transport solve exhausted its iteration budget."""


class DegenerateDensity(MetaphaseError, ValueError):
    """The source density vanishes on most of its domain."""


class GradientOutOfRange(MetaphaseError):
    """A discrete gradient left the target density's domain."""


class FootprintExceeded(MetaphaseError):
    """A ray strikes the plane outside the sampled phase grid."""


class FormatError(MetaphaseError, ValueError):
    """Malformed or incompatible on-disk artifact."""


class ConfigError(MetaphaseError, ValueError):
    """Base class for configuration problems; carries the field path."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = path or "<root>"
        if line is not None:
            where = f"{where} (line {line})"
        super().__init__(f"{where}: {message}")


class ParseError(ConfigError):
    """The config text is not well-formed or a field has the wrong type."""


class ValidationError(ConfigError):
    """The config is well-formed but violates a physical invariant."""
