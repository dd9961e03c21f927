"""Exception types shared by every module."""

TOL = 1e-9


class DomainError(ValueError):
    """Input is outside the domain of an operation."""


class PreconditionError(ValueError):
    """A checked mathematical precondition does not hold."""


class RefusalError(RuntimeError):
    """The instance is too large or unsupported; nothing was computed."""


class BoundViolation(AssertionError):
    """A guaranteed inequality failed numerically. Always a bug."""


def require(cond, msg, exc=BoundViolation):
    if not cond:
        raise exc(msg)
