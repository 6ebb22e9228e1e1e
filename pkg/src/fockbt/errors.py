"""Exception hierarchy shared by all modules."""


class FockBTError(Exception):
    """Base class for every error raised by this package."""


class InvalidSystem(FockBTError):
    """A system violates its dimension or finiteness invariants."""


class NotStable(FockBTError):
    """The drift matrix has nonnegative spectral abscissa."""


class NotMSStable(FockBTError):
    """The generalized Lyapunov (Kronecker) operator is not stable."""


class SolveFailed(FockBTError):
    """A linear matrix equation could not be solved to the required residual."""


class MissingCertificate(FockBTError):
    """An operation needs a stability certificate that was not supplied."""


class CertificateInvalid(FockBTError):
    """The certificate has theta >= 1 and no explicit override was given."""


class NotPSD(FockBTError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class NotMinimal(FockBTError):
    """A gramian is numerically singular, so balancing is impossible."""


class DegenerateCut(FockBTError):
    """Truncation would split a (numerically) repeated singular value."""


class BadOrder(FockBTError):
    """Requested truncation order or depth is out of range."""


class DimMismatch(FockBTError):
    """Two systems (or a system and a signal) have incompatible dimensions."""


class BudgetExceeded(FockBTError):
    """A discretization would exceed the configured memory budget."""


class NotInvariant(FockBTError):
    """A subspace is not invariant under the drift and bilinear matrices."""


class SingularResolvent(FockBTError):
    """``sI - A`` is singular at a requested frequency point."""


class NotReachable(FockBTError):
    """A target state lies outside the range of the finite-horizon gramian."""


class ParseError(FockBTError):
    """System file syntax error, with 1-based line and column."""

    def __init__(self, message, line=0, column=0):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")
