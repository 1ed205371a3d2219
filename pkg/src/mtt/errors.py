"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A matrix decomposition failed to converge or produced garbage."""


class DegenerateInjectionError(NumericalError):
    """The injection collapses to zero after projection (V G = 0).

    Raised instead of silently falling back to the single-term transform,
    so callers learn that their injection contributes nothing.
    """


class CorpusError(OSError):
    """Image corpus ingestion failed; ``files`` lists the offenders."""

    def __init__(self, message, files=()):
        super().__init__(message)
        self.files = list(files)

    def __str__(self):
        base = super().__str__()
        if self.files:
            return base + "\n  " + "\n  ".join(str(f) for f in self.files)
        return base
