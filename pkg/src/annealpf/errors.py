"""Error types shared across the package.

Invalid arguments raise plain ValueError; the classes here cover the two
failure modes that callers are expected to branch on: a root finder whose
bracket contains no sign change, and a brute-force routine invoked above
its size cap.
"""


class NoRootError(RuntimeError):
    """A self-consistency equation has no root in the search bracket."""

    def __init__(self, message, f_lo=None, f_hi=None):
        super().__init__(message)
        self.f_lo = f_lo
        self.f_hi = f_hi


class ResourceLimitError(RuntimeError):
    """An exhaustive computation was requested above its hard size cap."""
