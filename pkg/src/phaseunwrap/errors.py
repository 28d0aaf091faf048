"""Exception types shared across the package."""


class DataError(Exception):
    """Input data cannot be processed (bad file, inconsistent report, ...).

    The CLI maps this to exit code 3; plain ``ValueError`` means an invalid
    argument and maps to exit code 2.
    """


class NoAttackEvidence(DataError):
    """A channel carries no energy over the onset segment."""
