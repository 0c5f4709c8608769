"""Shared error base class.

Every domain error in the package subclasses DomainError so the CLI can map
any failure to exit code 1 with a `<ClassName>: <message>` line.
"""


class DomainError(Exception):
    """Base class for all expected, user-reportable failures."""
