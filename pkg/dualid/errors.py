"""
Exception hierarchy for DUALID.

Every error carries a human-readable ``detail`` string. The command line
prints it as is and maps the error class to an exit code.
"""


class DualIdError(Exception):
    """Base class for all DUALID errors."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class GeometryError(DualIdError):
    """Degenerate or invalid geometry in the ground-truth world."""


class ChannelError(DualIdError):
    """Invalid use of the auditory or visual measurement channels."""


class IdentityError(DualIdError):
    """Physical identity extraction or scoring failed."""


class MappingError(DualIdError):
    """Bipartite identity matching could not be set up."""


class TrackingError(DualIdError):
    """Kalman filtering, conversion or track lifecycle misuse."""


class AuthError(DualIdError):
    """Authentication checks received unusable input."""


class AttackError(DualIdError):
    """An attack schedule cannot be planned for the given world."""


class ConfigError(DualIdError):
    """Scenario configuration is invalid."""


class ReportError(DualIdError):
    """Report files could not be written."""
