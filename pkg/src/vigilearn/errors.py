"""Exceptions raised on malformed input data (as opposed to API misuse)."""


class DataError(Exception):
    """Bad data in a stream, manifest, profile or scenario file."""


class FrameParseError(DataError):
    """A frame record could not be parsed or validated."""

    def __init__(self, message, line_no=None, field=None):
        self.line_no = line_no
        self.field = field
        prefix = ""
        if line_no is not None:
            prefix += f"line {line_no}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


class ProfileError(DataError):
    """A stored user record is corrupt or structurally invalid."""


class UnknownUserError(ProfileError):
    """No stored record for the requested user id."""


class ScenarioError(DataError):
    """A synthesis scenario file is invalid."""


class SessionMismatchError(DataError):
    """Event log and ground truth belong to different sessions."""
