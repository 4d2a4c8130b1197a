"""Exception hierarchy shared across the package."""


class AdapEditError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(AdapEditError, ValueError):
    """A matrix is empty or its shape is incompatible with the operation."""


class RangeError(AdapEditError, ValueError):
    """A numeric argument lies outside its documented range."""


class ConfigError(AdapEditError, ValueError):
    """Invalid configuration value or malformed job/grid file."""


class PromptError(AdapEditError, ValueError):
    """Empty prompt, or prompt exceeding the token-length limit."""


class StateError(AdapEditError, RuntimeError):
    """Operation called in the wrong session or record state."""


class ProtocolError(AdapEditError, RuntimeError):
    """Malformed frame or unexpected reply on the wire."""


class BackendUnavailable(ProtocolError):
    """The remote host could not be reached."""
