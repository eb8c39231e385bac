"""Exception hierarchy shared across the pipeline."""


class DrgenError(Exception):
    """Base class for all errors raised by this package."""


class MeshError(DrgenError):
    """Mesh file cannot be parsed or violates mesh invariants.

    ``line`` is the 1-based line number of the offending record when the
    error originates from a parser, else None.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SceneError(DrgenError):
    """Scene graph construction or invariant violation."""


class ConfigError(DrgenError):
    """Invalid or inconsistent configuration."""


class ScenarioError(DrgenError):
    """A per-frame scenario could not be drawn (e.g. rejection budget spent)."""


class FormatError(DrgenError):
    """Structural problem in an interchange file (annotations, manifests...)."""
