"""Exception hierarchy shared across the pipeline.

The CLI maps each family onto a stable exit code, so raise the most
specific class that applies.
"""


class AssetError(Exception):
    """Base class. ``stage`` names the pipeline stage that raised, if known."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage

    def __str__(self):
        msg = super().__str__()
        if self.stage:
            return f"[{self.stage}] {msg}"
        return msg


class InputError(AssetError):
    """Bad user input: malformed files, missing attributes, invalid parameters."""


class MeshError(InputError):
    """Geometry violates a precondition (invariants, watertightness, winding)."""


class ServiceError(AssetError):
    """An external service was unreachable or returned something unusable."""

    def __init__(self, message, stage=None, diagnostics=None):
        super().__init__(message, stage=stage)
        self.diagnostics = diagnostics or {}
