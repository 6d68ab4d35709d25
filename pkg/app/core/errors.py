"""Exception hierarchy shared by every service.

Services raise these; the command layer turns them into exit codes.
"""


class ToolkitError(Exception):
    stage = "runtime"

    def __init__(self, message: str, *, stage: str | None = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class ShapeError(ToolkitError):
    stage = "shape"


class DecodeError(ToolkitError):
    stage = "decode"

    def __init__(self, message: str, *, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ConfigError(ToolkitError):
    stage = "config"


class CheckpointError(ToolkitError):
    stage = "checkpoint"


class ManifestError(ToolkitError):
    stage = "manifest"


class EmptySplitError(ToolkitError):
    stage = "evaluate"


class TrainingError(ToolkitError):
    stage = "train"


class NonFiniteLossError(TrainingError):
    pass
