"""Exception types shared across the package."""


class ValidationError(ValueError):
    """A parameter or config value is malformed; message names the field."""


class EdgeListParseError(ValueError):
    """Edge-list text is malformed; message carries the 1-based line number."""


class GenerationError(RuntimeError):
    """A randomized generator exhausted its retry budget."""


class CheckpointError(ValueError):
    """A checkpoint file is unreadable, truncated, or has the wrong version."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""
