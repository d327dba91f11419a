"""Exception types shared across the pipeline."""


class SynthDetError(Exception):
    """Runtime failure carrying a short stable ``code`` (e.g. ``"empty-sprite"``)."""

    def __init__(self, code, message=""):
        self.code = code
        self.message = message
        super().__init__(f"{code}: {message}" if message else code)


class ParseError(SynthDetError):
    """Malformed line in one of the line-oriented text formats."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__("parse-error", f"{path}:{lineno}: {message}")


class ConfigError(Exception):
    """Invalid command-line usage or pipeline configuration."""
