"""Exception hierarchy shared by every stage of the mesher."""


class StSlabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(StSlabError, ValueError):
    pass


class InvalidMeshError(StSlabError, ValueError):
    pass


class ConformityError(StSlabError):
    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = list(cells)


class SingularDirectionError(StSlabError, ValueError):
    pass


class ProjectionError(StSlabError):
    pass


class OutOfDomainError(StSlabError):
    pass


class InvalidTagError(StSlabError, ValueError):
    pass


class RefinementError(StSlabError):
    pass


class SegmentIntersectionError(InvalidInputError):
    def __init__(self, message, pair):
        super().__init__(message)
        self.pair = pair


class PipelineError(StSlabError):
    pass


class DegenerateSplitError(PipelineError):
    def __init__(self, message, prism=None):
        super().__init__(message)
        self.prism = prism


class TanglingError(PipelineError):
    def __init__(self, message, cells=()):
        super().__init__(message)
        self.cells = list(cells)


class ClosureError(PipelineError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ExternalMesherError(PipelineError):
    pass


class InitialMeshError(PipelineError):
    pass


class ParseError(StSlabError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(StSlabError, ValueError):
    def __init__(self, message, pointer=""):
        if pointer:
            message = f"{pointer}: {message}"
        super().__init__(message)
        self.pointer = pointer
