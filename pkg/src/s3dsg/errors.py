"""Exception hierarchy shared across the package.

Domain errors derive from S3dsgError so the CLI can map them to exit code 1
while genuine usage errors keep click's exit code 2.
"""


class S3dsgError(Exception):
    """Base class for all package-level errors."""


class DuplicateNodeError(S3dsgError):
    """A node id is already present in the graph."""


class UnknownNodeError(S3dsgError):
    """An edge endpoint or lookup refers to an id with no node."""


class NonHumanSourceError(S3dsgError):
    """An activity edge was rooted at a node that is not a human."""


class GraphInvariantError(S3dsgError):
    """A structural invariant of the scene graph does not hold."""


class GraphParseError(S3dsgError):
    """A serialized graph file could not be parsed.

    Carries optional location context for diagnostics.
    """

    def __init__(self, message, *, path=None, field=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if field is not None:
            detail = f"{detail} (field: {field})"
        super().__init__(detail)
        self.path = path
        self.field = field


class EmptyLabelError(S3dsgError):
    """An activity label was empty after normalization."""


class InsufficientDepthError(S3dsgError):
    """Too few valid depth pixels inside a detection box."""


class MissingHeadPoseError(S3dsgError):
    """Visibility analysis requested for a human without a head pose."""


class RasterMismatchError(S3dsgError):
    """Depth proxies with different raster dimensions were combined."""


class MissingMaskError(S3dsgError):
    """A human detection lacks a segmentation mask."""


class InferenceError(S3dsgError):
    """Base class for inference backend failures."""


class BackendUnavailableError(InferenceError):
    """The inference backend could not be reached after retries."""


class ScenarioMissError(InferenceError):
    """The scripted backend has no entry for a request fingerprint."""


class SchemaViolationError(InferenceError):
    """A stage payload failed schema validation.

    ``violations`` lists human-readable findings; ``payload`` keeps the raw
    response text for logging.
    """

    def __init__(self, stage, violations, payload=None):
        super().__init__(f"{stage} payload invalid: {'; '.join(violations)}")
        self.stage = stage
        self.violations = list(violations)
        self.payload = payload


class BenchmarkFormatError(S3dsgError):
    """A benchmark scene file is malformed or cross-references dangle."""


class NoPathError(S3dsgError):
    """Start and goal are not connected on the traversable grid."""
