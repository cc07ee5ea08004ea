"""Exception hierarchy shared by all pipeline stages."""


class DrivelabelError(Exception):
    """Base class for every error raised by this package."""


class InvalidPoseError(DrivelabelError):
    """A pose has non-finite or out-of-range fields."""


class InsufficientDataError(DrivelabelError):
    """Too few inputs for the requested estimation."""


class DegenerateConfigurationError(DrivelabelError):
    """Input configuration is rank deficient (e.g. collinear calibration points)."""


class HorizonSingularityError(DrivelabelError):
    """A pixel lies on or beyond the singular line of the ground-plane map."""


class InsufficientTrajectoryError(DrivelabelError):
    """Not enough future driving is available to build a corridor for a frame."""


class DegeneratePosesError(DrivelabelError):
    """Pose set admits no path model (e.g. all poses coincident)."""


class DimensionMismatchError(DrivelabelError):
    """Array shapes are inconsistent with each other or with the patch geometry."""


class EmptySampleError(DrivelabelError):
    """A sample mask selects no patches."""


class ZeroNormError(DrivelabelError):
    """A vector required to have positive norm is (numerically) zero."""


class DegenerateFrameError(DrivelabelError):
    """No patch in the frame resembles the reference feature."""


class DegenerateTrainingError(DrivelabelError):
    """Training data cannot constrain the model (e.g. single-class labels)."""


class EmptyRoiError(DrivelabelError):
    """Evaluation region of interest contains no pixels."""


class UnknownSceneError(DrivelabelError):
    """A frame carries a scene tag outside the known vocabulary."""


class SceneSpecError(DrivelabelError):
    """A synthetic scene specification is internally inconsistent."""


class ConfigError(DrivelabelError):
    """Run configuration is invalid or references missing inputs."""


class FeatureFileError(DrivelabelError):
    """Base class for feature-grid file problems."""


class BadMagicError(FeatureFileError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FeatureFileError):
    """File declares an unsupported format version."""


class TruncatedFileError(FeatureFileError):
    """File payload is shorter than the header promises."""


class TrailingDataError(FeatureFileError):
    """File payload is longer than the header promises."""


class NonFiniteValuesError(FeatureFileError):
    """File payload contains NaN or infinite values."""


class BadHeaderError(FeatureFileError):
    """Header fields are out of range (e.g. zero dimensions)."""


class WeightsFileError(DrivelabelError):
    """Projection-head weights file is malformed."""
