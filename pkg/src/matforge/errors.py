"""Exception types shared across the package."""


class MatforgeError(Exception):
    """Base class for all matforge errors."""


class ParseError(MatforgeError):
    """Malformed input file."""


class MissingUVs(MatforgeError):
    """Mesh has no UV coordinates; this pipeline does not unwrap."""


class EmptyMesh(MatforgeError):
    """Mesh has no vertices or no triangles."""


class UnsupportedViewCount(MatforgeError):
    """Requested a view rig size that is not supported."""


class ShapeMismatch(MatforgeError):
    """Tensor or image shapes are incompatible."""


class NonFiniteInput(MatforgeError):
    """Input contains NaN or Inf."""


class NonFiniteActivation(MatforgeError):
    """A forward pass produced NaN or Inf activations."""


class IncompatibleWidth(MatforgeError):
    """Channel width not divisible as required by the rotary encoding."""


class UntrainedModel(MatforgeError):
    """Sampling requested before parameters were loaded."""


class InvalidSteps(MatforgeError):
    """Step count out of range."""


class DivergedLoss(MatforgeError):
    """Training loss became non-finite."""


class NoCorrespondences(MatforgeError):
    """No cross-view pixel pairs satisfied the matching criteria."""


class EmptyMask(MatforgeError):
    """Metric mask selects no pixels."""


class FormatError(MatforgeError):
    """On-disk artifact does not match its expected format."""


class IoError(MatforgeError):
    """Filesystem read or write failed."""

