"""Exception types shared across the toolchain."""


class TocError(Exception):
    """Base class for every error raised by this package."""


# --- record and clip-sequence validation ---


class EmptyError(TocError):
    """An operation received an empty collection it cannot work with."""


class OverlapError(TocError):
    """Clip time spans overlap."""


class GapError(TocError):
    """Clip indices are not a contiguous 0..N-1 run."""


class EmptyRationaleError(TocError):
    """A rationale was empty where a non-empty one is required."""


# --- segmentation ---


class EmptyInputError(TocError):
    """Shot input holds no shots."""


class DimensionMismatchError(TocError):
    """Embedding vectors disagree in dimension or count."""


class ZeroVectorError(TocError):
    """An embedding has zero norm and cannot be normalized."""


# --- cue tree ---


class InvalidSizeError(TocError):
    """Requested tree size is not a positive integer."""


class EmptySelectionError(TocError):
    """No leaves were selected."""


class OutOfRangeError(TocError):
    """A leaf index falls outside 0..N-1."""


# --- gateway ---


class GatewayError(TocError):
    """Base class for chat-backend failures."""


class AuthError(GatewayError):
    """Credential missing or rejected by the backend."""


class BackendUnavailableError(GatewayError):
    """Backend could not serve the request, including after retries."""


class GatewayTimeoutError(GatewayError):
    """Every attempt timed out."""


class UnboundPlaceholderError(TocError):
    """A prompt template placeholder was left unbound."""


class ParseError(TocError):
    """A backend reply did not match the strict format the prompt demands."""


# --- pipelines ---


class EmptyCaptionError(TocError):
    """A captioning call returned empty text."""


class StepCountMismatchError(TocError):
    """Rationale step markers do not match the number of localization steps."""


class NonMultipleChoiceError(TocError):
    """Demand estimation only accepts multiple-choice questions."""


class InvalidBandError(TocError):
    """Difficulty band bounds are not an increasing pair."""


# --- reward engine ---


class RangeError(TocError):
    """A numeric argument is outside its allowed range."""


class GroupTooSmallError(TocError):
    """Advantage normalization needs at least two responses."""


class MisalignedSequencesError(TocError):
    """Log-probability sequences do not line up."""


class NonFiniteError(TocError):
    """A computation produced or received a non-finite value."""


# --- cli ---


class ConfigError(TocError):
    """Configuration is missing or inconsistent."""


class UsageError(TocError):
    """Command line was malformed."""
