"""Exception types raised across the pipeline."""


class DemoforgeError(Exception):
    """Base class for all pipeline errors."""


class InvalidPose(DemoforgeError):
    """Pose has non-finite components or a degenerate quaternion."""


class OutOfRange(DemoforgeError):
    """A scalar parameter is outside its documented range."""


class ExtrapolationRefused(DemoforgeError):
    """A resampling target lies outside the pose stream; clamping is never done."""


class EmptyInput(DemoforgeError):
    """An episode or sequence that must be non-empty is empty."""


class DimMismatch(DemoforgeError):
    """Rasters, masks, or embedding vectors disagree in dimension."""


class InvalidMap(DemoforgeError):
    """Alignment map indices fall outside the source episodes."""


class EmptyAlignment(DemoforgeError):
    """An alignment map of length zero cannot be applied."""


class MissingEffector(DemoforgeError):
    """Effector mask is empty; stage classification is undefined."""


class MissingMask(DemoforgeError):
    """A frame lacks a mask role required by the operation."""


class NothingToAnchor(DemoforgeError):
    """Inpainting hole covers the whole image; no boundary to fill from."""


class TrackMismatch(DemoforgeError):
    """Stage track length differs from the episode frame count."""


class InsufficientLength(DemoforgeError):
    """Action sequence is too short for the requested horizon."""


class LengthMismatch(DemoforgeError):
    """Episodes compared frame-by-frame have different lengths."""


class TooSmall(DemoforgeError):
    """Image is smaller than the metric's sliding window."""


class InvalidScript(DemoforgeError):
    """Synthetic scene script violates its own consistency rules."""


class InvalidObjectName(DemoforgeError):
    """Prompt object name is empty or contains control characters."""


class GenTimeout(DemoforgeError):
    """Generator endpoint did not answer within the deadline after retries."""


class ProtocolError(DemoforgeError):
    """Generator response is malformed or inconsistent with the request."""


class BadGeneration(DemoforgeError):
    """Generated image does not match the request image dimensions."""


class EpisodeGenerationFailed(DemoforgeError):
    """One or more frames of an episode failed generation terminally."""

    def __init__(self, failed_indices, message="episode generation failed"):
        self.failed_indices = tuple(failed_indices)
        super().__init__(f"{message}: frames {list(self.failed_indices)}")
