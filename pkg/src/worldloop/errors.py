"""Exception taxonomy.

Every failure mode the toolkit reports distinctly gets its own class so
callers (and the CLI) can tell protocol violations from data corruption
from plain bad arguments.
"""


class WorldLoopError(Exception):
    """Base class for all toolkit errors."""


class UnknownPresetError(WorldLoopError, KeyError):
    """Requested action-space preset name does not exist."""


class WorldGenError(WorldLoopError):
    """World construction failed (e.g. extent too small for landmarks)."""


class RenderError(WorldLoopError):
    """Invalid render request (zero resolution, camera out of bounds)."""


class EpisodeStructureError(WorldLoopError):
    """Episode directory is structurally broken (missing/extra files, bad meta)."""


class EpisodeIntegrityError(WorldLoopError):
    """Episode contents fail replay or checksum validation."""


class RevisitGenerationError(WorldLoopError):
    """Could not build a closed revisit loop within the retry budget."""


class MetricInputError(WorldLoopError):
    """Metric inputs are malformed (resolution/length mismatch, empty set)."""


class TrajectoryFormatError(WorldLoopError):
    """Trajectory file violates the TUM line format."""


class DegenerateGeometryError(WorldLoopError):
    """Point configuration too degenerate for alignment (rank < 2)."""


class AssociationError(WorldLoopError):
    """Trajectory timestamps could not be associated within tolerance."""


class AdapterError(WorldLoopError):
    """Base for candidate-model adapter protocol violations."""


class FrameCountError(AdapterError):
    """Adapter returned the wrong number of frames."""


class FrameResolutionError(AdapterError):
    """Adapter returned frames at the wrong resolution."""


class AdapterTimeoutError(AdapterError):
    """Adapter exceeded its per-frame time budget."""


class AdapterProtocolError(AdapterError):
    """Adapter broke the exchange protocol (garbage bytes, missing sentinel)."""


class DatasetError(WorldLoopError):
    """Dataset generation or manifest validation failed."""


class SessionError(WorldLoopError):
    """Live recording session protocol violation."""
