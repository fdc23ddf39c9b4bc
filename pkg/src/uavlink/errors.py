"""Exception types shared across the simulator."""


class UavlinkError(ValueError):
    """Base class for all simulator-specific errors."""


class CoLocatedEndpoints(UavlinkError):
    """BS and UAV occupy the same point; angles/directions undefined."""


class ConfigMismatch(UavlinkError):
    """Array, grid, or cluster configuration is internally inconsistent."""


class LengthMismatch(UavlinkError):
    """Input sequence length violates the operation contract."""


class SlotTooSmall(UavlinkError):
    """Slot data capacity cannot hold a single codeword."""


class DegenerateSet(UavlinkError):
    """Constellation point set has zero spread; normalization undefined."""


class SequenceTooLong(UavlinkError):
    """Symbol sequence exceeds the configured positional-embedding length."""


class ZeroChannel(UavlinkError):
    """Channel matrix/vector is identically zero."""


class DimMismatch(UavlinkError):
    """Tensor/vector dimensions do not match between pipeline stages."""


class NoPilots(UavlinkError):
    """Pilot-based estimator invoked on a pattern with no pilot REs."""


class ShapeMismatch(UavlinkError):
    """Autodiff operation received incompatible shapes."""


class NonScalarLoss(UavlinkError):
    """backward() requires a scalar loss tensor."""


class MissingGrad(UavlinkError):
    """Optimizer step requested before gradients were populated."""


class WindowTooLarge(UavlinkError):
    """SSIM window exceeds the image dimensions."""
