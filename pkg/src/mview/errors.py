"""Exception types shared across the toolkit."""


class MviewError(Exception):
    """Base class for all data errors raised by the toolkit."""


class InvalidCalibration(MviewError):
    pass


class SingularPlane(MviewError):
    """The requested plane passes through the camera center."""


class OutOfGrid(MviewError):
    pass


class PlacementExhausted(MviewError):
    """Too many consecutive rejections while placing occlusions."""


class SizeMismatch(MviewError):
    pass


class ShapeMismatch(MviewError):
    pass


class EmptyViewList(MviewError):
    pass


class FrameMismatch(MviewError):
    pass


class FormatError(MviewError):
    """A file on disk does not follow the expected schema."""
