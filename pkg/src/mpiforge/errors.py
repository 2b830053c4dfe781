"""Exception hierarchy. Every error raised on purpose derives from MpiForgeError."""


class MpiForgeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidCamera(MpiForgeError):
    """Camera fails a rigidity or intrinsics invariant."""


class DegeneratePlane(MpiForgeError):
    """A plane passes through the target camera center and is not renderable."""


class InvalidRange(MpiForgeError):
    """Bad (near, far) depth range or similar interval."""


class OutOfRange(MpiForgeError, IndexError):
    """Index outside its valid range."""


class MismatchedLayerCount(MpiForgeError):
    """Color and alpha stacks disagree on the number of layers."""


class MismatchedDims(MpiForgeError):
    """Layer images disagree on spatial dimensions."""


class SizeMismatch(MpiForgeError):
    """Two images that must share a shape do not."""


class NonFiniteLoss(MpiForgeError):
    """Optimization produced a NaN or infinite loss value."""


class NeverVisible(MpiForgeError):
    """A skeleton edge has no frame where both endpoints are visible."""

    def __init__(self, edge):
        self.edge = edge
        super().__init__(f"edge {edge} has no frame with both endpoints visible")


class SchemaError(MpiForgeError):
    """Manifest JSON violates the documented schema.

    Carries a JSON-pointer-style path to the offending element.
    """

    def __init__(self, pointer, message):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}")


class MissingFile(MpiForgeError):
    """One or more files referenced by a manifest do not exist."""

    def __init__(self, paths):
        self.paths = list(paths)
        super().__init__("missing files: " + ", ".join(str(p) for p in self.paths))


class ContainerError(MpiForgeError):
    """Malformed MPI container file."""


class BadMagic(ContainerError):
    """Container does not start with the expected magic bytes."""


class VersionUnsupported(ContainerError):
    """Container declares a version this reader does not understand."""


class TruncatedPayload(ContainerError):
    """Container payload is shorter (or longer) than its header declares."""


class BadPath(MpiForgeError):
    """A CLI input path does not exist or cannot be opened."""
