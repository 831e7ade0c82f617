"""Exception and warning types shared across the pipeline."""


class DstGnnError(Exception):
    """Base class for pipeline errors."""


class MissingFile(DstGnnError):
    def __init__(self, subject: str, task: str, path=None):
        self.subject = subject
        self.task = task
        self.path = path
        super().__init__(f"missing recording for subject {subject}, task {task}"
                         + (f" ({path})" if path else ""))


class ShapeMismatch(DstGnnError):
    def __init__(self, what: str, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


class NonNumericCell(DstGnnError):
    def __init__(self, path, row: int, col: int, value: str):
        self.row = row
        self.col = col
        super().__init__(f"{path}: non-numeric cell at row {row}, column {col}: {value!r}")


class LabelMismatch(DstGnnError):
    pass


class FrequencyOutOfRange(DstGnnError):
    pass


class InvalidSpec(DstGnnError):
    pass


class UnstableFilter(DstGnnError):
    pass


class WindowTooLong(DstGnnError):
    pass


class PlanMismatch(DstGnnError):
    pass


class SegmentTooLong(DstGnnError):
    pass


class LengthMismatch(DstGnnError):
    pass


class NaNGradient(DstGnnError):
    pass


class ClassMissing(DstGnnError):
    pass


class ConfigError(DstGnnError):
    pass


class UnknownKey(ConfigError):
    pass


class ConfigTypeError(ConfigError, TypeError):
    pass


class DegenerateChannel(UserWarning):
    pass


class DegenerateFeature(UserWarning):
    pass


class DegenerateGraph(UserWarning):
    pass


class ZeroDenominator(UserWarning):
    pass


class ChannelOrderWarning(UserWarning):
    pass
