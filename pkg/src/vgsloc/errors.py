class VGSError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(VGSError):
    pass


class TextGridError(CorpusError):
    pass


class FeatureError(VGSError):
    pass


class SupervisionError(VGSError):
    pass


class ModelConfigError(VGSError):
    pass


class CheckpointError(VGSError):
    pass


class LocalisationError(VGSError):
    pass


class MetricError(VGSError):
    pass


class StageError(VGSError):
    """Raised by the experiment runner; carries the failing stage and record."""

    def __init__(self, stage, message, record_id=None):
        self.stage = stage
        self.record_id = record_id
        where = f"[{stage}]" if record_id is None else f"[{stage}:{record_id}]"
        super().__init__(f"{where} {message}")
