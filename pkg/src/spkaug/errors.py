class SpkAugError(Exception):
    """Base class for data errors raised by the toolkit."""


class WavError(SpkAugError):
    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class CorpusError(SpkAugError):
    pass


class PolicyError(SpkAugError):
    pass
