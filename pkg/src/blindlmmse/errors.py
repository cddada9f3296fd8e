"""Exception hierarchy."""


class BlindLmmseError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(BlindLmmseError, ValueError):
    pass


class SingularMomentsError(BlindLmmseError, ArithmeticError):
    """The (ridged) output covariance is not numerically positive definite."""


class DivergenceError(BlindLmmseError, ArithmeticError):
    def __init__(self, iteration, detail=None):
        self.iteration = iteration
        self.detail = detail or "objective became non-finite"
        super().__init__(f"iteration {iteration}: {self.detail}")


class ArtifactIOError(BlindLmmseError, OSError):
    """Reading or writing a file failed."""


class DatasetError(BlindLmmseError):
    pass


class DatasetIOError(DatasetError, ArtifactIOError):
    pass


class MalformedDatasetError(DatasetError):
    pass


class DatasetVersionError(DatasetError):
    pass


class ConfigError(BlindLmmseError):
    pass
