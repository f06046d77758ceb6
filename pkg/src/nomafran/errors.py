"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """Invalid scenario template or experiment configuration value."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class ConfigParseError(ValueError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class ParameterError(ValueError):
    """A physical-layer or QoE function got an out-of-range argument."""


class DatasetError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""

    def __init__(self, epoch, message="non-finite loss"):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class UntrainedModelError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    """Invalid action or failed step inside an environment."""

    def __init__(self, message, episode=None, step=None):
        self.episode = episode
        self.step = step
        where = ""
        if episode is not None:
            where = f" (episode {episode}, step {step})"
        super().__init__(message + where)
