"""Exception types shared across the package.

Input validation failures raise plain ``ValueError`` with a descriptive
message; the classes here cover runtime failures that callers may want
to catch and handle separately.
"""


class DivergenceError(RuntimeError):
    """A sampler or integrator iterate became non-finite."""

    def __init__(self, message, *, step=None, chain=None):
        super().__init__(message)
        self.step = step
        self.chain = chain


class StalledSolverError(RuntimeError):
    """An adaptive solver rejected too many consecutive steps."""


class TrainingDivergedError(RuntimeError):
    """Classifier training produced a non-finite loss or weights."""


class ConfigError(ValueError):
    """Experiment configuration failed validation.

    Carries the full list of violations so a user can fix everything in
    one pass instead of playing whack-a-mole.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        msg = "invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(msg)
