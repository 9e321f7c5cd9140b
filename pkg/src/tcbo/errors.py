class IllConditionedError(ArithmeticError):
    """A linear system or factorization is too ill-conditioned to trust."""


class InfeasibleError(ValueError):
    """The MDP admits no feasible continuation from a reachable state."""

    def __init__(self, message, state=None, stage=None):
        super().__init__(message)
        self.state = state
        self.stage = stage


class OptimumIdentified(Exception):
    """Raised by the pairwise utility when fewer than two candidates remain."""
