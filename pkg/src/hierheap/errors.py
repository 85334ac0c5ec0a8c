"""Exception hierarchy shared by every layer of the runtime."""


class HHError(Exception):
    pass


class ContractViolation(HHError):
    """A caller broke an operation's precondition (bad index, double forward, ...)."""


class StructuralError(HHError):
    """Reference to a heap, chunk or root that does not exist."""


class EntanglementError(HHError):
    """A pointer write would make the heap hierarchy entangled."""
