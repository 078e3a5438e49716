"""
Exception hierarchy shared by the ring, scheme, linear-algebra and solver layers
"""


class HeError(Exception):
    """Base class for every error raised by the engine"""


class ContractViolation(HeError, ValueError):
    """An operation was called with inputs that break its preconditions"""


class DomainMismatch(ContractViolation):
    """Polynomial is in the wrong representation (coefficient vs evaluation)"""


class AlignmentError(ContractViolation):
    """Operands sit at different levels; mod-switch one of them first"""


class ScaleError(ContractViolation):
    """Operand scales differ by more than the allowed relative tolerance"""


class MissingKeyError(ContractViolation):
    """A rotation needs a Galois key that was not generated"""


class SerializationError(ContractViolation):
    """Malformed or incompatible binary blob"""


class PresetError(ContractViolation):
    """Parameter preset fails validation"""


class DepthExhausted(HeError):
    """The modulus chain has no level left for the requested operation"""
