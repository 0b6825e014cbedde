"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with inputs that violate its preconditions."""


class DecodeError(ValueError):
    """A bitstream or serialized artifact is truncated or corrupt."""


class PlaintextOverflowError(ValueError):
    """A fixed-point value does not fit the plaintext space of the key."""


class KeyMismatchError(ValueError):
    """A ciphertext was combined or decrypted with a foreign key."""


class ScaleMismatchError(ValueError):
    """Ciphertexts with different fixed-point bookkeeping were combined."""


class LedgerError(RuntimeError):
    """A block append was rejected by the ledger rules."""
