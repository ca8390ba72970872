"""Exception hierarchy shared by every module."""


class XchxError(Exception):
    """Base class for all errors raised by the toolkit."""


class ConfigError(XchxError):
    """Invalid configuration or scenario input."""


class LedgerError(XchxError):
    """A ledger operation was rejected."""


class InsufficientFunds(LedgerError):
    pass


class StaleNonce(LedgerError):
    pass


class ContractError(XchxError):
    """A contract call was rejected (the on-chain equivalent of a revert)."""


class PhaseError(ContractError):
    """Operation attempted outside the phase it is defined for."""


class CommitteeError(XchxError):
    """A committee operation was rejected."""


class InvariantViolation(XchxError):
    """An internal invariant failed; the run cannot be trusted."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        self.detail = detail
        super().__init__(f"invariant '{name}' violated" + (f": {detail}" if detail else ""))
