class MedchainException(Exception):
    """Base of all exceptions raised by this package.

    ``reason`` is the short error name that is recorded on-chain for failed contract calls and compared in scenario
    expectations.
    """
    reason = 'Error'

    def __init__(self, message=None):
        """Create exception with message ``message`` (defaults to the reason name).

        :param message: Message to provide
        :type message: str
        """
        self.message = message or self.reason
        super(MedchainException, self).__init__(self.message)


###################
# Crypto
###################
class CryptoException(MedchainException):
    """Base class for proxy re-encryption failures."""
    reason = 'CryptoError'


class InvalidKeyException(CryptoException):
    """Thrown when a key is not a valid scalar or curve point."""
    reason = 'InvalidKey'


class EntropyException(CryptoException):
    """Thrown when the entropy source does not deliver the requested amount of bytes."""
    reason = 'EntropyFailure'


class CapsuleInvalidException(CryptoException):
    """Thrown when a capsule does not satisfy its self-verification equation."""
    reason = 'CapsuleInvalid'


class DecryptionFailedException(CryptoException):
    """Thrown when decryption fails to authenticate, i.e. the key material does not match."""
    reason = 'DecryptionFailed'


class DelegationKeyInvalidException(CryptoException):
    """Thrown when a delegation key fails its binding or signature check."""
    reason = 'DelegationKeyInvalid'


class ReEncryptionInvalidException(CryptoException):
    """Thrown when the correctness proof of a re-encryption does not hold for the given capsule."""
    reason = 'ReEncryptionInvalid'


class SerializationException(CryptoException):
    """Thrown when bytes can not be parsed into a crypto object."""
    reason = 'Malformed'


###################
# Ledger
###################
class LedgerException(MedchainException):
    """Base class for transaction admission and chain access failures."""
    reason = 'LedgerError'


class AlreadyRegisteredException(LedgerException):
    """Thrown when a public key is registered twice."""
    reason = 'AlreadyRegistered'


class BadSignatureException(LedgerException):
    """Thrown when a transaction signature does not verify against the sender's registered key."""
    reason = 'BadSignature'


class BadNonceException(LedgerException):
    """Thrown when a transaction nonce is not the next one expected for its sender."""
    reason = 'BadNonce'


class UnknownInstanceException(LedgerException):
    """Thrown when a transaction or audit addresses a contract instance that does not exist."""
    reason = 'UnknownInstance'

    def __init__(self, instance_id):
        """Create exception with detailed message.

        :param instance_id: Id of the missing instance
        :type instance_id: str
        """
        super(UnknownInstanceException, self).__init__("Instance '%s' does not exist" % instance_id)
        self.instance_id = instance_id


class UnknownSenderException(LedgerException):
    """Thrown when a transaction sender has no registered account."""
    reason = 'UnknownSender'


class UnknownAddressException(LedgerException):
    """Thrown when an instance is bound to an address that has no registered account."""
    reason = 'UnknownAddress'


class NotFoundException(LedgerException):
    """Thrown when a requested block, account or receipt does not exist."""
    reason = 'NotFound'


class ChainFormatException(LedgerException):
    """Thrown when a chain file can not be parsed at all."""
    reason = 'Malformed'


###################
# Contracts
###################
class ContractException(MedchainException):
    """Base class for contract method rejections. The ``reason`` ends up in the block receipt."""
    reason = 'ContractError'


class UnauthorizedSenderException(ContractException):
    """Thrown when a method is called by an address other than the one the instance designates."""
    reason = 'UnauthorizedSender'


class AlreadyCreatedException(ContractException):
    """Thrown when a prescription instance receives a second create_prescription."""
    reason = 'AlreadyCreated'


class MalformedPayloadException(ContractException):
    """Thrown when a payload does not decode to the method schema or carries invalid ciphertexts."""
    reason = 'MalformedPayload'


class NotCreatedException(ContractException):
    """Thrown when a prescription is accessed before it was created."""
    reason = 'NotCreated'


class UnknownItemException(ContractException):
    """Thrown when an item name is not one of PI, MED, DIA."""
    reason = 'UnknownItem'


class EmptyItemsException(ContractException):
    """Thrown when a delegation request names no items."""
    reason = 'EmptyItems'


class UnknownRequestException(ContractException):
    """Thrown when a consent decision refers to a request that does not exist."""
    reason = 'UnknownRequest'


class AlreadyDecidedException(ContractException):
    """Thrown when a consent request is decided a second time."""
    reason = 'AlreadyDecided'


class GrantItemMismatchException(ContractException):
    """Thrown when the grants of a consent decision do not match the approved items."""
    reason = 'GrantItemMismatch'


class ZeroAmountException(ContractException):
    """Thrown when an amount that must be positive is zero or negative."""
    reason = 'ZeroAmount'


class ExceedsSupplyException(ContractException):
    """Thrown when a pharmacy reports more sales than the regulator supplied."""
    reason = 'ExceedsSupply'


class DescriptionTooLongException(ContractException):
    """Thrown when a report description exceeds the size bound."""
    reason = 'DescriptionTooLong'


class PurposeTooLongException(ContractException):
    """Thrown when an access purpose exceeds the size bound."""
    reason = 'PurposeTooLong'


class InsufficientBalanceException(ContractException):
    """Thrown when a reward exceeds the regulator's token balance."""
    reason = 'InsufficientBalance'


class UnknownMethodException(ContractException):
    """Thrown when a method is not offered by the addressed contract kind."""
    reason = 'UnknownMethod'


###################
# Workflows
###################
class WorkflowException(MedchainException):
    """Base class for stakeholder workflow failures."""
    reason = 'WorkflowError'


class RoleViolationException(WorkflowException):
    """Thrown when a workflow is driven by a stakeholder of the wrong role. Nothing is submitted."""
    reason = 'RoleViolation'


class NoGrantException(WorkflowException):
    """Thrown when no delegation key was granted for the requested item."""
    reason = 'NoGrant'


class AlreadyDispensedException(WorkflowException):
    """Thrown when a prescription was already used for a sale."""
    reason = 'AlreadyDispensed'


class TransactionTimeoutException(WorkflowException):
    """Thrown when a submitted transaction was not committed while settling."""
    reason = 'TransactionTimeout'


###################
# Configuration and scenarios
###################
class ConfigurationException(MedchainException):
    """Thrown when a genesis or scenario configuration value is invalid."""
    reason = 'ErroneousConfig'


class ScenarioParseException(MedchainException):
    """Thrown when a scenario file is malformed."""
    reason = 'ScenarioParseError'

    def __init__(self, message, line=None):
        """Create exception pointing at ``line`` of the scenario file.

        :param message: Message to provide
        :type message: str
        :param line: 1-based line number, if known
        :type line: int
        """
        if line is not None:
            message = 'line %s: %s' % (line, message)
        super(ScenarioParseException, self).__init__(message)
        self.line = line


class ScenarioAssertionException(MedchainException):
    """Thrown when a scenario step does not produce its expected outcome."""
    reason = 'AssertionMismatch'

    def __init__(self, step_index, line, expected, actual):
        super(ScenarioAssertionException, self).__init__(
            "Step %s (line %s): expected %s but got %s" % (step_index, line, expected, actual))
        self.step_index = step_index
        self.line = line
        self.expected = expected
        self.actual = actual


def _all_subclasses(cls):
    for sub in cls.__subclasses__():
        yield sub
        for nested in _all_subclasses(sub):
            yield nested


def exception_for_reason(reason, message=None):
    """Create the exception matching an on-chain failure reason.

    :param reason: Reason string recorded in a block receipt
    :type reason: str
    :param message: Optional message
    :type message: str
    :return: Exception instance (``ContractException`` if the reason is unknown)
    :rtype: MedchainException
    """
    for cls in _all_subclasses(MedchainException):
        if cls.reason != reason:
            continue
        try:
            return cls(message or reason)
        except TypeError:
            continue
    exc = ContractException(message or reason)
    exc.reason = reason
    return exc
