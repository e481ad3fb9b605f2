import dataclasses
from dataclasses import dataclass
import medchain.lib.util.config as config
import medchain.lib.util.codec as codec
from medchain.lib.util.exception import UnauthorizedSenderException, MalformedPayloadException, \
    UnknownItemException, SerializationException


@dataclass(frozen=True)
class BlockContext(object):
    """Height and simulated time of the block a transaction is applied in."""
    height: int
    timestamp: int


@dataclass(frozen=True)
class ContractInstance(object):
    """A contract state machine bound to a fixed (sender, recipient) address pair.

    ``kind``, ``sender`` and ``recipient`` never change after instantiation; only ``state`` is replaced by method calls.
    """
    instance_id: bytes
    kind: config.ContractKind
    sender: bytes
    recipient: bytes
    created_at: int
    state: object

    def with_state(self, state):
        return dataclasses.replace(self, state=state)

    def encode(self):
        return [self.instance_id, self.kind.value, self.sender, self.recipient, self.created_at, self.state.encode()]


def require_sender(tx, address, role):
    """Method-level authorization: only ``address`` may call.

    :param tx: Transaction being applied
    :param address: The address the instance designates for this method
    :type address: bytes
    :param role: Human readable name of the designated caller for the error message
    :type role: str
    :raises UnauthorizedSenderException: If the transaction was sent by anybody else
    """
    if tx.sender != address:
        raise UnauthorizedSenderException("%s may only be called by the instance %s" % (tx.method, role))


def parse_args(payload, *types):
    """Decode a method payload into exactly ``len(types)`` arguments of the given types.

    :param payload: Canonical encoding of the argument list
    :type payload: bytes
    :param types: Expected type per position (``int`` never matches ``bool``)
    :return: Decoded arguments
    :rtype: list
    :raises MalformedPayloadException: If the payload does not match the schema
    """
    try:
        args = codec.decode(payload)
    except SerializationException as err:
        raise MalformedPayloadException("Payload does not decode: %s" % err.message)
    if not isinstance(args, list) or len(args) != len(types):
        raise MalformedPayloadException("Expected %s arguments" % len(types))
    for position, (arg, expected) in enumerate(zip(args, types)):
        if not isinstance(arg, expected) or (expected is int and isinstance(arg, bool)):
            raise MalformedPayloadException("Argument %s must be %s" % (position, expected.__name__))
    return args


def encode_args(*args):
    return codec.encode(list(args))


def parse_item(name):
    """
    :raises UnknownItemException: If ``name`` is not one of PI, MED, DIA
    """
    try:
        return config.Item(name)
    except ValueError:
        raise UnknownItemException("Unknown item '%s'" % name)


def parse_address(value):
    if len(value) != config.ADDRESS_LENGTH:
        raise MalformedPayloadException("Address must be %s bytes" % config.ADDRESS_LENGTH)
    return value


def canonical_items(items):
    """Sort items into the PI, MED, DIA order used for every serialized item set."""
    present = set(items)
    return tuple(item for item in config.ALL_ITEMS if item in present)
