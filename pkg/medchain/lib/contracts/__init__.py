"""Contract dispatch.

Contract code is pure: every method maps ``(instance, tx, BlockContext)`` to ``(state', value)`` and signals
rejection by raising a ``ContractException``. The ledger commits the new state only when no exception was raised.
"""
import medchain.lib.util.config as config
from medchain.lib.contracts import prescription, consent, sales, control, report, reward
from medchain.lib.contracts.base import BlockContext, ContractInstance, parse_args, encode_args
from medchain.lib.util.exception import UnknownMethodException, UnknownAddressException, \
    MalformedPayloadException

INSTANTIATE = 'instantiate'

CONTRACTS = {
    config.ContractKind.PRESCRIPTION: prescription,
    config.ContractKind.CONSENT: consent,
    config.ContractKind.SALES: sales,
    config.ContractKind.MEDICATION_CONTROL: control,
    config.ContractKind.REPORT: report,
    config.ContractKind.REWARD: reward,
}

METHOD_KINDS = dict((method, kind) for kind, module in CONTRACTS.items() for method in module.METHODS)
"""Contract kind offering each method"""

ALL_METHODS = (INSTANTIATE,) + tuple(METHOD_KINDS)


def instantiation_payload(kind, recipient, *args):
    """Payload of an ``instantiate`` transaction: kind name, recipient address, kind specific arguments."""
    return encode_args(kind.value, bytes(recipient), list(args))


def instantiate(tx, ctx, registered):
    """Create the instance described by an ``instantiate`` transaction.

    :param tx: Transaction whose ``instance_id`` is the id of the new instance
    :param ctx: Block the transaction is applied in
    :type ctx: BlockContext
    :param registered: Container of registered addresses
    :return: New instance and its id
    :rtype: tuple of (ContractInstance, bytes)
    :raises UnknownAddressException: If sender or recipient is not registered
    :raises MalformedPayloadException: If the kind or the arguments are invalid
    """
    decoded = parse_args(tx.payload, str, bytes, list)
    kind_name, recipient, args = decoded
    try:
        kind = config.ContractKind(kind_name)
    except ValueError:
        raise MalformedPayloadException("Unknown contract kind '%s'" % kind_name)
    for address in (tx.sender, recipient):
        if bytes(address) not in registered:
            raise UnknownAddressException("Address %s is not registered" % bytes(address).hex())
    state = CONTRACTS[kind].initial_state(args, tx.sender)
    instance = ContractInstance(tx.instance_id, kind, bytes(tx.sender), recipient, ctx.height, state)
    return instance, instance.instance_id


def apply(instance, tx, ctx):
    """Run ``tx.method`` on ``instance``.

    :type instance: ContractInstance
    :type ctx: BlockContext
    :return: Instance with the new state and the method's return value
    :rtype: tuple
    :raises ContractException: If the method rejects the call; the instance is unchanged
    """
    method = CONTRACTS[instance.kind].METHODS.get(tx.method)
    if method is None:
        raise UnknownMethodException("%s offers no method '%s'" % (instance.kind.value, tx.method))
    state, value = method(instance, tx, ctx)
    return instance.with_state(state), value
