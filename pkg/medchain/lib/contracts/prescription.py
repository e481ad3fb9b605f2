"""Prescription contract: the doctor stores the three encrypted items for the patient, every logged read is appended
to ``last_access``."""
from dataclasses import dataclass, replace
from typing import Optional, Tuple
import medchain.lib.util.config as config
from medchain.lib.contracts.base import require_sender, parse_args, parse_item
from medchain.lib.crypto.pre import Ciphertext
from medchain.lib.util.exception import AlreadyCreatedException, MalformedPayloadException, NotCreatedException, \
    PurposeTooLongException, SerializationException

KIND = config.ContractKind.PRESCRIPTION

CREATION_PURPOSE = 'create'


@dataclass(frozen=True)
class AccessEvent(object):
    """One entry of ``last_access``. The creation event has no single item and carries ``item=None``."""
    accessor: bytes
    item: Optional[config.Item]
    purpose: str
    height: int

    def encode(self):
        return [self.accessor, self.item.value if self.item else None, self.purpose, self.height]


@dataclass(frozen=True)
class PrescriptionState(object):
    c_pi: Optional[bytes] = None
    c_med: Optional[bytes] = None
    c_dia: Optional[bytes] = None
    created_at: Optional[int] = None
    last_access: Tuple[AccessEvent, ...] = ()

    @property
    def created(self):
        return self.created_at is not None

    def ciphertext(self, item):
        """Parsed ciphertext of ``item``.

        :type item: config.Item
        :rtype: Ciphertext
        :raises NotCreatedException: Before create_prescription
        """
        if not self.created:
            raise NotCreatedException()
        return Ciphertext.from_bytes({config.Item.PI: self.c_pi, config.Item.MED: self.c_med,
                                      config.Item.DIA: self.c_dia}[item])

    def encode(self):
        return [self.c_pi, self.c_med, self.c_dia, self.created_at, [event.encode() for event in self.last_access]]


def initial_state(args, sender=None):
    if args:
        raise MalformedPayloadException("Prescription takes no instantiation arguments")
    return PrescriptionState()


def _valid_ciphertext(data):
    try:
        ciphertext = Ciphertext.from_bytes(data)
    except SerializationException as err:
        raise MalformedPayloadException("Ciphertext does not parse: %s" % err.message)
    if not ciphertext.capsule.verify():
        raise MalformedPayloadException("Ciphertext capsule fails its self-check")
    return data


def create_prescription(instance, tx, ctx):
    """Payload ``[c_pi, c_med, c_dia]``. Only the doctor (instance sender) may call, once."""
    require_sender(tx, instance.sender, 'doctor')
    state = instance.state
    if state.created:
        raise AlreadyCreatedException()
    c_pi, c_med, c_dia = [_valid_ciphertext(data) for data in parse_args(tx.payload, bytes, bytes, bytes)]
    event = AccessEvent(tx.sender, None, CREATION_PURPOSE, ctx.height)
    return replace(state, c_pi=c_pi, c_med=c_med, c_dia=c_dia, created_at=ctx.height, last_access=(event,)), None


def record_access(instance, tx, ctx):
    """Payload ``[item, purpose]``. Any registered account may log an access; every call appends a new event."""
    state = instance.state
    if not state.created:
        raise NotCreatedException()
    item_name, purpose = parse_args(tx.payload, str, str)
    item = parse_item(item_name)
    if len(purpose.encode('utf-8')) > config.MAX_PURPOSE_BYTES:
        raise PurposeTooLongException()
    event = AccessEvent(tx.sender, item, purpose, ctx.height)
    return replace(state, last_access=state.last_access + (event,)), None


METHODS = {
    'create_prescription': create_prescription,
    'record_access': record_access,
}
