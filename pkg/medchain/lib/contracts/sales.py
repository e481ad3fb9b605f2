from dataclasses import dataclass, replace
from typing import Tuple
import medchain.lib.util.config as config
from medchain.lib.contracts.base import require_sender, parse_args
from medchain.lib.util.exception import MalformedPayloadException

KIND = config.ContractKind.SALES


@dataclass(frozen=True)
class Sale(object):
    medication_name: str
    dosage: str
    price: int
    prescription_ref: bytes
    height: int

    def encode(self):
        return [self.medication_name, self.dosage, self.price, self.prescription_ref, self.height]


@dataclass(frozen=True)
class SalesState(object):
    sales: Tuple[Sale, ...] = ()

    def sales_for(self, prescription_ref):
        return [sale for sale in self.sales if sale.prescription_ref == prescription_ref]

    def encode(self):
        return [[sale.encode() for sale in self.sales]]


def initial_state(args, sender=None):
    if args:
        raise MalformedPayloadException("Sales takes no instantiation arguments")
    return SalesState()


def sell_medication(instance, tx, ctx):
    """Payload ``[medication_name, dosage, price, prescription_ref]``. Only the pharmacy; returns the sale index.

    The single-purchase rule is not checked here, the pharmacy workflow enforces it.
    """
    require_sender(tx, instance.sender, 'pharmacy')
    name, dosage, price, prescription_ref = parse_args(tx.payload, str, str, int, bytes)
    if price < 0:
        raise MalformedPayloadException("Price must not be negative")
    if len(prescription_ref) != config.INSTANCE_ID_LENGTH:
        raise MalformedPayloadException("Prescription reference must be an instance id")
    state = instance.state
    sale = Sale(name, dosage, price, prescription_ref, ctx.height)
    return replace(state, sales=state.sales + (sale,)), len(state.sales)


METHODS = {
    'sell_medication': sell_medication,
}
