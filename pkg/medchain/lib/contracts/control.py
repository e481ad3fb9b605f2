"""Medication control: the regulator supplies, the pharmacy reports sales, ``sold <= supplied`` always holds."""
from dataclasses import dataclass, replace
import medchain.lib.util.config as config
from medchain.lib.contracts.base import require_sender, parse_args
from medchain.lib.util.exception import MalformedPayloadException, ZeroAmountException, ExceedsSupplyException

KIND = config.ContractKind.MEDICATION_CONTROL


@dataclass(frozen=True)
class MedicationControlState(object):
    supplied: int = 0
    sold: int = 0

    @property
    def available(self):
        return self.supplied - self.sold

    def encode(self):
        return [self.supplied, self.sold]


def initial_state(args, sender=None):
    if args:
        raise MalformedPayloadException("MedicationControl takes no instantiation arguments")
    return MedicationControlState()


def _amount(tx):
    (amount,) = parse_args(tx.payload, int)
    if amount <= 0:
        raise ZeroAmountException()
    return amount


def supply_medications(instance, tx, ctx):
    """Payload ``[amount]``. Only the regulator (instance sender)."""
    require_sender(tx, instance.sender, 'regulator')
    amount = _amount(tx)
    return replace(instance.state, supplied=instance.state.supplied + amount), None


def update_medications_sold(instance, tx, ctx):
    """Payload ``[amount]``. Only the pharmacy (instance recipient), never beyond the supplied amount."""
    require_sender(tx, instance.recipient, 'pharmacy')
    amount = _amount(tx)
    state = instance.state
    if state.sold + amount > state.supplied:
        raise ExceedsSupplyException("Selling %s would exceed the %s available units" % (amount, state.available))
    return replace(state, sold=state.sold + amount), None


METHODS = {
    'supply_medications': supply_medications,
    'update_medications_sold': update_medications_sold,
}
