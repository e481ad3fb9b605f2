"""Report contract: patients denounce unlawful sales to the regulator.

Descriptions must not contain personally identifiable information. That is policy for the reporting application; the
contract only enforces the size bound.
"""
from dataclasses import dataclass, replace
from typing import Tuple
import medchain.lib.util.config as config
from medchain.lib.contracts.base import require_sender, parse_args
from medchain.lib.util.exception import MalformedPayloadException, DescriptionTooLongException

KIND = config.ContractKind.REPORT


@dataclass(frozen=True)
class Report(object):
    source: bytes
    description: str
    height: int

    def encode(self):
        return [self.source, self.description, self.height]


@dataclass(frozen=True)
class ReportState(object):
    reports: Tuple[Report, ...] = ()

    def encode(self):
        return [[report.encode() for report in self.reports]]


def initial_state(args, sender=None):
    if args:
        raise MalformedPayloadException("Report takes no instantiation arguments")
    return ReportState()


def create_report(instance, tx, ctx):
    """Payload ``[description]``. Only the patient (instance sender)."""
    require_sender(tx, instance.sender, 'patient')
    (description,) = parse_args(tx.payload, str)
    if len(description.encode('utf-8')) > config.MAX_DESCRIPTION_BYTES:
        raise DescriptionTooLongException()
    state = instance.state
    return replace(state, reports=state.reports + (Report(tx.sender, description, ctx.height),)), None


METHODS = {
    'create_report': create_report,
}
