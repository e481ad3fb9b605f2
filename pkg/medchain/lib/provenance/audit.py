"""Provenance by fold over committed blocks.

Everything here reads a ``ChainSnapshot`` (a live ledger's or one read from an exported file) and never touches live
contract state. Callers verify the chain first; results on a chain that does not verify are meaningless.
"""
import os
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple
import yaml
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
import medchain.lib.contracts as contracts
from medchain.lib.contracts.base import parse_args, parse_item, canonical_items
from medchain.lib.contracts.prescription import AccessEvent, PrescriptionState, CREATION_PURPOSE
from medchain.lib.contracts.consent import ConsentRequest, ConsentState, Grant
from medchain.lib.contracts.sales import Sale, SalesState
from medchain.lib.contracts.control import MedicationControlState
from medchain.lib.contracts.report import Report, ReportState
from medchain.lib.contracts.reward import Transfer, RewardState

logger = logging.getLogger(__name__)


###################
# Records
###################
@dataclass(frozen=True)
class ComplianceReport(object):
    supplied: int
    sold: int
    sales_count: int
    consistent: bool

    @classmethod
    def of(cls, supplied, sold, sales_count):
        """Consistent iff nothing was sold beyond supply and every counted unit has exactly one sales record."""
        return cls(supplied, sold, sales_count, sold <= supplied and sales_count == sold)


@dataclass(frozen=True)
class ConsentRecord(object):
    consent_instance: bytes
    request_id: int
    requester: bytes
    items_requested: Tuple[config.Item, ...]
    prescription_ref: bytes
    requested_at: int
    status: config.RequestStatus = config.RequestStatus.PENDING
    items_granted: Tuple[config.Item, ...] = ()
    decided_at: Optional[int] = None
    grants: Tuple[Tuple[config.Item, bytes], ...] = ()


@dataclass(frozen=True)
class Dispensation(object):
    sales_instance: bytes
    pharmacy: bytes
    medication_name: str
    dosage: str
    price: int
    height: int


@dataclass(frozen=True)
class FailedCall(object):
    """A transaction on the instance that was included but rejected by the contract."""
    sender: bytes
    method: str
    reason: str
    height: int


@dataclass(frozen=True)
class LineageRecord(object):
    prescription_id: bytes
    origin: Tuple[bytes, int]
    patient: bytes
    accesses: Tuple[AccessEvent, ...]
    consents: Tuple[ConsentRecord, ...]
    dispensations: Tuple[Dispensation, ...]
    failed_calls: Tuple[FailedCall, ...] = ()


@dataclass
class _Instance(object):
    kind: config.ContractKind
    sender: bytes
    recipient: bytes
    height: int
    accesses: list = field(default_factory=list)
    requests: list = field(default_factory=list)
    sales: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    supplied: int = 0
    sold: int = 0
    ciphertexts: tuple = (None, None, None)
    created_at: Optional[int] = None
    request_keys: list = field(default_factory=list)
    grants: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    minted: int = 0
    balances: dict = field(default_factory=dict)
    transfers: list = field(default_factory=list)


###################
# Fold
###################
class ProvenanceIndex(object):
    """One pass over the chain collecting, per instance, everything the audits need."""

    def __init__(self, snapshot):
        """
        :param snapshot: Chain to fold
        :type snapshot: medchain.ledger.ChainSnapshot
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        self.instances = {}
        transactions = 0
        for block in snapshot.blocks:
            for tx, receipt in zip(block.tx_list, block.receipts):
                transactions += 1
                if receipt.ok:
                    self._apply(tx, block.height, receipt.value)
                elif tx.instance_id in self.instances:
                    self.instances[tx.instance_id].failed.append(FailedCall(tx.sender, tx.method, receipt.reason,
                                                                            block.height))
        self.logger.debug("Folded %s transactions into %s instances" % (transactions, len(self.instances)))

    def _apply(self, tx, height, value):
        if tx.method == contracts.INSTANTIATE:
            kind_name, recipient, args = parse_args(tx.payload, str, bytes, list)
            instance = _Instance(config.ContractKind(kind_name), tx.sender, recipient, height)
            if instance.kind is config.ContractKind.REWARD and args[0]:
                instance.minted = args[0]
                instance.balances[bytes(tx.sender)] = args[0]
            self.instances[value] = instance
            return
        instance = self.instances[tx.instance_id]
        handler = getattr(self, '_on_%s' % tx.method)
        handler(instance, tx, height, value)

    def _on_create_prescription(self, instance, tx, height, value):
        instance.ciphertexts = tuple(parse_args(tx.payload, bytes, bytes, bytes))
        instance.created_at = height
        instance.accesses.append(AccessEvent(tx.sender, None, CREATION_PURPOSE, height))

    def _on_record_access(self, instance, tx, height, value):
        item_name, purpose = parse_args(tx.payload, str, str)
        instance.accesses.append(AccessEvent(tx.sender, parse_item(item_name), purpose, height))

    def _on_request_delegation(self, instance, tx, height, value):
        requester_pk, item_names, prescription_ref = parse_args(tx.payload, bytes, list, bytes)
        instance.request_keys.append(requester_pk)
        items = canonical_items(parse_item(name) for name in item_names)
        instance.requests.append(ConsentRecord(tx.instance_id, value, tx.sender, items, prescription_ref, height))

    def _on_set_consent(self, instance, tx, height, value):
        request_id, decision, raw_grants = parse_args(tx.payload, int, str, list)
        grants = tuple((parse_item(item_name), blob) for item_name, blob in raw_grants)
        record = instance.requests[request_id]
        if config.Decision(decision) is config.Decision.GRANTED:
            granted = canonical_items(item for item, _ in grants)
            by_item = dict(grants)
            instance.requests[request_id] = ConsentRecord(
                record.consent_instance, record.request_id, record.requester, record.items_requested,
                record.prescription_ref, record.requested_at, config.RequestStatus.GRANTED, granted, height,
                tuple((item, by_item[item]) for item in granted))
            instance.grants.extend(Grant(request_id, item, by_item[item]) for item in granted)
        else:
            instance.requests[request_id] = ConsentRecord(
                record.consent_instance, record.request_id, record.requester, record.items_requested,
                record.prescription_ref, record.requested_at, config.RequestStatus.DENIED, (), height)

    def _on_sell_medication(self, instance, tx, height, value):
        name, dosage, price, prescription_ref = parse_args(tx.payload, str, str, int, bytes)
        instance.sales.append((prescription_ref, Dispensation(tx.instance_id, tx.sender, name, dosage, price, height)))

    def _on_supply_medications(self, instance, tx, height, value):
        instance.supplied += parse_args(tx.payload, int)[0]

    def _on_update_medications_sold(self, instance, tx, height, value):
        instance.sold += parse_args(tx.payload, int)[0]

    def _on_create_report(self, instance, tx, height, value):
        (description,) = parse_args(tx.payload, str)
        instance.reports.append(Report(tx.sender, description, height))

    def _on_send_reward(self, instance, tx, height, value):
        to, amount = parse_args(tx.payload, bytes, int)
        instance.balances[bytes(tx.sender)] -= amount
        instance.balances[to] = instance.balances.get(to, 0) + amount
        instance.transfers.append(Transfer(to, amount, height))

    def instance(self, instance_id, kind):
        """
        :raises exceptions.UnknownInstanceException: If the chain holds no ``kind`` instance with this id
        """
        instance = self.instances.get(bytes(instance_id))
        if instance is None or instance.kind is not kind:
            raise exceptions.UnknownInstanceException(bytes(instance_id).hex())
        return instance

    def folded_state(self, instance_id):
        """Contract state of an instance as rebuilt from its committed transactions alone.

        Equals the state the ledger holds for the instance after replaying the same blocks.

        :raises exceptions.UnknownInstanceException: If the chain holds no instance with this id
        """
        instance = self.instances.get(bytes(instance_id))
        if instance is None:
            raise exceptions.UnknownInstanceException(bytes(instance_id).hex())
        kind = instance.kind
        if kind is config.ContractKind.PRESCRIPTION:
            c_pi, c_med, c_dia = instance.ciphertexts
            return PrescriptionState(c_pi, c_med, c_dia, instance.created_at, tuple(instance.accesses))
        if kind is config.ContractKind.CONSENT:
            requests = tuple(ConsentRequest(record.request_id, record.requester, requester_pk,
                                            record.items_requested, record.prescription_ref, record.requested_at,
                                            record.status, record.items_granted, record.decided_at)
                             for record, requester_pk in zip(instance.requests, instance.request_keys))
            return ConsentState(requests, tuple(instance.grants))
        if kind is config.ContractKind.SALES:
            return SalesState(tuple(Sale(sale.medication_name, sale.dosage, sale.price, reference, sale.height)
                                    for reference, sale in instance.sales))
        if kind is config.ContractKind.MEDICATION_CONTROL:
            return MedicationControlState(instance.supplied, instance.sold)
        if kind is config.ContractKind.REPORT:
            return ReportState(tuple(instance.reports))
        return RewardState(instance.minted, tuple(sorted(instance.balances.items())), tuple(instance.transfers))

    def of_kind(self, kind):
        return [(instance_id, instance) for instance_id, instance in self.instances.items() if instance.kind is kind]


###################
# Audits
###################
def access_history(snapshot, prescription_id):
    """Every logged access of a prescription in block order, starting with its creation.

    :type snapshot: medchain.ledger.ChainSnapshot
    :type prescription_id: bytes
    :rtype: list of AccessEvent
    :raises exceptions.UnknownInstanceException: If ``prescription_id`` is not a prescription on the chain
    """
    return list(ProvenanceIndex(snapshot).instance(prescription_id, config.ContractKind.PRESCRIPTION).accesses)


def consent_history(snapshot, consent_instance):
    """All requests of a consent instance with their decisions (denials included), ordered by request id.

    :rtype: list of ConsentRecord
    """
    return list(ProvenanceIndex(snapshot).instance(consent_instance, config.ContractKind.CONSENT).requests)


def dispensations(snapshot, prescription_id):
    """Sales on any sales instance that reference the prescription."""
    return _dispensations(ProvenanceIndex(snapshot), prescription_id)


def _dispensations(index, prescription_id):
    return [sale for _, instance in index.of_kind(config.ContractKind.SALES)
            for reference, sale in instance.sales if reference == bytes(prescription_id)]


def lineage(snapshot, prescription_id):
    """Origin, accesses, consents and sales of a prescription.

    Consents are collected from every consent instance on the chain whose requests name this prescription.

    :rtype: LineageRecord
    :raises exceptions.UnknownInstanceException: If ``prescription_id`` is not a prescription on the chain
    """
    index = ProvenanceIndex(snapshot)
    prescription = index.instance(prescription_id, config.ContractKind.PRESCRIPTION)
    consents = [request for _, instance in index.of_kind(config.ContractKind.CONSENT)
                for request in instance.requests if request.prescription_ref == bytes(prescription_id)]
    consents.sort(key=lambda record: (record.requested_at, record.consent_instance, record.request_id))
    created_at = prescription.accesses[0].height if prescription.accesses else prescription.height
    return LineageRecord(bytes(prescription_id), (prescription.sender, created_at), prescription.recipient,
                         tuple(prescription.accesses), tuple(consents),
                         tuple(_dispensations(index, prescription_id)), tuple(prescription.failed))


def compliance_report(snapshot, control_instance, sales_instance):
    """Recount supplied and sold units and the sales records from the chain.

    :rtype: ComplianceReport
    """
    index = ProvenanceIndex(snapshot)
    control = index.instance(control_instance, config.ContractKind.MEDICATION_CONTROL)
    sales = index.instance(sales_instance, config.ContractKind.SALES)
    return ComplianceReport.of(control.supplied, control.sold, len(sales.sales))


###################
# Export
###################
def _items(items):
    return [item.value for item in items]


def lineage_record(record):
    """Machine readable form of a lineage record with a fixed field order.

    :type record: LineageRecord
    :rtype: dict
    """
    return {
        'prescription': record.prescription_id.hex(),
        'origin': {'doctor': record.origin[0].hex(), 'height': record.origin[1]},
        'patient': record.patient.hex(),
        'accesses': [{'accessor': event.accessor.hex(), 'item': event.item.value if event.item else None,
                      'purpose': event.purpose, 'height': event.height} for event in record.accesses],
        'consents': [{'consent_instance': consent.consent_instance.hex(), 'request_id': consent.request_id,
                      'requester': consent.requester.hex(), 'requested': _items(consent.items_requested),
                      'requested_at': consent.requested_at, 'status': consent.status.value,
                      'granted': _items(consent.items_granted), 'decided_at': consent.decided_at}
                     for consent in record.consents],
        'dispensations': [{'sales_instance': sale.sales_instance.hex(), 'pharmacy': sale.pharmacy.hex(),
                           'medication': sale.medication_name, 'dosage': sale.dosage, 'price': sale.price,
                           'height': sale.height} for sale in record.dispensations],
        'failed_calls': [{'sender': call.sender.hex(), 'method': call.method, 'reason': call.reason,
                          'height': call.height} for call in record.failed_calls],
    }


def _decision_text(consent):
    if consent.status is config.RequestStatus.GRANTED:
        return 'granted %s at #%s' % (','.join(_items(consent.items_granted)), consent.decided_at)
    if consent.status is config.RequestStatus.DENIED:
        return 'denied at #%s' % consent.decided_at
    return consent.status.value


def render_lineage_report(record):
    """Human readable lineage report.

    :type record: LineageRecord
    :rtype: str
    """
    lines = ['Prescription %s' % record.prescription_id.hex(),
             '  created by doctor %s at height %s for patient %s' % (record.origin[0].hex(), record.origin[1],
                                                                     record.patient.hex()),
             '', 'Accesses (%s)' % len(record.accesses)]
    for event in record.accesses:
        lines.append('  #%-6s %s %-4s %s' % (event.height, event.accessor.hex(),
                                             event.item.value if event.item else '*', event.purpose))
    lines += ['', 'Consents (%s)' % len(record.consents)]
    for consent in record.consents:
        lines.append('  #%-6s request %s by %s for %s: %s' % (
            consent.requested_at, consent.request_id, consent.requester.hex(),
            ','.join(_items(consent.items_requested)), _decision_text(consent)))
    lines += ['', 'Dispensations (%s)' % len(record.dispensations)]
    for sale in record.dispensations:
        lines.append('  #%-6s %s %s, price %s, sold by %s' % (sale.height, sale.medication_name, sale.dosage,
                                                               sale.price, sale.pharmacy.hex()))
    if record.failed_calls:
        lines += ['', 'Rejected calls (%s)' % len(record.failed_calls)]
        for call in record.failed_calls:
            lines.append('  #%-6s %s %s: %s' % (call.height, call.sender.hex(), call.method, call.reason))
    return '\n'.join(lines) + '\n'


def dump_lineage(record, prefix):
    """Write ``<prefix>.txt`` (report) and ``<prefix>.yaml`` (record).

    :return: Paths written
    :rtype: tuple of str
    """
    directory = os.path.dirname(prefix)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
    text_path, record_path = '%s.txt' % prefix, '%s.yaml' % prefix
    with open(text_path, 'w') as report_file:
        report_file.write(render_lineage_report(record))
    with open(record_path, 'w') as record_file:
        yaml.safe_dump(lineage_record(record), record_file, default_flow_style=False, sort_keys=False)
    logger.info("Lineage of %s written to '%s' and '%s'" % (record.prescription_id.hex(), text_path, record_path))
    return text_path, record_path
