"""Consent contract: requests for decryption rights and the patient's decisions, with the encrypted delegation keys
of granted requests stored on-chain."""
from dataclasses import dataclass, replace
from typing import Optional, Tuple
import medchain.lib.util.config as config
from medchain.lib.contracts.base import require_sender, parse_args, parse_item, canonical_items
from medchain.lib.crypto.keys import PublicKey
from medchain.lib.crypto.pre import Ciphertext
from medchain.lib.util.exception import MalformedPayloadException, EmptyItemsException, UnknownRequestException, \
    AlreadyDecidedException, GrantItemMismatchException, InvalidKeyException, SerializationException

KIND = config.ContractKind.CONSENT


@dataclass(frozen=True)
class ConsentRequest(object):
    request_id: int
    requester: bytes
    requester_pk: bytes
    items: Tuple[config.Item, ...]
    prescription_ref: bytes
    requested_at: int
    status: config.RequestStatus = config.RequestStatus.PENDING
    granted_items: Tuple[config.Item, ...] = ()
    decided_at: Optional[int] = None

    def encode(self):
        return [self.request_id, self.requester, self.requester_pk, [item.value for item in self.items],
                self.prescription_ref, self.requested_at, self.status.value,
                [item.value for item in self.granted_items], self.decided_at]


@dataclass(frozen=True)
class Grant(object):
    request_id: int
    item: config.Item
    encrypted_key: bytes

    def encode(self):
        return [self.request_id, self.item.value, self.encrypted_key]


@dataclass(frozen=True)
class ConsentState(object):
    requests: Tuple[ConsentRequest, ...] = ()
    grants: Tuple[Grant, ...] = ()

    def get_request(self, request_id):
        if not 0 <= request_id < len(self.requests):
            raise UnknownRequestException("Request %s does not exist" % request_id)
        return self.requests[request_id]

    def get_grant(self, request_id, item):
        """
        :return: The grant for ``(request_id, item)`` or None
        :rtype: Grant
        """
        for grant in self.grants:
            if grant.request_id == request_id and grant.item == item:
                return grant
        return None

    def encode(self):
        return [[request.encode() for request in self.requests], [grant.encode() for grant in self.grants]]


def initial_state(args, sender=None):
    if args:
        raise MalformedPayloadException("Consent takes no instantiation arguments")
    return ConsentState()


def request_delegation(instance, tx, ctx):
    """Payload ``[requester_pk, items, prescription_ref]``. Open to every account; returns the request id."""
    requester_pk, item_names, prescription_ref = parse_args(tx.payload, bytes, list, bytes)
    try:
        PublicKey.from_bytes(requester_pk)
    except InvalidKeyException:
        raise MalformedPayloadException("Requester key is not a public key")
    if len(prescription_ref) != config.INSTANCE_ID_LENGTH:
        raise MalformedPayloadException("Prescription reference must be an instance id")
    if not item_names:
        raise EmptyItemsException()
    if not all(isinstance(name, str) for name in item_names):
        raise MalformedPayloadException("Items must be names")
    items = canonical_items([parse_item(name) for name in item_names])
    state = instance.state
    request = ConsentRequest(len(state.requests), tx.sender, requester_pk, items, prescription_ref, ctx.height)
    return replace(state, requests=state.requests + (request,)), request.request_id


def _parse_grants(raw_grants):
    grants = []
    for entry in raw_grants:
        if not isinstance(entry, list) or len(entry) != 2 or not isinstance(entry[0], str) \
                or not isinstance(entry[1], bytes):
            raise MalformedPayloadException("Grant entries are [item, encrypted key] pairs")
        item = parse_item(entry[0])
        try:
            if not Ciphertext.from_bytes(entry[1]).capsule.verify():
                raise MalformedPayloadException("Encrypted key capsule fails its self-check")
        except SerializationException as err:
            raise MalformedPayloadException("Encrypted key does not parse: %s" % err.message)
        grants.append((item, entry[1]))
    return grants


def set_consent(instance, tx, ctx):
    """Payload ``[request_id, decision, grants]`` where grants is a list of ``[item, encrypted key]``.

    Only the patient (instance recipient) decides, once per request. A grant must carry exactly one key per approved
    item, the approved items being a nonempty subset of the requested ones; a denial carries none.
    """
    require_sender(tx, instance.recipient, 'patient')
    request_id, decision_name, raw_grants = parse_args(tx.payload, int, str, list)
    state = instance.state
    request = state.get_request(request_id)
    if request.status is not config.RequestStatus.PENDING:
        raise AlreadyDecidedException("Request %s is already %s" % (request_id, request.status.value))
    try:
        decision = config.Decision(decision_name)
    except ValueError:
        raise MalformedPayloadException("Unknown decision '%s'" % decision_name)
    grants = _parse_grants(raw_grants)
    items = [item for item, _ in grants]
    if decision is config.Decision.DENIED:
        if grants:
            raise GrantItemMismatchException("A denial carries no keys")
        decided = replace(request, status=config.RequestStatus.DENIED, decided_at=ctx.height)
        new_grants = ()
    else:
        if not items or len(set(items)) != len(items) or not set(items) <= set(request.items):
            raise GrantItemMismatchException("Keys must cover a nonempty subset of the requested items once each")
        approved = canonical_items(items)
        decided = replace(request, status=config.RequestStatus.GRANTED, granted_items=approved, decided_at=ctx.height)
        by_item = dict(grants)
        new_grants = tuple(Grant(request_id, item, by_item[item]) for item in approved)
    requests = state.requests[:request_id] + (decided,) + state.requests[request_id + 1:]
    return replace(state, requests=requests, grants=state.grants + new_grants), None


METHODS = {
    'request_delegation': request_delegation,
    'set_consent': set_consent,
}
