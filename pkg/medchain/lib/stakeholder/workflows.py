"""Role-scoped workflows composing proxy re-encryption and contract calls.

Every workflow checks the role of the driving context first and raises ``RoleViolationException`` before anything is
encrypted or submitted. Contract failures come back as the matching exception from ``medchain.lib.util.exception``.
"""
import logging
import medchain.lib.util.config as config
import medchain.lib.util.codec as codec
import medchain.lib.util.exception as exceptions
import medchain.lib.crypto.pre as pre
from medchain.ledger import Address
from medchain.lib.crypto.keys import PublicKey
from medchain.lib.crypto.pre import Ciphertext, DelegationKey
from medchain.lib.provenance.audit import ComplianceReport
from medchain.lib.stakeholder.policy import DEFAULT_POLICY

logger = logging.getLogger(__name__)

CONSUMERS = (config.Role.DOCTOR, config.Role.PHARMACY, config.Role.REGULATOR)


def grant_associated_data(consent_instance, request_id, item):
    """Context the encrypted delegation key of a grant is bound to."""
    return codec.encode(['medchain/grant', bytes(consent_instance), request_id, item.value])


def medication_plaintext(name, dosage):
    return ('%s %s' % (name, dosage)).encode('utf-8')


def parse_medication(plaintext):
    """Split the first line of a MED plaintext into medication name and dosage (its last word).

    :rtype: tuple of (str, str)
    """
    lines = plaintext.decode('utf-8', errors='replace').strip().splitlines()
    first = lines[0].strip() if lines else ''
    name, _, dosage = first.rpartition(' ')
    if not name:
        return dosage, ''
    return name.strip(), dosage


def proxy_reencrypt(dk, capsule):
    """The in-application proxy. It sees the delegation key and the capsule, nothing else.

    :type dk: DelegationKey
    :type capsule: medchain.lib.crypto.pre.Capsule
    :rtype: medchain.lib.crypto.pre.ReEncryption
    """
    return pre.reencrypt(dk, capsule)


###################
# Doctor
###################
def doctor_create_prescription(ctx, patient_pk, pi, med, dia):
    """Encrypt the three items separately under ``patient_pk`` and store them in a new prescription instance.

    :param ctx: Doctor application
    :type ctx: medchain.lib.stakeholder.client.StakeholderContext
    :param patient_pk: Public key the patient shared with the doctor
    :type patient_pk: medchain.lib.crypto.keys.PublicKey
    :param pi: Personal information plaintext
    :type pi: bytes
    :param med: Medication plaintext
    :type med: bytes
    :param dia: Diagnosis plaintext
    :type dia: bytes
    :return: Id of the prescription instance
    :rtype: bytes
    """
    ctx.require_role(config.Role.DOCTOR)
    ciphertexts = [bytes(ctx.encrypt_for(patient_pk, plaintext)) for plaintext in (pi, med, dia)]
    instance_id, created = ctx.instantiate(config.ContractKind.PRESCRIPTION, Address.from_public_key(patient_pk))
    stored = ctx.submit(instance_id, 'create_prescription', *ciphertexts)
    ctx.settle([created, stored])
    logger.info("Prescription %s created (%s bytes on-chain)" % (instance_id.hex(), sum(map(len, ciphertexts))))
    return instance_id


###################
# Patient
###################
def patient_open_consent(ctx):
    """Open the patient's consent instance, where requests for decryption rights are made."""
    ctx.require_role(config.Role.PATIENT)
    instance_id, created = ctx.instantiate(config.ContractKind.CONSENT, ctx.address)
    ctx.settle([created])
    return instance_id


def patient_read_prescription(ctx, prescription_instance, item, purpose=None):
    """Owner access: decrypt ``item`` directly and log the read.

    :rtype: bytes
    """
    ctx.require_role(config.Role.PATIENT)
    plaintext = ctx.decrypt(ctx.read(prescription_instance).ciphertext(item))
    ctx.call(prescription_instance, 'record_access', item.value, purpose or config.DEFAULT_PURPOSE[ctx.role])
    return plaintext


def patient_handle_requests(ctx, consent_instance, approve, directory, policy=DEFAULT_POLICY):
    """Decide every pending request of ``consent_instance``.

    An approved request gets one delegation key per item that both was requested and passes ``policy`` for the
    requester's role (looked up in ``directory``); each key is encrypted under the requester's public key before it
    goes on-chain. Requests that are not approved, or whose filtered item set is empty, are denied.

    :param ctx: Patient application
    :param consent_instance: Consent instance id
    :type consent_instance: bytes
    :param approve: Request ids the patient agrees to
    :type approve: collections.abc.Container
    :param directory: Role per requester address
    :type directory: dict
    :param policy: Privacy filter
    :type policy: medchain.lib.stakeholder.policy.PrivacyPolicy
    :return: Decision and granted items per decided request id
    :rtype: dict
    """
    ctx.require_role(config.Role.PATIENT)
    decisions = {}
    submitted = []
    for request in ctx.read(consent_instance).requests:
        if request.status is not config.RequestStatus.PENDING:
            continue
        items = ()
        if request.request_id in approve:
            items = policy.filter(directory.get(Address(request.requester)), request.items)
        grants = []
        if items:
            requester_pk = PublicKey.from_bytes(request.requester_pk)
            for item in items:
                delegation_key = ctx.delegate_to(requester_pk)
                blob = ctx.encrypt_for(requester_pk, bytes(delegation_key),
                                       grant_associated_data(consent_instance, request.request_id, item))
                grants.append([item.value, bytes(blob)])
            decision = config.Decision.GRANTED
        else:
            decision = config.Decision.DENIED
        submitted.append(ctx.submit(consent_instance, 'set_consent', request.request_id, decision.value, grants))
        decisions[request.request_id] = (decision, items)
        logger.debug("Request %s %s for %s" % (request.request_id, decision.value, [item.value for item in items]))
    ctx.settle(submitted)
    return decisions


def patient_open_report(ctx, regulator_address):
    ctx.require_role(config.Role.PATIENT)
    instance_id, created = ctx.instantiate(config.ContractKind.REPORT, regulator_address)
    ctx.settle([created])
    return instance_id


def patient_report_and_reward(patient_ctx, regulator_ctx, report_instance, reward_instance, description, amount):
    """The patient denounces an unlawful sale, the regulator pays the reward.

    Whether a report justifies a reward is the regulator's call and not modelled.

    :return: Token balance of the patient afterwards
    :rtype: int
    """
    patient_ctx.require_role(config.Role.PATIENT)
    regulator_ctx.require_role(config.Role.REGULATOR)
    patient_ctx.call(report_instance, 'create_report', description)
    regulator_ctx.call(reward_instance, 'send_reward', bytes(patient_ctx.address), amount)
    return regulator_ctx.read(reward_instance).balance_of(patient_ctx.address)


###################
# Consumers
###################
def consumer_request_access(ctx, consent_instance, items, prescription_ref):
    """Ask the patient for decryption rights on ``items`` of the prescription ``prescription_ref``.

    :return: Request id
    :rtype: int
    """
    ctx.require_role(*CONSUMERS)
    return ctx.call(consent_instance, 'request_delegation', bytes(ctx.public_key), [item.value for item in items],
                    bytes(prescription_ref))


def consumer_complete_access(ctx, consent_instance, prescription_instance, request_id, item, purpose=None):
    """Fetch the granted delegation key, have the proxy re-encrypt ``item`` and decrypt it. The access is logged.

    :return: Plaintext of ``item``
    :rtype: bytes
    :raises exceptions.NoGrantException: If this context holds no grant for ``(request_id, item)`` on
        ``prescription_instance``
    :raises exceptions.DelegationKeyInvalidException: If the granted key does not delegate from the patient to us
    """
    ctx.require_role(*CONSUMERS)
    consent = ctx.read(consent_instance)
    try:
        request = consent.get_request(request_id)
    except exceptions.UnknownRequestException:
        raise exceptions.NoGrantException("Request %s does not exist" % request_id)
    grant = consent.get_grant(request_id, item)
    if grant is None or request.requester != ctx.address or request.prescription_ref != bytes(prescription_instance):
        raise exceptions.NoGrantException("No %s grant on request %s" % (item.value, request_id))

    sealed = Ciphertext.from_bytes(grant.encrypted_key)
    if sealed.associated_data != grant_associated_data(consent_instance, request_id, item):
        raise exceptions.DelegationKeyInvalidException("Grant is bound to another request")
    delegation_key = DelegationKey.from_bytes(ctx.decrypt(sealed))
    patient_pk = ctx.public_key_of(ctx.ledger.get_state(consent_instance).recipient)
    if not pre.verify(delegation_key, patient_pk, ctx.public_key):
        raise exceptions.DelegationKeyInvalidException("Delegation key does not delegate to %s" % ctx.address)

    ciphertext = ctx.read(prescription_instance).ciphertext(item)
    reencryption = proxy_reencrypt(delegation_key, ciphertext.capsule)
    plaintext = ctx.decrypt_reencrypted(patient_pk, reencryption, ciphertext)
    ctx.call(prescription_instance, 'record_access', item.value, purpose or config.DEFAULT_PURPOSE[ctx.role])
    return plaintext


###################
# Pharmacy
###################
def pharmacy_open_sales(ctx, recipient):
    ctx.require_role(config.Role.PHARMACY)
    instance_id, created = ctx.instantiate(config.ContractKind.SALES, recipient)
    ctx.settle([created])
    return instance_id


def pharmacy_dispense(ctx, sales_instance, control_instance, prescription_ref, med_plaintext, price=0):
    """Sell the medication of a prescription once and report the unit to medication control.

    The unit is counted first and the sale is only submitted once the count committed, so a count that fails at block
    time (another pending count used up the supply) never leaves a sale behind. Everything that could make the sale
    itself fail is checked before the count is submitted.

    :return: Index of the sale
    :rtype: int
    :raises exceptions.AlreadyDispensedException: If the prescription was already sold on ``sales_instance``
    :raises exceptions.ExceedsSupplyException: If no supplied unit is left, also when that is only known at block time
    """
    ctx.require_role(config.Role.PHARMACY)
    prescription_ref = bytes(prescription_ref)
    sales = ctx.ledger.get_state(sales_instance)
    if sales.sender != ctx.address:
        raise exceptions.UnauthorizedSenderException("Sales instance %s belongs to another pharmacy" %
                                                     bytes(sales_instance).hex())
    if price < 0 or len(prescription_ref) != config.INSTANCE_ID_LENGTH:
        raise exceptions.MalformedPayloadException("Invalid price or prescription reference")
    if sales.state.sales_for(prescription_ref):
        raise exceptions.AlreadyDispensedException("Prescription %s was already dispensed" % prescription_ref.hex())
    if ctx.read(control_instance).available < 1:
        raise exceptions.ExceedsSupplyException("No supplied units left")
    name, dosage = parse_medication(med_plaintext)
    ctx.call(control_instance, 'update_medications_sold', 1)
    return ctx.call(sales_instance, 'sell_medication', name, dosage, price, prescription_ref)


###################
# Regulator
###################
def regulator_open_control(ctx, pharmacy_address):
    ctx.require_role(config.Role.REGULATOR)
    instance_id, created = ctx.instantiate(config.ContractKind.MEDICATION_CONTROL, pharmacy_address)
    ctx.settle([created])
    return instance_id


def regulator_supply(ctx, control_instance, amount):
    ctx.require_role(config.Role.REGULATOR)
    ctx.call(control_instance, 'supply_medications', amount)
    return ctx.read(control_instance).supplied


def regulator_open_reward(ctx, patient_address, mint):
    ctx.require_role(config.Role.REGULATOR)
    instance_id, created = ctx.instantiate(config.ContractKind.REWARD, patient_address, mint)
    ctx.settle([created])
    return instance_id


def regulator_verify_compliance(ctx, control_instance, sales_instance):
    """Compare the control counters with the sales records.

    :rtype: ComplianceReport
    """
    ctx.require_role(config.Role.REGULATOR)
    control = ctx.read(control_instance)
    sales = ctx.read(sales_instance)
    return ComplianceReport.of(control.supplied, control.sold, len(sales.sales))
