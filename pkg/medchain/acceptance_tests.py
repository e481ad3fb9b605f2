"""End-to-end properties of the whole system at full trial counts. Slow: minutes, not seconds.

Timing bounds depend on the machine and only run with ``MEDCHAIN_TIMING_TESTS=1``.
"""
import os
import random
import shutil
import tempfile
import unittest
from dataclasses import replace
import yaml
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
import medchain.lib.crypto.pre as pre
import medchain.lib.contracts as contracts
import medchain.lib.stakeholder.workflows as workflows
import medchain.lib.provenance.audit as audit
from medchain.ledger import Ledger, GenesisConfig, ChainSnapshot, SignedTransaction, Address, derive_instance_id, \
    read_chain, verify_chain
from medchain.lib.contracts.base import encode_args, parse_args
from medchain.lib.crypto.keys import SeededEntropy, keygen
from medchain.lib.harness import Scenario, PreBenchmark, LedgerBenchmark
from medchain.lib.stakeholder import StakeholderContext, role_directory

DEMO = os.path.join(os.path.dirname(__file__), 'data', 'scenarios', 'demo_full_flow.yaml')

ROUND_TRIPS = 1000
SECRECY_TRIALS = 1000
FUZZ_TXS = 10000
FUZZ_BATCH = 25
POLICY_WORKLOADS = 1000
CONSERVATION_STEPS = 1000
TAMPER_FLIPS = 100
TAMPER_BLOCKS = 100

PI = b'Maria Silva, 1990-05-17, Av. Central 44'
MED = workflows.medication_plaintext('amoxicillin', '500mg')
DIA = b'otitis media'

RESTRICTED = (config.Role.PHARMACY, config.Role.REGULATOR)


def stakeholders(ledger, label):
    """One context per role with keys derived from ``label``.

    :return: Contexts by role and their secret keys by role
    :rtype: tuple of (dict, dict)
    """
    contexts, secret_keys = {}, {}
    for role in config.Role:
        secret_key, _ = keygen(SeededEntropy(b'%s/key/%s' % (label, role.value.encode())))
        contexts[role] = StakeholderContext(role, ledger, secret_key=secret_key,
                                            entropy=SeededEntropy(b'%s/%s' % (label, role.value.encode())))
        secret_keys[role] = secret_key
    return contexts, secret_keys


def committed(snapshot, instance_id, *methods):
    """Raw scan: ``(block, tx, receipt)`` of every committed call to ``instance_id`` in chain order."""
    for block in snapshot.blocks:
        for tx, receipt in zip(block.tx_list, block.receipts):
            if tx.instance_id == bytes(instance_id) and tx.method in methods:
                yield block, tx, receipt


###################
# Proxy re-encryption
###################
class PreRoundTripTest(unittest.TestCase):

    def flow(self, entropy, size):
        sk_a, pk_a = keygen(entropy)
        sk_b, pk_b = keygen(entropy)
        plaintext = entropy(size)
        ciphertext = pre.encrypt(pk_a, plaintext, b'', entropy)
        dk = pre.generate_delegation_key(sk_a, pk_b, entropy)
        reencryption = pre.reencrypt(dk, ciphertext.capsule, entropy)
        return plaintext, pre.decrypt_reencrypted(sk_b, pk_a, reencryption, ciphertext)

    def test_random_flows(self):
        entropy = SeededEntropy(b'round-trips')
        sizes = random.Random(1)
        sizes_kb = config.BENCH_PROFILES['paper']['sizes_kb']
        returned = 0
        for trial in range(ROUND_TRIPS):
            low, high = sizes_kb[config.ALL_ITEMS[trial % len(config.ALL_ITEMS)]]
            plaintext, decrypted = self.flow(entropy, int(sizes.uniform(low, high) * 1024))
            returned += decrypted == plaintext
        self.assertEqual(returned, ROUND_TRIPS)

    def test_largest_diagnosis(self):
        low, high = config.BENCH_PROFILES['paper']['sizes_kb'][config.Item.DIA]
        for size_kb in (low, high):
            plaintext, decrypted = self.flow(SeededEntropy(b'large'), int(size_kb * 1024))
            self.assertEqual(decrypted, plaintext)


class ProxySecrecyTest(unittest.TestCase):

    def test_non_delegatee_never_decrypts(self):
        entropy = SeededEntropy(b'secrecy')
        sk_a, pk_a = keygen(entropy)
        sk_b, pk_b = keygen(entropy)
        successes = 0
        for trial in range(SECRECY_TRIALS):
            ciphertext = pre.encrypt(pk_a, entropy(64), b'', entropy)
            dk = pre.generate_delegation_key(sk_a, pk_b, entropy)
            reencryption = pre.reencrypt(dk, ciphertext.capsule, entropy)
            outsider, _ = keygen(entropy)
            for attempt in (lambda: pre.decrypt_reencrypted(outsider, pk_a, reencryption, ciphertext),
                            lambda: pre.decrypt_original(outsider, ciphertext)):
                try:
                    attempt()
                    successes += 1
                except exceptions.CryptoException:
                    pass
        self.assertEqual(successes, 0)


@unittest.skipUnless(os.environ.get('MEDCHAIN_TIMING_TESTS'), 'timing bounds are machine dependent')
class PreLatencyTest(unittest.TestCase):

    def test_full_size_profile_bounds(self):
        benchmark = PreBenchmark('paper', iterations=100, seed=b'latency')
        benchmark.run()
        self.assertEqual(benchmark.violations(), [])


###################
# Ledger and contracts
###################
class AuthorizationFuzzTest(unittest.TestCase):
    """Calls with a wrong sender, a forged signature or a replayed nonce never change the state."""

    def setUp(self):
        self.ledger = Ledger(GenesisConfig(block_interval_ms=1000))
        self.contexts, self.secret_keys = stakeholders(self.ledger, b'fuzz')
        doctor, patient = self.contexts[config.Role.DOCTOR], self.contexts[config.Role.PATIENT]
        pharmacy, regulator = self.contexts[config.Role.PHARMACY], self.contexts[config.Role.REGULATOR]

        prescription = workflows.doctor_create_prescription(doctor, patient.public_key, PI, MED, DIA)
        consent = workflows.patient_open_consent(patient)
        workflows.consumer_request_access(pharmacy, consent, [config.Item.MED], prescription)
        sales = workflows.pharmacy_open_sales(pharmacy, regulator.address)
        control = workflows.regulator_open_control(regulator, pharmacy.address)
        workflows.regulator_supply(regulator, control, 10)
        report = workflows.patient_open_report(patient, regulator.address)
        reward = workflows.regulator_open_reward(regulator, patient.address, 1000)

        ciphertexts = [bytes(doctor.encrypt_for(patient.public_key, plaintext)) for plaintext in (PI, MED, DIA)]
        # method -> (instance, role allowed to call it or None if open to everyone, arguments)
        self.calls = {
            'create_prescription': (prescription, config.Role.DOCTOR, ciphertexts),
            'record_access': (prescription, None, ['MED', 'audit']),
            'request_delegation': (consent, None, [bytes(regulator.public_key), ['MED'], prescription]),
            'set_consent': (consent, config.Role.PATIENT, [0, 'denied', []]),
            'sell_medication': (sales, config.Role.PHARMACY, ['amoxicillin', '500mg', 1, prescription]),
            'supply_medications': (control, config.Role.REGULATOR, [1]),
            'update_medications_sold': (control, config.Role.PHARMACY, [1]),
            'create_report': (report, config.Role.PATIENT, ['off-book sale']),
            'send_reward': (reward, config.Role.REGULATOR, [bytes(patient.address), 1]),
            contracts.INSTANTIATE: (None, None, [config.ContractKind.REPORT, regulator.address]),
        }
        self.replayable = [tx for block in self.ledger.snapshot().blocks for tx in block.tx_list]
        self.fuzz = random.Random(1234)

    def _frozen(self):
        return self.ledger.state.state_root(), len(self.ledger.mempool)

    def _unsigned_call(self, role, method):
        """Instance id, payload and nonce of a call to ``method`` sent from ``role``'s address."""
        instance, _, args = self.calls[method]
        address = self.contexts[role].address
        nonce = self.ledger.next_nonce(address)
        if method == contracts.INSTANTIATE:
            return derive_instance_id(address, nonce), contracts.instantiation_payload(*args), nonce
        return instance, encode_args(*args), nonce

    def forge(self, method):
        """A transaction claiming one sender, signed by another or altered after signing."""
        victim, signer = self.fuzz.sample(list(config.Role), 2)
        instance, payload, nonce = self._unsigned_call(victim, method)
        if self.fuzz.random() < 0.5:
            tx = SignedTransaction.create(self.secret_keys[signer], nonce, instance, method, payload)
            return replace(tx, sender=self.contexts[victim].address)
        tx = SignedTransaction.create(self.secret_keys[victim], nonce, instance, method, payload)
        return replace(tx, payload=payload + b'\x00')

    def assertRejectedOnAdmission(self, tx, exception):
        before = self._frozen()
        with self.assertRaises(exception):
            self.ledger.submit_transaction(tx)
        self.assertEqual(self._frozen(), before)

    def settle_wrong_senders(self, tx_ids):
        root = self.ledger.state.state_root()
        for inclusion in self.ledger.settle(tx_ids):
            self.assertFalse(inclusion.receipt.ok)
            self.assertEqual(inclusion.receipt.reason, 'UnauthorizedSender')
        self.assertEqual(self.ledger.state.state_root(), root)
        self.assertEqual(self.ledger.get_block(self.ledger.height).state_root, root)

    def test_fuzz(self):
        restricted = [method for method, (_, role, _) in self.calls.items() if role is not None]
        exercised = set()
        pending = []
        for _ in range(FUZZ_TXS):
            mutation = self.fuzz.choice(('sender', 'signature', 'replay'))
            if mutation == 'sender':
                method = self.fuzz.choice(restricted)
                instance, allowed, args = self.calls[method]
                sender = self.fuzz.choice([role for role in config.Role if role is not allowed])
                pending.append(self.contexts[sender].submit(instance, method, *args))
            elif mutation == 'signature':
                method = self.fuzz.choice(list(self.calls))
                self.assertRejectedOnAdmission(self.forge(method), exceptions.BadSignatureException)
            else:
                tx = self.fuzz.choice(self.replayable)
                method = tx.method
                self.assertRejectedOnAdmission(tx, exceptions.BadNonceException)
            exercised.add(method)
            if len(pending) == FUZZ_BATCH:
                self.settle_wrong_senders(pending)
                pending = []
        if pending:
            self.settle_wrong_senders(pending)
        self.assertEqual(exercised, set(self.calls))
        self.assertTrue(verify_chain(self.ledger.snapshot()).valid)


class PolicyEnforcementTest(unittest.TestCase):

    def setUp(self):
        self.ledger = Ledger(GenesisConfig(block_interval_ms=1000))
        self.contexts, _ = stakeholders(self.ledger, b'policy')
        self.patient = self.contexts[config.Role.PATIENT]
        self.consumers = [self.contexts[role] for role in workflows.CONSUMERS]
        self.directory = role_directory(*self.contexts.values())
        self.prescription = workflows.doctor_create_prescription(self.contexts[config.Role.DOCTOR],
                                                                 self.patient.public_key, PI, MED, DIA)

    def test_random_workloads(self):
        workload = random.Random(99)
        consents = []
        for _ in range(POLICY_WORKLOADS):
            consent = workflows.patient_open_consent(self.patient)
            consents.append(consent)
            requests = []
            for consumer in workload.sample(self.consumers, workload.randint(1, len(self.consumers))):
                items = workload.sample(config.ALL_ITEMS, workload.randint(1, len(config.ALL_ITEMS)))
                requests.append(workflows.consumer_request_access(consumer, consent, items, self.prescription))
            approve = set(request for request in requests if workload.random() < 0.8)
            workflows.patient_handle_requests(self.patient, consent, approve, self.directory)

        snapshot = self.ledger.snapshot()
        granted = 0
        for consent in consents:
            state = self.ledger.get_state(consent).state
            for _, tx, receipt in committed(snapshot, consent, 'set_consent'):
                if not receipt.ok:
                    continue
                request_id, _, raw_grants = parse_args(tx.payload, int, str, list)
                role = self.directory[Address(state.get_request(request_id).requester)]
                items = [config.Item(item_name) for item_name, _ in raw_grants]
                if role in RESTRICTED:
                    self.assertTrue(set(items) <= {config.Item.MED}, msg="%s granted %s" % (role.value, items))
                granted += len(items)
        self.assertGreater(granted, 0)


class MedicationConservationTest(unittest.TestCase):

    def setUp(self):
        self.ledger = Ledger(GenesisConfig(block_interval_ms=1000))
        self.contexts, _ = stakeholders(self.ledger, b'conservation')
        self.pharmacy = self.contexts[config.Role.PHARMACY]
        self.regulator = self.contexts[config.Role.REGULATOR]
        self.sales = workflows.pharmacy_open_sales(self.pharmacy, self.regulator.address)
        self.control = workflows.regulator_open_control(self.regulator, self.pharmacy.address)

    def test_random_supply_and_sales(self):
        steps = random.Random(5)
        supplied = sold = over_sells = 0
        for _ in range(CONSERVATION_STEPS):
            amount = steps.randint(1, 6)
            if steps.random() < 0.45:
                self.regulator.call(self.control, 'supply_medications', amount)
                supplied += amount
            elif sold + amount > supplied:
                with self.assertRaises(exceptions.ExceedsSupplyException):
                    self.pharmacy.call(self.control, 'update_medications_sold', amount)
                over_sells += 1
            else:
                self.pharmacy.call(self.control, 'update_medications_sold', amount)
                sold += amount
            state = self.ledger.get_state(self.control).state
            self.assertEqual((state.supplied, state.sold), (supplied, sold))
        self.assertGreater(over_sells, 0)

        snapshot = self.ledger.snapshot()
        counted = {'supply_medications': 0, 'update_medications_sold': 0}
        rejected = 0
        last_height = None
        for block, tx, receipt in committed(snapshot, self.control, *counted):
            if block.height != last_height:
                self.assertLessEqual(counted['update_medications_sold'], counted['supply_medications'])
                last_height = block.height
            if receipt.ok:
                counted[tx.method] += parse_args(tx.payload, int)[0]
            else:
                self.assertEqual(receipt.reason, 'ExceedsSupply')
                rejected += 1
        self.assertEqual((counted['supply_medications'], counted['update_medications_sold']), (supplied, sold))
        self.assertEqual(rejected, over_sells)
        report = audit.compliance_report(snapshot, self.control, self.sales)
        self.assertEqual((report.supplied, report.sold), (supplied, sold))


###################
# Provenance and chain files
###################
class ProvenanceCompletenessTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.scenario = Scenario.from_file(DEMO)
        cls.outcome = cls.scenario.run()
        cls.snapshot = cls.scenario.ledger.snapshot()
        cls.prescription = cls.scenario.variables['rx']
        cls.consent = cls.scenario.variables['consent']

    def test_access_history_matches_scan(self):
        scanned = []
        for block, tx, receipt in committed(self.snapshot, self.prescription, 'record_access'):
            if receipt.ok:
                item_name, purpose = parse_args(tx.payload, str, str)
                scanned.append((tx.sender, config.Item(item_name), purpose, block.height))
        history = audit.access_history(self.snapshot, self.prescription)
        self.assertEqual(history[0].purpose, 'create')
        self.assertEqual([(event.accessor, event.item, event.purpose, event.height) for event in history[1:]],
                         scanned)
        self.assertGreater(len(scanned), 0)

    def test_consent_history_matches_scan(self):
        requested = [(tx.sender, block.height)
                     for block, tx, receipt in committed(self.snapshot, self.consent, 'request_delegation')
                     if receipt.ok]
        decided = {}
        for block, tx, receipt in committed(self.snapshot, self.consent, 'set_consent'):
            if receipt.ok:
                request_id, decision, _ = parse_args(tx.payload, int, str, list)
                decided[request_id] = (decision, block.height)
        history = audit.consent_history(self.snapshot, self.consent)
        self.assertEqual([(record.requester, record.requested_at) for record in history], requested)
        self.assertEqual([record.request_id for record in history], list(range(len(requested))))
        for record in history:
            if record.request_id in decided:
                self.assertEqual((record.status.value, record.decided_at), decided[record.request_id])
            else:
                self.assertIs(record.status, config.RequestStatus.PENDING)

    def test_lineage_identical_across_runs(self):
        again = Scenario.from_file(DEMO)
        outcome = again.run()
        self.assertEqual(outcome.state_root, self.outcome.state_root)
        first = audit.lineage(self.snapshot, self.prescription)
        second = audit.lineage(again.ledger.snapshot(), again.variables['rx'])
        self.assertEqual(audit.render_lineage_report(first), audit.render_lineage_report(second))
        self.assertEqual(yaml.safe_dump(audit.lineage_record(first), sort_keys=False),
                         yaml.safe_dump(audit.lineage_record(second), sort_keys=False))


class TamperEvidenceTest(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()
        ledger = Ledger(GenesisConfig(block_interval_ms=1000))
        contexts, _ = stakeholders(ledger, b'tamper')
        doctor, patient = contexts[config.Role.DOCTOR], contexts[config.Role.PATIENT]
        pharmacy = contexts[config.Role.PHARMACY]
        prescription = workflows.doctor_create_prescription(doctor, patient.public_key, PI, MED, DIA)
        consent = workflows.patient_open_consent(patient)
        request = workflows.consumer_request_access(pharmacy, consent, [config.Item.MED], prescription)
        workflows.patient_handle_requests(patient, consent, {request}, role_directory(*contexts.values()))
        workflows.consumer_complete_access(pharmacy, consent, prescription, request, config.Item.MED)
        while len(ledger.snapshot().blocks) < TAMPER_BLOCKS:
            ledger.advance(ledger.next_block_time())
        self.path = os.path.join(self.directory, 'tamper.chain')
        ledger.export_chain(self.path)

    def tearDown(self):
        shutil.rmtree(self.directory)

    def test_bit_flips(self):
        snapshot = read_chain(self.path)
        self.assertEqual(len(snapshot.blocks), TAMPER_BLOCKS)
        self.assertTrue(verify_chain(snapshot).valid)
        lines = snapshot.to_lines()
        flips = random.Random(2024)
        detected = 0
        for _ in range(TAMPER_FLIPS):
            line_index = flips.randrange(len(lines))
            raw = bytearray(bytes.fromhex(lines[line_index]))
            bit = flips.randrange(len(raw) * 8)
            raw[bit // 8] ^= 1 << (bit % 8)
            mutated = list(lines)
            mutated[line_index] = bytes(raw).hex()
            verdict = verify_chain(ChainSnapshot.from_bytes(('\n'.join(mutated) + '\n').encode('ascii')))
            # line 0 is the header, line h + 1 holds block h
            detected += not verdict.valid and verdict.height <= max(line_index - 1, 0)
        self.assertEqual(detected, TAMPER_FLIPS)


class LedgerLatencyTest(unittest.TestCase):

    def test_mean_is_half_the_interval(self):
        interval = config.BLOCK_INTERVAL_PROFILES['juno']
        benchmark = LedgerBenchmark(300, interval, seed=0)
        records = benchmark.run()
        mean = sum(record.latency_ms for record in records) / float(len(records))
        self.assertAlmostEqual(mean, interval / 2.0, delta=0.15 * interval / 2.0)
        self.assertTrue(all(0 < record.latency_ms <= interval for record in records))


if __name__ == '__main__':
    unittest.main()
