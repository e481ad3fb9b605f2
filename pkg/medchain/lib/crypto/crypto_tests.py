import os
import shutil
import tempfile
import unittest
from hypothesis import given, settings, strategies as st
import medchain.lib.crypto.pre as pre
import medchain.lib.crypto.kat as kat
import medchain.lib.crypto.signing as signing
from medchain.lib.crypto.keys import SecretKey, PublicKey, SeededEntropy, keygen, GENERATOR, ORDER, random_scalar
from medchain.lib.util import exception

_crypto_settings = settings(max_examples=15, deadline=None)


def _flip(data, bit):
    data = bytearray(data)
    data[bit // 8] ^= 1 << (bit % 8)
    return bytes(data)


class KeygenTest(unittest.TestCase):

    def test_seeded_keygen_is_deterministic(self):
        seed = b'\x01' * 32
        sk_1, pk_1 = keygen(SeededEntropy(seed))
        sk_2, pk_2 = keygen(SeededEntropy(seed))
        self.assertEqual(sk_1, sk_2)
        self.assertEqual(bytes(pk_1), bytes(pk_2))

    def test_fixed_seed_key_pair(self):
        sk, pk = keygen(SeededEntropy(b'\x01' * 32))
        self.assertEqual(sk.to_secret_bytes().hex(),
                         '8e4322a804e7e33bc153d59e2b3807f4dc6bc675110a6ec3fde59819173c2c95')
        self.assertEqual(bytes(pk).hex(), '03fc7b4b1ac0345591954e0fe19367d5b1e043c5cd5ad176386418be5e1fc03edb')

    def test_independent_keys_differ(self):
        _, pk_1 = keygen()
        _, pk_2 = keygen()
        self.assertNotEqual(pk_1, pk_2)

    def test_public_key_matches_secret(self):
        sk, pk = keygen()
        self.assertEqual(PublicKey(GENERATOR * sk.scalar), pk)
        self.assertEqual(PublicKey.from_bytes(bytes(pk)), pk)
        self.assertEqual(SecretKey.from_bytes(sk.to_secret_bytes()), sk)

    def test_short_entropy_is_fatal(self):
        with self.assertRaises(exception.EntropyException):
            keygen(lambda n: b'\x00' * (n - 1))

    def test_failing_entropy_is_fatal(self):
        def broken(n):
            raise IOError("no device")
        with self.assertRaises(exception.EntropyException):
            keygen(broken)

    def test_secret_scalar_bounds(self):
        with self.assertRaises(exception.InvalidKeyException):
            SecretKey(0)
        with self.assertRaises(exception.InvalidKeyException):
            SecretKey(ORDER)

    def test_secret_key_repr_hides_scalar(self):
        sk, _ = keygen()
        self.assertNotIn(str(sk.scalar), repr(sk))

    def test_invalid_public_key_bytes(self):
        with self.assertRaises(exception.InvalidKeyException):
            PublicKey.from_bytes(b'\x02' + b'\xff' * 32)
        with self.assertRaises(exception.InvalidKeyException):
            PublicKey.from_bytes(b'\x04' + b'\x01' * 32)


class SigningTest(unittest.TestCase):

    def setUp(self):
        self.sk, self.pk = keygen(SeededEntropy(b'signing'))

    def test_sign_is_deterministic(self):
        self.assertEqual(signing.sign(self.sk, b'message'), signing.sign(self.sk, b'message'))

    def test_verify(self):
        signature = signing.sign(self.sk, b'message')
        self.assertEqual(len(signature), signing.SIGNATURE_SIZE)
        self.assertTrue(signing.verify(self.pk, b'message', signature))
        self.assertFalse(signing.verify(self.pk, b'other', signature))
        self.assertFalse(signing.verify(keygen()[1], b'message', signature))

    def test_high_s_twin_rejected(self):
        signature = signing.sign(self.sk, b'message')
        s = int.from_bytes(signature[32:], 'big')
        twin = signature[:32] + (ORDER - s).to_bytes(32, 'big')
        self.assertFalse(signing.verify(self.pk, b'message', twin))


class EncryptionTest(unittest.TestCase):

    def setUp(self):
        self.sk, self.pk = keygen(SeededEntropy(b'patient'))

    def test_empty_plaintext(self):
        ct = pre.encrypt(self.pk, b'', b'')
        self.assertTrue(ct.capsule.verify())
        self.assertEqual(len(ct.dem_payload), pre.TAG_SIZE)
        self.assertEqual(pre.decrypt_original(self.sk, ct), b'')

    @_crypto_settings
    @given(st.binary(max_size=1024), st.binary(max_size=32))
    def test_round_trip(self, plaintext, associated_data):
        ct = pre.encrypt(self.pk, plaintext, associated_data)
        self.assertEqual(len(ct.dem_payload), len(plaintext) + pre.TAG_SIZE)
        self.assertEqual(pre.decrypt_original(self.sk, ct), plaintext)

    def test_wrong_key_fails_authentication(self):
        ct = pre.encrypt(self.pk, b'amoxicillin 500mg')
        for _ in range(20):
            with self.assertRaises(exception.DecryptionFailedException):
                pre.decrypt_original(keygen()[0], ct)

    def test_tampered_payload(self):
        ct = pre.encrypt(self.pk, b'amoxicillin 500mg')
        tampered = pre.Ciphertext(ct.capsule, ct.associated_data, _flip(ct.dem_payload, 3))
        with self.assertRaises(exception.DecryptionFailedException):
            pre.decrypt_original(self.sk, tampered)

    def test_tampered_associated_data(self):
        ct = pre.encrypt(self.pk, b'amoxicillin 500mg', b'rx-1')
        tampered = pre.Ciphertext(ct.capsule, b'rx-2', ct.dem_payload)
        with self.assertRaises(exception.DecryptionFailedException):
            pre.decrypt_original(self.sk, tampered)

    def test_invalid_capsule_is_distinguishable(self):
        ct = pre.encrypt(self.pk, b'data')
        capsule = pre.Capsule(ct.capsule.e_point, ct.capsule.v_point, (ct.capsule.sig_scalar + 1) % ORDER)
        with self.assertRaises(exception.CapsuleInvalidException):
            pre.decrypt_original(self.sk, pre.Ciphertext(capsule, ct.associated_data, ct.dem_payload))

    def test_invalid_public_key_rejected_before_work(self):
        with self.assertRaises(exception.InvalidKeyException):
            pre.encrypt(b'\x02' * 33, b'data')

    def test_serialization_is_bit_exact(self):
        ct = pre.encrypt(self.pk, b'data', b'ad')
        data = bytes(ct)
        self.assertEqual(bytes(pre.Ciphertext.from_bytes(data)), data)
        self.assertEqual(len(bytes(ct.capsule)), 98)
        self.assertEqual(pre.Capsule.from_bytes(bytes(ct.capsule)), ct.capsule)
        with self.assertRaises(exception.SerializationException):
            pre.Ciphertext.from_bytes(data + b'\x00')

    def test_capsule_bit_flips_detected(self):
        ct = pre.encrypt(self.pk, b'data')
        raw = bytes(ct.capsule)
        for bit in range(0, len(raw) * 8, 37):
            try:
                capsule = pre.Capsule.from_bytes(_flip(raw, bit))
            except exception.SerializationException:
                continue
            with self.assertRaises((exception.CapsuleInvalidException, exception.DecryptionFailedException)):
                pre.decrypt_original(self.sk, pre.Ciphertext(capsule, ct.associated_data, ct.dem_payload))


class DelegationTest(unittest.TestCase):

    def setUp(self):
        entropy = SeededEntropy(b'delegation')
        self.sk_a, self.pk_a = keygen(entropy)
        self.sk_b, self.pk_b = keygen(entropy)
        self.sk_c, self.pk_c = keygen(entropy)
        self.dk = pre.generate_delegation_key(self.sk_a, self.pk_b)

    def test_honest_key_verifies(self):
        self.assertTrue(pre.verify(self.dk, self.pk_a, self.pk_b))
        self.assertFalse(self.dk.verify(self.pk_a, self.pk_c))
        self.assertFalse(self.dk.verify(self.pk_c, self.pk_b))

    def test_perturbed_rk_fails(self):
        perturbed = pre.DelegationKey(self.dk.id, (self.dk.rk_scalar + 1) % ORDER, self.dk.precursor,
                                      self.dk.delegatee_binding, self.dk.proof)
        self.assertFalse(perturbed.verify(self.pk_a, self.pk_b))
        ct = pre.encrypt(self.pk_a, b'x')
        with self.assertRaises(exception.DelegationKeyInvalidException):
            pre.reencrypt(perturbed, ct.capsule)

    def test_delegation_key_bit_flips_detected(self):
        raw = bytes(self.dk)
        self.assertEqual(len(raw), 194)
        for bit in range(0, len(raw) * 8, 11):
            try:
                flipped = pre.DelegationKey.from_bytes(_flip(raw, bit))
            except exception.SerializationException:
                continue
            self.assertFalse(flipped.verify(self.pk_a, self.pk_b), "bit %s" % bit)

    def test_invalid_delegatee_rejected(self):
        with self.assertRaises(exception.InvalidKeyException):
            pre.generate_delegation_key(self.sk_a, None)

    def test_full_chain(self):
        plaintext = os.urandom(600)
        ct = pre.encrypt(self.pk_a, plaintext, b'PI')
        re = pre.reencrypt(self.dk, ct.capsule)
        self.assertTrue(re.verify(ct.capsule, self.pk_a, self.pk_b))
        self.assertEqual(pre.decrypt_reencrypted(self.sk_b, self.pk_a, re, ct), plaintext)

    @_crypto_settings
    @given(st.integers(min_value=430, max_value=820))
    def test_personal_information_sizes(self, size):
        plaintext = os.urandom(size)
        ct = pre.encrypt(self.pk_a, plaintext)
        re = pre.reencrypt(self.dk, ct.capsule)
        self.assertEqual(pre.decrypt_reencrypted(self.sk_b, self.pk_a, re, ct), plaintext)

    def test_reencrypt_takes_no_secret_key(self):
        import inspect
        self.assertEqual(list(inspect.signature(pre.reencrypt).parameters), ['dk', 'capsule', 'entropy'])

    def test_swapped_delegator_fails(self):
        ct = pre.encrypt(self.pk_a, b'data')
        re = pre.reencrypt(self.dk, ct.capsule)
        with self.assertRaises(exception.DecryptionFailedException):
            pre.decrypt_reencrypted(self.sk_b, self.pk_c, re, ct)

    def test_cross_delegation_fails(self):
        ct_c = pre.encrypt(self.pk_c, b'for C only')
        re = pre.reencrypt(self.dk, ct_c.capsule)
        with self.assertRaises(exception.DecryptionFailedException):
            pre.decrypt_reencrypted(self.sk_b, self.pk_a, re, ct_c)

    def test_proxy_cannot_decrypt(self):
        ct = pre.encrypt(self.pk_a, b'data')
        re = pre.reencrypt(self.dk, ct.capsule)
        for _ in range(10):
            with self.assertRaises(exception.DecryptionFailedException):
                pre.decrypt_reencrypted(keygen()[0], self.pk_a, re, ct)

    def test_reencryption_for_other_capsule_rejected(self):
        ct_1 = pre.encrypt(self.pk_a, b'one')
        ct_2 = pre.encrypt(self.pk_a, b'two')
        re = pre.reencrypt(self.dk, ct_1.capsule)
        with self.assertRaises(exception.ReEncryptionInvalidException):
            pre.decrypt_reencrypted(self.sk_b, self.pk_a, re, ct_2)

    def test_reencryption_bit_flips_detected(self):
        ct = pre.encrypt(self.pk_a, b'data')
        raw = bytes(pre.reencrypt(self.dk, ct.capsule))
        self.assertEqual(len(raw), 359)
        for bit in range(0, len(raw) * 8, 29):
            try:
                flipped = pre.ReEncryption.from_bytes(_flip(raw, bit))
            except exception.SerializationException:
                continue
            with self.assertRaises((exception.ReEncryptionInvalidException, exception.DecryptionFailedException)):
                pre.decrypt_reencrypted(self.sk_b, self.pk_a, flipped, ct)

    def test_serialization_round_trip(self):
        ct = pre.encrypt(self.pk_a, b'data')
        re = pre.reencrypt(self.dk, ct.capsule)
        self.assertEqual(bytes(pre.DelegationKey.from_bytes(bytes(self.dk))), bytes(self.dk))
        self.assertEqual(bytes(pre.ReEncryption.from_bytes(bytes(re))), bytes(re))

    def test_seeded_delegation_is_deterministic(self):
        dk_1 = pre.generate_delegation_key(self.sk_a, self.pk_b, SeededEntropy(b'x'))
        dk_2 = pre.generate_delegation_key(self.sk_a, self.pk_b, SeededEntropy(b'x'))
        self.assertEqual(bytes(dk_1), bytes(dk_2))


class KnownAnswerTest(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_records_reproduce(self):
        path = os.path.join(self.tmp, 'kat.txt')
        kat.write_kat(path, [bytes([i]) * 32 for i in range(1, 4)])
        self.assertEqual(kat.check_kat(path), [])
        with open(path) as kat_file:
            lines = kat_file.read().splitlines()
        self.assertEqual(len(lines), 3)
        self.assertTrue(lines[0].startswith('01' * 32 + ', '))

    def test_shipped_records(self):
        with open(kat.KAT_FILE) as kat_file:
            records = [kat.parse_record(line) for line in kat_file if line.strip() and not line.startswith('#')]
        self.assertEqual(len(records), 3)
        self.assertEqual(kat.check_kat(), [])

    def test_mismatch_reported(self):
        path = os.path.join(self.tmp, 'kat.txt')
        record = list(kat.kat_record(b'\x01' * 32))
        record[3] = '00' * 32
        with open(path, 'w') as kat_file:
            kat_file.write(kat.format_record(record) + '\n')
        self.assertEqual(kat.check_kat(path), ['01' * 32])

    def test_random_scalar_in_range(self):
        entropy = SeededEntropy(b'range')
        for _ in range(50):
            self.assertTrue(1 <= random_scalar(entropy) < ORDER)


if __name__ == '__main__':
    unittest.main()
