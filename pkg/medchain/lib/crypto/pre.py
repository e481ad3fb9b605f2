"""Single-hop, unidirectional proxy re-encryption with one key fragment.

A ciphertext is a capsule (the key encapsulation) plus a ChaCha20-Poly1305 payload keyed by HKDF over the
encapsulated point. The delegator derives a ``DelegationKey`` for one delegatee; a proxy holding only that key turns
a capsule into a ``ReEncryption`` the delegatee can open. The proxy never sees a secret key.
"""
import struct
import logging
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
import medchain.lib.util.config as config
from medchain.lib.crypto import signing
from medchain.lib.crypto.keys import ORDER, GENERATOR, U, POINT_SIZE, SCALAR_SIZE, PublicKey, SecretKey, \
    encode_point, decode_point, encode_scalar, decode_scalar, hash_to_scalar, random_scalar, random_bytes
from medchain.lib.util.exception import InvalidKeyException, CapsuleInvalidException, DecryptionFailedException, \
    DelegationKeyInvalidException, ReEncryptionInvalidException, SerializationException

KEY_SIZE = 32
NONCE_SIZE = 12
TAG_SIZE = 16
"""Authentication overhead of the payload"""

ID_SIZE = 32

_LENGTH = struct.Struct('>I')

logger = logging.getLogger(__name__)
logger.setLevel(config.DEFAULT_LOG_LEVEL)


def _require_public_key(key, what):
    if not isinstance(key, PublicKey):
        raise InvalidKeyException("%s is not a public key" % what)


def _require_secret_key(key, what):
    if not isinstance(key, SecretKey):
        raise InvalidKeyException("%s is not a secret key" % what)


def _kdf(point):
    material = HKDF(algorithm=hashes.SHA256(), length=KEY_SIZE + NONCE_SIZE, salt=None,
                    info=b'medchain/dem').derive(encode_point(point))
    return material[:KEY_SIZE], material[KEY_SIZE:]


###################
# Capsule
###################
class Capsule(object):
    """Key encapsulation ``(E, V, s)`` with ``E = r*G``, ``V = u*G`` and ``s = u + r*H(E, V)``."""
    __slots__ = ('e_point', 'v_point', 'sig_scalar', '_data')

    def __init__(self, e_point, v_point, sig_scalar):
        self.e_point = e_point
        self.v_point = v_point
        self.sig_scalar = sig_scalar
        self._data = encode_point(e_point) + encode_point(v_point) + encode_scalar(sig_scalar)

    def challenge(self):
        return hash_to_scalar(b'capsule', self._data[:2 * POINT_SIZE])

    def verify(self):
        """Self-verification: ``s*G == V + H(E, V)*E``.

        :rtype: bool
        """
        return GENERATOR * self.sig_scalar == self.v_point + self.e_point * self.challenge()

    def __bytes__(self):
        return self._data

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) != cls.serialized_size():
            raise SerializationException("Capsule must be %s bytes" % cls.serialized_size())
        return cls(decode_point(data[:POINT_SIZE]), decode_point(data[POINT_SIZE:2 * POINT_SIZE]),
                   decode_scalar(data[2 * POINT_SIZE:]))

    @staticmethod
    def serialized_size():
        return 2 * POINT_SIZE + SCALAR_SIZE

    def __eq__(self, other):
        return isinstance(other, Capsule) and other._data == self._data

    def __hash__(self):
        return hash(self._data)


class Ciphertext(object):
    """Capsule, associated data and the authenticated payload. The payload is the plaintext plus a 16 byte tag."""
    __slots__ = ('capsule', 'associated_data', 'dem_payload')

    def __init__(self, capsule, associated_data, dem_payload):
        self.capsule = capsule
        self.associated_data = bytes(associated_data)
        self.dem_payload = bytes(dem_payload)

    def aad(self):
        return bytes(self.capsule) + self.associated_data

    def __bytes__(self):
        return bytes(self.capsule) + _LENGTH.pack(len(self.associated_data)) + self.associated_data \
            + _LENGTH.pack(len(self.dem_payload)) + self.dem_payload

    @classmethod
    def from_bytes(cls, data):
        """
        :raises SerializationException: If ``data`` is not exactly one serialized ciphertext
        """
        data = bytes(data)
        offset = Capsule.serialized_size()
        capsule = Capsule.from_bytes(data[:offset])
        fields = []
        for _ in range(2):
            if offset + 4 > len(data):
                raise SerializationException("Truncated ciphertext")
            (length,) = _LENGTH.unpack_from(data, offset)
            offset += 4
            if offset + length > len(data):
                raise SerializationException("Truncated ciphertext")
            fields.append(data[offset:offset + length])
            offset += length
        if offset != len(data):
            raise SerializationException("Trailing bytes after ciphertext")
        if len(fields[1]) < TAG_SIZE:
            raise SerializationException("Payload shorter than the authentication tag")
        return cls(capsule, fields[0], fields[1])

    def __eq__(self, other):
        return isinstance(other, Ciphertext) and bytes(other) == bytes(self)

    def __hash__(self):
        return hash(bytes(self))

    def __len__(self):
        return len(bytes(self))


def encrypt(pk, plaintext, associated_data=b'', entropy=None):
    """Encrypt ``plaintext`` for the holder of ``pk``.

    :param pk: Recipient (delegator) public key
    :type pk: PublicKey
    :param plaintext: Data to encrypt, may be empty
    :type plaintext: bytes
    :param associated_data: Context that is authenticated but not encrypted
    :type associated_data: bytes
    :param entropy: Entropy source (``os.urandom`` if omitted)
    :rtype: Ciphertext
    :raises InvalidKeyException: If ``pk`` is not a valid public key
    """
    _require_public_key(pk, 'Encryption key')
    r = random_scalar(entropy)
    u = random_scalar(entropy)
    e_point = GENERATOR * r
    v_point = GENERATOR * u
    h = hash_to_scalar(b'capsule', encode_point(e_point), encode_point(v_point))
    capsule = Capsule(e_point, v_point, (u + r * h) % ORDER)
    key, nonce = _kdf(pk.point * ((r + u) % ORDER))
    ciphertext = Ciphertext(capsule, associated_data, b'')
    ciphertext.dem_payload = ChaCha20Poly1305(key).encrypt(nonce, bytes(plaintext), ciphertext.aad())
    logger.debug("Encrypted %s bytes into %s bytes" % (len(plaintext), len(ciphertext.dem_payload)))
    return ciphertext


def _open(point, ciphertext):
    key, nonce = _kdf(point)
    try:
        return ChaCha20Poly1305(key).decrypt(nonce, ciphertext.dem_payload, ciphertext.aad())
    except InvalidTag:
        raise DecryptionFailedException("Payload authentication failed")


def decrypt_original(sk, ct):
    """Decrypt as the key holder the ciphertext was made for.

    :type sk: SecretKey
    :type ct: Ciphertext
    :rtype: bytes
    :raises CapsuleInvalidException: If the capsule does not self-verify
    :raises DecryptionFailedException: If ``sk`` is not the matching key or the payload was altered
    """
    _require_secret_key(sk, 'Decryption key')
    if not ct.capsule.verify():
        raise CapsuleInvalidException()
    return _open((ct.capsule.e_point + ct.capsule.v_point) * sk.scalar, ct)


###################
# Delegation
###################
class DelegationKey(object):
    """Re-encryption key from one delegator to one delegatee.

    ``rk = sk_A / d`` where ``d`` is derived from the ephemeral precursor ``X = x*G`` and the delegatee key, so only the
    delegatee can recompute ``d``. ``delegatee_binding = rk*U`` commits to ``rk`` and ``proof`` is the delegator's
    signature over the id, the binding, the precursor and both public keys.
    """
    __slots__ = ('id', 'rk_scalar', 'precursor', 'delegatee_binding', 'proof')

    def __init__(self, id, rk_scalar, precursor, delegatee_binding, proof):
        self.id = bytes(id)
        self.rk_scalar = rk_scalar
        self.precursor = precursor
        self.delegatee_binding = delegatee_binding
        self.proof = bytes(proof)

    def verify_binding(self):
        """Check that ``delegatee_binding`` commits to ``rk_scalar``. Needs no public keys."""
        return 1 <= self.rk_scalar < ORDER and U * self.rk_scalar == self.delegatee_binding

    def verify(self, pk_delegator, pk_delegatee):
        """Check binding and signature against the key pair the key claims to connect.

        :type pk_delegator: PublicKey
        :type pk_delegatee: PublicKey
        :rtype: bool
        """
        if not self.verify_binding():
            return False
        return signing.verify(pk_delegator, delegation_message(self.id, self.delegatee_binding, self.precursor,
                                                               pk_delegator, pk_delegatee), self.proof)

    def __bytes__(self):
        return self.id + encode_scalar(self.rk_scalar) + encode_point(self.precursor) \
            + encode_point(self.delegatee_binding) + self.proof

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) != cls.serialized_size():
            raise SerializationException("Delegation key must be %s bytes" % cls.serialized_size())
        offset = ID_SIZE
        rk = decode_scalar(data[offset:offset + SCALAR_SIZE])
        offset += SCALAR_SIZE
        precursor = decode_point(data[offset:offset + POINT_SIZE])
        offset += POINT_SIZE
        binding = decode_point(data[offset:offset + POINT_SIZE])
        offset += POINT_SIZE
        return cls(data[:ID_SIZE], rk, precursor, binding, data[offset:])

    @staticmethod
    def serialized_size():
        return ID_SIZE + SCALAR_SIZE + 2 * POINT_SIZE + signing.SIGNATURE_SIZE

    def __eq__(self, other):
        return isinstance(other, DelegationKey) and bytes(other) == bytes(self)

    def __hash__(self):
        return hash(bytes(self))

    def __repr__(self):
        return 'DelegationKey(%s)' % self.id.hex()[:16]


def delegation_message(key_id, binding, precursor, pk_delegator, pk_delegatee):
    return b'medchain/delegation|' + key_id + encode_point(binding) + encode_point(precursor) \
        + bytes(pk_delegator) + bytes(pk_delegatee)


def _delegation_factor(precursor, pk_delegatee, shared_point):
    return hash_to_scalar(b'delegation', encode_point(precursor), bytes(pk_delegatee), encode_point(shared_point))


def generate_delegation_key(sk_delegator, pk_delegatee, entropy=None):
    """Create the key that lets a proxy re-encrypt the delegator's capsules for ``pk_delegatee``.

    :type sk_delegator: SecretKey
    :type pk_delegatee: PublicKey
    :param entropy: Entropy source (``os.urandom`` if omitted)
    :rtype: DelegationKey
    :raises InvalidKeyException: If either key is invalid
    """
    _require_secret_key(sk_delegator, 'Delegator key')
    _require_public_key(pk_delegatee, 'Delegatee key')
    x = random_scalar(entropy)
    precursor = GENERATOR * x
    d = _delegation_factor(precursor, pk_delegatee, pk_delegatee.point * x)
    rk = sk_delegator.scalar * pow(d, -1, ORDER) % ORDER
    binding = U * rk
    key_id = random_bytes(ID_SIZE, entropy)
    proof = signing.sign(sk_delegator, delegation_message(key_id, binding, precursor, sk_delegator.public_key(),
                                                          pk_delegatee))
    return DelegationKey(key_id, rk, precursor, binding, proof)


def verify(dk, pk_delegator, pk_delegatee):
    """Module level form of ``DelegationKey.verify``."""
    return dk.verify(pk_delegator, pk_delegatee)


###################
# Re-encryption
###################
class ReEncryption(object):
    """Capsule transformed under a delegation key.

    ``proof`` holds the commitments ``E2, V2, U2``, the binding ``U1``, the response ``z3`` of a proof that
    ``E' / E``, ``V' / V`` and ``U1 / U`` share one exponent, followed by the delegation key id and signature.
    """
    __slots__ = ('e_prime', 'v_prime', 'precursor', 'proof')

    PROOF_SIZE = 4 * POINT_SIZE + SCALAR_SIZE + ID_SIZE + signing.SIGNATURE_SIZE

    def __init__(self, e_prime, v_prime, precursor, proof):
        self.e_prime = e_prime
        self.v_prime = v_prime
        self.precursor = precursor
        self.proof = bytes(proof)

    def _proof_parts(self):
        if len(self.proof) != self.PROOF_SIZE:
            raise SerializationException("Proof must be %s bytes" % self.PROOF_SIZE)
        points = [decode_point(self.proof[i * POINT_SIZE:(i + 1) * POINT_SIZE]) for i in range(4)]
        offset = 4 * POINT_SIZE
        z3 = decode_scalar(self.proof[offset:offset + SCALAR_SIZE])
        offset += SCALAR_SIZE
        key_id = self.proof[offset:offset + ID_SIZE]
        signature = self.proof[offset + ID_SIZE:]
        return points, z3, key_id, signature

    def verify(self, capsule, pk_delegator=None, pk_delegatee=None):
        """Check the correctness proof against ``capsule`` and, if both keys are given, the delegation signature.

        :type capsule: Capsule
        :rtype: bool
        """
        try:
            (e2, v2, u2, u1), z3, key_id, signature = self._proof_parts()
        except SerializationException:
            return False
        h = _reencryption_challenge(capsule, self.e_prime, e2, self.v_prime, v2, u1, u2)
        if capsule.e_point * z3 != e2 + self.e_prime * h:
            return False
        if capsule.v_point * z3 != v2 + self.v_prime * h:
            return False
        if U * z3 != u2 + u1 * h:
            return False
        if pk_delegator is not None and pk_delegatee is not None:
            return self.verify_delegation(pk_delegator, pk_delegatee)
        return True

    def verify_delegation(self, pk_delegator, pk_delegatee):
        """Check the carried delegation signature, which names both public keys.

        :rtype: bool
        """
        try:
            (_, _, _, u1), _, key_id, signature = self._proof_parts()
        except SerializationException:
            return False
        return signing.verify(pk_delegator, delegation_message(key_id, u1, self.precursor, pk_delegator, pk_delegatee),
                              signature)

    def __bytes__(self):
        return encode_point(self.e_prime) + encode_point(self.v_prime) + encode_point(self.precursor) + self.proof

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) != cls.serialized_size():
            raise SerializationException("Re-encryption must be %s bytes" % cls.serialized_size())
        reencryption = cls(decode_point(data[:POINT_SIZE]), decode_point(data[POINT_SIZE:2 * POINT_SIZE]),
                           decode_point(data[2 * POINT_SIZE:3 * POINT_SIZE]), data[3 * POINT_SIZE:])
        reencryption._proof_parts()
        return reencryption

    @classmethod
    def serialized_size(cls):
        return 3 * POINT_SIZE + cls.PROOF_SIZE

    def __eq__(self, other):
        return isinstance(other, ReEncryption) and bytes(other) == bytes(self)

    def __hash__(self):
        return hash(bytes(self))


def _reencryption_challenge(capsule, e_prime, e2, v_prime, v2, u1, u2):
    return hash_to_scalar(b'reencryption', encode_point(capsule.e_point), encode_point(e_prime), encode_point(e2),
                          encode_point(capsule.v_point), encode_point(v_prime), encode_point(v2),
                          encode_point(U), encode_point(u1), encode_point(u2))


def reencrypt(dk, capsule, entropy=None):
    """Proxy transformation. Takes no secret key.

    :type dk: DelegationKey
    :type capsule: Capsule
    :param entropy: Entropy source for the proof (``os.urandom`` if omitted)
    :rtype: ReEncryption
    :raises CapsuleInvalidException: If the capsule does not self-verify
    :raises DelegationKeyInvalidException: If the key's binding does not hold
    """
    if not capsule.verify():
        raise CapsuleInvalidException()
    if not dk.verify_binding():
        raise DelegationKeyInvalidException()
    rk = dk.rk_scalar
    e_prime = capsule.e_point * rk
    v_prime = capsule.v_point * rk
    t = random_scalar(entropy)
    e2 = capsule.e_point * t
    v2 = capsule.v_point * t
    u2 = U * t
    u1 = dk.delegatee_binding
    h = _reencryption_challenge(capsule, e_prime, e2, v_prime, v2, u1, u2)
    z3 = (t + h * rk) % ORDER
    proof = encode_point(e2) + encode_point(v2) + encode_point(u2) + encode_point(u1) + encode_scalar(z3) \
        + dk.id + dk.proof
    return ReEncryption(e_prime, v_prime, dk.precursor, proof)


def decrypt_reencrypted(sk_delegatee, pk_delegator, re, ct):
    """Decrypt a re-encrypted capsule as the delegatee.

    :type sk_delegatee: SecretKey
    :type pk_delegator: PublicKey
    :type re: ReEncryption
    :type ct: Ciphertext
    :rtype: bytes
    :raises ReEncryptionInvalidException: If the re-encryption does not belong to ``ct.capsule``
    :raises DecryptionFailedException: If the keys are not the ones the delegation was made for, or the payload
        does not authenticate
    """
    _require_secret_key(sk_delegatee, 'Delegatee key')
    _require_public_key(pk_delegator, 'Delegator key')
    capsule = ct.capsule
    if not capsule.verify():
        raise CapsuleInvalidException()
    if not re.verify(capsule):
        raise ReEncryptionInvalidException()
    pk_delegatee = sk_delegatee.public_key()
    if not re.verify_delegation(pk_delegator, pk_delegatee):
        raise DecryptionFailedException("Delegation was not made from this delegator to this delegatee")
    d = _delegation_factor(re.precursor, pk_delegatee, re.precursor * sk_delegatee.scalar)
    expected = pk_delegator.point * (capsule.sig_scalar * pow(d, -1, ORDER) % ORDER)
    if expected != re.e_prime * capsule.challenge() + re.v_prime:
        raise DecryptionFailedException("Re-encryption does not open with these keys")
    return _open((re.e_prime + re.v_prime) * d, ct)
