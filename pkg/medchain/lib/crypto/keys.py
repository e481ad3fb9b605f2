import os
import hashlib
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from ecdsa import SECP256k1, SigningKey, VerifyingKey
from ecdsa.ellipticcurve import PointJacobi, INFINITY
from ecdsa.errors import MalformedPointError
from medchain.lib.util.exception import InvalidKeyException, EntropyException, SerializationException

CURVE = SECP256k1
ORDER = int(CURVE.order)
GENERATOR = CURVE.generator

POINT_SIZE = 33
"""Length of a compressed point encoding"""

SCALAR_SIZE = 32

DOMAIN = b'MEDCHAIN-PRE-v1/'
"""Prefix of every hash input, so no hash computed here collides with one computed elsewhere"""


###################
# Group helpers
###################
def is_identity(point):
    return point is INFINITY or point == INFINITY


def encode_point(point):
    """Compressed SEC1 encoding of ``point``.

    :raises InvalidKeyException: For the identity element, which has no compressed encoding
    """
    if is_identity(point):
        raise InvalidKeyException("The identity element can not be encoded")
    return point.to_bytes('compressed')


def decode_point(data, generator=False):
    """Parse a compressed point and make sure the encoding is the canonical one.

    :param data: 33 bytes
    :type data: bytes
    :param generator: Whether to precompute multiplication tables for the point
    :type generator: bool
    :rtype: PointJacobi
    :raises SerializationException: If ``data`` is not the canonical encoding of a curve point
    """
    data = bytes(data)
    if len(data) != POINT_SIZE:
        raise SerializationException("Expected %s bytes for a point, got %s" % (POINT_SIZE, len(data)))
    try:
        point = PointJacobi.from_bytes(CURVE.curve, data, valid_encodings=('compressed',), order=ORDER,
                                       generator=generator)
    except (MalformedPointError, ValueError) as err:
        raise SerializationException("Not a curve point: %s" % err)
    if encode_point(point) != data:
        raise SerializationException("Non-canonical point encoding")
    return point


def encode_scalar(value):
    return value.to_bytes(SCALAR_SIZE, 'big')


def decode_scalar(data):
    """Parse a fixed-width scalar in ``[1, q)``.

    :raises SerializationException: If ``data`` has the wrong size or is out of range
    """
    if len(data) != SCALAR_SIZE:
        raise SerializationException("Expected %s bytes for a scalar, got %s" % (SCALAR_SIZE, len(data)))
    value = int.from_bytes(data, 'big')
    if not 1 <= value < ORDER:
        raise SerializationException("Scalar out of range")
    return value


def hash_to_scalar(label, *parts):
    """Map ``parts`` to a nonzero scalar.

    The input is the domain prefix, the label and the concatenated parts, which are fixed-width encodings. The SHA-512
    digest is reduced into ``[1, q)`` so the result is always invertible.

    :param label: Purpose of the hash
    :type label: bytes
    :param parts: Byte strings to hash
    :rtype: int
    """
    digest = hashlib.sha512(DOMAIN + label + b'|' + b''.join(parts)).digest()
    return int.from_bytes(digest, 'big') % (ORDER - 1) + 1


def _derive_second_generator():
    counter = 0
    while True:
        digest = hashlib.sha256(DOMAIN + b'U' + counter.to_bytes(4, 'big')).digest()
        try:
            return decode_point(b'\x02' + digest, generator=True)
        except SerializationException:
            counter += 1


U = _derive_second_generator()
"""Second generator whose discrete logarithm to ``GENERATOR`` is unknown"""


###################
# Entropy
###################
class SeededEntropy(object):
    """Deterministic entropy source: the ChaCha20 keystream keyed by SHA-256 of the seed.

    Successive calls continue the stream, so one instance reproduces a whole run.
    """

    def __init__(self, seed):
        """
        :param seed: Arbitrary seed bytes
        :type seed: bytes
        """
        key = hashlib.sha256(DOMAIN + b'entropy|' + bytes(seed)).digest()
        self._stream = Cipher(algorithms.ChaCha20(key, b'\x00' * 16), mode=None).encryptor()

    def __call__(self, length):
        return self._stream.update(b'\x00' * length)


def random_scalar(entropy=None):
    """Draw a uniformly distributed scalar in ``[1, q)``.

    :param entropy: Callable returning the requested amount of random bytes (``os.urandom`` if omitted)
    :rtype: int
    :raises EntropyException: If the entropy source fails or returns too few bytes
    """
    entropy = entropy or os.urandom
    try:
        data = entropy(64)
    except Exception as err:
        raise EntropyException("Entropy source failed: %s" % err)
    if not isinstance(data, bytes) or len(data) != 64:
        raise EntropyException("Entropy source returned %s instead of 64 bytes" %
                               (len(data) if isinstance(data, bytes) else type(data).__name__))
    return int.from_bytes(data, 'big') % (ORDER - 1) + 1


def random_bytes(length, entropy=None):
    entropy = entropy or os.urandom
    data = entropy(length)
    if not isinstance(data, bytes) or len(data) != length:
        raise EntropyException("Entropy source did not return %s bytes" % length)
    return data


###################
# Keys
###################
class SecretKey(object):
    """Scalar in ``[1, q)``. Never printed and never part of any serialized transaction."""
    __slots__ = ('_scalar', '_public_key', '_signing_key')

    def __init__(self, scalar):
        if not isinstance(scalar, int) or not 1 <= scalar < ORDER:
            raise InvalidKeyException("Secret scalar out of range")
        self._scalar = scalar
        self._public_key = None
        self._signing_key = None

    @property
    def scalar(self):
        return self._scalar

    def public_key(self):
        if self._public_key is None:
            self._public_key = PublicKey(GENERATOR * self._scalar)
        return self._public_key

    def signing_key(self):
        if self._signing_key is None:
            self._signing_key = SigningKey.from_secret_exponent(self._scalar, curve=CURVE, hashfunc=hashlib.sha256)
        return self._signing_key

    def to_secret_bytes(self):
        return encode_scalar(self._scalar)

    @classmethod
    def from_bytes(cls, data):
        try:
            return cls(decode_scalar(bytes(data)))
        except SerializationException as err:
            raise InvalidKeyException(err.message)

    def __eq__(self, other):
        return isinstance(other, SecretKey) and other._scalar == self._scalar

    def __hash__(self):
        return hash(('SecretKey', self._scalar))

    def __repr__(self):
        return 'SecretKey(...)'


class PublicKey(object):
    """Curve point other than the identity, compared by its compressed encoding."""
    __slots__ = ('_point', '_data', '_verifying_key')

    def __init__(self, point):
        if point is None or is_identity(point):
            raise InvalidKeyException("Public key must not be the identity element")
        self._point = point
        self._data = encode_point(point)
        self._verifying_key = None

    @property
    def point(self):
        return self._point

    def verifying_key(self):
        if self._verifying_key is None:
            self._verifying_key = VerifyingKey.from_public_point(self._point, curve=CURVE, hashfunc=hashlib.sha256)
        return self._verifying_key

    def __bytes__(self):
        return self._data

    @classmethod
    def from_bytes(cls, data):
        """
        :raises InvalidKeyException: If ``data`` does not encode a valid point
        """
        try:
            return cls(decode_point(data))
        except SerializationException as err:
            raise InvalidKeyException(err.message)

    @staticmethod
    def serialized_size():
        return POINT_SIZE

    def __eq__(self, other):
        return isinstance(other, PublicKey) and other._data == self._data

    def __hash__(self):
        return hash(self._data)

    def __repr__(self):
        return 'PublicKey(%s)' % self._data.hex()


def keygen(entropy=None):
    """Create a fresh key pair.

    :param entropy: Callable returning random bytes (``os.urandom`` if omitted)
    :return: Secret and public key
    :rtype: tuple of (SecretKey, PublicKey)
    :raises EntropyException: If the entropy source fails; no key is returned in that case
    """
    secret_key = SecretKey(random_scalar(entropy))
    return secret_key, secret_key.public_key()
