import hashlib
from ecdsa.keys import BadSignatureError
from ecdsa.util import sigencode_string_canonize, sigdecode_string, MalformedSignature
from medchain.lib.crypto.keys import ORDER

SIGNATURE_SIZE = 64


def sign(secret_key, message):
    """RFC 6979 deterministic ECDSA over SHA-256, low-s normalized, encoded as ``r || s``.

    :param secret_key: Signer
    :type secret_key: medchain.lib.crypto.keys.SecretKey
    :param message: Message to sign
    :type message: bytes
    :rtype: bytes
    """
    return secret_key.signing_key().sign_deterministic(message, hashfunc=hashlib.sha256,
                                                       sigencode=sigencode_string_canonize)


def verify(public_key, message, signature):
    """Check a signature created by ``sign``. High-s twins are rejected so every message has exactly one signature.

    :type public_key: medchain.lib.crypto.keys.PublicKey
    :type message: bytes
    :type signature: bytes
    :rtype: bool
    """
    if len(signature) != SIGNATURE_SIZE or int.from_bytes(signature[32:], 'big') > ORDER // 2:
        return False
    try:
        return public_key.verifying_key().verify(signature, message, hashfunc=hashlib.sha256,
                                                 sigdecode=sigdecode_string)
    except (BadSignatureError, MalformedSignature):
        return False
