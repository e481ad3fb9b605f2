"""Known-answer records: ``seed, pk, plaintext_hash, ciphertext_hash`` per line, all hex.

Everything in a record is derived from the seed through ``SeededEntropy``, so a record written on one machine must
be reproduced bit-exactly on any other.
"""
import os
import hashlib
import logging
import medchain.lib.util.config as config
from medchain.lib.crypto.keys import SeededEntropy, keygen
from medchain.lib.crypto.pre import encrypt
from medchain.lib.util.exception import SerializationException

PLAINTEXT_SIZE = 256
ASSOCIATED_DATA = b'medchain/kat'

KAT_FILE = os.path.join(os.path.dirname(__file__), os.pardir, os.pardir, 'data', 'kat.txt')
"""Records shipped with the package"""


def kat_record(seed):
    """Compute the record for ``seed``.

    :type seed: bytes
    :rtype: tuple of str
    """
    entropy = SeededEntropy(seed)
    _, pk = keygen(entropy)
    plaintext = entropy(PLAINTEXT_SIZE)
    ciphertext = encrypt(pk, plaintext, ASSOCIATED_DATA, entropy)
    return (seed.hex(), bytes(pk).hex(), hashlib.sha256(plaintext).hexdigest(),
            hashlib.sha256(bytes(ciphertext)).hexdigest())


def format_record(record):
    return ', '.join(record)


def parse_record(line):
    fields = [field.strip() for field in line.split(',')]
    if len(fields) != 4:
        raise SerializationException("KAT line needs 4 fields, got %s" % len(fields))
    try:
        bytes.fromhex(fields[0])
    except ValueError:
        raise SerializationException("KAT seed is not hex")
    return tuple(fields)


def write_kat(path, seeds):
    with open(path, 'w') as kat_file:
        for seed in seeds:
            kat_file.write(format_record(kat_record(seed)) + '\n')


def check_kat(path=KAT_FILE):
    """Recompute every record of the file at ``path`` (the shipped records if omitted).

    :return: Seeds (hex) whose records do not match
    :rtype: list of str
    """
    logger = logging.getLogger(__name__)
    logger.setLevel(config.DEFAULT_LOG_LEVEL)
    mismatches = []
    with open(path) as kat_file:
        for line in kat_file:
            if not line.strip() or line.startswith('#'):
                continue
            expected = parse_record(line)
            actual = kat_record(bytes.fromhex(expected[0]))
            if actual != expected:
                logger.warning("KAT mismatch for seed %s" % expected[0])
                mismatches.append(expected[0])
    return mismatches
