#! /usr/bin/env python
import re
import logging
import hashlib
import threading
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Tuple
import medchain.lib.util.exception as exceptions
import medchain.lib.util.config as config
import medchain.lib.util.events as events
import medchain.lib.util.codec as codec
import medchain.lib.contracts as contracts
from medchain.lib.contracts.base import BlockContext
from medchain.lib.crypto import signing
from medchain.lib.crypto.keys import PublicKey
from medchain.lib.util.setupParser import load_file

ZERO_HASH = b'\x00' * 32
"""Previous hash of the genesis block"""

CHAIN_FORMAT = 'medchain-chain-v1'
"""First field of a chain file header"""

HEX_LINE = re.compile(rb'(?:[0-9a-f]{2})+')

TX_DOMAIN = 'medchain/tx'
BLOCK_DOMAIN = 'medchain/block'
STATE_DOMAIN = 'medchain/state'


def sha256(data):
    return hashlib.sha256(data).digest()


###################
# Identifiers
###################
class Address(bytes):
    """20 byte account address: truncated SHA-256 of the compressed public key."""

    @classmethod
    def from_public_key(cls, public_key):
        """
        :type public_key: PublicKey
        :rtype: Address
        """
        return cls(sha256(bytes(public_key))[:config.ADDRESS_LENGTH])

    def __str__(self):
        return self.hex()

    def __repr__(self):
        return 'Address(%s)' % self.hex()


def derive_instance_id(sender, nonce):
    """Id of the instance created by the ``instantiate`` transaction of ``sender`` with ``nonce``.

    :type sender: bytes
    :type nonce: int
    :rtype: bytes
    """
    return sha256(b'medchain/instance|' + bytes(sender) + nonce.to_bytes(8, 'big'))[:config.INSTANCE_ID_LENGTH]


###################
# Chain units
###################
@dataclass(frozen=True)
class SignedTransaction(object):
    """Contract call signed by its sender. ``payload`` is the canonical encoding of the argument list."""
    sender: bytes
    nonce: int
    instance_id: bytes
    method: str
    payload: bytes
    signature: bytes = b''

    @classmethod
    def create(cls, secret_key, nonce, instance_id, method, payload):
        """Build and sign a transaction.

        :param secret_key: Key of the sender
        :type secret_key: medchain.lib.crypto.keys.SecretKey
        :param nonce: Next nonce of the sender
        :type nonce: int
        :param instance_id: Addressed instance
        :type instance_id: bytes
        :param method: Contract method (or ``instantiate``)
        :type method: str
        :param payload: Encoded arguments
        :type payload: bytes
        :rtype: SignedTransaction
        """
        unsigned = cls(Address.from_public_key(secret_key.public_key()), nonce, bytes(instance_id), method,
                       bytes(payload))
        return replace(unsigned, signature=signing.sign(secret_key, unsigned.signing_bytes()))

    def signing_bytes(self):
        return codec.encode([TX_DOMAIN, bytes(self.sender), self.nonce, self.instance_id, self.method, self.payload])

    def verify_signature(self, public_key):
        return signing.verify(public_key, self.signing_bytes(), self.signature)

    def encode(self):
        return [bytes(self.sender), self.nonce, self.instance_id, self.method, self.payload, self.signature]

    @classmethod
    def decode(cls, fields):
        if not isinstance(fields, list) or len(fields) != 6 \
                or not all(isinstance(f, t) for f, t in zip(fields, (bytes, int, bytes, str, bytes, bytes))) \
                or isinstance(fields[1], bool):
            raise exceptions.ChainFormatException("Malformed transaction")
        return cls(Address(fields[0]), *fields[1:])

    def well_formed(self):
        return isinstance(self.sender, bytes) and len(self.sender) == config.ADDRESS_LENGTH \
            and isinstance(self.nonce, int) and not isinstance(self.nonce, bool) and self.nonce >= 0 \
            and isinstance(self.instance_id, bytes) and len(self.instance_id) == config.INSTANCE_ID_LENGTH \
            and isinstance(self.method, str) and isinstance(self.payload, bytes) and isinstance(self.signature, bytes)

    @cached_property
    def tx_id(self):
        return sha256(codec.encode(self.encode()))


@dataclass(frozen=True)
class Receipt(object):
    """Outcome of a transaction inside its block: failures carry the contract's reason and leave state unchanged."""
    ok: bool
    reason: Optional[str] = None
    value: object = None

    def encode(self):
        return [self.ok, self.reason, self.value]

    @classmethod
    def decode(cls, fields):
        if not isinstance(fields, list) or len(fields) != 3 or not isinstance(fields[0], bool):
            raise exceptions.ChainFormatException("Malformed receipt")
        return cls(*fields)


@dataclass(frozen=True)
class Block(object):
    height: int
    timestamp: int
    prev_hash: bytes
    tx_list: Tuple[SignedTransaction, ...]
    receipts: Tuple[Receipt, ...]
    state_root: bytes
    block_hash: bytes = b''

    @classmethod
    def seal(cls, height, timestamp, prev_hash, tx_list, receipts, state_root):
        block = cls(height, timestamp, prev_hash, tuple(tx_list), tuple(receipts), state_root)
        return replace(block, block_hash=block.compute_hash())

    def content(self):
        return [self.height, self.timestamp, self.prev_hash, [tx.encode() for tx in self.tx_list],
                [receipt.encode() for receipt in self.receipts], self.state_root]

    def compute_hash(self):
        return sha256(codec.encode([BLOCK_DOMAIN] + self.content()))

    def encode(self):
        return self.content() + [self.block_hash]

    @classmethod
    def decode(cls, fields):
        """
        :raises exceptions.ChainFormatException: If ``fields`` do not have the shape of a block
        """
        if not isinstance(fields, list) or len(fields) != 7:
            raise exceptions.ChainFormatException("Malformed block")
        height, timestamp, prev_hash, txs, receipts, state_root, block_hash = fields
        if not isinstance(height, int) or not isinstance(timestamp, int) or not isinstance(txs, list) \
                or not isinstance(receipts, list) or len(txs) != len(receipts) \
                or not all(isinstance(h, bytes) and len(h) == 32 for h in (prev_hash, state_root, block_hash)):
            raise exceptions.ChainFormatException("Malformed block")
        return cls(height, timestamp, prev_hash, tuple(SignedTransaction.decode(tx) for tx in txs),
                   tuple(Receipt.decode(receipt) for receipt in receipts), state_root, block_hash)


@dataclass(frozen=True)
class GenesisConfig(object):
    """Chain parameters fixed at genesis. Their digest is part of every state root."""
    name: str = 'medchain'
    block_interval_ms: int = config.DEFAULT_BLOCK_INTERVAL_MS
    skip_empty: bool = config.DEFAULT_SKIP_EMPTY
    genesis_time_ms: int = config.DEFAULT_GENESIS_TIME_MS
    accounts: Tuple[bytes, ...] = ()

    def encode(self):
        return [self.name, self.block_interval_ms, self.skip_empty, self.genesis_time_ms, list(self.accounts)]

    @classmethod
    def decode(cls, fields):
        if not isinstance(fields, list) or len(fields) != 5 \
                or not all(isinstance(f, t) for f, t in zip(fields, (str, int, bool, int, list))) \
                or not all(isinstance(pk, bytes) for pk in fields[4]) or fields[1] < 0:
            raise exceptions.ChainFormatException("Malformed genesis configuration")
        return cls(fields[0], fields[1], fields[2], fields[3], tuple(fields[4]))

    def digest(self):
        return sha256(codec.encode(self.encode()))


@dataclass(frozen=True)
class Account(object):
    public_key: PublicKey
    nonce: int
    registered_at: int


@dataclass(frozen=True)
class Inclusion(object):
    """Where a transaction was committed and when it entered the mempool."""
    height: int
    timestamp: int
    index: int
    tx: SignedTransaction
    receipt: Receipt
    submitted_at: Optional[int] = None


class SimulatedClock(object):
    """Monotone virtual time in milliseconds."""

    def __init__(self, now=0):
        self.now = now

    def advance_to(self, now):
        if now < self.now:
            raise ValueError("Simulated time can not go back from %s to %s" % (self.now, now))
        self.now = now


###################
# State machine
###################
class LedgerState(object):
    """Accounts and contract instances, and the deterministic transition applied per transaction.

    The live ledger and chain verification share this class, so replaying a chain reproduces the same state roots.
    The state root covers the genesis digest, every account (address, key, registration height) and the digest of
    every instance. Nonces are checked on admission and replay but are not part of the root, so a transaction that a
    contract rejects leaves the root unchanged.
    """

    def __init__(self, genesis):
        self.genesis = genesis
        self.accounts = {}
        self.instances = {}
        self._genesis_digest = genesis.digest()
        self._digests = {}
        for public_key in genesis.accounts:
            self.register(PublicKey.from_bytes(public_key), 0)

    def register(self, public_key, height):
        """
        :raises exceptions.AlreadyRegisteredException: If ``public_key`` already has an account
        """
        address = Address.from_public_key(public_key)
        if address in self.accounts:
            raise exceptions.AlreadyRegisteredException("Account %s is already registered" % address)
        self.accounts[address] = Account(public_key, 0, height)
        return address

    def apply(self, tx, ctx):
        """Apply an admitted transaction: bump the sender nonce, dispatch, commit on success.

        :type tx: SignedTransaction
        :type ctx: BlockContext
        :rtype: Receipt
        """
        account = self.accounts[tx.sender]
        self.accounts[tx.sender] = replace(account, nonce=account.nonce + 1)
        try:
            if tx.method == contracts.INSTANTIATE:
                if tx.instance_id != derive_instance_id(tx.sender, tx.nonce) or tx.instance_id in self.instances:
                    raise exceptions.MalformedPayloadException("Instance id is not derived from sender and nonce")
                instance, value = contracts.instantiate(tx, ctx, self.accounts)
            else:
                instance = self.instances.get(tx.instance_id)
                if instance is None:
                    raise exceptions.UnknownInstanceException(tx.instance_id.hex())
                instance, value = contracts.apply(instance, tx, ctx)
        except (exceptions.ContractException, exceptions.LedgerException) as err:
            return Receipt(False, err.reason, None)
        self.instances[instance.instance_id] = instance
        return Receipt(True, None, value)

    def _instance_digest(self, instance):
        cached = self._digests.get(instance.instance_id)
        if cached is not None and cached[0] is instance:
            return cached[1]
        digest = sha256(codec.encode(instance.encode()))
        self._digests[instance.instance_id] = (instance, digest)
        return digest

    def state_root(self):
        accounts = [[address, bytes(account.public_key), account.registered_at]
                    for address, account in sorted(self.accounts.items())]
        instances = [[instance_id, self._instance_digest(instance)]
                     for instance_id, instance in sorted(self.instances.items())]
        return sha256(codec.encode([STATE_DOMAIN, self._genesis_digest, accounts, instances]))


###################
# Chain files
###################
@dataclass(frozen=True)
class ChainSnapshot(object):
    """Immutable view of a chain: genesis parameters, later registrations and the blocks.

    ``malformed_at`` is the height of the first line that could not be decoded when read from a file (0 for the
    header); decoding stops there.
    """
    genesis: Optional[GenesisConfig]
    registrations: Tuple[Tuple[bytes, int], ...]
    blocks: Tuple[Block, ...]
    malformed_at: Optional[int] = None

    def _header_fields(self):
        return [CHAIN_FORMAT, self.genesis.encode(), [[pk, height] for pk, height in self.registrations]]

    def to_lines(self):
        header = self._header_fields()
        lines = [codec.encode(header + [sha256(codec.encode(header))]).hex()]
        lines.extend(codec.encode(block.encode()).hex() for block in self.blocks)
        return lines

    @classmethod
    def from_bytes(cls, data):
        """Parse a chain file. Never raises for bad content; see ``malformed_at``.

        :type data: bytes
        :rtype: ChainSnapshot
        """
        lines = data.split(b'\n')
        if lines and lines[-1] == b'':
            lines.pop()
        try:
            genesis, registrations = cls._parse_header(lines[0] if lines else b'')
        except (exceptions.ChainFormatException, exceptions.SerializationException, exceptions.InvalidKeyException):
            return cls(None, (), (), 0)
        blocks = []
        for height, line in enumerate(lines[1:]):
            try:
                if not HEX_LINE.fullmatch(line):
                    raise exceptions.ChainFormatException("Line is not lowercase hex")
                blocks.append(Block.decode(codec.decode(bytes.fromhex(line.decode('ascii')))))
            except (exceptions.ChainFormatException, exceptions.SerializationException):
                return cls(genesis, registrations, tuple(blocks), height)
        return cls(genesis, registrations, tuple(blocks))

    @staticmethod
    def _parse_header(line):
        if not HEX_LINE.fullmatch(line):
            raise exceptions.ChainFormatException("Header is not lowercase hex")
        fields = codec.decode(bytes.fromhex(line.decode('ascii')))
        if not isinstance(fields, list) or len(fields) != 4 or fields[0] != CHAIN_FORMAT \
                or fields[3] != sha256(codec.encode(fields[:3])):
            raise exceptions.ChainFormatException("Header checksum mismatch")
        genesis = GenesisConfig.decode(fields[1])
        registrations = []
        for entry in fields[2]:
            if not isinstance(entry, list) or len(entry) != 2 or not isinstance(entry[0], bytes) \
                    or not isinstance(entry[1], int) or entry[1] < 1:
                raise exceptions.ChainFormatException("Malformed registration")
            PublicKey.from_bytes(entry[0])
            registrations.append((entry[0], entry[1]))
        return genesis, tuple(registrations)


def write_chain(snapshot, path):
    with open(path, 'w') as chain_file:
        for line in snapshot.to_lines():
            chain_file.write(line + '\n')


def read_chain(path):
    """Read the chain file at ``path``.

    :raises IOError: If the file does not exist
    :rtype: ChainSnapshot
    """
    with open(path, 'rb') as chain_file:
        return ChainSnapshot.from_bytes(chain_file.read())


@dataclass(frozen=True)
class ChainVerdict(object):
    height: Optional[int] = None
    reason: Optional[config.ChainFault] = None

    @property
    def valid(self):
        return self.reason is None

    def __str__(self):
        if self.valid:
            return 'valid'
        return 'invalid at height %s: %s' % (self.height, self.reason.value)


def verify_chain(snapshot):
    """Recompute every link, hash, signature, nonce, receipt and state root by replay from genesis.

    :type snapshot: ChainSnapshot
    :return: Verdict naming the first discrepancy
    :rtype: ChainVerdict
    """
    logger = logging.getLogger(__name__)
    if snapshot.genesis is None or (not snapshot.blocks and snapshot.malformed_at is not None):
        return ChainVerdict(snapshot.malformed_at or 0, config.ChainFault.MALFORMED)
    if not snapshot.blocks:
        return ChainVerdict(0, config.ChainFault.MALFORMED)
    genesis = snapshot.genesis
    try:
        state = LedgerState(genesis)
        registrations = {}
        for public_key, height in snapshot.registrations:
            registrations.setdefault(height, []).append(PublicKey.from_bytes(public_key))
    except (exceptions.InvalidKeyException, exceptions.AlreadyRegisteredException):
        return ChainVerdict(0, config.ChainFault.MALFORMED)

    previous = None
    for height, block in enumerate(snapshot.blocks):
        fault = _check_block_frame(genesis, previous, height, block)
        if fault:
            logger.debug("Block %s: %s" % (height, fault.value))
            return ChainVerdict(height, fault)
        try:
            for public_key in registrations.get(height, ()):
                state.register(public_key, height)
        except exceptions.AlreadyRegisteredException:
            return ChainVerdict(0, config.ChainFault.MALFORMED)
        ctx = BlockContext(height, block.timestamp)
        for tx, receipt in zip(block.tx_list, block.receipts):
            account = state.accounts.get(tx.sender)
            if account is None:
                return ChainVerdict(height, config.ChainFault.UNKNOWN_SENDER)
            if not tx.well_formed() or not tx.verify_signature(account.public_key):
                return ChainVerdict(height, config.ChainFault.BAD_SIGNATURE)
            if tx.nonce != account.nonce:
                return ChainVerdict(height, config.ChainFault.BAD_NONCE)
            if state.apply(tx, ctx) != receipt:
                return ChainVerdict(height, config.ChainFault.RESULT_MISMATCH)
        if state.state_root() != block.state_root:
            return ChainVerdict(height, config.ChainFault.STATE_ROOT_MISMATCH)
        previous = block
    if snapshot.malformed_at is not None:
        return ChainVerdict(snapshot.malformed_at, config.ChainFault.MALFORMED)
    return ChainVerdict()


def _check_block_frame(genesis, previous, height, block):
    if block.height != height:
        return config.ChainFault.HEIGHT_MISMATCH
    if block.compute_hash() != block.block_hash:
        return config.ChainFault.HASH_MISMATCH
    if previous is None:
        if block.prev_hash != ZERO_HASH:
            return config.ChainFault.LINK_MISMATCH
        if block.timestamp != genesis.genesis_time_ms:
            return config.ChainFault.TIMESTAMP_MISMATCH
        if block.tx_list:
            return config.ChainFault.MALFORMED
        return None
    if block.prev_hash != previous.block_hash:
        return config.ChainFault.LINK_MISMATCH
    interval = genesis.block_interval_ms
    if interval == 0:
        if block.timestamp < previous.timestamp:
            return config.ChainFault.TIMESTAMP_MISMATCH
    elif block.timestamp <= previous.timestamp or (block.timestamp - genesis.genesis_time_ms) % interval:
        return config.ChainFault.TIMESTAMP_MISMATCH
    return None


###################
# Genesis files
###################
def genesis_from_dict(document, logger=None):
    """Build a genesis configuration from a parsed yaml mapping, logging every changed default.

    :param document: Mapping with optional keys name, block_interval_ms, profile, skip_empty, genesis_time_ms and
        accounts (hex encoded compressed public keys)
    :type document: dict
    :rtype: GenesisConfig
    :raises exceptions.ConfigurationException: On invalid values
    """
    logger = logger or logging.getLogger(__name__)
    genesis = GenesisConfig()

    if 'name' in document and document.get('name'):
        genesis = replace(genesis, name=str(document.get('name')))

    if 'profile' in document and document.get('profile'):
        profile = document.get('profile')
        if profile not in config.BLOCK_INTERVAL_PROFILES:
            raise exceptions.ConfigurationException("Unknown block interval profile '%s'" % profile)
        genesis = replace(genesis, block_interval_ms=config.BLOCK_INTERVAL_PROFILES[profile])
        logger.info("Using '%s' profile: block interval %s ms" % (profile, genesis.block_interval_ms))

    if 'block_interval_ms' in document and document.get('block_interval_ms') is not None:
        interval = document.get('block_interval_ms')
        if not isinstance(interval, int) or isinstance(interval, bool) or interval < 0:
            raise exceptions.ConfigurationException("block_interval_ms must be a non-negative integer")
        genesis = replace(genesis, block_interval_ms=interval)
        logger.info("Changed block interval to %s ms" % interval)

    if 'skip_empty' in document:
        genesis = replace(genesis, skip_empty=bool(document.get('skip_empty')))
        if genesis.skip_empty:
            logger.info("Empty blocks are skipped")

    if 'genesis_time_ms' in document and document.get('genesis_time_ms') is not None:
        genesis = replace(genesis, genesis_time_ms=int(document.get('genesis_time_ms')))
        logger.info("Changed genesis time to %s ms" % genesis.genesis_time_ms)

    if 'accounts' in document and document.get('accounts'):
        keys = []
        for entry in document.get('accounts'):
            try:
                keys.append(bytes(PublicKey.from_bytes(bytes.fromhex(str(entry)))))
            except (ValueError, exceptions.InvalidKeyException):
                raise exceptions.ConfigurationException("Genesis account '%s' is not a public key" % entry)
        genesis = replace(genesis, accounts=tuple(keys))
        logger.info("Registering %s genesis accounts" % len(keys))
    return genesis


def load_genesis(path):
    """Load a genesis configuration file.

    :raises IOError: If the file does not exist
    :rtype: GenesisConfig
    """
    logger = logging.getLogger(__name__)
    document = load_file(path) or {}
    if not isinstance(document, dict):
        raise exceptions.ConfigurationException("Genesis file must hold a mapping")
    return genesis_from_dict(document, logger)


###################
# Controller
###################
@dataclass(frozen=True)
class PendingTransaction(object):
    tx: SignedTransaction
    submitted_at: int


class Ledger(object):
    """Single-process append-only chain: admission, block production on the simulated clock, reads and export.

    Writers are serialized by a lock; reads return immutable snapshots.
    """

    def __init__(self, genesis=None):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        self.genesis = genesis or GenesisConfig()
        self.state = LedgerState(self.genesis)
        self.clock = SimulatedClock(self.genesis.genesis_time_ms)
        self.chain = []
        self.mempool = []
        self.registrations = []
        self.subscribers = []
        self.lock = threading.RLock()
        self._pending_nonces = {}
        self._pending_instances = set()
        self._inclusions = {}
        self._processed_until = self.genesis.genesis_time_ms
        self.chain.append(Block.seal(0, self.genesis.genesis_time_ms, ZERO_HASH, (), (), self.state.state_root()))
        self.logger.debug("Genesis block committed for '%s' (interval %s ms)" %
                          (self.genesis.name, self.genesis.block_interval_ms))

    @property
    def block_interval_ms(self):
        return self.genesis.block_interval_ms

    @property
    def height(self):
        """Height of the last committed block."""
        return len(self.chain) - 1

    ###################
    # Events
    ###################
    def broadcast_event(self, event):
        """Put a given event in all registered subscriber queues.

        :param event: Event to broadcast
        :type event: events.BaseEvent
        :return: None
        """
        for subscriber in self.subscribers:
            subscriber.put(event)

    def add_subscriber(self, subscriber_queue):
        """
        :type subscriber_queue: queue.Queue
        """
        self.subscribers.append(subscriber_queue)

    def remove_subscriber(self, subscriber_queue):
        self.subscribers.remove(subscriber_queue)

    ###################
    # Accounts
    ###################
    def register_account(self, public_key):
        """Register ``public_key``. The account is part of the state from the next block on.

        :type public_key: PublicKey
        :return: Address of the account
        :rtype: Address
        :raises exceptions.AlreadyRegisteredException: On duplicate registration
        """
        if not isinstance(public_key, PublicKey):
            raise exceptions.InvalidKeyException("Only public keys can be registered")
        with self.lock:
            height = len(self.chain)
            address = self.state.register(public_key, height)
            self.registrations.append((bytes(public_key), height))
        self.logger.debug("Registered account %s effective at height %s" % (address, height))
        self.broadcast_event(events.AccountRegisteredEvent(height, address))
        return address

    def get_account(self, address):
        """
        :raises exceptions.NotFoundException: If there is no account at ``address``
        :rtype: Account
        """
        account = self.state.accounts.get(bytes(address))
        if account is None:
            raise exceptions.NotFoundException("No account at %s" % bytes(address).hex())
        return account

    def next_nonce(self, address):
        """Nonce the next transaction of ``address`` must carry, counting transactions still in the mempool."""
        with self.lock:
            account = self.state.accounts.get(bytes(address))
            if account is None:
                raise exceptions.UnknownSenderException("No account at %s" % bytes(address).hex())
            return account.nonce + self._pending_nonces.get(bytes(address), 0)

    ###################
    # Transactions
    ###################
    def submit_transaction(self, tx):
        """Admit ``tx`` into the mempool.

        :type tx: SignedTransaction
        :return: Transaction id
        :rtype: bytes
        :raises exceptions.LedgerException: With reason UnknownSender, BadSignature, BadNonce or UnknownInstance; a
            rejected transaction leaves no trace
        """
        with self.lock:
            try:
                self._admit(tx)
            except exceptions.LedgerException as err:
                self.logger.debug("Rejected transaction: %s" % err.message)
                tx_id = tx.tx_id if isinstance(tx, SignedTransaction) and tx.well_formed() else ZERO_HASH
                self.broadcast_event(events.TransactionRejectedEvent(len(self.chain), tx_id, err.reason))
                raise
            sender = bytes(tx.sender)
            self.mempool.append(PendingTransaction(tx, self.clock.now))
            self._pending_nonces[sender] = self._pending_nonces.get(sender, 0) + 1
            if tx.method == contracts.INSTANTIATE:
                self._pending_instances.add(tx.instance_id)
        self.logger.debug("Accepted %s from %s (%s payload bytes)" % (tx.method, Address(tx.sender), len(tx.payload)))
        self.broadcast_event(events.TransactionAcceptedEvent(len(self.chain), tx.tx_id, tx.method))
        return tx.tx_id

    def _admit(self, tx):
        if not isinstance(tx, SignedTransaction) or not isinstance(tx.sender, bytes):
            raise exceptions.UnknownSenderException("Not a transaction")
        account = self.state.accounts.get(bytes(tx.sender))
        if account is None:
            raise exceptions.UnknownSenderException("Sender %s is not registered" % bytes(tx.sender).hex())
        if not tx.well_formed() or not tx.verify_signature(account.public_key):
            raise exceptions.BadSignatureException("Signature does not verify for %s" % bytes(tx.sender).hex())
        expected = account.nonce + self._pending_nonces.get(bytes(tx.sender), 0)
        if tx.nonce != expected:
            raise exceptions.BadNonceException("Expected nonce %s, got %s" % (expected, tx.nonce))
        if tx.method == contracts.INSTANTIATE:
            if tx.instance_id != derive_instance_id(tx.sender, tx.nonce):
                raise exceptions.UnknownInstanceException(tx.instance_id.hex())
        elif tx.instance_id not in self.state.instances and tx.instance_id not in self._pending_instances:
            raise exceptions.UnknownInstanceException(tx.instance_id.hex())

    ###################
    # Blocks
    ###################
    def _slot(self, now):
        last = self.chain[-1].timestamp
        interval = self.block_interval_ms
        if interval == 0:
            return now if now >= last else None
        boundary = self.genesis.genesis_time_ms + ((now - self.genesis.genesis_time_ms) // interval) * interval
        return boundary if boundary > last else None

    def produce_block(self, now=None):
        """Commit the mempool in a block stamped with the latest interval boundary ``<= now``.

        :param now: Simulated time in ms (the clock's time if omitted)
        :type now: int
        :return: The new block, or None if no boundary passed since the last block or skip-empty applies
        :rtype: Block
        """
        with self.lock:
            now = self.clock.now if now is None else now
            timestamp = self._slot(now)
            if timestamp is None or (self.genesis.skip_empty and not self.mempool):
                return None
            self._processed_until = max(self._processed_until, timestamp)
            return self._commit(timestamp)

    def advance(self, now):
        """Move the clock to ``now`` and take every block production opportunity on the way.

        With interval ``I`` this visits every boundary passed since the last call; with interval 0 it produces at
        most one block stamped ``now``.

        :type now: int
        :return: Committed blocks
        :rtype: list of Block
        """
        with self.lock:
            self.clock.advance_to(now)
            interval = self.block_interval_ms
            if interval == 0:
                block = self.produce_block(now)
                return [block] if block else []
            blocks = []
            boundary = self._processed_until + interval
            while boundary <= now:
                if self.mempool or not self.genesis.skip_empty:
                    blocks.append(self._commit(boundary))
                    boundary += interval
                else:
                    boundary += ((now - boundary) // interval + 1) * interval
            self._processed_until = boundary - interval
            return blocks

    def next_block_time(self):
        """Simulated time of the next block production opportunity."""
        if self.block_interval_ms == 0:
            return self.clock.now
        return self._processed_until + self.block_interval_ms

    def _commit(self, timestamp):
        height = len(self.chain)
        ctx = BlockContext(height, timestamp)
        pending, self.mempool = self.mempool, []
        self._pending_nonces.clear()
        self._pending_instances.clear()
        receipts = []
        for entry in pending:
            receipt = self.state.apply(entry.tx, ctx)
            receipts.append(receipt)
            if not receipt.ok:
                self.logger.debug("%s failed in block %s: %s" % (entry.tx.method, height, receipt.reason))
                self.broadcast_event(events.TransactionFailedEvent(height, entry.tx.tx_id, entry.tx.method,
                                                                   receipt.reason))
        txs = [entry.tx for entry in pending]
        block = Block.seal(height, timestamp, self.chain[-1].block_hash, txs, receipts, self.state.state_root())
        self.chain.append(block)
        for index, entry in enumerate(pending):
            self._inclusions[entry.tx.tx_id] = (height, index, entry.submitted_at)
        self.logger.debug("Committed block %s at %s ms with %s txs" % (height, timestamp, len(txs)))
        self.broadcast_event(events.BlockCommittedEvent(height, timestamp, [tx.tx_id for tx in txs], block.state_root))
        return block

    def settle(self, tx_ids):
        """Advance simulated time until all ``tx_ids`` are committed.

        :type tx_ids: list of bytes
        :return: Inclusion per transaction in the given order
        :rtype: list of Inclusion
        :raises exceptions.TransactionTimeoutException: If they are not committed within ``MAX_SETTLE_BLOCKS``
            opportunities
        """
        for _ in range(config.MAX_SETTLE_BLOCKS):
            if all(tx_id in self._inclusions for tx_id in tx_ids):
                break
            self.advance(self.next_block_time())
        missing = [tx_id for tx_id in tx_ids if tx_id not in self._inclusions]
        if missing:
            raise exceptions.TransactionTimeoutException("%s transactions were not committed" % len(missing))
        return [self.find_receipt(tx_id) for tx_id in tx_ids]

    ###################
    # Reads
    ###################
    def get_state(self, instance_id):
        """Committed snapshot of an instance. Never logs an access.

        :type instance_id: bytes
        :rtype: medchain.lib.contracts.base.ContractInstance
        :raises exceptions.NotFoundException: If no committed instance has this id
        """
        instance = self.state.instances.get(bytes(instance_id))
        if instance is None:
            raise exceptions.NotFoundException("No instance %s" % bytes(instance_id).hex())
        return instance

    def get_block(self, height):
        """
        :raises exceptions.NotFoundException: If there is no block at ``height``
        :rtype: Block
        """
        if not isinstance(height, int) or not 0 <= height < len(self.chain):
            raise exceptions.NotFoundException("No block at height %s" % height)
        return self.chain[height]

    def find_receipt(self, tx_id):
        """
        :raises exceptions.NotFoundException: If the transaction is not committed
        :rtype: Inclusion
        """
        position = self._inclusions.get(tx_id)
        if position is None:
            raise exceptions.NotFoundException("Transaction %s is not committed" % tx_id.hex())
        block = self.chain[position[0]]
        height, index, submitted_at = position
        block = self.chain[height]
        return Inclusion(block.height, block.timestamp, index, block.tx_list[index], block.receipts[index],
                         submitted_at)

    def submitted_at(self, tx_id):
        """Simulated time at which ``tx_id`` was admitted.

        :raises exceptions.NotFoundException: If the transaction was never admitted
        """
        position = self._inclusions.get(tx_id)
        if position is not None:
            return position[2]
        for entry in self.mempool:
            if entry.tx.tx_id == tx_id:
                return entry.submitted_at
        raise exceptions.NotFoundException("Transaction %s was never admitted" % tx_id.hex())

    def snapshot(self):
        with self.lock:
            return ChainSnapshot(self.genesis, tuple(self.registrations), tuple(self.chain))

    def export_chain(self, path):
        """Write the chain as a newline delimited file: header line, then one line per block."""
        write_chain(self.snapshot(), path)
        self.logger.info("Exported %s blocks to '%s'" % (len(self.chain), path))
