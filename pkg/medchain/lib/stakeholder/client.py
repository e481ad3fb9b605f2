import logging
import threading
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
import medchain.lib.contracts as contracts
import medchain.lib.crypto.pre as pre
from medchain.ledger import Address, SignedTransaction, derive_instance_id
from medchain.lib.contracts.base import encode_args
from medchain.lib.crypto.keys import keygen


class StakeholderContext(object):
    """Application of one stakeholder: its role, key pair, address and the ledger it talks to.

    The secret key stays inside the context. Workflows use the crypto helpers below and never see it, and nothing
    the context submits carries it.
    """

    def __init__(self, role, ledger, secret_key=None, entropy=None, register=True):
        """Create a context, generating a key pair from ``entropy`` unless ``secret_key`` is given.

        :param role: Role the application acts in
        :type role: config.Role
        :param ledger: Ledger to submit to
        :type ledger: medchain.ledger.Ledger
        :param secret_key: Existing key of the stakeholder
        :type secret_key: medchain.lib.crypto.keys.SecretKey
        :param entropy: Entropy source for key generation and encryption (``os.urandom`` if None)
        :param register: Whether to register the public key on the ledger right away
        :type register: bool
        """
        self.logger = logging.getLogger('%s[%s]' % (self.__class__.__name__, role.value))
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        self.role = role
        self.ledger = ledger
        self.entropy = entropy
        self._secret_key = secret_key if secret_key is not None else keygen(entropy)[0]
        self.public_key = self._secret_key.public_key()
        self.address = Address.from_public_key(self.public_key)
        self.lock = threading.RLock()
        if register:
            self.ledger.register_account(self.public_key)

    def __repr__(self):
        return 'StakeholderContext(%s, %s)' % (self.role.value, self.address)

    def require_role(self, *roles):
        """
        :raises exceptions.RoleViolationException: If the context does not act in one of ``roles``
        """
        if self.role not in roles:
            raise exceptions.RoleViolationException("%s can not act as %s" % (
                self.role.value, ' or '.join(role.value for role in roles)))

    ###################
    # Crypto
    ###################
    def encrypt_for(self, public_key, plaintext, associated_data=b''):
        return pre.encrypt(public_key, plaintext, associated_data, entropy=self.entropy)

    def decrypt(self, ciphertext):
        return pre.decrypt_original(self._secret_key, ciphertext)

    def decrypt_reencrypted(self, delegator_pk, reencryption, ciphertext):
        return pre.decrypt_reencrypted(self._secret_key, delegator_pk, reencryption, ciphertext)

    def delegate_to(self, delegatee_pk):
        return pre.generate_delegation_key(self._secret_key, delegatee_pk, entropy=self.entropy)

    ###################
    # Transactions
    ###################
    def _sign_and_submit(self, instance_id, method, payload, nonce=None):
        with self.lock:
            if nonce is None:
                nonce = self.ledger.next_nonce(self.address)
            tx = SignedTransaction.create(self._secret_key, nonce, instance_id, method, payload)
            tx_id = self.ledger.submit_transaction(tx)
        self.logger.debug("Submitted %s to %s (%s payload bytes)" % (method, instance_id.hex()[:8], len(payload)))
        return tx_id

    def submit(self, instance_id, method, *args):
        """Sign and submit a contract call.

        :return: Transaction id
        :rtype: bytes
        """
        return self._sign_and_submit(bytes(instance_id), method, encode_args(*args))

    def instantiate(self, kind, recipient, *args):
        """Submit the creation of a ``kind`` instance from this context to ``recipient``.

        :return: Id the instance gets and the transaction id
        :rtype: tuple of (bytes, bytes)
        """
        with self.lock:
            nonce = self.ledger.next_nonce(self.address)
            instance_id = derive_instance_id(self.address, nonce)
            tx_id = self._sign_and_submit(instance_id, contracts.INSTANTIATE,
                                          contracts.instantiation_payload(kind, recipient, *args), nonce)
        self.logger.debug("Opening %s instance %s" % (kind.value, instance_id.hex()))
        return instance_id, tx_id

    def settle(self, tx_ids):
        """Wait (in simulated time) for ``tx_ids`` and return their values.

        :return: Receipt values in the given order
        :rtype: list
        :raises exceptions.MedchainException: Matching the reason of the first failed transaction
        """
        values = []
        for inclusion in self.ledger.settle(list(tx_ids)):
            receipt = inclusion.receipt
            if not receipt.ok:
                self.logger.debug("%s failed in block %s: %s" % (inclusion.tx.method, inclusion.height, receipt.reason))
                raise exceptions.exception_for_reason(receipt.reason, "%s failed: %s" % (inclusion.tx.method,
                                                                                       receipt.reason))
            values.append(receipt.value)
        return values

    def call(self, instance_id, method, *args):
        """Submit a contract call and settle it.

        :return: The method's return value
        """
        return self.settle([self.submit(instance_id, method, *args)])[0]

    def read(self, instance_id):
        """Committed state of an instance. Not logged on-chain."""
        return self.ledger.get_state(instance_id).state

    def public_key_of(self, address):
        return self.ledger.get_account(address).public_key


def role_directory(*contexts):
    """Map addresses to roles for the patient's privacy filter.

    :rtype: dict
    """
    return dict((context.address, context.role) for context in contexts)
