class BaseEvent(object):
    """Abstract base class for all events."""
    def __init__(self):
        pass


class LedgerEvent(BaseEvent):
    """Abstract parent class for all kinds of events dispatched by the ledger."""
    def __init__(self, height):
        """Create event that belongs to block height 'height'.

        :param height: Height of the block the event belongs to (the next block for pending activity)
        :type height: int
        """
        BaseEvent.__init__(self)
        self.height = height


class AccountRegisteredEvent(LedgerEvent):
    """Inform about a newly registered account."""
    def __init__(self, height, address):
        """Create registration event.

        :param height: Height at which the account becomes part of the state
        :type height: int
        :param address: Address of the account
        :type address: bytes
        """
        LedgerEvent.__init__(self, height)
        self.address = address

    def __str__(self):
        return str("AccountRegisteredEvent - %s at %s" % (self.address.hex(), self.height))


class TransactionAcceptedEvent(LedgerEvent):
    """Signal that a transaction entered the mempool."""
    def __init__(self, height, tx_id, method):
        LedgerEvent.__init__(self, height)
        self.tx_id = tx_id
        self.method = method

    def __str__(self):
        return str("TransactionAcceptedEvent - %s (%s)" % (self.tx_id.hex()[:16], self.method))


class TransactionRejectedEvent(LedgerEvent):
    """Signal that a transaction was refused at admission and left no trace."""
    def __init__(self, height, tx_id, reason):
        """Create rejection event.

        :param height: Height of the next block
        :type height: int
        :param tx_id: Hash of the rejected transaction
        :type tx_id: bytes
        :param reason: Admission error name
        :type reason: str
        """
        LedgerEvent.__init__(self, height)
        self.tx_id = tx_id
        self.reason = reason

    def __str__(self):
        return str("TransactionRejectedEvent - %s: %s" % (self.tx_id.hex()[:16], self.reason))


class TransactionFailedEvent(LedgerEvent):
    """Inform about a transaction that was included in a block with a failure flag."""
    def __init__(self, height, tx_id, method, reason):
        LedgerEvent.__init__(self, height)
        self.tx_id = tx_id
        self.method = method
        self.reason = reason

    def __str__(self):
        return str("TransactionFailedEvent - %s (%s) at %s: %s" % (self.tx_id.hex()[:16], self.method, self.height,
                                                                   self.reason))


class BlockCommittedEvent(LedgerEvent):
    """Inform about a committed block."""
    def __init__(self, height, timestamp, tx_ids, state_root):
        """Create block event.

        :param height: Block height
        :type height: int
        :param timestamp: Simulated block time in ms
        :type timestamp: int
        :param tx_ids: Ids of the included transactions in block order
        :type tx_ids: list of bytes
        :param state_root: State root after the block
        :type state_root: bytes
        """
        LedgerEvent.__init__(self, height)
        self.timestamp = timestamp
        self.tx_ids = tx_ids
        self.state_root = state_root

    def __str__(self):
        return str("BlockCommittedEvent - #%s @%sms: %s txs, root %s" % (self.height, self.timestamp, len(self.tx_ids),
                                                                         self.state_root.hex()[:16]))
