import logging
from enum import Enum


class ExitStatus(Enum):
    """Enum providing information about exit status"""
    FINE = 0
    FILE_NOT_FOUND = 1
    SCENARIO_PARSING_ERROR = 2
    ASSERTION_MISMATCH = 3
    CHAIN_INVALID = 4
    ERRONEUS_CONFIG = 5
    UNKNOWN_INSTANCE = 6


class ContractKind(Enum):
    """The six contract kinds an instance can be created from"""
    PRESCRIPTION = 'Prescription'
    CONSENT = 'Consent'
    SALES = 'Sales'
    MEDICATION_CONTROL = 'MedicationControl'
    REPORT = 'Report'
    REWARD = 'Reward'


class Item(Enum):
    """Prescription items, each encrypted under its own capsule"""
    PI = 'PI'
    MED = 'MED'
    DIA = 'DIA'


class Role(Enum):
    """Stakeholder roles"""
    DOCTOR = 'Doctor'
    PATIENT = 'Patient'
    PHARMACY = 'Pharmacy'
    REGULATOR = 'Regulator'


class RequestStatus(Enum):
    """Life cycle of a delegation request. Only pending requests may change."""
    PENDING = 'pending'
    GRANTED = 'granted'
    DENIED = 'denied'


class Decision(Enum):
    """Patient decision carried by set_consent"""
    GRANTED = 'granted'
    DENIED = 'denied'


class ChainFault(Enum):
    """Reason reported by chain verification for the first discrepancy found"""
    MALFORMED = 'Malformed'
    GENESIS_MISMATCH = 'GenesisMismatch'
    HEIGHT_MISMATCH = 'HeightMismatch'
    HASH_MISMATCH = 'HashMismatch'
    LINK_MISMATCH = 'LinkMismatch'
    TIMESTAMP_MISMATCH = 'TimestampMismatch'
    BAD_SIGNATURE = 'BadSignature'
    BAD_NONCE = 'BadNonce'
    UNKNOWN_SENDER = 'UnknownSender'
    RESULT_MISMATCH = 'ResultMismatch'
    STATE_ROOT_MISMATCH = 'StateRootMismatch'


ALL_ITEMS = (Item.PI, Item.MED, Item.DIA)
"""Canonical item order used whenever item sets are serialized"""

DEFAULT_LOG_UMASK = 0
"""Default permission mask for log files (results in 0777)"""

DEFAULT_LOG_LEVEL = logging.INFO
"""Default log level for all modules"""

FORMAT = "%(asctime)s: %(name)s %(funcName)20s() [%(levelname)s]: %(message)s"
"""Logger output formatting"""

TMP_LOG_PATH = "/tmp/Medchain/log"

RESPONSE_LOGGER = 'MEDCHAIN-RESPONSE'
"""Name of the logger that carries command results to the user"""

###################
# Ledger
###################
DEFAULT_BLOCK_INTERVAL_MS = 6130
"""Simulated block interval, the average block time measured on the Uni Juno testnet"""

ETHEREUM_BLOCK_INTERVAL_MS = 12000
"""Simulated block interval for the Ethereum profile (Ropsten mining averages of about 10 to 14 s)"""

BLOCK_INTERVAL_PROFILES = {
    'juno': DEFAULT_BLOCK_INTERVAL_MS,
    'ethereum': ETHEREUM_BLOCK_INTERVAL_MS,
}

DEFAULT_SKIP_EMPTY = False
"""Whether block production is skipped while the mempool is empty"""

DEFAULT_GENESIS_TIME_MS = 0

ADDRESS_LENGTH = 20
"""Length of an account address in bytes"""

INSTANCE_ID_LENGTH = 16
"""Length of a contract instance id in bytes"""

MAX_SETTLE_BLOCKS = 16
"""How many blocks settling may produce before a transaction counts as lost"""

###################
# Contracts
###################
MAX_DESCRIPTION_BYTES = 2048
"""Upper bound for report descriptions (PII exclusion is policy, this is the enforced part)"""

MAX_PURPOSE_BYTES = 64
"""Upper bound for the purpose string of an access event"""

###################
# Benchmarks
###################
BENCH_PROFILES = {
    'paper': {
        'iterations': 1000,
        'sizes_kb': {Item.PI: (0.43, 0.82), Item.MED: (0.24, 0.53), Item.DIA: (2.18, 8975.74)},
    },
    'quick': {
        'iterations': 100,
        'sizes_kb': {Item.PI: (0.43, 0.82), Item.MED: (0.24, 0.53), Item.DIA: (2.18, 512.0)},
    },
}
"""Plaintext size ranges (uniformly drawn) and iteration counts per PRE benchmark profile"""

PRE_OPERATIONS = ('encrypt', 'delegate', 'reencrypt', 'decrypt')

REFERENCE_AVG_MS = {
    ('encrypt', Item.DIA): 6.98, ('encrypt', Item.MED): 1.63, ('encrypt', Item.PI): 1.75,
    ('delegate', Item.DIA): 4.78, ('delegate', Item.MED): 4.53, ('delegate', Item.PI): 4.62,
    ('reencrypt', Item.DIA): 2.43, ('reencrypt', Item.MED): 2.32, ('reencrypt', Item.PI): 2.35,
    ('decrypt', Item.DIA): 8.67, ('decrypt', Item.MED): 3.18, ('decrypt', Item.PI): 3.27,
}
"""Average wall time per PRE operation measured on a desktop reference machine"""

PRE_AVG_BOUND_MS = 50.0
PRE_MAX_BOUND_MS = 100.0

REFERENCE_LEDGER_S = {'max': 6.26, 'min': 1.50, 'avg': 2.69, 'std': 0.71}
"""Field measurement of create_prescription inclusion time over 300 transactions"""

BENCH_PRE_HEADER = ('operation', 'item', 'size_kb', 'wall_ms', 'peak_alloc_bytes', 'iteration')
BENCH_PRE_SUMMARY_HEADER = ('operation', 'item', 'count', 'min_ms', 'max_ms', 'avg_ms', 'std_ms', 'reference_avg_ms')
BENCH_LEDGER_HEADER = ('tx_index', 'submitted_ms', 'committed_ms', 'latency_ms', 'payload_bytes')
BENCH_LEDGER_SUMMARY_HEADER = ('statistic', 'value_ms')

DEFAULT_PURPOSE = {
    Role.DOCTOR: 'treatment',
    Role.PATIENT: 'owner',
    Role.PHARMACY: 'dispense',
    Role.REGULATOR: 'audit',
}
"""Purpose recorded on access events when a workflow does not name one"""
