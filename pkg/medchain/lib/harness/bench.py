"""Benchmark suites: wall-clock cost of the proxy re-encryption steps and simulated inclusion latency on the ledger.

Both write a record CSV with a fixed header and a ``<name>_summary.csv`` next to it.
"""
import os
import csv
import time
import random
import logging
import statistics
import tracemalloc
from dataclasses import dataclass, astuple
from typing import Optional
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
import medchain.lib.crypto.pre as pre
from medchain.ledger import Ledger, GenesisConfig
from medchain.lib.crypto.keys import SeededEntropy, keygen
from medchain.lib.stakeholder import StakeholderContext

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchRecord(object):
    operation: str
    item: str
    size_kb: float
    wall_ms: float
    peak_alloc_bytes: Optional[int]
    iteration: int


@dataclass(frozen=True)
class LatencyRecord(object):
    tx_index: int
    submitted_ms: int
    committed_ms: int
    latency_ms: int
    payload_bytes: int


def summary_path(path):
    root, extension = os.path.splitext(path)
    return '%s_summary%s' % (root, extension or '.csv')


def _write_csv(path, header, rows):
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(header)
        for row in rows:
            writer.writerow(['' if value is None else value for value in row])


def _stats(values):
    return min(values), max(values), statistics.mean(values), statistics.pstdev(values)


###################
# PRE
###################
class PreBenchmark(object):
    """Times encrypt, delegate, reencrypt and decrypt on plaintext sizes drawn from a profile."""

    def __init__(self, profile='quick', iterations=None, seed=None, trace_memory=False):
        """
        :param profile: Name of an entry of ``config.BENCH_PROFILES``
        :type profile: str
        :param iterations: Overrides the iteration count of the profile
        :type iterations: int
        :param seed: Seed for sizes, keys and plaintexts (random if None)
        :type seed: bytes
        :param trace_memory: Record the tracemalloc peak of every operation
        :type trace_memory: bool
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        if profile not in config.BENCH_PROFILES:
            raise exceptions.ConfigurationException("Unknown benchmark profile '%s'" % profile)
        self.profile = profile
        self.sizes_kb = config.BENCH_PROFILES[profile]['sizes_kb']
        self.iterations = iterations or config.BENCH_PROFILES[profile]['iterations']
        if self.iterations < 1:
            raise exceptions.ConfigurationException("At least one iteration is needed")
        self.trace_memory = trace_memory
        self.entropy = SeededEntropy(seed) if seed is not None else None
        self.sizes = random.Random(seed)
        self.records = []

    def _timed(self, iteration, item, size, operation, function, *args):
        """Call ``function`` once and record its wall time (and allocation peak)."""
        baseline = None
        if self.trace_memory:
            tracemalloc.reset_peak()
            baseline = tracemalloc.get_traced_memory()[0]
        start = time.perf_counter()
        result = function(*args)
        wall_ms = (time.perf_counter() - start) * 1000
        peak = tracemalloc.get_traced_memory()[1] - baseline if self.trace_memory else None
        self.records.append(BenchRecord(operation, item.value, round(size / 1024.0, 2), round(wall_ms, 4), peak,
                                        iteration))
        return result

    def run(self):
        """Run every iteration.

        :return: One record per iteration, item and operation
        :rtype: list of BenchRecord
        :raises exceptions.DecryptionFailedException: If a round trip does not return its plaintext
        """
        sk_a, pk_a = keygen(self.entropy)
        sk_b, pk_b = keygen(self.entropy)
        entropy = self.entropy
        if self.trace_memory:
            tracemalloc.start()
        try:
            for iteration in range(self.iterations):
                for item in config.ALL_ITEMS:
                    low, high = self.sizes_kb[item]
                    size = int(self.sizes.uniform(low, high) * 1024)
                    plaintext = (entropy or os.urandom)(size)
                    ciphertext = self._timed(iteration, item, size, 'encrypt', pre.encrypt,
                                             pk_a, plaintext, b'', entropy)
                    dk = self._timed(iteration, item, size, 'delegate', pre.generate_delegation_key,
                                     sk_a, pk_b, entropy)
                    reencryption = self._timed(iteration, item, size, 'reencrypt', pre.reencrypt,
                                               dk, ciphertext.capsule, entropy)
                    decrypted = self._timed(iteration, item, size, 'decrypt', pre.decrypt_reencrypted,
                                            sk_b, pk_a, reencryption, ciphertext)
                    if decrypted != plaintext:
                        raise exceptions.DecryptionFailedException("Round trip %s/%s returned another plaintext" % (
                            iteration, item.value))
                if (iteration + 1) % 100 == 0:
                    self.logger.info("%s of %s iterations done" % (iteration + 1, self.iterations))
        finally:
            if self.trace_memory:
                tracemalloc.stop()
        return self.records

    def summary(self):
        """Min, max, average and standard deviation per operation and item, next to the reference average.

        :rtype: list of tuple
        """
        rows = []
        for operation in config.PRE_OPERATIONS:
            for item in config.ALL_ITEMS:
                times = [record.wall_ms for record in self.records
                         if record.operation == operation and record.item == item.value]
                if not times:
                    continue
                low, high, avg, std = _stats(times)
                rows.append((operation, item.value, len(times), round(low, 4), round(high, 4), round(avg, 4),
                             round(std, 4), config.REFERENCE_AVG_MS.get((operation, item))))
        return rows

    def violations(self):
        """Summary rows whose average or maximum exceeds the latency bounds."""
        return [row for row in self.summary() if row[5] > config.PRE_AVG_BOUND_MS or row[4] > config.PRE_MAX_BOUND_MS]

    def write(self, path):
        _write_csv(path, config.BENCH_PRE_HEADER, (astuple(record) for record in self.records))
        _write_csv(summary_path(path), config.BENCH_PRE_SUMMARY_HEADER, self.summary())
        self.logger.info("Wrote %s records to '%s'" % (len(self.records), path))


###################
# Ledger
###################
class LedgerBenchmark(object):
    """Inclusion latency of create_prescription transactions arriving uniformly at random in simulated time.

    Latency is the timestamp of the committing block minus the simulated submission time. No consensus delay is
    modelled, so the expectation for uniform arrivals is half the block interval.
    """

    def __init__(self, n_txs=300, interval_ms=config.DEFAULT_BLOCK_INTERVAL_MS, seed=0):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        if n_txs < 1:
            raise exceptions.ConfigurationException("At least one transaction is needed")
        if interval_ms < 0:
            raise exceptions.ConfigurationException("The block interval must not be negative")
        self.n_txs = n_txs
        self.interval_ms = interval_ms
        self.seed = seed
        self.records = []

    def _submission_times(self, start):
        window = self.n_txs * (self.interval_ms or 1000)
        arrivals = random.Random(self.seed)
        return sorted(start + arrivals.randrange(window) for _ in range(self.n_txs))

    def run(self):
        """
        :rtype: list of LatencyRecord
        """
        ledger = Ledger(GenesisConfig(name='bench', block_interval_ms=self.interval_ms))
        entropy = SeededEntropy(b'bench/%d' % self.seed)
        doctor = StakeholderContext(config.Role.DOCTOR, ledger, entropy=entropy)
        patient = StakeholderContext(config.Role.PATIENT, ledger, entropy=entropy)

        opened = [doctor.instantiate(config.ContractKind.PRESCRIPTION, patient.address) for _ in range(self.n_txs)]
        doctor.settle([tx_id for _, tx_id in opened])
        # smallest profile sizes, the payload does not influence simulated latency
        sizes_kb = config.BENCH_PROFILES['quick']['sizes_kb']
        ciphertexts = [bytes(doctor.encrypt_for(patient.public_key, entropy(int(sizes_kb[item][0] * 1024))))
                       for item in config.ALL_ITEMS]
        self.logger.debug("Opened %s prescription instances, starting at %s ms" % (self.n_txs, ledger.clock.now))

        submitted = []
        for index, ((instance_id, _), at) in enumerate(zip(opened, self._submission_times(ledger.clock.now + 1))):
            ledger.advance(at)
            tx_id = doctor.submit(instance_id, 'create_prescription', *ciphertexts)
            submitted.append((index, tx_id))
            if self.interval_ms == 0:
                ledger.settle([tx_id])
        ledger.settle([tx_id for _, tx_id in submitted])

        for index, tx_id in submitted:
            inclusion = ledger.find_receipt(tx_id)
            if not inclusion.receipt.ok:
                raise exceptions.exception_for_reason(inclusion.receipt.reason)
            submitted_ms = ledger.submitted_at(tx_id)
            self.records.append(LatencyRecord(index, submitted_ms, inclusion.timestamp,
                                              inclusion.timestamp - submitted_ms, len(inclusion.tx.payload)))
        return self.records

    def summary(self):
        """
        :rtype: list of tuple
        """
        latencies = [record.latency_ms for record in self.records]
        low, high, avg, std = _stats(latencies)
        reference = config.REFERENCE_LEDGER_S
        return [
            ('min', low), ('max', high), ('avg', round(avg, 3)), ('std', round(std, 3)),
            ('expected_avg', self.interval_ms / 2.0),
            ('reference_min', reference['min'] * 1000), ('reference_max', reference['max'] * 1000),
            ('reference_avg', reference['avg'] * 1000), ('reference_std', reference['std'] * 1000),
        ]

    def write(self, path):
        _write_csv(path, config.BENCH_LEDGER_HEADER, (astuple(record) for record in self.records))
        _write_csv(summary_path(path), config.BENCH_LEDGER_SUMMARY_HEADER, self.summary())
        self.logger.info("Wrote %s records to '%s'" % (len(self.records), path))
