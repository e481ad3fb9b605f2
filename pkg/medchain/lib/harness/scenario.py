"""Declarative scenarios: a seed, a ledger configuration and a list of stakeholder steps with expected outcomes.

A scenario file is yaml (see ``data/scenarios/README.md``). Every step names the acting role, a workflow operation,
its parameters and what has to happen: ``ok``, ``{error: <Reason>}`` or ``{result: <value>}``. Values a step returns
can be saved under a name and referenced later as ``$name``.
"""
import os
import logging
import statistics
from dataclasses import dataclass, field
from typing import Optional
import yaml
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
import medchain.lib.stakeholder.workflows as workflows
import medchain.lib.provenance.audit as audit
from medchain.ledger import Ledger, genesis_from_dict
from medchain.lib.crypto.keys import SeededEntropy
from medchain.lib.stakeholder import StakeholderContext, PrivacyPolicy, role_directory
from medchain.lib.util.setupParser import LineLoader, LINE_KEY, load_file, strip_lines

DEFAULT_SEED = 'medchain'

EXPECT_OK = 'ok'

GENESIS_KEYS = ('name', 'block_interval_ms', 'profile', 'skip_empty', 'genesis_time_ms')
"""Top level scenario keys that are shortcuts for the genesis mapping"""

_REQUIRED = object()


@dataclass
class Step(object):
    index: int
    line: Optional[int]
    actor: config.Role
    op: str
    params: dict
    expect: object = EXPECT_OK
    save: Optional[str] = None


@dataclass
class StepOutcome(object):
    index: int
    line: Optional[int]
    actor: str
    op: str
    ok: bool
    reason: Optional[str] = None
    result: object = None


@dataclass
class ScenarioOutcome(object):
    """What a scenario run left behind."""
    name: str
    seed: str
    block_interval_ms: int
    height: int
    state_root: str
    steps: list = field(default_factory=list)
    payload_sizes: dict = field(default_factory=dict)

    def report(self):
        """Outcome as a yaml-ready mapping with a fixed key order."""
        return {
            'scenario': self.name,
            'seed': self.seed,
            'block_interval_ms': self.block_interval_ms,
            'height': self.height,
            'state_root': self.state_root,
            'steps': [{'index': step.index, 'line': step.line, 'actor': step.actor, 'op': step.op,
                       'outcome': EXPECT_OK if step.ok else step.reason, 'result': step.result}
                      for step in self.steps],
            'payload_sizes': dict((method, {'count': count, 'mean_bytes': round(mean, 1)})
                                  for method, (count, mean) in sorted(self.payload_sizes.items())),
        }

    def render(self):
        lines = ["Scenario '%s': %s steps, height %s, state root %s" % (self.name, len(self.steps), self.height,
                                                                      self.state_root)]
        for step in self.steps:
            lines.append('  %3s %-9s %-20s %s' % (step.index, step.actor, step.op,
                                                  EXPECT_OK if step.ok else step.reason))
        lines.append('Committed payload sizes per method:')
        for method, (count, mean) in sorted(self.payload_sizes.items()):
            lines.append('  %-24s %5s txs %10.1f bytes' % (method, count, mean))
        return '\n'.join(lines)


def payload_sizes(snapshot):
    """Count and mean payload size of the committed, successful transactions per contract method.

    :type snapshot: medchain.ledger.ChainSnapshot
    :rtype: dict
    """
    sizes = {}
    for block in snapshot.blocks:
        for tx, receipt in zip(block.tx_list, block.receipts):
            if receipt.ok:
                sizes.setdefault(tx.method, []).append(len(tx.payload))
    return dict((method, (len(values), statistics.mean(values))) for method, values in sizes.items())


def plain(value):
    """Turn a step result into the plain yaml value expectations are written in."""
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, (config.Item, config.Role, config.Decision, config.RequestStatus)):
        return value.value
    if isinstance(value, dict):
        return dict((plain(key), plain(entry)) for key, entry in value.items())
    if isinstance(value, (list, tuple)):
        return [plain(entry) for entry in value]
    if isinstance(value, audit.ComplianceReport):
        return {'supplied': value.supplied, 'sold': value.sold, 'sales_count': value.sales_count,
                'consistent': value.consistent}
    return value


def _seed_bytes(seed):
    seed = str(seed)
    try:
        return bytes.fromhex(seed)
    except ValueError:
        return seed.encode('utf-8')


class Scenario(object):
    """One scenario run on a fresh ledger with four stakeholders."""

    def __init__(self, document, name='scenario'):
        """Validate a parsed scenario and set up the ledger and the stakeholders.

        :param document: Scenario mapping as read by ``LineLoader``
        :type document: dict
        :param name: Name to use if the scenario does not set one
        :type name: str
        :raises exceptions.ScenarioParseException: If the scenario is malformed
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        if not isinstance(document, dict):
            raise exceptions.ScenarioParseException("A scenario must be a mapping")
        self.name = str(document.get('name') or name)
        self.seed = str(document.get('seed', DEFAULT_SEED))
        self.variables = {}
        self.outcomes = []

        genesis_document = dict(strip_lines(document.get('genesis') or {}))
        for key in GENESIS_KEYS:
            if key in document and key != 'name':
                genesis_document[key] = document[key]
        genesis_document.setdefault('name', self.name.replace(' ', '_'))
        try:
            self.genesis = genesis_from_dict(genesis_document, self.logger)
            self.policy = PrivacyPolicy.from_dict(strip_lines(document.get('policy') or {}))
        except exceptions.ConfigurationException as err:
            raise exceptions.ScenarioParseException(err.message, document.get(LINE_KEY))

        size_profile = document.get('size_profile', 'quick')
        if size_profile not in config.BENCH_PROFILES:
            raise exceptions.ScenarioParseException("Unknown size profile '%s'" % size_profile,
                                                    document.get(LINE_KEY))
        self.sizes_kb = config.BENCH_PROFILES[size_profile]['sizes_kb']

        raw_steps = document.get('steps')
        if not isinstance(raw_steps, list) or not raw_steps:
            raise exceptions.ScenarioParseException("A scenario needs a nonempty 'steps' list", document.get(LINE_KEY))
        self.steps = [self._parse_step(index, raw) for index, raw in enumerate(raw_steps)]

        self.ledger = Ledger(self.genesis)
        seed = _seed_bytes(self.seed)
        self.actors = dict((role, StakeholderContext(role, self.ledger,
                                                     entropy=SeededEntropy(seed + b'/' + role.value.encode())))
                           for role in config.Role)
        self.directory = role_directory(*self.actors.values())
        self.filler = SeededEntropy(seed + b'/filler')
        self.logger.debug("Scenario '%s' with %s steps on a %s ms ledger" % (self.name, len(self.steps),
                                                                          self.genesis.block_interval_ms))

    @classmethod
    def from_file(cls, path):
        """
        :raises IOError: If there is no file at ``path``
        :raises exceptions.ScenarioParseException: If the file is not a valid scenario
        """
        return cls(load_file(path, LineLoader), os.path.splitext(os.path.basename(path))[0])

    def _parse_step(self, index, raw):
        if not isinstance(raw, dict):
            raise exceptions.ScenarioParseException("Step %s is not a mapping" % index)
        line = raw.get(LINE_KEY)
        for key in ('actor', 'op'):
            if key not in raw:
                raise exceptions.ScenarioParseException("Step %s has no '%s'" % (index, key), line)
        try:
            actor = config.Role(raw['actor'])
        except ValueError:
            raise exceptions.ScenarioParseException("Unknown actor '%s'" % raw['actor'], line)
        if not hasattr(self, '_op_%s' % raw['op']):
            raise exceptions.ScenarioParseException("Unknown operation '%s'" % raw['op'], line)
        params = raw.get('params') or {}
        if not isinstance(params, dict):
            raise exceptions.ScenarioParseException("Parameters of step %s must be a mapping" % index, line)
        expect = strip_lines(raw.get('expect', EXPECT_OK))
        if expect != EXPECT_OK and not (isinstance(expect, dict) and len(expect) == 1
                                        and ('error' in expect or 'result' in expect)):
            raise exceptions.ScenarioParseException("Expectation must be 'ok', {error: ...} or {result: ...}", line)
        return Step(index, line, actor, raw['op'], strip_lines(params), expect, raw.get('save'))

    ###################
    # Run
    ###################
    def run(self):
        """Execute every step in order.

        :return: Outcome of the whole run
        :rtype: ScenarioOutcome
        :raises exceptions.ScenarioAssertionException: On the first step that does not meet its expectation
        """
        for step in self.steps:
            self._run_step(step)
        return self.outcome()

    def _run_step(self, step):
        self.logger.info("Step %s (line %s): %s %s" % (step.index, step.line, step.actor.value, step.op))
        actor = self.actors[step.actor]
        try:
            result = getattr(self, '_op_%s' % step.op)(actor, step)
        except exceptions.ScenarioParseException:
            raise
        except exceptions.MedchainException as err:
            self.logger.info("Step %s failed: %s" % (step.index, err.message))
            outcome = StepOutcome(step.index, step.line, step.actor.value, step.op, False, err.reason)
            self.outcomes.append(outcome)
            self._check(step, {'error': err.reason})
            return outcome
        outcome = StepOutcome(step.index, step.line, step.actor.value, step.op, True, result=plain(result))
        self.outcomes.append(outcome)
        if step.save:
            self.variables[step.save] = result
        self._check(step, {'result': outcome.result})
        return outcome

    def _check(self, step, actual):
        if step.expect == EXPECT_OK:
            if 'error' in actual:
                raise exceptions.ScenarioAssertionException(step.index, step.line, EXPECT_OK, actual)
        elif 'error' in step.expect:
            if actual.get('error') != step.expect['error']:
                raise exceptions.ScenarioAssertionException(step.index, step.line, step.expect, actual)
        elif actual != step.expect:
            raise exceptions.ScenarioAssertionException(step.index, step.line, step.expect, actual)

    def outcome(self):
        head = self.ledger.get_block(self.ledger.height)
        return ScenarioOutcome(self.name, self.seed, self.genesis.block_interval_ms, head.height,
                               head.state_root.hex(), list(self.outcomes), payload_sizes(self.ledger.snapshot()))

    ###################
    # Parameters
    ###################
    def _param(self, step, key, default=_REQUIRED):
        if key not in step.params:
            if default is _REQUIRED:
                raise exceptions.ScenarioParseException("Step %s needs parameter '%s'" % (step.index, key), step.line)
            return default
        return self._resolve(step, step.params[key])

    def _resolve(self, step, value):
        if isinstance(value, list):
            return [self._resolve(step, entry) for entry in value]
        if isinstance(value, str) and value.startswith('$'):
            if value[1:] not in self.variables:
                raise exceptions.ScenarioParseException("'%s' was not saved by an earlier step" % value, step.line)
            return self.variables[value[1:]]
        return value

    def _actor_param(self, step, key, default=_REQUIRED):
        name = self._param(step, key, default)
        try:
            return self.actors[config.Role(name)]
        except ValueError:
            raise exceptions.ScenarioParseException("'%s' is not an actor" % name, step.line)

    def _item_param(self, step, key):
        try:
            return config.Item(self._param(step, key))
        except ValueError:
            raise exceptions.ScenarioParseException("Unknown item '%s'" % step.params[key], step.line)

    def _items_param(self, step, key):
        names = self._param(step, key)
        try:
            return [config.Item(name) for name in names]
        except (ValueError, TypeError):
            raise exceptions.ScenarioParseException("Unknown items %s" % names, step.line)

    def _text_param(self, step, key, item):
        """Plaintext parameter; drawn from the scenario's size profile when absent."""
        value = self._param(step, key, None)
        if value is None:
            low, high = self.sizes_kb[item]
            fraction = int.from_bytes(self.filler(4), 'big') / float(2 ** 32)
            return self.filler(int((low + (high - low) * fraction) * 1024))
        return value if isinstance(value, bytes) else str(value).encode('utf-8')

    ###################
    # Operations
    ###################
    def _op_create_prescription(self, actor, step):
        patient = self._actor_param(step, 'patient', config.Role.PATIENT.value)
        pi, med, dia = [self._text_param(step, key, item) for key, item in zip(('pi', 'med', 'dia'), config.ALL_ITEMS)]
        return workflows.doctor_create_prescription(actor, patient.public_key, pi, med, dia)

    def _op_open_consent(self, actor, step):
        return workflows.patient_open_consent(actor)

    def _op_read_prescription(self, actor, step):
        plaintext = workflows.patient_read_prescription(actor, self._param(step, 'prescription'),
                                                        self._item_param(step, 'item'),
                                                        self._param(step, 'purpose', None))
        return plaintext.decode('utf-8', errors='replace')

    def _op_request_access(self, actor, step):
        return workflows.consumer_request_access(actor, self._param(step, 'consent'), self._items_param(step, 'items'),
                                                 self._param(step, 'prescription'))

    def _op_handle_requests(self, actor, step):
        decisions = workflows.patient_handle_requests(actor, self._param(step, 'consent'),
                                                      set(self._param(step, 'approve', [])), self.directory,
                                                      self.policy)
        return dict((request_id, {'decision': decision, 'items': items})
                    for request_id, (decision, items) in decisions.items())

    def _op_complete_access(self, actor, step):
        plaintext = workflows.consumer_complete_access(actor, self._param(step, 'consent'),
                                                       self._param(step, 'prescription'), self._param(step, 'request'),
                                                       self._item_param(step, 'item'),
                                                       self._param(step, 'purpose', None))
        return plaintext.decode('utf-8', errors='replace')

    def _op_open_sales(self, actor, step):
        return workflows.pharmacy_open_sales(actor, self._actor_param(step, 'recipient',
                                                                      config.Role.REGULATOR.value).address)

    def _op_open_control(self, actor, step):
        return workflows.regulator_open_control(actor, self._actor_param(step, 'pharmacy',
                                                                         config.Role.PHARMACY.value).address)

    def _op_supply(self, actor, step):
        return workflows.regulator_supply(actor, self._param(step, 'control'), self._param(step, 'amount'))

    def _op_dispense(self, actor, step):
        med = self._param(step, 'med')
        return workflows.pharmacy_dispense(actor, self._param(step, 'sales'), self._param(step, 'control'),
                                           self._param(step, 'prescription'), str(med).encode('utf-8'),
                                           self._param(step, 'price', 0))

    def _op_verify_compliance(self, actor, step):
        return workflows.regulator_verify_compliance(actor, self._param(step, 'control'), self._param(step, 'sales'))

    def _op_open_report(self, actor, step):
        return workflows.patient_open_report(actor, self._actor_param(step, 'regulator',
                                                                      config.Role.REGULATOR.value).address)

    def _op_open_reward(self, actor, step):
        return workflows.regulator_open_reward(actor, self._actor_param(step, 'patient',
                                                                        config.Role.PATIENT.value).address,
                                               self._param(step, 'mint'))

    def _op_report_and_reward(self, actor, step):
        regulator = self._actor_param(step, 'regulator', config.Role.REGULATOR.value)
        return workflows.patient_report_and_reward(actor, regulator, self._param(step, 'report'),
                                                   self._param(step, 'reward'), self._param(step, 'description', ''),
                                                   self._param(step, 'amount'))

    def _op_call(self, actor, step):
        """Raw contract call, bypassing the workflows and their role checks."""
        return actor.call(self._param(step, 'instance'), self._param(step, 'method'), *self._param(step, 'args', []))

    def _op_lineage(self, actor, step):
        record = audit.lineage(self.ledger.snapshot(), self._param(step, 'prescription'))
        return {'accesses': len(record.accesses), 'consents': len(record.consents),
                'dispensations': len(record.dispensations)}


def write_report(outcome, path):
    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)
    with open(path, 'w') as report_file:
        yaml.safe_dump(outcome.report(), report_file, default_flow_style=False, sort_keys=False)
