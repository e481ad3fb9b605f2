import os
import csv
import shutil
import tempfile
import unittest
import yaml
from medchain import runner
import medchain.lib.util.config as config
from medchain.ledger import read_chain, verify_chain

SCENARIO_DIR = os.path.join(runner.BASE_DIR, 'data', 'scenarios')


class RunnerTestBase(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.directory)

    def path(self, name):
        return os.path.join(self.directory, name)

    def assertExit(self, argv, status):
        with self.assertRaises(SystemExit) as context:
            runner.main(argv)
        self.assertEqual(context.exception.code, status.value,
                         msg="Expected exit status %s for %s" % (status.name, argv))

    def run_demo(self):
        chain = self.path('demo.chain')
        self.assertExit(['run', os.path.join(SCENARIO_DIR, 'demo_full_flow.yaml'), '--chain-out', chain,
                         '--report-out', self.path('demo.yaml')], config.ExitStatus.FINE)
        return chain


class ParserTest(unittest.TestCase):

    def test_commands(self):
        parser = runner.build_parser()
        self.assertEqual(sorted(runner.HANDLERS), sorted(runner.COMMANDS))
        args = parser.parse_args(['bench-ledger', '--out', 'x.csv'])
        self.assertEqual((args.n_txs, args.interval, args.profile), (300, None, 'juno'))
        args = parser.parse_args(['bench-pre', '--out', 'x.csv', '--profile', 'paper'])
        self.assertEqual((args.profile, args.iterations), ('paper', None))

    def test_missing_command(self):
        with self.assertRaises(SystemExit):
            runner.build_parser().parse_args([])


class RunCommandTest(RunnerTestBase):

    def test_demo(self):
        chain = self.run_demo()
        self.assertTrue(verify_chain(read_chain(chain)).valid)
        with open(self.path('demo.yaml')) as report_file:
            report = yaml.safe_load(report_file)
        self.assertEqual(report['scenario'], 'demo_full_flow')
        self.assertEqual(len(report['steps']), 20)

    def test_assertion_mismatch(self):
        chain = self.path('pi.chain')
        self.assertExit(['run', os.path.join(SCENARIO_DIR, 'pharmacy_requests_pi.yaml'), '--chain-out', chain],
                        config.ExitStatus.ASSERTION_MISMATCH)
        self.assertTrue(verify_chain(read_chain(chain)).valid)

    def test_missing_scenario(self):
        self.assertExit(['run', self.path('missing.yaml')], config.ExitStatus.FILE_NOT_FOUND)

    def test_malformed_scenario(self):
        with open(self.path('bad.yaml'), 'w') as scenario_file:
            scenario_file.write("steps:\n  - actor: Nurse\n    op: open_consent\n")
        self.assertExit(['run', self.path('bad.yaml')], config.ExitStatus.SCENARIO_PARSING_ERROR)


class VerifyAndAuditTest(RunnerTestBase):

    def test_verify(self):
        self.assertExit(['verify', self.run_demo()], config.ExitStatus.FINE)

    def test_verify_tampered(self):
        chain = self.run_demo()
        with open(chain) as chain_file:
            lines = chain_file.read().splitlines()
        raw = bytearray(bytes.fromhex(lines[3]))
        raw[len(raw) // 2] ^= 0x01
        lines[3] = bytes(raw).hex()
        with open(chain, 'w') as chain_file:
            chain_file.write('\n'.join(lines) + '\n')
        self.assertExit(['verify', chain], config.ExitStatus.CHAIN_INVALID)
        self.assertExit(['audit', chain, '00' * config.INSTANCE_ID_LENGTH], config.ExitStatus.CHAIN_INVALID)

    def test_audit(self):
        chain = self.run_demo()
        with open(self.path('demo.yaml')) as report_file:
            report = yaml.safe_load(report_file)
        prescription = report['steps'][0]['result']
        self.assertExit(['audit', chain, prescription, '--out', self.path('lineage')], config.ExitStatus.FINE)
        with open(self.path('lineage.yaml')) as record_file:
            self.assertEqual(yaml.safe_load(record_file)['prescription'], prescription)
        self.assertTrue(os.path.isfile(self.path('lineage.txt')))

    def test_audit_unknown_instance(self):
        chain = self.run_demo()
        self.assertExit(['audit', chain, 'ff' * config.INSTANCE_ID_LENGTH], config.ExitStatus.UNKNOWN_INSTANCE)
        self.assertExit(['audit', chain, 'not-hex'], config.ExitStatus.UNKNOWN_INSTANCE)


class KeygenAndBenchTest(RunnerTestBase):

    def test_keygen(self):
        out = self.path('keys/doctor.yaml')
        self.assertExit(['keygen', '--role', 'Doctor', '--seed', '01' * 16, '--out', out], config.ExitStatus.FINE)
        with open(out) as key_file:
            document = yaml.safe_load(key_file)
        self.assertEqual(document['role'], 'Doctor')
        self.assertEqual(len(bytes.fromhex(document['address'])), config.ADDRESS_LENGTH)
        self.assertEqual(os.stat(out).st_mode & 0o777, 0o600)

    def test_keygen_deterministic(self):
        first, second = self.path('a.yaml'), self.path('b.yaml')
        self.assertExit(['keygen', '--seed', 'ab' * 16, '--out', first], config.ExitStatus.FINE)
        self.assertExit(['keygen', '--seed', 'ab' * 16, '--out', second], config.ExitStatus.FINE)
        with open(first) as a, open(second) as b:
            self.assertEqual(a.read(), b.read())

    def test_keygen_fixed_seed(self):
        out = self.path('patient.yaml')
        self.assertExit(['keygen', '--role', 'Patient', '--seed', '01' * 32, '--out', out], config.ExitStatus.FINE)
        with open(out) as key_file:
            document = yaml.safe_load(key_file)
        self.assertEqual(document['address'], 'a5ab43aed4f89cdfb1d66a977bc7b3ed9b5750d6')
        self.assertEqual(document['public_key'], '03fc7b4b1ac0345591954e0fe19367d5b1e043c5cd5ad176386418be5e1fc03edb')

    def test_bad_seed(self):
        self.assertExit(['keygen', '--seed', 'xyz', '--out', self.path('k.yaml')], config.ExitStatus.ERRONEUS_CONFIG)

    def test_bench_ledger(self):
        out = self.path('ledger.csv')
        self.assertExit(['bench-ledger', '--n-txs', '20', '--interval', '1000', '--out', out],
                        config.ExitStatus.FINE)
        with open(out) as csv_file:
            self.assertEqual(len(list(csv.reader(csv_file))), 21)

    def test_bench_ledger_no_txs(self):
        self.assertExit(['bench-ledger', '--n-txs', '0', '--out', self.path('ledger.csv')],
                        config.ExitStatus.ERRONEUS_CONFIG)

    def test_bench_pre(self):
        out = self.path('pre.csv')
        self.assertExit(['bench-pre', '--iterations', '1', '--seed', '00', '--out', out], config.ExitStatus.FINE)
        self.assertTrue(os.path.isfile(out))


if __name__ == '__main__':
    unittest.main()
