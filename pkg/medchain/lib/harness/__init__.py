from medchain.lib.harness.scenario import Scenario, ScenarioOutcome, write_report
from medchain.lib.harness.bench import PreBenchmark, LedgerBenchmark
