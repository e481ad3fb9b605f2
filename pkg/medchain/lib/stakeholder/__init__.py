from medchain.lib.stakeholder.client import StakeholderContext, role_directory
from medchain.lib.stakeholder.policy import PrivacyPolicy, DEFAULT_POLICY
