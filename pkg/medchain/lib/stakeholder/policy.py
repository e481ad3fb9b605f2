import logging
import medchain.lib.util.config as config
import medchain.lib.util.exception as exceptions
from medchain.lib.contracts.base import canonical_items

DEFAULT_ALLOWED = {
    config.Role.DOCTOR: (config.Item.PI, config.Item.MED, config.Item.DIA),
    config.Role.PATIENT: (config.Item.PI, config.Item.MED, config.Item.DIA),
    config.Role.PHARMACY: (config.Item.MED,),
    config.Role.REGULATOR: (config.Item.MED,),
}
"""Items each role may be granted after patient permission"""


class PrivacyPolicy(object):
    """Patient-side privacy filter: which prescription items a requester of a given role can ever be granted."""

    def __init__(self, allowed=None):
        """
        :param allowed: Allowed items per role, defaults to ``DEFAULT_ALLOWED``
        :type allowed: dict
        """
        self.logger = logging.getLogger(self.__class__.__name__)
        self.logger.setLevel(config.DEFAULT_LOG_LEVEL)
        self._allowed = dict(DEFAULT_ALLOWED)
        if allowed:
            for role, items in allowed.items():
                self._allowed[role] = canonical_items(items)

    def allowed(self, role):
        """
        :param role: Role of the requester, None if unknown
        :type role: config.Role
        :rtype: tuple of config.Item
        """
        if role is None:
            return ()
        return self._allowed.get(role, ())

    def filter(self, role, items):
        """Intersect requested ``items`` with what ``role`` may receive.

        :return: Effective items in canonical order, empty if nothing may be granted
        :rtype: tuple of config.Item
        """
        allowed = set(self.allowed(role))
        effective = canonical_items(item for item in items if item in allowed)
        dropped = [item.value for item in items if item not in allowed]
        if dropped:
            self.logger.debug("Policy drops %s for %s" % (dropped, role.value if role else 'unknown requester'))
        return effective

    @classmethod
    def from_dict(cls, document):
        """Build a policy from a mapping of role names to item name lists, overriding the defaults.

        :raises exceptions.ConfigurationException: On unknown roles or items
        """
        allowed = {}
        for role_name, item_names in (document or {}).items():
            if role_name.startswith('__'):
                continue
            try:
                allowed[config.Role(role_name)] = [config.Item(name) for name in item_names or ()]
            except (ValueError, TypeError):
                raise exceptions.ConfigurationException("Invalid policy entry '%s: %s'" % (role_name, item_names))
        return cls(allowed)

    def __eq__(self, other):
        return isinstance(other, PrivacyPolicy) and other._allowed == self._allowed


DEFAULT_POLICY = PrivacyPolicy()
