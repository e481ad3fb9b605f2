"""Reward contract: the regulator pays tokens from a balance minted once at instantiation."""
from dataclasses import dataclass, replace
from typing import Tuple
import medchain.lib.util.config as config
from medchain.lib.contracts.base import require_sender, parse_args, parse_address
from medchain.lib.util.exception import MalformedPayloadException, ZeroAmountException, \
    InsufficientBalanceException

KIND = config.ContractKind.REWARD


@dataclass(frozen=True)
class Transfer(object):
    to: bytes
    amount: int
    height: int

    def encode(self):
        return [self.to, self.amount, self.height]


@dataclass(frozen=True)
class RewardState(object):
    minted: int = 0
    balances: Tuple[Tuple[bytes, int], ...] = ()
    transfers: Tuple[Transfer, ...] = ()

    def balance_of(self, address):
        return dict(self.balances).get(bytes(address), 0)

    def total(self):
        return sum(amount for _, amount in self.balances)

    def encode(self):
        return [self.minted, [[address, amount] for address, amount in self.balances],
                [transfer.encode() for transfer in self.transfers]]


def _credit(balances, address, delta):
    table = dict(balances)
    table[address] = table.get(address, 0) + delta
    return tuple(sorted(table.items()))


def initial_state(args, sender=None):
    """Instantiation payload tail ``[mint]``, credited to the regulator."""
    if len(args) != 1 or not isinstance(args[0], int) or isinstance(args[0], bool) or args[0] < 0:
        raise MalformedPayloadException("Reward takes the initial mint as its only argument")
    mint = args[0]
    return RewardState(minted=mint, balances=_credit((), bytes(sender), mint) if mint else ())


def send_reward(instance, tx, ctx):
    """Payload ``[to, amount]``. Only the regulator (instance sender), within its balance."""
    require_sender(tx, instance.sender, 'regulator')
    to, amount = parse_args(tx.payload, bytes, int)
    to = parse_address(to)
    if amount <= 0:
        raise ZeroAmountException()
    state = instance.state
    if state.balance_of(tx.sender) < amount:
        raise InsufficientBalanceException("Balance %s is below %s" % (state.balance_of(tx.sender), amount))
    balances = _credit(_credit(state.balances, bytes(tx.sender), -amount), to, amount)
    return replace(state, balances=balances, transfers=state.transfers + (Transfer(to, amount, ctx.height),)), None


METHODS = {
    'send_reward': send_reward,
}
