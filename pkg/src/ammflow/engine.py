"""Atomic execution of action bundles over a world state.

A bundle either applies fully, with every flash debt closed, or it leaves
the input world untouched.  The produced ExecutionTrace records every
balance-moving event and is the ground truth consumed by both the
transfer-graph observer and the semantic tracer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .amm import (AssetId, NumericMode, PoolState, BPS_DENOM, UnknownAsset,
                  swap_exact_in)
from .numeric import ExactNumber, exact_sign

ROLE_LABELS = ("Principal", "Executor", "Beneficiary", "Operator",
               "PoolContract", "FlashProvider", "SettlementContract",
               "Unlabeled")

# labels whose balances belong to infrastructure, not economic actors
INFRA_LABELS = frozenset({"PoolContract", "FlashProvider",
                          "SettlementContract"})


class EngineError(Exception):
    """Base class for bundle execution failures."""


class InsufficientBalance(EngineError):
    pass


class InsufficientAllowance(EngineError):
    pass


class UnrepaidFlashDebt(EngineError):
    pass


class FlashSwapInvariantViolation(EngineError):
    pass


class Overfill(EngineError):
    pass


@dataclass(frozen=True)
class Address:
    id: str
    label: str = "Unlabeled"

    def __post_init__(self):
        if self.label not in ROLE_LABELS:
            raise ValueError(f"unknown label {self.label!r}")


@dataclass
class WorldState:
    mode: NumericMode
    addresses: dict[str, Address] = field(default_factory=dict)
    assets: dict[str, AssetId] = field(default_factory=dict)
    balances: dict[tuple[str, str], ExactNumber] = field(default_factory=dict)
    pools: dict[str, PoolState] = field(default_factory=dict)
    allowances: dict[tuple[str, str, str], ExactNumber] = field(
        default_factory=dict)

    def add_address(self, addr: Address) -> Address:
        if addr.id in self.addresses:
            raise ValueError(f"duplicate address id {addr.id}")
        self.addresses[addr.id] = addr
        return addr

    def add_asset(self, asset: AssetId) -> AssetId:
        self.assets[asset.symbol] = asset
        return asset

    def add_pool(self, pool: PoolState) -> PoolState:
        self.pools[pool.pool_id] = pool
        self.add_asset(pool.asset0)
        self.add_asset(pool.asset1)
        if pool.pool_id not in self.addresses:
            self.addresses[pool.pool_id] = Address(pool.pool_id,
                                                   "PoolContract")
        return pool

    def balance(self, addr: str, asset: AssetId) -> ExactNumber:
        return self.balances.get((addr, asset.symbol), 0)

    def set_balance(self, addr: str, asset: AssetId, amount) -> None:
        self.balances[(addr, asset.symbol)] = amount

    def allowance(self, owner: str, spender: str, asset: AssetId):
        return self.allowances.get((owner, spender, asset.symbol), 0)

    def approve(self, owner: str, spender: str, asset: AssetId,
                amount) -> None:
        self.allowances[(owner, spender, asset.symbol)] = amount

    def copy(self) -> "WorldState":
        return WorldState(mode=self.mode,
                          addresses=dict(self.addresses),
                          assets=dict(self.assets),
                          balances=dict(self.balances),
                          pools=dict(self.pools),
                          allowances=dict(self.allowances))

    def total_supply(self, asset: AssetId) -> ExactNumber:
        total = sum(v for (_, sym), v in self.balances.items()
                    if sym == asset.symbol)
        for pool in self.pools.values():
            if pool.has_asset(asset):
                total = total + pool.reserve_of(asset)
        return total


# -- actions ------------------------------------------------------------


@dataclass(frozen=True)
class Transfer:
    src: str
    dst: str
    asset: AssetId
    amount: ExactNumber


@dataclass(frozen=True)
class TransferFrom:
    owner: str
    spender: str
    dst: str
    asset: AssetId
    amount: ExactNumber


@dataclass(frozen=True)
class Swap:
    caller: str
    pool: str
    input_asset: AssetId
    amount_in: ExactNumber
    recipient: str


@dataclass(frozen=True)
class FlashBorrow:
    provider: str
    borrower: str
    asset: AssetId
    amount: ExactNumber
    fee_bps: int = 0


@dataclass(frozen=True)
class FlashRepay:
    borrower: str
    provider: str
    asset: AssetId
    amount: ExactNumber


@dataclass(frozen=True)
class FlashSwapBorrow:
    pool: str
    borrower: str
    asset: AssetId
    amount: ExactNumber


@dataclass(frozen=True)
class FlashSwapRepay:
    pool: str
    borrower: str
    asset: AssetId
    amount: ExactNumber


@dataclass(frozen=True)
class LimitOrderIntent:
    maker: str
    maker_asset: AssetId
    taker_asset: AssetId
    making_amount: ExactNumber
    taking_amount: ExactNumber
    receiver: str
    settlement: str

    def __post_init__(self):
        if exact_sign(self.making_amount) <= 0 \
                or exact_sign(self.taking_amount) <= 0:
            raise ValueError("order amounts must be positive")


@dataclass(frozen=True)
class FillLimitOrder:
    order: LimitOrderIntent
    filler: str
    fill_amount: ExactNumber  # in maker-asset units


Action = Union[Transfer, TransferFrom, Swap, FlashBorrow, FlashRepay,
               FlashSwapBorrow, FlashSwapRepay, FillLimitOrder]


# -- trace --------------------------------------------------------------


@dataclass(frozen=True)
class TransferEvent:
    seq: int
    src: str
    dst: str
    asset: AssetId
    amount: ExactNumber
    action_index: int


@dataclass(frozen=True)
class CallRecord:
    action_index: int
    kind: str
    caller: str
    callee: str


@dataclass
class ExecutionTrace:
    bundle_id: str
    initiator: str
    events: list[TransferEvent] = field(default_factory=list)
    calls: list[CallRecord] = field(default_factory=list)


# -- execution ----------------------------------------------------------


class _Execution:
    """Mutable working set for one bundle; discarded on failure."""

    def __init__(self, world: WorldState, initiator: str, bundle_id: str,
                 route_via_settlement: bool):
        self.world = world.copy()
        self.trace = ExecutionTrace(bundle_id=bundle_id, initiator=initiator)
        self.route_via_settlement = route_via_settlement
        self.flash_debts: dict[tuple[str, str, str], ExactNumber] = {}
        # pool_id -> pre-borrow reserve product for pending flash swaps
        self.flash_swap_k: dict[str, ExactNumber] = {}
        self.seq = 0

    def emit(self, src: str, dst: str, asset: AssetId, amount,
             action_index: int) -> None:
        self.seq += 1
        self.trace.events.append(
            TransferEvent(self.seq, src, dst, asset, amount, action_index))

    def call(self, action_index: int, kind: str, caller: str,
             callee: str) -> None:
        self.trace.calls.append(CallRecord(action_index, kind, caller, callee))

    def move(self, src: str, dst: str, asset: AssetId, amount,
             action_index: int) -> None:
        if exact_sign(amount) <= 0:
            raise EngineError("transfer amount must be positive")
        bal = self.world.balance(src, asset)
        if exact_sign(bal - amount) < 0:
            raise InsufficientBalance(
                f"{src} holds {bal} {asset.symbol}, needs {amount}")
        self.world.set_balance(src, asset, bal - amount)
        self.world.set_balance(dst, asset,
                               self.world.balance(dst, asset) + amount)
        self.emit(src, dst, asset, amount, action_index)

    # pool reserves sit outside the balance map; these helpers move value
    # across that boundary while emitting the corresponding event
    def pay_into_pool(self, src: str, pool_id: str, asset: AssetId, amount,
                      action_index: int) -> None:
        bal = self.world.balance(src, asset)
        if exact_sign(bal - amount) < 0:
            raise InsufficientBalance(
                f"{src} holds {bal} {asset.symbol}, needs {amount}")
        self.world.set_balance(src, asset, bal - amount)
        self.emit(src, pool_id, asset, amount, action_index)

    def pay_from_pool(self, pool_id: str, dst: str, asset: AssetId, amount,
                      action_index: int) -> None:
        self.world.set_balance(dst, asset,
                               self.world.balance(dst, asset) + amount)
        self.emit(pool_id, dst, asset, amount, action_index)


def _apply_fill(ex: _Execution, idx: int, act: FillLimitOrder) -> None:
    order = act.order
    if exact_sign(act.fill_amount - order.making_amount) > 0:
        raise Overfill(
            f"fill {act.fill_amount} exceeds making {order.making_amount}")
    if exact_sign(act.fill_amount) <= 0:
        raise EngineError("fill amount must be positive")
    making = act.fill_amount
    taking = making * order.taking_amount / order.making_amount
    if ex.world.mode is NumericMode.INTEGER:
        taking = -(-int(making) * int(order.taking_amount)
                   // int(order.making_amount))  # ceil, never underpay maker
    allowance = ex.world.allowance(order.maker, order.settlement,
                                   order.maker_asset)
    if exact_sign(allowance - making) < 0:
        raise InsufficientAllowance(
            f"maker {order.maker} allowance {allowance} < {making}")
    ex.world.approve(order.maker, order.settlement, order.maker_asset,
                     allowance - making)
    ex.call(idx, "fill_limit_order", act.filler, order.maker)
    # taker side first: the maker only releases funds against payment
    ex.move(act.filler, order.receiver, order.taker_asset, taking, idx)
    if ex.route_via_settlement:
        ex.move(order.maker, order.settlement, order.maker_asset, making, idx)
        ex.move(order.settlement, act.filler, order.maker_asset, making, idx)
    else:
        ex.move(order.maker, act.filler, order.maker_asset, making, idx)


def fill_limit_order(world: WorldState, order: LimitOrderIntent, filler: str,
                     fill_amount, *, route_via_settlement: bool = True
                     ) -> tuple[WorldState, list[TransferEvent]]:
    """Apply one order fill outside a bundle; returns (world', events)."""
    ex = _Execution(world, filler, "fill", route_via_settlement)
    _apply_fill(ex, 0, FillLimitOrder(order, filler, fill_amount))
    return ex.world, ex.trace.events


def _apply_action(ex: _Execution, idx: int, act: Action) -> None:
    world = ex.world
    if isinstance(act, Transfer):
        ex.call(idx, "transfer", act.src, act.dst)
        ex.move(act.src, act.dst, act.asset, act.amount, idx)
    elif isinstance(act, TransferFrom):
        allowance = world.allowance(act.owner, act.spender, act.asset)
        if exact_sign(allowance - act.amount) < 0:
            raise InsufficientAllowance(
                f"{act.spender} allowance from {act.owner} is {allowance}, "
                f"needs {act.amount}")
        world.approve(act.owner, act.spender, act.asset,
                      allowance - act.amount)
        ex.call(idx, "transfer_from", act.spender, act.owner)
        ex.move(act.owner, act.dst, act.asset, act.amount, idx)
    elif isinstance(act, Swap):
        pool = world.pools[act.pool]
        out, new_pool = swap_exact_in(pool, act.input_asset, act.amount_in)
        ex.call(idx, "swap", act.caller, act.pool)
        ex.pay_into_pool(act.caller, act.pool, act.input_asset, act.amount_in,
                         idx)
        world.pools[act.pool] = new_pool
        ex.pay_from_pool(act.pool, act.recipient,
                         pool.other_asset(act.input_asset), out, idx)
    elif isinstance(act, FlashBorrow):
        ex.call(idx, "flash_borrow", act.borrower, act.provider)
        ex.move(act.provider, act.borrower, act.asset, act.amount, idx)
        owed = act.amount
        if act.fee_bps:
            if world.mode is NumericMode.INTEGER:
                owed = owed + -(-int(act.amount) * act.fee_bps // BPS_DENOM)
            else:
                owed = owed + act.amount * Fraction(act.fee_bps, BPS_DENOM)
        key = (act.borrower, act.provider, act.asset.symbol)
        ex.flash_debts[key] = ex.flash_debts.get(key, 0) + owed
    elif isinstance(act, FlashRepay):
        key = (act.borrower, act.provider, act.asset.symbol)
        debt = ex.flash_debts.get(key, 0)
        if exact_sign(debt) <= 0:
            raise EngineError(f"no flash debt {key}")
        ex.call(idx, "flash_repay", act.borrower, act.provider)
        ex.move(act.borrower, act.provider, act.asset, act.amount, idx)
        ex.flash_debts[key] = debt - act.amount
    elif isinstance(act, FlashSwapBorrow):
        pool = world.pools[act.pool]
        reserve = pool.reserve_of(act.asset)
        if exact_sign(reserve - act.amount) <= 0:
            raise InsufficientBalance(
                f"flash swap {act.amount} exceeds reserve {reserve}")
        ex.call(idx, "flash_swap_borrow", act.borrower, act.pool)
        ex.flash_swap_k[act.pool] = pool.k
        world.pools[act.pool] = pool.with_reserves(
            act.asset, reserve - act.amount,
            pool.reserve_of(pool.other_asset(act.asset)))
        ex.pay_from_pool(act.pool, act.borrower, act.asset, act.amount, idx)
        key = (act.borrower, act.pool, act.asset.symbol)
        ex.flash_debts[key] = ex.flash_debts.get(key, 0) + act.amount
    elif isinstance(act, FlashSwapRepay):
        pool = world.pools[act.pool]
        if act.pool not in ex.flash_swap_k:
            raise EngineError(f"no pending flash swap on {act.pool}")
        ex.call(idx, "flash_swap_repay", act.borrower, act.pool)
        ex.pay_into_pool(act.borrower, act.pool, act.asset, act.amount, idx)
        r_repay = pool.reserve_of(act.asset) + act.amount
        r_other = pool.reserve_of(pool.other_asset(act.asset))
        k_before = ex.flash_swap_k.pop(act.pool)
        gamma_num = BPS_DENOM - pool.fee_bps
        if world.mode is NumericMode.INTEGER:
            lhs = (pool.reserve_of(act.asset) * BPS_DENOM
                   + int(act.amount) * gamma_num) * r_other
            ok = lhs >= k_before * BPS_DENOM
        else:
            adj = pool.reserve_of(act.asset) \
                + act.amount * Fraction(gamma_num, BPS_DENOM)
            ok = exact_sign(adj * r_other - k_before) >= 0
        if not ok:
            raise FlashSwapInvariantViolation(
                f"flash swap repay on {act.pool} fails the fee-adjusted "
                f"invariant")
        world.pools[act.pool] = pool.with_reserves(act.asset, r_repay,
                                                   r_other)
        # clear outstanding borrow(s) on this pool for the borrower
        for key in list(ex.flash_debts):
            if key[0] == act.borrower and key[1] == act.pool:
                ex.flash_debts[key] = 0
    elif isinstance(act, FillLimitOrder):
        _apply_fill(ex, idx, act)
    else:
        raise EngineError(f"unknown action {type(act).__name__}")


def execute_bundle(world: WorldState, bundle: list[Action], initiator: str,
                   *, bundle_id: str = "bundle-0",
                   route_via_settlement: bool = True
                   ) -> tuple[WorldState, ExecutionTrace]:
    """Run a bundle atomically; on any error the input world is untouched."""
    if not bundle:
        raise EngineError("bundle must be non-empty")
    ex = _Execution(world, initiator, bundle_id, route_via_settlement)
    for idx, act in enumerate(bundle):
        _apply_action(ex, idx, act)
    for key, debt in ex.flash_debts.items():
        if exact_sign(debt) > 0:
            raise UnrepaidFlashDebt(f"flash debt {key} = {debt} at bundle end")
    if ex.flash_swap_k:
        raise UnrepaidFlashDebt(
            f"unclosed flash swap on pools {sorted(ex.flash_swap_k)}")
    return ex.world, ex.trace


def net_deltas(trace: ExecutionTrace) -> dict[tuple[str, str], ExactNumber]:
    """Signed per-(address, asset) sums over all trace events."""
    deltas: dict[tuple[str, str], ExactNumber] = {}
    for ev in trace.events:
        key_src = (ev.src, ev.asset.symbol)
        key_dst = (ev.dst, ev.asset.symbol)
        deltas[key_src] = deltas.get(key_src, 0) - ev.amount
        deltas[key_dst] = deltas.get(key_dst, 0) + ev.amount
    return deltas


def trace_to_dict(trace: ExecutionTrace, mode: NumericMode) -> dict:
    """JSON-ready trace with stable field order."""
    return {
        "bundle_id": trace.bundle_id,
        "initiator": trace.initiator,
        "mode": mode.value,
        "assets": {ev.asset.symbol: ev.asset.decimals
                   for ev in trace.events},
        "events": [
            {
                "seq": ev.seq,
                "from": ev.src,
                "to": ev.dst,
                "asset": ev.asset.symbol,
                "amount": str(ev.amount),
                "action_index": ev.action_index,
                "bundle_id": trace.bundle_id,
            }
            for ev in trace.events
        ],
        "calls": [
            {
                "action_index": c.action_index,
                "kind": c.kind,
                "caller": c.caller,
                "callee": c.callee,
            }
            for c in trace.calls
        ],
    }


def trace_to_json(trace: ExecutionTrace, mode: NumericMode) -> str:
    return json.dumps(trace_to_dict(trace, mode), indent=2) + "\n"


def trace_from_dict(data: dict) -> ExecutionTrace:
    """Rebuild a trace from its JSON form (amounts parsed exactly)."""
    from .numeric import parse_exact

    assets = {sym: AssetId(sym, dec) for sym, dec in data["assets"].items()}
    trace = ExecutionTrace(bundle_id=data["bundle_id"],
                           initiator=data["initiator"])
    for ev in data["events"]:
        trace.events.append(TransferEvent(
            ev["seq"], ev["from"], ev["to"], assets[ev["asset"]],
            parse_exact(ev["amount"]), ev["action_index"]))
    for c in data.get("calls", []):
        trace.calls.append(CallRecord(c["action_index"], c["kind"],
                                      c["caller"], c["callee"]))
    return trace
