"""Canonical scenario library and config-driven scenario construction.

Each scenario builds a fresh world plus an executable bundle.  Replays are
deterministic: identical parameters produce byte-identical exported
traces.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import yaml

from typing import Callable

from .amm import AssetId, NumericMode, PoolState, parse_amount, \
    solve_input_for_output, swap_exact_in
from .engine import (Action, Address, ExecutionTrace, FillLimitOrder,
                     FlashBorrow, FlashRepay, FlashSwapBorrow, FlashSwapRepay,
                     LimitOrderIntent, Swap, Transfer, TransferFrom,
                     WorldState, execute_bundle)
from .planner import (ExtractionStyle, FundingPolicy, RelocationPlan,
                      build_relocation_bundle, plan_relocation)


class ConfigError(Exception):
    """Scenario configuration failed validation."""


RECIPES = ("RelocationZeroFee", "RelocationFeeCalibrated", "PEBLimitOrder",
           "PEBFlashSwapVariant", "BenignArbitrage", "BenignRouting")


@dataclass
class ScenarioRun:
    name: str
    world: WorldState
    bundle: list[Action]
    initiator: str
    principal: str | None = None
    beneficiary: str | None = None
    intents: tuple[LimitOrderIntent, ...] = ()
    plan: Optional[RelocationPlan] = None
    fee_bps: int = 0
    route_via_settlement: bool = True
    is_relocation: bool = False

    def execute(self) -> tuple[WorldState, ExecutionTrace]:
        return execute_bundle(self.world, self.bundle, self.initiator,
                              bundle_id=self.name,
                              route_via_settlement=self.route_via_settlement)


# -- relocation scenarios ----------------------------------------------


def build_relocation_scenario(
        *, name: str = "relocation",
        mode: NumericMode = NumericMode.RATIONAL,
        fee_bps: int = 0,
        asset: AssetId = AssetId("TOKA", 18),
        counter: AssetId = AssetId("TOKB", 18),
        reserves1: tuple[str, str] = ("100", "100"),
        reserves2: tuple[str, str] = ("100", "100"),
        a: str = "10",
        operator_is_principal: bool = False,
        funding_policy: FundingPolicy =
        FundingPolicy.SHORTFALL_FROM_PRINCIPAL,
        extraction_style: ExtractionStyle = ExtractionStyle.FLASH_SWAP,
        x_override=None, y_override=None, target=None) -> ScenarioRun:
    """State-mediated relocation of `a` units of `asset` from P to B."""
    p_id, b_id, flash_id = "P", "B", "flash"
    o_id = p_id if operator_is_principal else "O"

    pool1 = PoolState("pool1", asset, counter,
                      parse_amount(reserves1[0], asset, mode),
                      parse_amount(reserves1[1], counter, mode),
                      fee_bps, mode)
    pool2 = PoolState("pool2", asset, counter,
                      parse_amount(reserves2[0], asset, mode),
                      parse_amount(reserves2[1], counter, mode),
                      fee_bps, mode)
    amount_a = parse_amount(a, asset, mode)

    world = WorldState(mode=mode)
    world.add_address(Address(p_id, "Principal"))
    world.add_address(Address(b_id, "Beneficiary"))
    if not operator_is_principal:
        world.add_address(Address(o_id, "Operator"))
    world.add_address(Address(flash_id, "FlashProvider"))
    world.add_pool(pool1)
    world.add_pool(pool2)
    world.set_balance(p_id, asset, amount_a)
    # flash inventory comfortably above any solvable flash amount
    world.set_balance(flash_id, asset,
                      pool1.reserve_of(asset) + pool2.reserve_of(asset))

    plan = plan_relocation(pool1, pool2, asset, p_id, b_id, o_id, amount_a,
                           flash_provider=flash_id,
                           funding_policy=funding_policy,
                           extraction_style=extraction_style,
                           target=target, x_override=x_override,
                           y_override=y_override)
    world.approve(p_id, o_id, asset, amount_a)
    bundle = build_relocation_bundle(plan, pool1, pool2)
    return ScenarioRun(name=name, world=world, bundle=bundle, initiator=o_id,
                       principal=p_id, beneficiary=b_id, plan=plan,
                       fee_bps=fee_bps, is_relocation=True)


def build_calibrated_relocation_scenario(name: str = "relocation_fee_calibrated"
                                         ) -> ScenarioRun:
    """Fee-mode relocation over reserves recovered from the published
    migration observations, replayed in integer smallest units."""
    from .calibration import PUBLISHED_OBSERVATIONS, calibrate_reserves

    obs = PUBLISHED_OBSERVATIONS
    calibrated = calibrate_reserves(obs)
    asset = AssetId("WETH", obs.asset_decimals)
    counter = AssetId("USDT", obs.counter_decimals)
    r1 = calibrated.pool1_reserves
    r2 = calibrated.pool2_reserves
    mode = NumericMode.INTEGER
    scale_a = 10 ** asset.decimals
    scale_b = 10 ** counter.decimals
    return build_relocation_scenario(
        name=name, mode=mode, fee_bps=obs.fee_bps, asset=asset,
        counter=counter,
        reserves1=(f"{r1[0]:.{asset.decimals}f}",
                   f"{r1[1]:.{counter.decimals}f}"),
        reserves2=(f"{r2[0]:.{asset.decimals}f}",
                   f"{r2[1]:.{counter.decimals}f}"),
        a=f"{obs.a}",
        x_override=round(obs.x * scale_a),
        y_override=round(obs.y * scale_a))


# -- PEB limit-order scenarios -----------------------------------------


def build_peb_scenario(*, name: str = "peb",
                       variant: str = "flash_loan",
                       making: str = "1000", taking: str = "990",
                       pool_reserves: tuple[str, str] = ("1000000",
                                                         "1000000"),
                       fee_bps: int = 30,
                       receiver: str = "B",
                       route_via_settlement: bool = True,
                       mode: NumericMode = NumericMode.RATIONAL
                       ) -> ScenarioRun:
    """Limit-order-mediated conversion with disjoint maker / filler /
    receiver roles; `variant` picks external flash liquidity or an AMM
    flash swap for the filler's float."""
    if variant not in ("flash_loan", "flash_swap"):
        raise ConfigError(f"unknown PEB variant {variant!r}")
    usd = AssetId("USDC", 6)
    dai = AssetId("DAI", 18)
    p_id, e_id, b_id, s_id, f_id, pool_id = \
        "P", "E", receiver, "settlement", "flash", "pool"

    pool = PoolState(pool_id, usd, dai,
                     parse_amount(pool_reserves[0], usd, mode),
                     parse_amount(pool_reserves[1], dai, mode),
                     fee_bps, mode)
    making_amt = parse_amount(making, usd, mode)
    taking_amt = parse_amount(taking, dai, mode)

    world = WorldState(mode=mode)
    world.add_address(Address(p_id, "Principal"))
    world.add_address(Address(e_id, "Executor"))
    if b_id not in (p_id, e_id):
        world.add_address(Address(b_id, "Beneficiary"))
    world.add_address(Address(s_id, "SettlementContract"))
    world.add_address(Address(f_id, "FlashProvider"))
    world.add_pool(pool)
    world.set_balance(p_id, usd, making_amt)
    world.set_balance(f_id, dai, pool.reserve_of(dai))

    order = LimitOrderIntent(maker=p_id, maker_asset=usd, taker_asset=dai,
                             making_amount=making_amt,
                             taking_amount=taking_amt,
                             receiver=b_id, settlement=s_id)
    world.approve(p_id, s_id, usd, making_amt)

    # the filler's swap cost for sourcing exactly the taker amount
    repay_usdc = solve_input_for_output(pool, dai, taking_amt)
    bundle: list[Action]
    if variant == "flash_loan":
        bundle = [
            FlashBorrow(f_id, e_id, dai, taking_amt),
            FillLimitOrder(order, e_id, making_amt),
            Swap(e_id, pool_id, usd, repay_usdc, e_id),
            FlashRepay(e_id, f_id, dai, taking_amt),
        ]
    else:
        bundle = [
            FlashSwapBorrow(pool_id, e_id, dai, taking_amt),
            FillLimitOrder(order, e_id, making_amt),
            FlashSwapRepay(pool_id, e_id, usd, repay_usdc),
        ]
    return ScenarioRun(name=name, world=world, bundle=bundle, initiator=e_id,
                       principal=p_id, beneficiary=b_id, intents=(order,),
                       fee_bps=fee_bps,
                       route_via_settlement=route_via_settlement)


# -- benign counterfactuals --------------------------------------------


_RENAMEABLE_FIELDS = ("src", "dst", "owner", "spender", "caller",
                      "recipient", "provider", "borrower", "filler")


def _rename_action(act: Action, mapping: dict[str, str]) -> Action:
    updates = {}
    for f in dataclasses.fields(act):
        if f.name in _RENAMEABLE_FIELDS:
            updates[f.name] = mapping.get(getattr(act, f.name),
                                          getattr(act, f.name))
        elif f.name == "order":
            order = act.order
            updates["order"] = dataclasses.replace(
                order,
                maker=mapping.get(order.maker, order.maker),
                receiver=mapping.get(order.receiver, order.receiver),
                settlement=mapping.get(order.settlement, order.settlement))
    return dataclasses.replace(act, **updates)


def build_benign_twin(run: ScenarioRun,
                      perturb: bool = False) -> ScenarioRun:
    """Ordinary-arbitrage counterpart of a relocation scenario.

    An unrelated trader funds the same loop from its own treasury and pays
    the proceeds to its own collection wallet; the transfer graph is
    structurally identical to the relocation's under label erasure.  With
    perturb=True one extra edge is appended as a negative control.
    """
    if not run.is_relocation:
        raise ConfigError("benign twin is defined for relocation scenarios")
    mapping = {run.principal: "treasury", run.initiator: "trader",
               run.beneficiary: "collect"}
    world = WorldState(mode=run.world.mode)
    for aid, addr in run.world.addresses.items():
        if aid in run.world.pools:
            continue
        label = addr.label if addr.label in ("PoolContract", "FlashProvider",
                                             "SettlementContract") \
            else "Unlabeled"
        world.add_address(Address(mapping.get(aid, aid), label))
    for pool in run.world.pools.values():
        world.add_pool(pool)
    for (aid, sym), amount in run.world.balances.items():
        world.set_balance(mapping.get(aid, aid), run.world.assets[sym],
                          amount)
    for (owner, spender, sym), amount in run.world.allowances.items():
        world.approve(mapping.get(owner, owner),
                      mapping.get(spender, spender),
                      run.world.assets[sym], amount)
    bundle = [_rename_action(act, mapping) for act in run.bundle]
    if perturb:
        plan = run.plan
        half = plan.predicted_a_prime / 2 \
            if run.world.mode is NumericMode.RATIONAL \
            else plan.predicted_a_prime // 2
        bundle.append(Transfer(mapping[run.beneficiary], "sidecar",
                               plan.asset, half))
        world.add_address(Address("sidecar"))
    return ScenarioRun(name=run.name + ("_twin_perturbed" if perturb
                                        else "_twin"),
                       world=world, bundle=bundle,
                       initiator=mapping[run.initiator],
                       fee_bps=run.fee_bps,
                       route_via_settlement=run.route_via_settlement)


def build_benign_arbitrage(*, name: str = "benign_arbitrage",
                           mode: NumericMode = NumericMode.RATIONAL,
                           fee_bps: int = 0) -> ScenarioRun:
    """Plain two-pool arbitrage by an independent trader: same loop shape
    as a relocation's extraction phase, no migration behind it."""
    tok_a = AssetId("TOKA", 18)
    tok_b = AssetId("TOKB", 18)
    pool1 = PoolState("pool1", tok_a, tok_b,
                      parse_amount("120", tok_a, mode),
                      parse_amount("100", tok_b, mode), fee_bps, mode)
    pool2 = PoolState("pool2", tok_a, tok_b,
                      parse_amount("100", tok_a, mode),
                      parse_amount("110", tok_b, mode), fee_bps, mode)
    world = WorldState(mode=mode)
    world.add_address(Address("trader"))
    world.add_pool(pool1)
    world.add_pool(pool2)
    stake = parse_amount("5", tok_a, mode)
    world.set_balance("trader", tok_a, stake)
    out_b, _ = swap_exact_in(pool1, tok_a, stake)
    bundle = [
        Swap("trader", "pool1", tok_a, stake, "trader"),
        Swap("trader", "pool2", tok_b, out_b, "trader"),
    ]
    return ScenarioRun(name=name, world=world, bundle=bundle,
                       initiator="trader", fee_bps=fee_bps)


def build_benign_routing(*, name: str = "benign_routing",
                         mode: NumericMode = NumericMode.RATIONAL
                         ) -> ScenarioRun:
    """Multi-hop payment routing through intermediaries."""
    tok = AssetId("TOKA", 18)
    world = WorldState(mode=mode)
    for aid in ("alice", "hub1", "hub2", "carol"):
        world.add_address(Address(aid))
    world.add_asset(tok)
    amt = parse_amount("25", tok, mode)
    world.set_balance("alice", tok, amt)
    bundle = [
        Transfer("alice", "hub1", tok, amt),
        Transfer("hub1", "hub2", tok, amt),
        Transfer("hub2", "carol", tok, amt),
    ]
    return ScenarioRun(name=name, world=world, bundle=bundle,
                       initiator="alice")


# -- library ------------------------------------------------------------


def library() -> dict[str, Callable[[], ScenarioRun]]:
    return {
        "relocation_sym_zero_fee": lambda: build_relocation_scenario(
            name="relocation_sym_zero_fee"),
        "relocation_asym_zero_fee": lambda: build_relocation_scenario(
            name="relocation_asym_zero_fee",
            reserves1=("250", "140"), reserves2=("180", "100.8"), a="12"),
        "relocation_operator_is_principal": lambda:
            build_relocation_scenario(
                name="relocation_operator_is_principal",
                operator_is_principal=True),
        "relocation_fee_calibrated": build_calibrated_relocation_scenario,
        "peb_limit_order": lambda: build_peb_scenario(
            name="peb_limit_order", variant="flash_loan"),
        "peb_flash_swap": lambda: build_peb_scenario(
            name="peb_flash_swap", variant="flash_swap"),
        "benign_arbitrage": build_benign_arbitrage,
        "benign_routing": build_benign_routing,
    }


def relocation_scenario_names() -> list[str]:
    return [n for n in library() if n.startswith("relocation")]


# -- config files -------------------------------------------------------


def load_scenario_config(path: str) -> ScenarioRun:
    """Build a scenario from a versioned YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    if data.get("schema_version") != 1:
        raise ConfigError("config requires schema_version: 1")
    name = data.get("scenario")
    if not isinstance(name, str) or not name:
        raise ConfigError("config requires a scenario name")
    recipe = data.get("recipe")
    if recipe not in RECIPES:
        raise ConfigError(f"unknown recipe {recipe!r}; expected one of "
                          f"{', '.join(RECIPES)}")
    params = data.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("params must be a mapping")

    def mode_of(default="rational") -> NumericMode:
        value = params.get("numeric_mode", default)
        try:
            return NumericMode(value)
        except ValueError as exc:
            raise ConfigError(f"unknown numeric_mode {value!r}") from exc

    def amount_param(key, default) -> str:
        value = params.get(key, default)
        if not isinstance(value, str):
            raise ConfigError(
                f"param {key} must be a decimal string, got {value!r}")
        return value

    pools = {p.get("id"): p for p in data.get("pools") or []}

    def pool_reserves(pool_id, default) -> tuple[str, str]:
        if pool_id not in pools:
            return default
        p = pools[pool_id]
        return str(p["reserve0"]), str(p["reserve1"])

    try:
        if recipe == "RelocationZeroFee":
            return build_relocation_scenario(
                name=name, mode=mode_of(),
                fee_bps=int(params.get("fee_bps", 0)),
                reserves1=pool_reserves("pool1", ("100", "100")),
                reserves2=pool_reserves("pool2", ("100", "100")),
                a=amount_param("a", "10"),
                operator_is_principal=bool(
                    params.get("operator_is_principal", False)),
                funding_policy=FundingPolicy(
                    params.get("funding_policy",
                               "shortfall_from_principal")),
                extraction_style=ExtractionStyle(
                    params.get("extraction_style", "flash_swap")))
        if recipe == "RelocationFeeCalibrated":
            return build_calibrated_relocation_scenario(name)
        if recipe in ("PEBLimitOrder", "PEBFlashSwapVariant"):
            return build_peb_scenario(
                name=name,
                variant="flash_loan" if recipe == "PEBLimitOrder"
                else "flash_swap",
                making=amount_param("making", "1000"),
                taking=amount_param("taking", "990"),
                pool_reserves=pool_reserves("pool",
                                            ("1000000", "1000000")),
                fee_bps=int(params.get("fee_bps", 30)),
                receiver=str(params.get("receiver", "B")),
                route_via_settlement=bool(
                    params.get("route_via_settlement", True)),
                mode=mode_of())
        if recipe == "BenignArbitrage":
            return build_benign_arbitrage(
                name=name, mode=mode_of(),
                fee_bps=int(params.get("fee_bps", 0)))
        return build_benign_routing(name=name, mode=mode_of())
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad scenario parameters: {exc}") from exc
