"""Planner for the four-step state-mediated relocation bundle.

Phase 1 (dislocation) pushes the principal's capital plus a flash amount
through pool 1 and back through pool 2, leaving the two pools price-split.
Phase 2 (extraction) runs the reverse loop and delivers the harvest to the
beneficiary.  The solvers pick the flash amount so the first loop repays
itself, and the extraction size so the delivered amount hits its target.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .amm import (BPS_DENOM, AssetId, NumericMode, PoolState, swap_exact_in)
from .engine import (Action, FlashBorrow, FlashRepay, FlashSwapBorrow,
                     FlashSwapRepay, Swap, Transfer, TransferFrom)
from .numeric import (ExactNumber, ExactSqrtError, exact_sign, exact_sqrt,
                      solve_quadratic)


class PlannerError(Exception):
    pass


class NoPositiveRoot(PlannerError):
    pass


class TargetExceedsMaxProfit(PlannerError):
    pass


class FundingPolicy(enum.Enum):
    EXACT_REPAY = "exact_repay"
    SHORTFALL_FROM_PRINCIPAL = "shortfall_from_principal"


class ExtractionStyle(enum.Enum):
    FLASH_SWAP = "flash_swap"
    PLAIN_SWAP = "plain_swap"


@dataclass
class RelocationPlan:
    principal: str
    beneficiary: str
    operator: str
    flash_provider: str
    pool1: str
    pool2: str
    asset: AssetId          # the migrated asset
    a: ExactNumber          # principal input
    x: ExactNumber          # flash amount
    b: ExactNumber          # phase-1 intermediate (counter asset)
    x_recovered: ExactNumber
    b_prime: ExactNumber
    y: ExactNumber
    extraction_out: ExactNumber   # phase-2 gross output (y + raw profit)
    predicted_a_prime: ExactNumber
    funding_policy: FundingPolicy
    extraction_style: ExtractionStyle
    mode: NumericMode

    @property
    def shortfall(self) -> ExactNumber:
        return self.x - self.x_recovered

    def to_dict(self) -> dict:
        return {
            "pools": [self.pool1, self.pool2],
            "a": str(self.a),
            "x": str(self.x),
            "b": str(self.b),
            "x_recovered": str(self.x_recovered),
            "b_prime": str(self.b_prime),
            "y": str(self.y),
            "predicted_a_prime": str(self.predicted_a_prime),
            "funding_policy": self.funding_policy.value,
            "extraction_style": self.extraction_style.value,
            "numeric_mode": self.mode.value,
        }


def _check_pair(pool1: PoolState, pool2: PoolState, asset: AssetId) -> AssetId:
    if not (pool1.has_asset(asset) and pool2.has_asset(asset)):
        raise PlannerError("both pools must trade the migrated asset")
    counter = pool1.other_asset(asset)
    if pool2.other_asset(asset) != counter:
        raise PlannerError("pools must trade the same asset pair")
    return counter


def dislocation_output(pool1: PoolState, pool2: PoolState, asset: AssetId,
                       a, x) -> ExactNumber:
    """Amount of the migrated asset recovered by the phase-1 loop."""
    counter = _check_pair(pool1, pool2, asset)
    b, _ = swap_exact_in(pool1, asset, a + x)
    out, _ = swap_exact_in(pool2, counter, b)
    return out


def solve_flash_amount(pool1: PoolState, pool2: PoolState, asset: AssetId,
                       a) -> ExactNumber:
    """Flash amount x whose phase-1 loop output repays x exactly.

    Rational mode solves the closed-form quadratic (with the fee factor
    folded in); integer mode bisects for the largest x whose loop output
    still covers the repayment, which sits within one smallest unit of the
    continuous root.
    """
    _check_pair(pool1, pool2, asset)
    if exact_sign(a) <= 0:
        raise PlannerError("principal amount must be positive")
    r_a1 = pool1.reserve_of(asset)
    r_b1 = pool1.reserve_of(pool1.other_asset(asset))
    r_a2 = pool2.reserve_of(asset)
    r_b2 = pool2.reserve_of(pool2.other_asset(asset))

    if pool1.mode is NumericMode.RATIONAL:
        if pool1.fee_bps != pool2.fee_bps:
            raise PlannerError("rational solver assumes equal pool fees")
        gamma = Fraction(BPS_DENOM - pool1.fee_bps, BPS_DENOM)
        w = gamma * gamma * r_b1
        qa = r_b2 * gamma + w
        qb = r_b2 * r_a1 + r_b2 * gamma * a + w * a - w * r_a2
        qc = -w * r_a2 * a
        roots = solve_quadratic(qa, qb, qc)
        for root in roots:
            if exact_sign(root) > 0:
                return root
        raise NoPositiveRoot("no positive flash amount solves the loop")

    lo, hi = 1, int(r_a2)  # output < r_a2, so f(hi) < 0
    if dislocation_output(pool1, pool2, asset, a, lo) < lo:
        raise NoPositiveRoot("no positive flash amount solves the loop")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if dislocation_output(pool1, pool2, asset, a, mid) >= mid:
            lo = mid
        else:
            hi = mid
    return lo


def _extraction_coeffs(pool1_after: PoolState, pool2_after: PoolState,
                       asset: AssetId):
    """Coefficients of the phase-2 output relation in rational mode.

    With c1, c2 the post-dislocation reserves of pool 1 and c3, c4 those of
    pool 2, the gross phase-2 output satisfies
        out(y) = K * y / (B0 + A2 * y),   K = c1*c3*g^2,
        A2 = c2*g + c3*g^2,  B0 = c2*c4.
    """
    counter = _check_pair(pool1_after, pool2_after, asset)
    c1 = pool1_after.reserve_of(asset)
    c2 = pool1_after.reserve_of(counter)
    c3 = pool2_after.reserve_of(counter)
    c4 = pool2_after.reserve_of(asset)
    if pool1_after.fee_bps != pool2_after.fee_bps:
        raise PlannerError("rational solver assumes equal pool fees")
    g = Fraction(BPS_DENOM - pool1_after.fee_bps, BPS_DENOM)
    return c1 * c3 * g * g, c2 * g + c3 * g * g, c2 * c4


def extraction_result(pool1_after: PoolState, pool2_after: PoolState,
                      asset: AssetId, y) -> tuple[ExactNumber, ExactNumber]:
    """Replay phase 2 for a given repayment y; returns (b', gross out)."""
    counter = _check_pair(pool1_after, pool2_after, asset)
    b_prime, _ = swap_exact_in(pool2_after, asset, y)
    out, _ = swap_exact_in(pool1_after, counter, b_prime)
    return b_prime, out


def max_extractable(pool1_after: PoolState, pool2_after: PoolState,
                    asset: AssetId) -> ExactNumber:
    """Maximum net profit (gross out minus y) of the reverse loop.

    Integer mode runs a ternary search over y with a final local scan;
    rational mode evaluates the closed-form optimum.  Equal-price fresh
    pools admit no arbitrage and yield zero.
    """
    if pool1_after.mode is NumericMode.INTEGER:
        lo, hi = 0, int(pool1_after.reserve_of(asset))
        while hi - lo > 512:
            m1 = lo + (hi - lo) // 3
            m2 = hi - (hi - lo) // 3
            if _net_profit_int(pool1_after, pool2_after, asset, m1) \
                    < _net_profit_int(pool1_after, pool2_after, asset, m2):
                lo = m1 + 1
            else:
                hi = m2 - 1
        best = 0
        for y in range(max(lo, 0), hi + 1):
            best = max(best, _net_profit_int(pool1_after, pool2_after,
                                             asset, y))
        return best
    k_top, a2, b0 = _extraction_coeffs(pool1_after, pool2_after, asset)
    # optimum of K*y/(B0 + A2*y) - y at A2*y* = sqrt(K*B0) - B0
    try:
        root = exact_sqrt(k_top * b0)
    except ExactSqrtError as exc:
        raise PlannerError(
            "extraction optimum leaves the exact field; use integer mode"
        ) from exc
    y_star = (root - b0) / a2
    if exact_sign(y_star) <= 0:
        return Fraction(0)
    _, out = extraction_result(pool1_after, pool2_after, asset, y_star)
    return out - y_star


def _net_profit_int(pool1_after, pool2_after, asset, y) -> int:
    if y <= 0:
        return 0
    _, out = extraction_result(pool1_after, pool2_after, asset, y)
    return out - y


def solve_extraction(pool1_after: PoolState, pool2_after: PoolState,
                     asset: AssetId, target
                     ) -> tuple[ExactNumber, ExactNumber]:
    """Repayment y and borrow b' so the phase-2 loop nets the target.

    Returns the smaller of the two admissible y roots.  Raises
    TargetExceedsMaxProfit when the reverse loop cannot net the target.
    """
    if exact_sign(target) == 0:
        zero = 0 if pool1_after.mode is NumericMode.INTEGER else Fraction(0)
        return zero, zero
    if exact_sign(target) < 0:
        raise PlannerError("extraction target must be non-negative")

    if pool1_after.mode is NumericMode.RATIONAL:
        k_top, a2, b0 = _extraction_coeffs(pool1_after, pool2_after, asset)
        # out(y) - y = target  =>  A2*y^2 + (t*A2 + B0 - K)*y + t*B0 = 0
        qb = target * a2 + b0 - k_top
        qc = target * b0
        try:
            roots = solve_quadratic(a2, qb, qc)
        except ValueError as exc:
            raise TargetExceedsMaxProfit(
                f"target {target} above the reverse-loop optimum") from exc
        except ExactSqrtError as exc:
            raise PlannerError(
                "extraction root leaves the exact field; use integer mode"
            ) from exc
        y = roots[0]
        if exact_sign(y) <= 0:
            raise TargetExceedsMaxProfit("no positive extraction root")
        b_prime, _ = swap_exact_in(pool2_after, asset, y)
        return y, b_prime

    best = max_extractable(pool1_after, pool2_after, asset)
    if best < target:
        raise TargetExceedsMaxProfit(
            f"target {target} above the reverse-loop optimum {best}")
    # minimal y on the rising branch with profit >= target
    lo, hi = 0, int(pool1_after.reserve_of(asset))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _net_profit_int(pool1_after, pool2_after, asset, mid) >= target:
            hi = mid
        else:
            lo = mid
    y = hi
    b_prime, _ = extraction_result(pool1_after, pool2_after, asset, y)
    return y, b_prime


def argmax_extraction_int(pool1_after: PoolState, pool2_after: PoolState,
                          asset: AssetId) -> int:
    """Integer y attaining (within floor jitter) the reverse-loop optimum."""
    lo, hi = 0, int(pool1_after.reserve_of(asset))
    while hi - lo > 512:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if _net_profit_int(pool1_after, pool2_after, asset, m1) \
                < _net_profit_int(pool1_after, pool2_after, asset, m2):
            lo = m1 + 1
        else:
            hi = m2 - 1
    best_y, best = 0, 0
    for y in range(max(lo, 0), hi + 1):
        p = _net_profit_int(pool1_after, pool2_after, asset, y)
        if p > best:
            best_y, best = y, p
    return best_y


def plan_relocation(pool1: PoolState, pool2: PoolState, asset: AssetId,
                    principal: str, beneficiary: str, operator: str, a, *,
                    flash_provider: str = "flash",
                    funding_policy: FundingPolicy =
                    FundingPolicy.SHORTFALL_FROM_PRINCIPAL,
                    extraction_style: ExtractionStyle =
                    ExtractionStyle.FLASH_SWAP,
                    target=None, x_override=None, y_override=None
                    ) -> RelocationPlan:
    """Solve all relocation parameters and predict the delivered amount.

    Predicted quantities come from replaying the pool math itself, so the
    emitted bundle reproduces them exactly in either numeric mode.
    """
    counter = _check_pair(pool1, pool2, asset)
    mode = pool1.mode
    zero_fee = pool1.fee_bps == 0 and pool2.fee_bps == 0

    x = x_override if x_override is not None \
        else solve_flash_amount(pool1, pool2, asset, a)
    b, pool1_after = swap_exact_in(pool1, asset, a + x)
    x_recovered, pool2_after = swap_exact_in(pool2, counter, b)
    shortfall = x - x_recovered
    if exact_sign(shortfall) > 0 \
            and funding_policy is FundingPolicy.EXACT_REPAY:
        raise PlannerError(
            "exact-repay policy requires the solved flash amount; "
            "the supplied x leaves a repayment shortfall")

    if y_override is not None:
        y = y_override
        b_prime, out = extraction_result(pool1_after, pool2_after, asset, y) \
            if exact_sign(y) > 0 else (0, 0)
    elif target is not None and exact_sign(target) == 0:
        y = b_prime = out = 0
    elif zero_fee and target is None and mode is NumericMode.RATIONAL:
        # fee-free phase 2 with y equal to the phase-1 withdrawal undoes
        # both pool moves exactly: b' = b and the loop nets exactly a
        y, b_prime = x_recovered, b
        _, out = extraction_result(pool1_after, pool2_after, asset, y)
    else:
        if zero_fee and target is None:
            raw_target = a
        elif target is None:
            raw_target = max_extractable(pool1_after, pool2_after, asset)
        else:
            raw_target = target + shortfall
        if mode is NumericMode.INTEGER and target is None \
                and exact_sign(raw_target) > 0:
            y = argmax_extraction_int(pool1_after, pool2_after, asset)
            b_prime, out = extraction_result(pool1_after, pool2_after,
                                             asset, y)
        elif exact_sign(raw_target) <= 0:
            y = b_prime = out = 0
        else:
            y, b_prime = solve_extraction(pool1_after, pool2_after, asset,
                                          raw_target)
            _, out = extraction_result(pool1_after, pool2_after, asset, y)

    predicted = (out - y - shortfall) if exact_sign(y) > 0 else \
        (0 if mode is NumericMode.INTEGER else Fraction(0))
    if exact_sign(predicted) < 0:
        raise PlannerError("extraction does not cover the flash shortfall")
    return RelocationPlan(
        principal=principal, beneficiary=beneficiary, operator=operator,
        flash_provider=flash_provider, pool1=pool1.pool_id,
        pool2=pool2.pool_id, asset=asset, a=a, x=x, b=b,
        x_recovered=x_recovered, b_prime=b_prime, y=y, extraction_out=out,
        predicted_a_prime=predicted, funding_policy=funding_policy,
        extraction_style=extraction_style, mode=mode)


def build_relocation_bundle(plan: RelocationPlan, pool1: PoolState,
                            pool2: PoolState) -> list[Action]:
    """Emit the executable action list for a solved plan."""
    asset = plan.asset
    counter = pool1.other_asset(asset)
    o = plan.operator
    deferred_repay = exact_sign(plan.shortfall) > 0
    actions: list[Action] = [FlashBorrow(plan.flash_provider, o, asset,
                                         plan.x)]
    if plan.principal != o:
        actions.append(TransferFrom(plan.principal, o, o, asset, plan.a))
    actions += [
        Swap(o, plan.pool1, asset, plan.a + plan.x, o),
        Swap(o, plan.pool2, counter, plan.b, o),
    ]
    if not deferred_repay:
        actions.append(FlashRepay(o, plan.flash_provider, asset, plan.x))
    if exact_sign(plan.y) > 0:
        if plan.extraction_style is ExtractionStyle.FLASH_SWAP:
            actions += [
                FlashSwapBorrow(plan.pool2, o, counter, plan.b_prime),
                Swap(o, plan.pool1, counter, plan.b_prime, o),
                FlashSwapRepay(plan.pool2, o, asset, plan.y),
            ]
        else:
            actions += [
                FlashBorrow(plan.flash_provider, o, asset, plan.y),
                Swap(o, plan.pool2, asset, plan.y, o),
                Swap(o, plan.pool1, counter, plan.b_prime, o),
                FlashRepay(o, plan.flash_provider, asset, plan.y),
            ]
    if deferred_repay:
        # shortfall policy: the flash debt closes out of extraction proceeds
        actions.append(FlashRepay(o, plan.flash_provider, asset, plan.x))
    if exact_sign(plan.predicted_a_prime) > 0:
        actions.append(Transfer(o, plan.beneficiary, asset,
                                plan.predicted_a_prime))
    return actions
