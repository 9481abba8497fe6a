"""Constant-product pool arithmetic in two numeric modes.

Rational mode keeps reserves as exact Fractions (or quadratic-field
elements) and preserves the reserve product exactly at zero fee.  Integer
mode keeps reserves as big-integer smallest units and floors every swap
output, matching Uniswap-V2-style on-chain semantics.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from fractions import Fraction

from .numeric import ExactNumber, exact_sign

BPS_DENOM = 10_000


class NumericMode(enum.Enum):
    RATIONAL = "rational"
    INTEGER = "integer"


class AmmError(Exception):
    """Base class for pool math failures."""


class UnknownAsset(AmmError):
    pass


class ZeroInput(AmmError):
    pass


class OutputExceedsReserve(AmmError):
    pass


class OutputNotLessThanReserve(AmmError):
    pass


@dataclass(frozen=True)
class AssetId:
    symbol: str
    decimals: int = 18

    def __post_init__(self):
        if not self.symbol:
            raise ValueError("asset symbol must be non-empty")
        if not 0 <= self.decimals <= 38:
            raise ValueError("asset decimals must be in [0, 38]")


def parse_amount(text: str, asset: AssetId, mode: NumericMode):
    """Parse a decimal-string amount into the mode's internal representation.

    Rational mode yields an exact Fraction in whole-token units; integer
    mode yields smallest units and rejects amounts finer than the asset's
    decimals.
    """
    try:
        dec = Decimal(str(text))
    except InvalidOperation as exc:
        raise ValueError(f"bad amount {text!r}") from exc
    frac = Fraction(dec)
    if mode is NumericMode.RATIONAL:
        return frac
    units = frac * 10 ** asset.decimals
    if units.denominator != 1:
        raise ValueError(
            f"{text} is finer than {asset.symbol}'s {asset.decimals} decimals")
    return int(units)


def format_amount(amount, asset: AssetId, mode: NumericMode) -> str:
    """Render an internal amount as a whole-token decimal/exact string."""
    if mode is NumericMode.INTEGER:
        whole = Fraction(amount, 10 ** asset.decimals)
        dec = Decimal(whole.numerator) / Decimal(whole.denominator)
        return format(dec, "f")
    return str(amount)


def amount_to_float(amount, asset: AssetId, mode: NumericMode) -> float:
    if mode is NumericMode.INTEGER:
        return amount / 10 ** asset.decimals
    return float(amount)


@dataclass(frozen=True)
class PoolState:
    pool_id: str
    asset0: AssetId
    asset1: AssetId
    reserve0: ExactNumber
    reserve1: ExactNumber
    fee_bps: int = 0
    mode: NumericMode = NumericMode.RATIONAL

    def __post_init__(self):
        if exact_sign(self.reserve0) <= 0 or exact_sign(self.reserve1) <= 0:
            raise ValueError("pool reserves must be positive")
        if not 0 <= self.fee_bps < BPS_DENOM:
            raise ValueError("fee_bps out of range")

    @property
    def k(self):
        return self.reserve0 * self.reserve1

    def has_asset(self, asset: AssetId) -> bool:
        return asset in (self.asset0, self.asset1)

    def reserve_of(self, asset: AssetId):
        if asset == self.asset0:
            return self.reserve0
        if asset == self.asset1:
            return self.reserve1
        raise UnknownAsset(f"{asset.symbol} not in pool {self.pool_id}")

    def other_asset(self, asset: AssetId) -> AssetId:
        if asset == self.asset0:
            return self.asset1
        if asset == self.asset1:
            return self.asset0
        raise UnknownAsset(f"{asset.symbol} not in pool {self.pool_id}")

    def with_reserves(self, asset_in: AssetId, reserve_in,
                      reserve_out) -> "PoolState":
        if asset_in == self.asset0:
            return replace(self, reserve0=reserve_in, reserve1=reserve_out)
        return replace(self, reserve0=reserve_out, reserve1=reserve_in)


def swap_exact_in(pool: PoolState, input_asset: AssetId,
                  amount_in) -> tuple[ExactNumber, PoolState]:
    """Swap amount_in of input_asset into the pool; return (out, new pool)."""
    if not pool.has_asset(input_asset):
        raise UnknownAsset(f"{input_asset.symbol} not in pool {pool.pool_id}")
    if exact_sign(amount_in) <= 0:
        raise ZeroInput("swap input must be positive")
    r_in = pool.reserve_of(input_asset)
    r_out = pool.reserve_of(pool.other_asset(input_asset))
    gamma_num = BPS_DENOM - pool.fee_bps
    if pool.mode is NumericMode.INTEGER:
        amount_in = int(amount_in)
        out = (amount_in * gamma_num * r_out) // (
            r_in * BPS_DENOM + amount_in * gamma_num)
    else:
        eff = amount_in * Fraction(gamma_num, BPS_DENOM)
        out = r_out * eff / (r_in + eff)
    if not exact_sign(r_out - out) > 0:
        raise OutputExceedsReserve("swap would drain the pool")
    new_pool = pool.with_reserves(input_asset, r_in + amount_in, r_out - out)
    return out, new_pool


def solve_input_for_output(pool: PoolState, output_asset: AssetId,
                           amount_out) -> ExactNumber:
    """Minimal input whose swap yields at least amount_out of output_asset."""
    if not pool.has_asset(output_asset):
        raise UnknownAsset(f"{output_asset.symbol} not in pool {pool.pool_id}")
    if exact_sign(amount_out) <= 0:
        raise ZeroInput("requested output must be positive")
    r_out = pool.reserve_of(output_asset)
    input_asset = pool.other_asset(output_asset)
    r_in = pool.reserve_of(input_asset)
    if not exact_sign(r_out - amount_out) > 0:
        raise OutputNotLessThanReserve(
            f"cannot take {amount_out} from reserve {r_out}")
    gamma_num = BPS_DENOM - pool.fee_bps
    if pool.mode is NumericMode.RATIONAL:
        return r_in * amount_out / (r_out - amount_out) \
            * Fraction(BPS_DENOM, gamma_num)
    amount_out = int(amount_out)
    amount_in = (r_in * amount_out * BPS_DENOM) // (
        (r_out - amount_out) * gamma_num) + 1
    # floor formula can overshoot by a unit; walk back to the true minimum
    while amount_in > 1:
        probe, _ = swap_exact_in(pool, input_asset, amount_in - 1)
        if probe < amount_out:
            break
        amount_in -= 1
    return amount_in


def spot_price(pool: PoolState, base_asset: AssetId) -> ExactNumber:
    """Quote-per-base reserve ratio (marginal price ignoring fees)."""
    r_base = pool.reserve_of(base_asset)
    r_quote = pool.reserve_of(pool.other_asset(base_asset))
    if pool.mode is NumericMode.INTEGER:
        return Fraction(r_quote, r_base)
    return r_quote / r_base
