"""Recovery of pre-execution pool reserves from migration observations.

The four swap equations of the relocation pipeline are solved for the four
unknown reserves with a damped Newton iteration in log-reserve
coordinates (which keeps every iterate positive), then validated by an
independent integer-mode replay of the whole bundle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amm import AssetId, NumericMode, PoolState

BPS_DENOM = 10_000


class CalibrationError(Exception):
    pass


class NoConvergence(CalibrationError):
    pass


class InconsistentObservations(CalibrationError):
    """Residual floor above tolerance; best-found reserves attached."""

    def __init__(self, message: str, best: "CalibratedPools"):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ObservationSet:
    """Observed pipeline quantities, in whole-token units."""

    a: float          # principal input (migrated asset)
    x: float          # flash amount
    b: float          # phase-1 intermediate (counter asset)
    x_prime: float    # recovered flash capital
    b_prime: float    # phase-2 extraction volume (counter asset)
    y: float          # extraction repayment
    a_prime: float    # net delivered output
    fee_bps: int = 30
    asset_decimals: int = 18
    counter_decimals: int = 6

    def __post_init__(self):
        for name in ("a", "x", "b", "x_prime", "b_prime", "y", "a_prime"):
            if getattr(self, name) <= 0:
                raise ValueError(f"observation {name} must be positive")

    def to_dict(self) -> dict:
        return {
            "a": self.a, "x": self.x, "b": self.b, "x_prime": self.x_prime,
            "b_prime": self.b_prime, "y": self.y, "a_prime": self.a_prime,
            "fee_bps": self.fee_bps,
            "asset_decimals": self.asset_decimals,
            "counter_decimals": self.counter_decimals,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ObservationSet":
        return cls(a=float(data["a"]), x=float(data["x"]),
                   b=float(data["b"]), x_prime=float(data["x_prime"]),
                   b_prime=float(data["b_prime"]), y=float(data["y"]),
                   a_prime=float(data["a_prime"]),
                   fee_bps=int(data.get("fee_bps", 30)),
                   asset_decimals=int(data.get("asset_decimals", 18)),
                   counter_decimals=int(data.get("counter_decimals", 6)))


# published 10-unit migration observations (migrated asset vs 6-decimal
# counter asset, both venues at a 0.3% input fee)
PUBLISHED_OBSERVATIONS = ObservationSet(
    a=10.0, x=50.4893, b=159_461.05, x_prime=50.4741, b_prime=157_262.60,
    y=49.9515, a_prime=9.3541, fee_bps=30, asset_decimals=18,
    counter_decimals=6)


@dataclass
class CalibratedPools:
    pool1_reserves: tuple[float, float]   # (migrated, counter)
    pool2_reserves: tuple[float, float]
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def max_residual(self) -> float:
        return max(abs(v) for v in self.residuals.values())

    def to_dict(self) -> dict:
        return {
            "pool1": {"asset": self.pool1_reserves[0],
                      "counter": self.pool1_reserves[1]},
            "pool2": {"asset": self.pool2_reserves[0],
                      "counter": self.pool2_reserves[1]},
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "iterations": self.iterations,
        }


def _residuals(reserves: np.ndarray, obs: ObservationSet) -> np.ndarray:
    """Relative residuals of the four pipeline equations.

    Phase-2 volume enters one equation whether it is read as a flash-swap
    borrow or as a plain swap output: both readings impose the same
    reserve constraint, so a single system covers them.
    """
    r_a1, r_b1, r_a2, r_b2 = reserves
    g = 1.0 - obs.fee_bps / BPS_DENOM
    s1 = obs.a + obs.x
    shortfall = obs.x - obs.x_prime
    f1 = r_b1 * g * s1 / (r_a1 + g * s1) - obs.b
    f2 = r_a2 * g * obs.b / (r_b2 + g * obs.b) - obs.x_prime
    f3 = (r_b2 + obs.b) * g * obs.y / ((r_a2 - obs.x_prime) + g * obs.y) \
        - obs.b_prime
    f4 = (r_a1 + s1) * g * obs.b_prime / ((r_b1 - obs.b) + g * obs.b_prime) \
        - (obs.y + obs.a_prime + shortfall)
    return np.array([
        f1 / obs.b,
        f2 / obs.x_prime,
        f3 / obs.b_prime,
        f4 / (obs.y + obs.a_prime),
    ])


def _initial_guess(obs: ObservationSet) -> np.ndarray:
    """Seed reserves from effective prices and the implied slippage."""
    g = 1.0 - obs.fee_bps / BPS_DENOM
    s1 = obs.a + obs.x
    p_eff1 = obs.b / (g * s1)            # counter per asset, biased low
    p_eff2 = obs.b * g / obs.x_prime     # biased high
    p0 = float(np.sqrt(p_eff1 * p_eff2))
    rho1 = min(obs.b / (s1 * g * p0), 0.999)
    r_a1 = g * s1 * rho1 / max(1.0 - rho1, 1e-6)
    r_b1 = p0 * r_a1
    rho2 = min(obs.x_prime * p0 / (obs.b * g), 0.999)
    r_b2 = g * obs.b * rho2 / max(1.0 - rho2, 1e-6)
    r_a2 = r_b2 / p0
    guess = np.array([r_a1, r_b1, r_a2, r_b2])
    # the seed must at least dominate the observed outflows
    guess[0] = max(guess[0], 2 * s1)
    guess[1] = max(guess[1], 2 * obs.b)
    guess[2] = max(guess[2], 2 * (obs.x_prime + obs.y))
    guess[3] = max(guess[3], 2 * obs.b_prime)
    return guess


def calibrate_reserves(obs: ObservationSet, *, tol: float = 1e-12,
                       consistency_tol: float = 1e-3,
                       max_iter: int = 200) -> CalibratedPools:
    """Damped Newton solve for the four pre-execution reserves.

    Raises NoConvergence when the iteration stalls far from a solution and
    InconsistentObservations when the residual floor stays above
    consistency_tol (best-found reserves attached to the exception).
    """
    if obs.fee_bps > 0 and obs.a_prime >= obs.a:
        raise InconsistentObservations(
            "delivered output not below principal input despite fees",
            CalibratedPools((0.0, 0.0), (0.0, 0.0)))

    z = np.log(_initial_guess(obs))
    fval = _residuals(np.exp(z), obs)
    best_z, best_norm = z.copy(), float(np.max(np.abs(fval)))
    iterations = 0
    for iterations in range(1, max_iter + 1):
        norm = float(np.max(np.abs(fval)))
        if norm < tol:
            break
        jac = np.zeros((4, 4))
        h = 1e-7
        for j in range(4):
            zj = z.copy()
            zj[j] += h
            jac[:, j] = (_residuals(np.exp(zj), obs) - fval) / h
        try:
            step = np.linalg.solve(jac, -fval)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -fval, rcond=None)[0]
        step = np.clip(step, -2.0, 2.0)
        lam, improved = 1.0, False
        for _ in range(30):
            z_new = z + lam * step
            f_new = _residuals(np.exp(z_new), obs)
            if np.max(np.abs(f_new)) < norm:
                z, fval = z_new, f_new
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
        if float(np.max(np.abs(fval))) < best_norm:
            best_z, best_norm = z.copy(), float(np.max(np.abs(fval)))

    reserves = np.exp(best_z)
    res = _residuals(reserves, obs)
    labels = ("phase1_out", "phase1_recover", "phase2_volume", "phase2_out")
    result = CalibratedPools(
        pool1_reserves=(float(reserves[0]), float(reserves[1])),
        pool2_reserves=(float(reserves[2]), float(reserves[3])),
        residuals=dict(zip(labels, (float(v) for v in res))),
        iterations=iterations)
    if result.max_residual >= consistency_tol:
        if best_norm > 1.0:
            raise NoConvergence(
                f"stalled at residual {best_norm:.3e} after "
                f"{iterations} iterations")
        raise InconsistentObservations(
            f"residual floor {result.max_residual:.3e} above "
            f"{consistency_tol:.1e}", result)
    return result


def _integer_pools(calibrated: CalibratedPools, obs: ObservationSet
                   ) -> tuple[PoolState, PoolState, AssetId, AssetId]:
    asset = AssetId("ASSET", obs.asset_decimals)
    counter = AssetId("COUNTER", obs.counter_decimals)
    sa = 10 ** obs.asset_decimals
    sc = 10 ** obs.counter_decimals
    pool1 = PoolState("pool1", asset, counter,
                      round(calibrated.pool1_reserves[0] * sa),
                      round(calibrated.pool1_reserves[1] * sc),
                      obs.fee_bps, NumericMode.INTEGER)
    pool2 = PoolState("pool2", asset, counter,
                      round(calibrated.pool2_reserves[0] * sa),
                      round(calibrated.pool2_reserves[1] * sc),
                      obs.fee_bps, NumericMode.INTEGER)
    return pool1, pool2, asset, counter


def replay_and_validate(calibrated: CalibratedPools,
                        obs: ObservationSet) -> dict[str, float]:
    """Integer-mode full-bundle replay; per-quantity relative errors."""
    from .planner import plan_relocation

    pool1, pool2, asset, _ = _integer_pools(calibrated, obs)
    sa = 10 ** obs.asset_decimals
    sc = 10 ** obs.counter_decimals
    plan = plan_relocation(pool1, pool2, asset, "P", "B", "O",
                           round(obs.a * sa),
                           x_override=round(obs.x * sa),
                           y_override=round(obs.y * sa))
    replayed = {
        "b": plan.b / sc,
        "x_prime": plan.x_recovered / sa,
        "b_prime": plan.b_prime / sc,
        "a_prime": plan.predicted_a_prime / sa,
        "eta": plan.predicted_a_prime / sa / obs.a,
    }
    expected = {
        "b": obs.b, "x_prime": obs.x_prime, "b_prime": obs.b_prime,
        "a_prime": obs.a_prime, "eta": obs.a_prime / obs.a,
    }
    report = {f"{k}_rel_err": abs(replayed[k] - expected[k]) / expected[k]
              for k in expected}
    report.update({f"{k}_replayed": replayed[k] for k in replayed})
    return report


def generate_observations(pool1: PoolState, pool2: PoolState,
                          asset: AssetId, a, y) -> ObservationSet:
    """Synthetic observation set from known ground-truth pools.

    Used by round-trip identifiability checks: exact fee-mode replay with
    the self-repaying flash amount, then float projection.
    """
    from .planner import extraction_result, solve_flash_amount
    from .amm import swap_exact_in

    counter = pool1.other_asset(asset)
    x = solve_flash_amount(pool1, pool2, asset, a)
    b, pool1_after = swap_exact_in(pool1, asset, a + x)
    x_rec, pool2_after = swap_exact_in(pool2, counter, b)
    b_prime, out = extraction_result(pool1_after, pool2_after, asset, y)
    return ObservationSet(
        a=float(a), x=float(x), b=float(b), x_prime=float(x_rec),
        b_prime=float(b_prime), y=float(y),
        a_prime=float(out - y - (x - x_rec)),
        fee_bps=pool1.fee_bps,
        asset_decimals=asset.decimals,
        counter_decimals=counter.decimals)
