"""Geometric mean market maker simulation, benchmarks and pool analytics."""

from .arbitrage import ArbResult, NoiseTrader, SimulationTrace, arbitrage_to_band, pairwise_arb, run_simulation
from .benchmarks import (
    constant_mix_path,
    decompose,
    excess_growth_rate,
    geometric_mean_path,
    hodl_path,
    impermanent_loss_path,
    mc_verify_il,
    realized_il_path,
)
from .errors import (
    ArbitrageError,
    BoundViolation,
    G3MError,
    InvariantDecrease,
    LeverageSaturation,
    NotPSDError,
    PanelError,
    PoolError,
    PositionError,
    ReserveExhausted,
    SpecError,
    TradeRejected,
)
from .market import CovarianceSpec, PricePathSet, sample_paths, time_grid, validate_spec
from .pool import (
    PoolState,
    TradeBatch,
    apply_batch,
    in_band,
    invariant_value,
    no_arb_band,
    validate_trade,
    wealth,
    wealth_bounds,
    wealth_constant,
)
from .univ3 import (
    RangePosition,
    concentrated_il_drift,
    leverage,
    liquidity_from_deposit,
    mc_recentered_drift,
    position_wealth,
    reserves,
    virtual_reserves,
)

__version__ = "0.1.0"
