"""Exception types shared across the package."""


class G3MError(ValueError):
    """Base class for all domain errors raised by this package."""


class SpecError(G3MError):
    """Invalid market specification (dimensions, volatilities, correlation)."""


class NotPSDError(SpecError):
    def __init__(self, smallest_eigenvalue: float):
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(
            f"correlation matrix is not positive semi-definite "
            f"(smallest eigenvalue {smallest_eigenvalue:.6g})"
        )


class PoolError(G3MError):
    """Invalid pool construction."""


class TradeRejected(G3MError):
    """A trade batch does not satisfy the pool invariant."""


class ReserveExhausted(TradeRejected):
    pass


class InvariantDecrease(TradeRejected):
    pass


class ArbitrageError(G3MError):
    """Arbitrage search failed (non-finite closed form, iteration cap)."""


class BoundViolation(AssertionError):
    """A theoretical bound was violated along a simulated trace."""


class PositionError(G3MError):
    """Invalid concentrated-liquidity position or deposit."""


class LeverageSaturation(PositionError):
    pass


class PanelError(G3MError):
    """Panel file does not conform to the expected schema."""
