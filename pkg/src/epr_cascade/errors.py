"""Exception types shared across the package."""


class InvariantViolation(RuntimeError):
    """An internal invariant was broken (e.g. collapse onto a zero-probability outcome)."""


class BranchBudgetExceeded(ValueError):
    """Exact enumeration would need more branches than the configured budget."""
