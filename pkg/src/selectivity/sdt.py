"""Signal-detection arithmetic shared by the behavioral and masking modules."""

from __future__ import annotations

from scipy.special import ndtri


def z_quantile(p: float) -> float:
    """Standard normal quantile (inverse CDF) of ``p`` in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile argument must lie strictly in (0, 1), got {p}")
    return float(ndtri(p))


def corrected_rate(successes: int, trials: int) -> float:
    """Proportion with the 1/(2n) correction applied to empirical 0 and 1.

    Degenerate rates have infinite z-scores; the standard correction replaces
    0 with 1/(2n) and 1 with 1 - 1/(2n), where n is the trial count for that
    condition.
    """
    if trials <= 0:
        raise ValueError(f"trials must be positive, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} out of range for {trials} trials")
    rate = successes / trials
    if rate == 0.0:
        return 1.0 / (2.0 * trials)
    if rate == 1.0:
        return 1.0 - 1.0 / (2.0 * trials)
    return rate


def dprime_from_rates(hit_rate: float, fa_rate: float, clamp: bool = True) -> float:
    """Sensitivity index Z(HIT) - Z(FA).

    Rates must already be corrected away from 0 and 1. With ``clamp`` (the
    reporting convention used throughout this toolkit) negative values are
    replaced by 0; pass ``clamp=False`` for the raw antisymmetric value.
    """
    d = z_quantile(hit_rate) - z_quantile(fa_rate)
    if clamp and d < 0.0:
        return 0.0
    return d
