import math


# 10 * sqrt(2) / ln(10)
_RSS_SCALE = 10.0 * math.sqrt(2.0) / math.log(10.0)

TOA_MIN_MPCS = 18


def rss_beat_threshold(alpha: float, sigma_sh_db: float) -> int:
    """
    Smallest number of MPCs for which the error-free MVUE distance RMSE falls below that of RSS ranging.

    Args:
        alpha (float): Path-loss exponent, > 0.
        sigma_sh_db (float): Shadowing standard deviation in dB, > 0.

    Returns:
        int: ceil(sqrt(x^2 + 9/4) - 1/2) with x = (10 sqrt(2) / ln 10) * alpha / sigma_sh.
    """
    if alpha <= 0 or sigma_sh_db <= 0:
        raise ValueError("alpha and sigma_sh_db must be > 0")
    x = _RSS_SCALE * alpha / sigma_sh_db
    return int(math.ceil(math.sqrt(x * x + 2.25) - 0.5))


def toa_beat_criterion(k: int) -> bool:
    """Whether K MPCs beat two-way TOA ranging at equal delay-error sigma."""

    if k < 1:
        raise ValueError("K must be >= 1")
    return k > TOA_MIN_MPCS
