"""Exception and warning types shared across the package."""

from __future__ import annotations


class SkewmixError(Exception):
    """Base class for errors raised by skewmix."""


class ConfigError(SkewmixError, ValueError):
    pass


class BudgetExceeded(SkewmixError):
    """A preimage enumeration would exceed the configured leaf budget."""


class NewtonDivergence(SkewmixError):
    """A perturbed inverse branch could not be solved to the required residual."""


class NonConvergence(SkewmixError):
    """An iterative procedure (power iteration, fixed point) did not converge."""


class NotConverged(NonConvergence):
    """Independent spectral-radius estimates disagree beyond their uncertainty."""


class NotExact(SkewmixError):
    """A covector field has nonzero loop integrals; no potential exists."""


class NotIntegral(SkewmixError):
    """The dependence vector is not integral, so no circle semiconjugacy exists."""


class WindowTooNoisy(SkewmixError):
    """Too few correlation values above the noise floor to fit a rate."""


class AliasingWarning(UserWarning):
    """A sampled multiplier has non-negligible spectral mass beyond the truncation."""
