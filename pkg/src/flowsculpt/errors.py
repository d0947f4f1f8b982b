"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes (see ``flowsculpt.cli``), so new
failure modes should subclass one of the three mid-level categories
rather than raising bare ValueErrors from deep inside the pipeline.
"""


class FlowSculptError(Exception):
    """Base class for every error raised by this package."""


class InputError(FlowSculptError, ValueError):
    """A caller handed us something malformed: bad shape, dtype, domain,
    unknown config key, or an out-of-range hyperparameter."""


class ShapeError(InputError):
    """Array shape or rank does not match the operation's contract."""


class DataError(FlowSculptError):
    """On-disk artifacts are missing, truncated, or inconsistent
    (tensor files, manifests, weight directories)."""


class NumericError(FlowSculptError):
    """A numeric invariant broke at runtime: non-finite values where
    finite ones are required, a diverging optimizer, an empty mask
    where a positive count is guaranteed."""


class CacheMissError(NumericError):
    """An injection step asked the value cache for an entry that was
    never recorded; the message names the missing (step, block) key."""
