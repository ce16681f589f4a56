"""Exception types shared across the package."""


class ScriptPoolError(Exception):
    """Base class for all scriptpool errors."""


# -- script detection / corpus --------------------------------------------

class UnknownScriptError(ScriptPoolError):
    """A codepoint or tag falls outside every configured script."""


class AmbiguousScriptError(ScriptPoolError):
    """Text mixes scripts (or ties) beyond the single-script assumption."""


class ScriptMismatchError(ScriptPoolError):
    """A document's declared script disagrees with the detected one."""


class EmptyCorpusError(ScriptPoolError):
    pass


class ZeroWordsError(ScriptPoolError):
    """A document contains no whitespace-delimited words."""


class InvalidRatioError(ScriptPoolError):
    """Byte-to-word ratio below 1 cannot yield a valid prior."""


class UnrealizableLengthError(ScriptPoolError):
    """Requested word byte-length cannot be composed from whole codepoints."""


# -- compute ----------------------------------------------------------------

class ShapeMismatchError(ScriptPoolError):
    pass


class NonFiniteValueError(ScriptPoolError):
    """A forward computation produced NaN or Inf."""


class GraphReuseError(ScriptPoolError):
    """backward() was called twice on the same graph."""


class NonDeterministicFunctionError(ScriptPoolError):
    """Two seeded forward passes of a checked function disagreed."""


# -- boundary layer ----------------------------------------------------------

class InvalidTauError(ScriptPoolError):
    pass


class BinomialDomainError(ScriptPoolError):
    """k or beta outside the domain of the binomial objective."""


# -- model / training --------------------------------------------------------

class SequenceTooLongError(ScriptPoolError):
    pass


class NonFiniteGradientError(ScriptPoolError):
    pass


class NonFiniteLossError(ScriptPoolError):
    """Training loss became NaN/Inf; carries the offending step."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


# -- baselines / analysis -----------------------------------------------------

class InvalidBetaError(ScriptPoolError):
    pass


class AllZeroCountsError(ScriptPoolError):
    pass


class NonParallelCorpusError(ScriptPoolError):
    """Sentence counts differ across languages of a parallel corpus."""


class CorpusTooSmallWarning(UserWarning):
    """Pair-merge training ran out of repeated pairs before the target vocab."""
