"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data errors
exit 2, numeric failures exit 3.
"""


class IrMatchError(Exception):
    """Base class for all package errors."""


# --- data / input errors -------------------------------------------------

class MalformedModule(IrMatchError):
    """IR text is structurally unusable (empty input, unbalanced braces)."""


class EmptyModule(IrMatchError):
    """Module contains no function bodies; no graph can be built."""


class VersionMismatch(IrMatchError):
    """Serialized artifact carries an unsupported format version."""


class CorruptPayload(IrMatchError):
    """Serialized artifact cannot be decoded."""


class ChecksumMismatch(IrMatchError):
    """Checkpoint blob does not match its recorded checksum."""


class EmptyCorpus(IrMatchError):
    """Vocabulary training received no node strings."""


class TooFewTasks(IrMatchError):
    """Task-level split needs at least five distinct tasks."""


class InsufficientNegatives(IrMatchError):
    """Fewer distinct-task pairs available than positives requested."""


class LengthMismatch(IrMatchError):
    """Score and label sequences differ in length."""


class EmptyBatch(IrMatchError):
    """A training batch contained no pairs."""


class NoInputs(IrMatchError):
    """An input directory contained no usable files."""


# --- numeric errors ------------------------------------------------------

class NumericError(IrMatchError):
    """Base class for numeric failures."""


class ShapeMismatch(NumericError):
    """Tensor operands have incompatible shapes."""


class NonFiniteInput(NumericError):
    """A forward input contained NaN or Inf."""


class NonFiniteGradient(NumericError):
    """A gradient contained NaN or Inf; the optimizer step was aborted."""


class NonFiniteLoss(NumericError):
    """The training loss became NaN or Inf."""


class NonFiniteScore(NumericError):
    """The pair score became NaN or Inf."""
