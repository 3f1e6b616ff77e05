"""
Custom exceptions and the command-line error translation for the sampling engine.
Provides meaningful error messages, a machine-readable error class and an exit code.
"""
from django.core.management.base import CommandError
import logging

logger = logging.getLogger(__name__)


class DecisionFlowError(Exception):
    """
    Base class for every error raised by the engine.
    """
    error_class = 'internal'
    exit_code = 1

    def __init__(self, message, hint=None):
        self.message = message
        self.hint = hint
        super().__init__(self.message)


class InputError(DecisionFlowError):
    """
    Exception raised when caller-supplied data has the wrong shape or range.
    """
    error_class = 'input'
    exit_code = 2

    def __init__(self, message, field=None, hint=None):
        self.field = field
        super().__init__(message, hint=hint)


class InstanceParseError(InputError):
    """
    Exception raised when an instance file is malformed.
    """
    error_class = 'parse'
    exit_code = 3


class InstanceValidationError(InputError):
    """
    Exception raised when an instance violates a structural invariant
    (duplicate edge, self loop, bias vector of the wrong length).
    """
    error_class = 'validation'
    exit_code = 4


class ProblemParseError(DecisionFlowError):
    """
    Exception raised when an LS-MDP problem file cannot be parsed.
    """
    error_class = 'parse'
    exit_code = 3

    def __init__(self, message, line=None, hint=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, hint=hint)


class CapacityError(DecisionFlowError):
    """
    Exception raised when an exact computation would exceed its configured cap.
    """
    error_class = 'capacity'
    exit_code = 5

    def __init__(self, message, limit=None, required=None, hint=None):
        self.limit = limit
        self.required = required
        super().__init__(message, hint=hint)


class LogicError(DecisionFlowError):
    """
    Exception raised when an operation is called outside its precondition,
    e.g. asking for the transition out of a terminal state.
    """
    error_class = 'logic'
    exit_code = 6


class StructuralError(DecisionFlowError):
    """
    Exception raised when a layered graph is not a valid LS-MDP
    (dead end before the horizon, unnormalised prior row, level gap).
    """
    error_class = 'structure'
    exit_code = 7

    def __init__(self, message, state=None, line=None, hint=None):
        self.state = state
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message, hint=hint)


class DegeneracyError(DecisionFlowError):
    """
    Exception raised when the optimal policy is undefined at a state
    because every successor carries zero desirability.
    """
    error_class = 'degeneracy'
    exit_code = 8

    def __init__(self, message, state=None, hint=None):
        self.state = state
        super().__init__(message, hint=hint)


class StateLookupError(DecisionFlowError):
    """
    Exception raised when a state is absent from a path index or policy.
    """
    error_class = 'lookup'
    exit_code = 9

    def __init__(self, message, state=None, hint=None):
        self.state = state
        super().__init__(message, hint=hint)


class VerificationError(DecisionFlowError):
    """
    Exception raised when a numerical identity checked at run time fails.
    """
    error_class = 'verification'
    exit_code = 10


def describe_error(exc):
    """
    Build a machine-readable description of an exception.
    Unexpected exceptions are reported as internal errors.
    """
    if isinstance(exc, DecisionFlowError):
        error_data = {
            'error': exc.error_class,
            'message': exc.message,
            'exit_code': exc.exit_code,
        }
        for attribute in ('field', 'line', 'state', 'limit', 'required'):
            value = getattr(exc, attribute, None)
            if value is not None:
                error_data[attribute] = value
        if exc.hint:
            error_data['suggestion'] = exc.hint
    else:
        error_data = {
            'error': DecisionFlowError.error_class,
            'message': str(exc) if str(exc) else exc.__class__.__name__,
            'exit_code': DecisionFlowError.exit_code,
        }
    return error_data


def command_error_from(exc):
    """
    Translate any exception raised inside a management command into a
    CommandError whose message starts with the error class in brackets.
    """
    error_data = describe_error(exc)

    # Log the error for monitoring
    if isinstance(exc, DecisionFlowError):
        logger.warning(f"Command failed: {error_data['message']}", extra={
            'error_class': error_data['error'],
        })
    else:
        logger.error(f"Unexpected failure: {exc}", exc_info=True)

    message = f"[{error_data['error']}] {error_data['message']}"
    if error_data.get('suggestion'):
        message = f"{message} (suggestion: {error_data['suggestion']})"
    return CommandError(message, returncode=error_data['exit_code'])
