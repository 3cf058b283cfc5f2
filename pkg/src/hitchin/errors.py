"""Exception hierarchy shared by every module.

Each error carries an ``exit_code`` so the command-line runner can map it
without a lookup table: 1 for failed checks, 2 for bad input, 3 for numeric
trouble.
"""


class HitchinError(Exception):
    exit_code = 3


class NumericError(HitchinError):
    exit_code = 3


class InputError(HitchinError, ValueError):
    exit_code = 2


class CheckFailed(HitchinError):
    exit_code = 1


# numlin
class NotRealSplit(NumericError):
    pass


class ModulusCollision(NumericError):
    pass


# flags
class NotTransverse(NumericError):
    pass


class NotInSchubertCell(NumericError):
    pass


class NotUnipotent(InputError):
    pass


class ZeroMinor(NumericError):
    pass


# words
class BudgetExceeded(InputError):
    pass


# reps
class LinkedAxes(InputError):
    pass


class LeftHitchinLocus(NumericError):
    pass


class SchemaError(InputError):
    pass


class NotUnimodular(InputError):
    pass


# spectra
class DegeneratePair(NumericError):
    pass


class DegenerateCoefficients(NumericError):
    pass


class UnderflowBudget(NumericError):
    pass


class NoDominantEigenvalue(NumericError):
    pass


# rigidity
class DegenerateConfiguration(NumericError):
    pass


class SingularAssembly(NumericError):
    pass


class NoConjugator(CheckFailed):
    def __init__(self, message, worst_word=None, residual=None):
        super().__init__(message)
        self.worst_word = worst_word
        self.residual = residual


class LostLoxodromy(NumericError):
    pass
