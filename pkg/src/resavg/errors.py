"""Exception hierarchy and warning categories."""


class ResavgError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(ResavgError, ValueError):
    """Operands live in spaces of different dimension."""


class ConvergenceError(ResavgError, RuntimeError):
    """An iterative limit procedure failed to converge.

    Raised by the time-averaging loops when the averaging horizon exceeds
    its cap without the iterates settling; this usually signals
    near-resonant small divisors in the frequency vector.
    """


class BlowUpError(ResavgError, RuntimeError):
    """Too many trajectories tripped the blow-up guard."""


class NonRadialMonomialError(ResavgError, ValueError):
    """An averaged field is not of the radial form a_j * R_j(moduli).

    Under a genuinely non-resonant frequency vector every surviving
    monomial factors through the target coordinate; hitting this error
    normally means the resonance class was misdeclared.
    """


class CoercivityError(ResavgError, RuntimeError):
    """A long-run simulation was requested for a non-coercive drift."""


class ScenarioError(ResavgError, ValueError):
    """A scenario file failed validation.

    Carries the full list of diagnostics, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ResonanceWarning(UserWarning):
    """A declared resonance class looks inconsistent with the frequencies."""
