"""Exception types raised across the package."""


class HomwaveError(Exception):
    """Base class for all package errors."""


class GridError(HomwaveError):
    """Invalid grid construction request."""


class MediaError(HomwaveError):
    """Coefficient field violates its contract (ellipticity, symmetry, ...)."""


class SolverError(HomwaveError):
    """Iterative solve failed to reach tolerance; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AdmissibilityError(HomwaveError):
    """Operation requires a certified frequency band and none was given."""


class CFLError(HomwaveError):
    """Requested time step violates the stability bound."""


class HorizonError(HomwaveError):
    """Requested time exceeds the wrap-around horizon of the torus."""


class IllPosedError(HomwaveError):
    """Dispersive symbol not positive on frequencies carrying data mass."""


class FitError(HomwaveError):
    """Not enough clean data points for a requested fit."""
