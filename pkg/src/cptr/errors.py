"""Exception types shared across the solver stack."""


class DimensionMismatch(ValueError):
    """Operands have non-conforming shapes."""


class LayoutError(ValueError):
    """A field layout violates the (cell, field) tagging rules."""

    def __init__(self, message, cell_id=None):
        super().__init__(message)
        self.cell_id = cell_id


class SingularBlock(ArithmeticError):
    """A cell-local dense block failed the pivot test during inversion."""

    def __init__(self, cell_id, message=None):
        super().__init__(message or f"singular diagonal block in cell {cell_id}")
        self.cell_id = cell_id


class SingularSecondaryBlock(SingularBlock):
    """The J22 block of a cell cannot be factorized."""

    def __init__(self, cell_id, message=None):
        super().__init__(cell_id, message or f"singular secondary block J22 in cell {cell_id}")


class UnsupportedState(ValueError):
    """Phase combination outside the G / OG / OWG family."""


class ZeroPivot(ArithmeticError):
    """ILU(0) met an exactly zero (or non-finite) pivot."""

    def __init__(self, row):
        super().__init__(f"zero pivot in ILU(0) at row {row}")
        self.row = row


class SetupFailure(RuntimeError):
    """AMG coarsening stagnated or a sub-solver could not be built."""


class ConfigError(ValueError):
    """Invalid experiment configuration or method string."""
