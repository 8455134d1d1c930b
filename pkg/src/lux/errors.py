"""Exception and warning classes raised across the package."""


class LuxError(Exception):
    """Base class for every error raised by lux."""


# dataset
class MissingColumn(LuxError, KeyError):
    pass


class ParseError(LuxError, ValueError):
    def __init__(self, row, col, detail=""):
        self.row = row
        self.col = col
        msg = f"cannot parse row {row}, column {col!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class EmptyDataset(LuxError, ValueError):
    pass


class DimensionMismatch(LuxError, ValueError):
    pass


# blackbox
class NoLabels(LuxError, ValueError):
    pass


class KTooLarge(LuxError, ValueError):
    pass


class ProcessSpawnError(LuxError, OSError):
    pass


class ProtocolError(LuxError, RuntimeError):
    pass


class ModelTimeout(LuxError, TimeoutError):
    pass


class EmptyInput(LuxError, ValueError):
    pass


# importance
class DegenerateBackground(LuxError, ValueError):
    pass


class SingularSystem(LuxError, ArithmeticError):
    pass


class MissingFeature(LuxError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(name)

    def __str__(self):
        return f"importance missing for feature {self.name!r}"


class NegativeImportance(LuxError, ValueError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"negative importance for feature {name!r}")


class AllZeroImportance(LuxError, ValueError):
    pass


# neighborhood / oversampling
class EmptyNeighborhood(LuxError, ValueError):
    pass


class TooFewRows(LuxError, ValueError):
    pass


class NoSameClassNeighbor(LuxError, ValueError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row} has no same-label neighbor in the neighborhood")


# tree
class ZeroMass(LuxError, ValueError):
    pass


class DegenerateBoundary(LuxError, ValueError):
    pass


class EmptySample(LuxError, ValueError):
    pass


class SchemaMismatch(LuxError, ValueError):
    pass


# explain / viz / metrics
class NoCounterfactualLeaf(LuxError, LookupError):
    pass


class MissingSnapshot(LuxError, ValueError):
    pass


class EmptyTest(LuxError, ValueError):
    pass


class EmptyTree(LuxError, ValueError):
    pass


class NoValidPairs(LuxError, ValueError):
    pass


class DegenerateTable(LuxError, ValueError):
    pass


class NoRepresentativesWarning(UserWarning):
    """A class quota in the base neighborhood could not be filled."""


class LowFidelityWarning(UserWarning):
    """The factual rule disagrees with the black-box label of the explained instance."""
