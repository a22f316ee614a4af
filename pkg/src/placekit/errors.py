"""Exception types shared across the toolkit."""


class PlacekitError(Exception):
    """Base class for all toolkit errors."""


class ScenarioError(PlacekitError):
    """A scenario document failed schema or semantic validation.

    ``violations`` holds ``(path, message)`` pairs, where ``path`` uses
    ``services[0].dag[2][1]`` style addressing.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{path or '<root>'}: {msg}" for path, msg in self.violations]
        super().__init__("; ".join(lines))


class TopologyError(PlacekitError):
    """Requested a link the infrastructure model does not have."""


class InfeasibleInstanceError(PlacekitError):
    """No feasible assignment could be found for some component."""


class SearchSpaceTooLarge(PlacekitError):
    """Exhaustive enumeration refused because the space exceeds the cap."""
