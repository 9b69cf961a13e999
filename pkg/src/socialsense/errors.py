"""Exception hierarchy shared by all engine modules."""


class SocialSenseError(Exception):
    """Base class for model/runtime errors raised by the engines."""


class InvalidModel(SocialSenseError, ValueError):
    pass


class ZeroLikelihood(SocialSenseError):
    """The observation has zero probability under the predicted belief."""


class ZeroProbabilityAction(SocialSenseError):
    """The observed action has zero probability under the model."""


class UnsupportedDimension(SocialSenseError, ValueError):
    pass


class InvalidAgent(SocialSenseError, ValueError):
    pass


class CausalityViolation(SocialSenseError, ValueError):
    pass


class NotAchievable(SocialSenseError):
    """Single-hop inputs cannot reproduce the fair rating at this node."""

    def __init__(self, node, violations):
        self.node = node
        self.violations = list(violations)
        super().__init__(f"fair rating not achievable at node {node}; violating nodes {self.violations}")


class MissingBelief(SocialSenseError):
    pass


class TooLarge(SocialSenseError):
    pass


class NotAbsorbing(SocialSenseError, ValueError):
    pass


class InvalidDiscount(SocialSenseError, ValueError):
    pass


class InvalidNormalizer(SocialSenseError, ValueError):
    pass


class ShapeMismatch(SocialSenseError, ValueError):
    pass
