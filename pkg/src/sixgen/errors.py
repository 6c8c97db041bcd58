"""Shared error hierarchy.

Every error carries a stable ``code`` string; the node API maps errors to
``{code, message, field?}`` bodies, so codes are part of the wire contract.
"""


class MarketplaceError(Exception):
    """Base class; ``code`` defaults to the class name."""

    code: str = "Error"

    def __init__(self, message: str = "", field: str = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.field = field

    def to_doc(self) -> dict:
        doc = {"code": self.code, "message": self.message}
        if self.field:
            doc["field"] = self.field
        return doc


def _define(name: str, base=MarketplaceError):
    err = type(name, (base,), {"code": name})
    return err


# ledger
DuplicateChannel = _define("DuplicateChannel")
UnknownMember = _define("UnknownMember")
CallerNotApproved = _define("CallerNotApproved")
NotMember = _define("NotMember")
BadSignature = _define("BadSignature")
PayloadTooLarge = _define("PayloadTooLarge")
# A channel a node does not hold: covers both "does not exist" and "private,
# not a member" with one indistinguishable error so existence never leaks.
UnknownChannel = _define("UnknownChannel")
AccessDenied = UnknownChannel

# identity
DuplicateIdentity = _define("DuplicateIdentity")
MalformedCertificate = _define("MalformedCertificate")
NotAdmin = _define("NotAdmin")
AlreadyVoted = _define("AlreadyVoted")
RequestClosed = _define("RequestClosed")
NotFound = _define("NotFound")
AlreadyRevoked = _define("AlreadyRevoked")

# marketplace
InvalidOffering = _define("InvalidOffering")
NotApproved = _define("NotApproved")
InvalidQuery = _define("InvalidQuery")
OfferingNotActive = _define("OfferingNotActive")
SelfTrade = _define("SelfTrade")
IllegalTransition = _define("IllegalTransition")
NotParty = _define("NotParty")
NotOwner = _define("NotOwner")
AlreadyRetired = _define("AlreadyRetired")

# contracts
ModelMismatch = _define("ModelMismatch")
AlreadyComposed = _define("AlreadyComposed")
IllegalEvent = _define("IllegalEvent")
UnboundPlaceholder = _define("UnboundPlaceholder")
UnknownBaseline = _define("UnknownBaseline")
OverrideTypeMismatch = _define("OverrideTypeMismatch")
ParseError = _define("ParseError")

# discovery
CorpusTooSmall = _define("CorpusTooSmall")
DegenerateFeature = _define("DegenerateFeature")
ModelNotFitted = _define("ModelNotFitted")
EmptyIntent = _define("EmptyIntent")
NoActionableTerms = _define("NoActionableTerms")

# sla
AlreadyRegistered = _define("AlreadyRegistered")
NoTerms = _define("NoTerms")
MalformedSample = _define("MalformedSample")
InsufficientData = _define("InsufficientData")
InvalidRange = _define("InvalidRange")

# broker
NoController = _define("NoController")
UnsupportedResourceType = _define("UnsupportedResourceType")
CapacityRace = _define("CapacityRace")
NotDeployed = _define("NotDeployed")

# node / harness
NodeStopped = _define("NodeStopped")
ConfigInvalid = _define("ConfigInvalid")
AuthRejected = _define("AuthRejected")
DataCorrupt = _define("DataCorrupt")
ScenarioInvalid = _define("ScenarioInvalid")
StepTimeout = _define("StepTimeout")
