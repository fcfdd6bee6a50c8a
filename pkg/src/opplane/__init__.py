"""Operation-centric confinement plane for self-hosted computer-use agents.

Every security-relevant operation an agent attempts is classified into a
risk vector, mapped to a security level, and routed to a decision: run on
the ordinary path, run under an isolated grant, hold for human
confirmation, or deny before anything executes. Grants are MAC-bound to
the exact request bytes, single-use, and expiring; every lifecycle leaves
a hash-chained evidence record.
"""

from .canonical import CanonicalEncodingError, digest, encode, hexdigest, mac_hex, mac_valid
from .evidence import ChainReport, load_records, verify_chain, verify_file
from .executor import ConstrainedExecutor, ExecutionOutcome, ScopedAction
from .endpoint import EndpointAgent, EndpointKeyring, EndpointServer, verify_remote_command
from .plane import FakeClock, PlaneClock, PlaneError, TrustedPlane
from .request import (
    PlaneClient,
    RequestError,
    Scope,
    SessionState,
    TrustedOperationRequest,
    build_request,
    request_digest,
)
from .risk import (
    Action,
    Context,
    Decision,
    EffectClass,
    ObjectClass,
    ObjectRef,
    OperationInstance,
    Origin,
    PolicyConfig,
    PolicyError,
    RiskVector,
    SecurityLevel,
    build_instance,
    classify,
    decide,
    default_policy,
    evaluate,
    load_policy,
    need_iso,
    project,
)
from .tasks import TASKS, TaskSpec

__version__ = "0.1.0"

__all__ = [
    "Action",
    "CanonicalEncodingError",
    "ChainReport",
    "ConstrainedExecutor",
    "Context",
    "Decision",
    "EffectClass",
    "EndpointAgent",
    "EndpointKeyring",
    "EndpointServer",
    "ExecutionOutcome",
    "FakeClock",
    "ObjectClass",
    "ObjectRef",
    "OperationInstance",
    "Origin",
    "PlaneClient",
    "PlaneClock",
    "PlaneError",
    "PolicyConfig",
    "PolicyError",
    "RequestError",
    "RiskVector",
    "Scope",
    "ScopedAction",
    "SecurityLevel",
    "SessionState",
    "TASKS",
    "TaskSpec",
    "TrustedOperationRequest",
    "TrustedPlane",
    "build_instance",
    "build_request",
    "classify",
    "decide",
    "default_policy",
    "digest",
    "encode",
    "evaluate",
    "hexdigest",
    "load_policy",
    "load_records",
    "mac_hex",
    "mac_valid",
    "need_iso",
    "project",
    "request_digest",
    "verify_chain",
    "verify_file",
    "verify_remote_command",
]
