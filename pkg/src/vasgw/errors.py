"""Exception hierarchy shared by every gateway subsystem.

Each error carries a stable ``code`` so it can cross a gateway link inside an
``error`` frame and be rebuilt on the other side (see :func:`rebuild`).
"""

from __future__ import annotations

from typing import Any


class VasError(Exception):
    code = "vas-error"

    def __init__(self, message: str = "", **details: Any) -> None:
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_doc(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": _plain(self.details)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VasError):
            return NotImplemented
        return (self.code, self.message, _plain(self.details)) == (
            other.code,
            other.message,
            _plain(other.details),
        )

    def __hash__(self) -> int:
        return hash((self.code, self.message))


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_plain(v) for v in value]
        return sorted(items, key=repr) if isinstance(value, (set, frozenset)) else items
    if isinstance(value, VasError):
        return value.to_doc()
    if value is None or isinstance(value, (str, int, bool)):
        return value
    return str(value)


# -- request parsing ---------------------------------------------------------


class MalformedDocument(VasError):
    code = "malformed-document"


class UnknownKind(MalformedDocument):
    code = "unknown-kind"

    def __init__(self, tag: str) -> None:
        super().__init__(f"unknown VAS kind {tag!r}", tag=tag)
        self.tag = tag


class DuplicateKind(MalformedDocument):
    code = "duplicate-kind"

    def __init__(self, kind: str) -> None:
        super().__init__(f"kind {kind!r} requested more than once", kind=kind)
        self.kind = kind


class EmptyRequest(MalformedDocument):
    code = "empty-request"

    def __init__(self) -> None:
        super().__init__("profile request names no services")


class MalformedConstraint(MalformedDocument):
    code = "malformed-constraint"

    def __init__(self, field: str, reason: str = "") -> None:
        super().__init__(f"malformed constraint field {field!r}: {reason}".rstrip(": "), field=field)
        self.field = field


# -- registries --------------------------------------------------------------


class DuplicateInstance(VasError):
    code = "duplicate-instance"

    def __init__(self, instance_id: str) -> None:
        super().__init__(f"instance {instance_id!r} already published", instance_id=instance_id)
        self.instance_id = instance_id


class InvalidDescriptor(VasError):
    code = "invalid-descriptor"

    def __init__(self, reason: str) -> None:
        super().__init__(reason, reason=reason)
        self.reason = reason


class JournalCorrupt(VasError):
    code = "journal-corrupt"


# -- planner -----------------------------------------------------------------


class NoAdmMatch(VasError):
    code = "no-adm-match"


class IncompleteProfile(VasError):
    code = "incomplete-profile"

    def __init__(self, missing: list[str]) -> None:
        super().__init__(f"mandatory kinds missing: {', '.join(missing)}", missing=list(missing))
        self.missing = list(missing)


class ExclusionViolated(VasError):
    code = "exclusion-violated"

    def __init__(self, pair: tuple[str, str]) -> None:
        super().__init__(f"kinds {pair[0]!r} and {pair[1]!r} are mutually exclusive", pair=list(pair))
        self.pair = tuple(pair)


class KindNotAllowed(VasError):
    code = "kind-not-allowed"

    def __init__(self, kind: str) -> None:
        super().__init__(f"kind {kind!r} is not part of the chosen architecture", kind=kind)
        self.kind = kind


class UnsatisfiableSlot(VasError):
    code = "unsatisfiable-slot"

    def __init__(self, slot_id: str, kind: str = "") -> None:
        super().__init__(f"no capability can realise slot {slot_id!r}", slot_id=slot_id, kind=kind)
        self.slot_id = slot_id
        self.kind = kind


class DepthExceeded(VasError):
    code = "depth-exceeded"

    def __init__(self, slot_id: str) -> None:
        super().__init__(f"nesting limit reached at slot {slot_id!r}", slot_id=slot_id)
        self.slot_id = slot_id


class CyclicArchitecture(VasError):
    code = "cyclic-architecture"

    def __init__(self, path: list[str]) -> None:
        super().__init__(f"architecture cycle: {' -> '.join(path)}", path=list(path))
        self.path = list(path)


class ApprovalRequired(VasError):
    code = "approval-required"

    def __init__(self, deviations: list[Any]) -> None:
        super().__init__(
            f"{len(deviations)} deviation(s) need client approval",
            deviations=[d.to_doc() if hasattr(d, "to_doc") else str(d) for d in deviations],
        )
        self.deviations = list(deviations)


class ProposalRejected(VasError):
    code = "rejected"

    def __init__(self) -> None:
        super().__init__("proposed composition rejected by the client")


# -- enactment / broker ------------------------------------------------------


class SetupFailed(VasError):
    code = "setup-failed"

    def __init__(self, step: str, reason: str) -> None:
        super().__init__(f"setup step {step} failed: {reason}", step=step, reason=reason)
        self.step = step
        self.reason = reason


class ProfileConflict(VasError):
    code = "profile-conflict"

    def __init__(self, collaboration_id: str) -> None:
        super().__init__(
            f"a different composition is already enacted for {collaboration_id!r}",
            collaboration_id=collaboration_id,
        )
        self.collaboration_id = collaboration_id


class NoProfileError(VasError):
    code = "no-profile"

    def __init__(self, collaboration_id: str) -> None:
        super().__init__(f"no secured profile for {collaboration_id!r}", collaboration_id=collaboration_id)
        self.collaboration_id = collaboration_id


# -- VO lifecycle ------------------------------------------------------------


class UnknownPartner(VasError):
    code = "unknown-partner"

    def __init__(self, partner_id: str) -> None:
        super().__init__(f"partner {partner_id!r} is not registered", partner_id=partner_id)
        self.partner_id = partner_id


class UnknownProfile(VasError):
    code = "unknown-profile"

    def __init__(self, ref: str) -> None:
        super().__init__(f"no VAS profile named {ref!r}", ref=ref)
        self.ref = ref


class UnknownVo(VasError):
    code = "unknown-vo"


class InvalidState(VasError):
    code = "invalid-state"


class NoMatchingFunction(VasError):
    code = "no-matching-function"

    def __init__(self, provider: str) -> None:
        super().__init__(f"{provider!r} publishes none of the process functions", provider=provider)
        self.provider = provider


class UnknownInvitation(VasError):
    code = "unknown-invitation"


class AlreadyAnswered(VasError):
    code = "already-answered"


class RoleUncovered(VasError):
    code = "role-uncovered"

    def __init__(self, role: str) -> None:
        super().__init__(f"no accepted partner covers role {role!r}", role=role)
        self.role = role


class PlanningFailed(VasError):
    code = "planning-failed"

    def __init__(self, partner: str, error: VasError | str, failures: dict[str, Any] | None = None) -> None:
        super().__init__(f"profile for {partner!r} could not be realised: {error}", partner=partner)
        self.partner = partner
        self.error = error
        self.failures = failures or {partner: error}


class NotAuthorized(VasError):
    code = "not-authorized"


# -- gateway service ---------------------------------------------------------


class SessionClosed(VasError):
    code = "session-closed"


class ProtocolViolation(VasError):
    code = "protocol-violation"


class UnknownGateway(VasError):
    code = "unknown-gateway"

    def __init__(self, gateway_id: str) -> None:
        super().__init__(f"gateway {gateway_id!r} is not registered", gateway_id=gateway_id)
        self.gateway_id = gateway_id


class Dropped(VasError):
    code = "dropped"


class ConfigError(VasError):
    code = "config-error"


class RemoteError(VasError):
    """An error reported by a peer gateway whose code has no local class."""

    code = "remote-error"


def rebuild(doc: dict[str, Any]) -> VasError:
    """Recreate an error received in an ``error`` frame.

    The concrete subclass is kept so callers can still ``except`` on it; the
    constructor is bypassed because the details are already rendered.
    """
    code = doc.get("code", "remote-error")
    cls = _BY_CODE.get(code, RemoteError)
    err = cls.__new__(cls)
    VasError.__init__(err, doc.get("message", code), **dict(doc.get("details") or {}))
    for key, value in (doc.get("details") or {}).items():
        setattr(err, key, value)
    return err


def _subclasses(cls: type[VasError]) -> list[type[VasError]]:
    out = []
    for sub in cls.__subclasses__():
        out.append(sub)
        out.extend(_subclasses(sub))
    return out


_BY_CODE = {sub.code: sub for sub in _subclasses(VasError)}
