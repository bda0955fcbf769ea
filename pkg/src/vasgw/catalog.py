"""Built-in catalogue for the jazz music store VO.

Three architecture descriptions and the capability set offered by the
value-adding-service provider.  The scenario publishes these into every
partner gateway; tests use them as the shared fixture.
"""

from __future__ import annotations

from fractions import Fraction

from vasgw.model import Constraint, SetupStep, VasKind
from vasgw.registries import ArchitectureDescription, CapabilityDescriptor, Registry

K = VasKind

STS_PEER = "sts.vas-provider"


def music_store_architectures() -> list[ArchitectureDescription]:
    return [
        ArchitectureDescription(
            id="Baseline-Security",
            category="Security",
            mandatory=frozenset({K.AUTHENTICATION, K.AUTHORISATION}),
            optional=frozenset({K.POLICY_ENFORCEMENT, K.AUDIT, K.BILLING, K.MONITORING, K.TRANSLATION}),
            order=frozenset(
                {
                    (K.POLICY_ENFORCEMENT, K.AUTHENTICATION),
                    (K.AUTHENTICATION, K.AUTHORISATION),
                    (K.AUTHORISATION, K.AUDIT),
                    (K.AUTHORISATION, K.BILLING),
                    (K.AUTHORISATION, K.TRANSLATION),
                }
            ),
        ),
        ArchitectureDescription(
            id="Audit-Only",
            category="Audit",
            mandatory=frozenset({K.AUDIT}),
            optional=frozenset({K.MONITORING, K.BILLING}),
            order=frozenset({(K.AUDIT, K.BILLING)}),
        ),
        ArchitectureDescription(
            id="Federated-Authentication",
            category="Authentication",
            mandatory=frozenset({K.TOKEN_ISSUANCE, K.TOKEN_VALIDATION}),
            order=frozenset({(K.TOKEN_ISSUANCE, K.TOKEN_VALIDATION)}),
            realizes=K.AUTHENTICATION,
        ),
    ]


def _cap(
    instance_id: str,
    class_id: str,
    kind: VasKind,
    latency: str,
    failure: str,
    offered: tuple[Constraint, ...] = (),
    steps: tuple[SetupStep, ...] = (),
    provider: str = "vas-provider",
) -> CapabilityDescriptor:
    return CapabilityDescriptor(
        instance_id=instance_id,
        class_id=class_id,
        kind=kind,
        endpoint=f"sim://{provider}/{instance_id}",
        offered=offered,
        latency_ms=Fraction(latency),
        failure_rate=Fraction(failure),
        setup_steps=steps,
    )


def vas_provider_capabilities(provider: str = "vas-provider") -> list[CapabilityDescriptor]:
    lat30 = (Constraint.max_latency(30),)
    xacml = (Constraint.semantics("XACML"), Constraint.max_latency(40))
    secpal = (Constraint.semantics("SecPAL"), Constraint.max_latency(60))
    fast = (Constraint.max_latency(8),)
    sts = (SetupStep.trust_bootstrap(STS_PEER),)
    return [
        _cap("authn-a", "authn-token", K.AUTHENTICATION, "20", "1/100", lat30, sts, provider),
        _cap("authn-b", "authn-token", K.AUTHENTICATION, "15", "1/5", lat30, sts, provider),
        _cap("authz-x1", "authz-xacml", K.AUTHORISATION, "25", "1/100", xacml,
             (SetupStep.trust_bootstrap(STS_PEER), SetupStep.config_push({"engine": "xacml"})), provider),
        _cap("authz-s1", "authz-secpal", K.AUTHORISATION, "35", "1/50", secpal,
             (SetupStep.config_push({"engine": "secpal"}),), provider),
        _cap("audit-1", "audit-log", K.AUDIT, "5", "0", (), (), provider),
        _cap("audit-2", "audit-log", K.AUDIT, "9", "0", (), (), provider),
        _cap("billing-1", "billing-meter", K.BILLING, "8", "1/200", (), (SetupStep.config_push({"units-per-message": 1}),), provider),
        _cap("monitor-1", "monitor", K.MONITORING, "3", "0", (), (), provider),
        _cap("pep-1", "pep-basic", K.POLICY_ENFORCEMENT, "2", "0", (), (SetupStep.config_push({"max-payload-bytes": 65536}),), provider),
        _cap("translate-1", "translate-currency", K.TRANSLATION, "6", "0", (),
             (SetupStep.config_push({"field": "currency", "map": {"USD": "GBP"}}),), provider),
        _cap("sts-issue-1", "sts-issue", K.TOKEN_ISSUANCE, "4", "1/1000", fast, sts, provider),
        _cap("sts-check-1", "sts-check", K.TOKEN_VALIDATION, "3", "1/1000", fast, (), provider),
    ]


def publish_catalog(registry: Registry, provider: str = "vas-provider") -> None:
    for adm in music_store_architectures():
        registry.publish_architecture(adm)
    for cap in vas_provider_capabilities(provider):
        registry.publish_capability(cap)
