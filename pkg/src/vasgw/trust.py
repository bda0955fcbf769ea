"""Simulated key material and trust bookkeeping.

Nothing here is cryptographically meaningful: keys are hash-derived strings
and a token is just ``<fip>:<key fingerprint>``.  What matters is that the
authentication handler can only accept tokens from identity providers whose
keys were exchanged beforehand.
"""

from __future__ import annotations

import hashlib
import threading
from collections.abc import Mapping


def _h(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def simulated_public_key(seed: str) -> str:
    return "pk-" + _h("pk:" + _h("sk:" + seed))[:32]


def fingerprint(public_key: str) -> str:
    return _h(public_key)[:16]


def issue_token(fip_ref: str, public_key: str) -> str:
    return f"{fip_ref}:{fingerprint(public_key)}"


def parse_token(token: str | None) -> tuple[str, str] | None:
    if not token or token.count(":") < 1:
        return None
    fip, _, fp = token.rpartition(":")
    if not fip or not fp:
        return None
    return fip, fp


class TrustStore:
    """Identity providers (and STS-like peers) a gateway has exchanged keys with."""

    def __init__(self) -> None:
        self._keys: dict[str, str] = {}
        self._lock = threading.Lock()

    def trust(self, ref: str, public_key: str) -> None:
        with self._lock:
            self._keys[ref] = public_key

    def revoke(self, ref: str) -> None:
        with self._lock:
            self._keys.pop(ref, None)

    def key_of(self, ref: str) -> str | None:
        return self._keys.get(ref)

    def accepts(self, token: str | None) -> bool:
        parsed = parse_token(token)
        if parsed is None:
            return False
        fip, fp = parsed
        key = self._keys.get(fip)
        return key is not None and fingerprint(key) == fp

    def trusted(self) -> list[str]:
        return sorted(self._keys)

    def to_doc(self) -> dict[str, str]:
        return dict(sorted(self._keys.items()))


class PeerDirectory:
    """Public keys a gateway can look up when a setup step asks it to bootstrap trust."""

    def __init__(self, keys: Mapping[str, str] | None = None) -> None:
        self._keys = dict(keys or {})

    def register(self, ref: str, public_key: str) -> None:
        self._keys[ref] = public_key

    def resolve(self, ref: str) -> str | None:
        return self._keys.get(ref)

    def __contains__(self, ref: object) -> bool:
        return ref in self._keys


def key_exchange(
    local: TrustStore, local_ref: str, local_key: str, remote: TrustStore, remote_ref: str, remote_key: str
) -> frozenset[str]:
    """Mutual key exchange; returns the unordered trust edge it created."""
    local.trust(remote_ref, remote_key)
    remote.trust(local_ref, local_key)
    return frozenset((local_ref, remote_ref))
