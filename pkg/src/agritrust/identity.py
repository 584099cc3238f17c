"""Key-pair identities and the shared identity directory.

Stands in for production DID/IAM: every agent and node is a local Ed25519
key pair registered under its IRI in a directory all nodes share.
"""
from __future__ import annotations

import threading
from pathlib import Path
from typing import Dict

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .graph import Graph
from .terms import AGT_NS, Iri, Literal, Triple


class UnregisteredIdentity(Exception):
    def __init__(self, iri: str) -> None:
        super().__init__(f"identity {iri} is not registered")
        self.iri = iri


class KeyPair:
    def __init__(self, private: ed25519.Ed25519PrivateKey) -> None:
        self._private = private
        self._public = private.public_key()

    @staticmethod
    def generate() -> "KeyPair":
        return KeyPair(ed25519.Ed25519PrivateKey.generate())

    @staticmethod
    def from_seed(seed: bytes) -> "KeyPair":
        """Deterministic key pair from a 32-byte seed (test ecosystems)."""
        return KeyPair(ed25519.Ed25519PrivateKey.from_private_bytes(seed))

    def sign(self, data: bytes) -> bytes:
        return self._private.sign(data)

    def public_bytes(self) -> bytes:
        return self._public.public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )

    def private_hex(self) -> str:
        return self._private.private_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PrivateFormat.Raw,
            encryption_algorithm=serialization.NoEncryption(),
        ).hex()

    @staticmethod
    def from_private_hex(text: str) -> "KeyPair":
        return KeyPair(ed25519.Ed25519PrivateKey.from_private_bytes(bytes.fromhex(text.strip())))

    def save(self, path: Path) -> None:
        Path(path).write_text(self.private_hex() + "\n", encoding="ascii")

    @staticmethod
    def load(path: Path) -> "KeyPair":
        return KeyPair.from_private_hex(Path(path).read_text(encoding="ascii"))


def verify_signature(public_key_bytes: bytes, data: bytes, signature: bytes) -> bool:
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(public_key_bytes).verify(signature, data)
        return True
    except (InvalidSignature, ValueError):
        return False


class IdentityDirectory:
    """IRI -> public key map, shared by every node in an ecosystem."""

    PUBLIC_KEY = AGT_NS + "publicKeyHex"

    def __init__(self) -> None:
        self._keys: Dict[str, bytes] = {}
        self._lock = threading.Lock()

    def register(self, iri: str, public_key_bytes: bytes) -> None:
        with self._lock:
            self._keys[iri] = public_key_bytes

    def register_keypair(self, iri: str, keys: KeyPair) -> KeyPair:
        self.register(iri, keys.public_bytes())
        return keys

    def registered(self, iri: str) -> bool:
        return iri in self._keys

    def public_key(self, iri: str) -> bytes:
        if iri not in self._keys:
            raise UnregisteredIdentity(iri)
        return self._keys[iri]

    def verify(self, iri: str, data: bytes, signature: bytes) -> bool:
        if iri not in self._keys:
            return False
        return verify_signature(self._keys[iri], data, signature)

    def entries(self) -> Dict[str, bytes]:
        with self._lock:
            return dict(self._keys)

    def to_graph(self) -> Graph:
        g = Graph()
        for iri, key in sorted(self._keys.items()):
            g.insert(Triple(Iri(iri), Iri(self.PUBLIC_KEY), Literal(key.hex())))
        return g
