"""Key handling, decentralized identifiers, and certificates.

Identifiers are derived from ed25519 public keys:

    did:6gen:<first 32 hex chars of sha256(public key bytes)>

A certificate is a signed statement binding a DID to its public key and
role. It travels as a PEM-style text block whose payload is base64 over the
canonical JSON of ``{body, sig}``; the signature covers the canonical bytes
of ``body`` alone and is made with the issuer's key.
"""

import base64
import hashlib
import json
import textwrap

from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.exceptions import InvalidSignature

from .canon import canonical_bytes
from .errors import BadSignature, MalformedCertificate

DID_PREFIX = "did:6gen:"
_CERT_HEADER = "-----BEGIN 6GEN CERTIFICATE-----"
_CERT_FOOTER = "-----END 6GEN CERTIFICATE-----"


def _seed32(seed) -> bytes:
    if isinstance(seed, bytes) and len(seed) == 32:
        return seed
    return hashlib.sha256(str(seed).encode("utf-8")).digest()


class KeyPair:
    def __init__(self, private_key: Ed25519PrivateKey):
        self._sk = private_key
        self.public_bytes = self._sk.public_key().public_bytes_raw()
        self.did = did_for(self.public_bytes)

    @classmethod
    def generate(cls, seed=None) -> "KeyPair":
        if seed is None:
            return cls(Ed25519PrivateKey.generate())
        return cls(Ed25519PrivateKey.from_private_bytes(_seed32(seed)))

    def sign(self, data: bytes) -> str:
        return self._sk.sign(data).hex()

    def sign_doc(self, doc) -> str:
        return self.sign(canonical_bytes(doc))


def did_for(public_bytes: bytes) -> str:
    return DID_PREFIX + hashlib.sha256(public_bytes).hexdigest()[:32]


def verify(public_bytes: bytes, signature_hex: str, data: bytes) -> bool:
    try:
        pk = Ed25519PublicKey.from_public_bytes(public_bytes)
        pk.verify(bytes.fromhex(signature_hex), data)
        return True
    except (InvalidSignature, ValueError):
        return False


def verify_doc(public_bytes: bytes, signature_hex: str, doc) -> bool:
    return verify(public_bytes, signature_hex, canonical_bytes(doc))


def encode_certificate(body: dict, issuer: KeyPair) -> str:
    sig = issuer.sign_doc(body)
    raw = canonical_bytes({"body": body, "sig": sig})
    b64 = base64.b64encode(raw).decode("ascii")
    lines = textwrap.wrap(b64, 64)
    return "\n".join([_CERT_HEADER, *lines, _CERT_FOOTER])


def parse_certificate(text: str) -> dict:
    """Return ``{body, sig}``; structural checks only, no trust decision."""
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if len(lines) < 3 or lines[0] != _CERT_HEADER or lines[-1] != _CERT_FOOTER:
        raise MalformedCertificate("missing certificate delimiters")
    try:
        raw = base64.b64decode("".join(lines[1:-1]), validate=True)
        doc = json.loads(raw.decode("utf-8"))
    except Exception as exc:
        raise MalformedCertificate(f"undecodable certificate: {exc}") from exc
    if not isinstance(doc, dict) or "body" not in doc or "sig" not in doc:
        raise MalformedCertificate("certificate missing body or sig")
    body = doc["body"]
    for key in ("did", "public_key", "role", "issued_by"):
        if key not in body:
            raise MalformedCertificate(f"certificate body missing {key}")
    return doc


def check_certificate(doc: dict, issuer_public_bytes: bytes) -> dict:
    """Verify signature and DID/key consistency; return the body."""
    body = doc["body"]
    if not verify_doc(issuer_public_bytes, doc["sig"], body):
        raise BadSignature("certificate signature does not verify")
    pub = bytes.fromhex(body["public_key"])
    if did_for(pub) != body["did"]:
        raise MalformedCertificate("certificate DID does not match key")
    return body
