"""Key handling, identifiers, and certificates.

The identifier test recomputes the digest with hashlib directly so the
derivation rule is pinned independently of the implementation.
"""

import hashlib

import pytest

from sixgen.crypto import (
    KeyPair,
    check_certificate,
    did_for,
    encode_certificate,
    parse_certificate,
    verify,
    verify_doc,
)
from sixgen.errors import BadSignature, MalformedCertificate


def test_did_is_prefixed_truncated_key_digest():
    kp = KeyPair.generate(seed="alpha")
    digest = hashlib.sha256(kp.public_bytes).hexdigest()
    assert kp.did == "did:6gen:" + digest[:32]
    assert did_for(kp.public_bytes) == kp.did


def test_seeded_keypairs_are_deterministic():
    a = KeyPair.generate(seed="node-one")
    b = KeyPair.generate(seed="node-one")
    c = KeyPair.generate(seed="node-two")
    assert a.public_bytes == b.public_bytes
    assert a.did == b.did
    assert a.public_bytes != c.public_bytes


def test_unseeded_keypairs_are_distinct():
    assert KeyPair.generate().did != KeyPair.generate().did


def test_sign_verify_roundtrip():
    kp = KeyPair.generate(seed="s")
    sig = kp.sign(b"payload")
    assert verify(kp.public_bytes, sig, b"payload")
    assert not verify(kp.public_bytes, sig, b"payload!")
    other = KeyPair.generate(seed="t")
    assert not verify(other.public_bytes, sig, b"payload")


def test_verify_rejects_garbage_signature():
    kp = KeyPair.generate(seed="s")
    assert not verify(kp.public_bytes, "zz-not-hex", b"data")
    assert not verify(kp.public_bytes, "00" * 64, b"data")


def test_doc_signatures_are_order_independent():
    kp = KeyPair.generate(seed="s")
    sig = kp.sign_doc({"b": 2, "a": 1})
    assert verify_doc(kp.public_bytes, sig, {"a": 1, "b": 2})
    assert not verify_doc(kp.public_bytes, sig, {"a": 1, "b": 3})


class TestCertificates:
    def _body(self, subject, issuer):
        return {
            "did": subject.did,
            "public_key": subject.public_bytes.hex(),
            "role": "TRADING",
            "issued_by": issuer.did,
        }

    def test_roundtrip(self):
        issuer = KeyPair.generate(seed="issuer")
        subject = KeyPair.generate(seed="subject")
        text = encode_certificate(self._body(subject, issuer), issuer)
        assert text.startswith("-----BEGIN 6GEN CERTIFICATE-----")
        assert text.endswith("-----END 6GEN CERTIFICATE-----")
        doc = parse_certificate(text)
        body = check_certificate(doc, issuer.public_bytes)
        assert body["did"] == subject.did
        assert body["role"] == "TRADING"

    def test_missing_delimiters_rejected(self):
        with pytest.raises(MalformedCertificate):
            parse_certificate("just some text")

    def test_corrupt_payload_rejected(self):
        issuer = KeyPair.generate(seed="issuer")
        subject = KeyPair.generate(seed="subject")
        text = encode_certificate(self._body(subject, issuer), issuer)
        lines = text.splitlines()
        lines[1] = "!!!" + lines[1][3:]
        with pytest.raises(MalformedCertificate):
            parse_certificate("\n".join(lines))

    def test_missing_body_fields_rejected(self):
        issuer = KeyPair.generate(seed="issuer")
        body = {"did": "did:6gen:x", "public_key": "00", "role": "ADMIN"}
        text = encode_certificate(body, issuer)  # issued_by absent
        with pytest.raises(MalformedCertificate):
            parse_certificate(text)

    def test_wrong_issuer_key_fails_check(self):
        issuer = KeyPair.generate(seed="issuer")
        subject = KeyPair.generate(seed="subject")
        doc = parse_certificate(
            encode_certificate(self._body(subject, issuer), issuer))
        imposter = KeyPair.generate(seed="imposter")
        with pytest.raises(BadSignature):
            check_certificate(doc, imposter.public_bytes)

    def test_did_key_mismatch_fails_check(self):
        issuer = KeyPair.generate(seed="issuer")
        subject = KeyPair.generate(seed="subject")
        body = self._body(subject, issuer)
        body["did"] = "did:6gen:" + "0" * 32  # not the key's digest
        doc = parse_certificate(encode_certificate(body, issuer))
        with pytest.raises(MalformedCertificate):
            check_certificate(doc, issuer.public_bytes)
