"""Framed request/response protocol between clients and the manager services.

Frames are 4-byte big-endian length prefixes followed by JSON payloads.
Each connection serves exactly one authenticated request:

1. The client sends a plaintext hello carrying a fresh 32-byte session
   secret sealed to the service's public key.  Only the genuine service can
   open it, which authenticates the server side; both directions then run
   AES-256-GCM with keys derived from the secret and counter nonces.
2. The service answers with a random 32-byte challenge (single use, short
   expiry).
3. The client sends the request, naming its account address and public key
   and signing the challenge with its private key; the service verifies
   that the address matches the key and the signature matches the
   challenge before dispatching.
4. The service replies with a result or an error code, and the connection
   closes.

Everything after the hello is encrypted, so plaintexts, issued keys, and
recovered slices never cross the socket in the clear.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import socket
import socketserver
import struct
import threading
import time
from typing import Optional

from . import pkcrypto
from .errors import (
    AccessDenied,
    AuthenticationError,
    DigestMismatchError,
    DuplicateMessageError,
    EnvelopeError,
    NoAttributesError,
    NotFoundError,
    PolicySyntaxError,
    ProtocolError,
    SliceGateError,
    UnauthorizedError,
    UnknownMessageError,
)

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

FRAME_MAX = 64 * 1024 * 1024
CHALLENGE_SIZE = 32
CHALLENGE_TTL_SECONDS = 60.0

_ERROR_CODES = [
    ("auth_failed", AuthenticationError),
    ("access_denied", AccessDenied),
    ("unknown_message", UnknownMessageError),
    ("no_attributes", NoAttributesError),
    ("duplicate_message", DuplicateMessageError),
    ("unauthorized", UnauthorizedError),
    ("not_found", NotFoundError),
    ("digest_mismatch", DigestMismatchError),
    ("policy_error", PolicySyntaxError),
    ("protocol_error", ProtocolError),
    ("bad_request", SliceGateError),
]
_CODE_TO_EXC = {code: exc for code, exc in _ERROR_CODES}


def error_code(exc: Exception) -> str:
    for code, klass in _ERROR_CODES:
        if isinstance(exc, klass):
            return code
    return "internal_error"


def raise_for_code(code: str, message: str):
    klass = _CODE_TO_EXC.get(code, SliceGateError)
    try:
        raise klass(message)
    except TypeError:
        # Exceptions with richer constructors degrade to the base error.
        raise SliceGateError(f"{code}: {message}") from None


def b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise ProtocolError("bad base-64 field") from exc


def send_frame(fh, payload: bytes) -> None:
    if len(payload) > FRAME_MAX:
        raise ProtocolError(f"frame of {len(payload)} bytes exceeds limit")
    fh.write(struct.pack(">I", len(payload)) + payload)
    fh.flush()


def recv_frame(fh) -> bytes:
    header = fh.read(4)
    if len(header) != 4:
        raise ProtocolError("connection closed mid-frame")
    (size,) = struct.unpack(">I", header)
    if size > FRAME_MAX:
        raise ProtocolError(f"frame of {size} bytes exceeds limit")
    payload = fh.read(size)
    if len(payload) != size:
        raise ProtocolError("connection closed mid-frame")
    return payload


class Channel:
    """Per-connection encrypted framing with direction-separated keys."""

    def __init__(self, fh, secret: bytes, is_server: bool):
        k_c2s = hashlib.sha256(b"slicegate:chan:c2s:" + secret).digest()
        k_s2c = hashlib.sha256(b"slicegate:chan:s2c:" + secret).digest()
        self._fh = fh
        self._send_aead = AESGCM(k_s2c if is_server else k_c2s)
        self._recv_aead = AESGCM(k_c2s if is_server else k_s2c)
        self._send_counter = 0
        self._recv_counter = 0

    def send(self, obj) -> None:
        nonce = self._send_counter.to_bytes(12, "big")
        self._send_counter += 1
        plaintext = json.dumps(obj, sort_keys=True).encode("utf-8")
        send_frame(self._fh, self._send_aead.encrypt(nonce, plaintext, None))

    def recv(self):
        nonce = self._recv_counter.to_bytes(12, "big")
        self._recv_counter += 1
        try:
            plaintext = self._recv_aead.decrypt(nonce, recv_frame(self._fh), None)
        except InvalidTag as exc:
            raise ProtocolError("channel decryption failed") from exc
        return json.loads(plaintext.decode("utf-8"))


class ChallengeTable:
    """Single-use challenges with expiry; the only mutable service state."""

    def __init__(self, ttl: float = CHALLENGE_TTL_SECONDS, rng: Optional[random.Random] = None):
        self._ttl = ttl
        self._rng = rng
        self._lock = threading.Lock()
        self._pending: dict[bytes, float] = {}

    def issue(self) -> bytes:
        if self._rng is None:
            nonce = os.urandom(CHALLENGE_SIZE)
        else:
            nonce = self._rng.getrandbits(8 * CHALLENGE_SIZE).to_bytes(CHALLENGE_SIZE, "big")
        with self._lock:
            now = time.monotonic()
            self._pending = {n: t for n, t in self._pending.items() if t > now}
            self._pending[nonce] = now + self._ttl
        return nonce

    def consume(self, nonce: bytes) -> bool:
        with self._lock:
            expiry = self._pending.pop(nonce, None)
        return expiry is not None and expiry > time.monotonic()


class AuthenticatedService:
    """Base for the manager services: challenge issuance and caller verification."""

    def __init__(self, keypair: pkcrypto.KeyPair, rng: Optional[random.Random] = None):
        self.keypair = keypair
        self.address = keypair.address
        self.challenges = ChallengeTable(rng=rng)

    def new_challenge(self) -> bytes:
        return self.challenges.issue()

    def authenticate(
        self, address: str, pubkey_der: bytes, challenge: bytes, signature: bytes
    ) -> pkcrypto.AccountAddress:
        """Verify the challenge-response handshake and the address/key binding."""
        if not self.challenges.consume(challenge):
            raise AuthenticationError("unknown or expired challenge")
        try:
            claimed = pkcrypto.AccountAddress.parse(address)
            public_key = pkcrypto.load_public_key(pubkey_der)
        except SliceGateError as exc:
            raise AuthenticationError(str(exc)) from exc
        if pkcrypto.derive_address(public_key) != claimed:
            raise AuthenticationError("public key does not match the claimed address")
        if not pkcrypto.verify(public_key, challenge, signature):
            raise AuthenticationError("challenge signature invalid")
        return claimed

    # Subclasses map operation names to (method, needs) entries.
    OPERATIONS: dict = {}

    def dispatch(self, op: str, request: dict) -> dict:
        method_name = self.OPERATIONS.get(op)
        if method_name is None:
            raise ProtocolError(f"unknown operation {op!r}")
        return getattr(self, method_name)(request)


class ServiceServer:
    """Threaded TCP front end for one service; one request per connection."""

    def __init__(self, service: AuthenticatedService, host: str = "127.0.0.1", port: int = 0):
        self.service = service
        outer = self

        class _Handler(socketserver.BaseRequestHandler):
            def handle(self):
                self.request.settimeout(CHALLENGE_TTL_SECONDS)
                fh = self.request.makefile("rwb")
                try:
                    outer._serve_one(fh)
                except (ProtocolError, OSError):
                    pass  # client went away or spoke garbage; nothing to clean up
                finally:
                    fh.close()

        class _Server(socketserver.ThreadingTCPServer):
            daemon_threads = True
            allow_reuse_address = True

        self._server = _Server((host, port), _Handler)
        self.host, self.port = self._server.server_address
        self._thread: Optional[threading.Thread] = None

    def _serve_one(self, fh) -> None:
        service = self.service
        hello = json.loads(recv_frame(fh).decode("utf-8"))
        if hello.get("type") != "hello":
            raise ProtocolError("expected hello frame")
        try:
            secret = pkcrypto.open_envelope(service.keypair.private_key, unb64(hello["sealed"]))
        except (KeyError, EnvelopeError) as exc:
            raise ProtocolError("hello rejected") from exc
        if len(secret) != 32:
            raise ProtocolError("bad session secret")
        channel = Channel(fh, secret, is_server=True)
        challenge = service.new_challenge()
        channel.send({"type": "challenge", "challenge": b64(challenge)})
        request = channel.recv()
        try:
            if request.get("type") != "request":
                raise ProtocolError("expected request frame")
            if unb64(request["challenge"]) != challenge:
                raise AuthenticationError("challenge does not belong to this connection")
            # Authentication itself happens inside the dispatched handler.
            body = service.dispatch(request["op"], request)
            channel.send({"type": "response", "ok": True, "body": body})
        except KeyError as exc:
            channel.send(
                {"type": "response", "ok": False, "error": "protocol_error",
                 "message": f"missing field {exc}"}
            )
        except Exception as exc:  # every failure maps to a wire error code
            channel.send(
                {"type": "response", "ok": False, "error": error_code(exc), "message": str(exc)}
            )

    def start(self) -> "ServiceServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
            self._thread = None

    @property
    def endpoint(self) -> tuple[str, int]:
        return (self.host, self.port)


def call_service(
    endpoint: tuple[str, int],
    server_public_key,
    identity: pkcrypto.KeyPair,
    op: str,
    body: dict,
    timeout: float = 60.0,
) -> dict:
    """One authenticated request against a running service."""
    with socket.create_connection(endpoint, timeout=timeout) as sock:
        fh = sock.makefile("rwb")
        try:
            secret = os.urandom(32)
            sealed = pkcrypto.seal_to(server_public_key, secret)
            send_frame(fh, json.dumps({"type": "hello", "sealed": b64(sealed)}).encode())
            channel = Channel(fh, secret, is_server=False)
            greeting = channel.recv()
            if greeting.get("type") != "challenge":
                raise ProtocolError("expected challenge frame")
            challenge = unb64(greeting["challenge"])
            request = dict(body)
            request.update(
                {
                    "type": "request",
                    "op": op,
                    "address": str(identity.address),
                    "pubkey": b64(pkcrypto.public_key_bytes(identity.public_key)),
                    "challenge": b64(challenge),
                    "signature": b64(pkcrypto.sign(identity.private_key, challenge)),
                }
            )
            channel.send(request)
            response = channel.recv()
        finally:
            fh.close()
    if response.get("type") != "response":
        raise ProtocolError("expected response frame")
    if not response.get("ok"):
        raise_for_code(response.get("error", "bad_request"), response.get("message", ""))
    return response["body"]
