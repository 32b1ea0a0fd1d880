"""On-chain registry emulation: reader attributes, message locators, gas.

The registry mirrors the deployed contract's access rules: it is
constructed with the addresses of the attribute certifier, the data
manager, and the key manager, and accepts mutations only from them.
Reader attributes are replace-on-write; message bindings are write-once.
Reads are open to everyone.

Gas is modelled, not metered: each mutating call yields a receipt with a
per-operation cost calibrated against measured mainnet-style transactions
(setUserInfo a constant, setIPFSInfo a narrow uniform band reflecting
input-length jitter).  Receipts are append-only and each successful
mutation is journaled as one JSON line ``{op, caller, args, receipt}``;
replaying a journal reconstructs the registry state exactly, which is what
keeps the emulation independently auditable.
"""

from __future__ import annotations

import contextlib
import fcntl
import json
import os
import random
import threading
import time
from dataclasses import asdict, dataclass
from typing import Optional

from .cas import WordPair
from .errors import (
    DuplicateMessageError,
    SliceGateError,
    UnauthorizedError,
    UnknownMessageError,
)

SET_USER_INFO_GAS = 40755
SET_IPFS_INFO_GAS_RANGE = (67484.6, 67487.0)

# Calibrated average prices observed for each operation, in wei.
DEFAULT_GAS_PRICE = {
    "setUserInfo": 1370810611,
    "setIPFSInfo": 1399400015,
}

DEFAULT_ETH_EUR_RATE = 1746.35

_SYSTEM_RNG = random.SystemRandom()


def cost_eur(gas_used: float, gas_price_wei: float, eth_eur_rate: float) -> float:
    """Total transaction cost in EUR: gas x price x 1e-18 x rate."""
    if gas_used < 0 or gas_price_wei < 0 or eth_eur_rate < 0:
        raise ValueError("cost inputs must be nonnegative")
    return gas_used * gas_price_wei * 1e-18 * eth_eur_rate


@dataclass(frozen=True)
class GasReceipt:
    op: str
    gas_used: int
    gas_price: int
    timestamp: float

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "GasReceipt":
        return cls(
            op=data["op"],
            gas_used=int(data["gas_used"]),
            gas_price=int(data["gas_price"]),
            timestamp=float(data["timestamp"]),
        )


def _normalize(address) -> str:
    text = str(address)
    if not text.startswith("0x") or len(text) != 42:
        raise SliceGateError(f"malformed address {text!r}")
    return text.lower()


class Registry:
    """Registry state plus the authorization and journaling rules around it."""

    def __init__(
        self,
        certifier,
        sdm,
        skm,
        journal_path=None,
        rng: Optional[random.Random] = None,
        gas_price: Optional[dict] = None,
    ):
        self.certifier = _normalize(certifier)
        self.sdm = _normalize(sdm)
        self.skm = _normalize(skm)
        self.readers: dict[str, list[int]] = {}
        self.messages: dict[int, WordPair] = {}
        self.receipts: list[GasReceipt] = []
        self.journal_path = str(journal_path) if journal_path else None
        self._rng = rng or _SYSTEM_RNG
        self._gas_price = dict(DEFAULT_GAS_PRICE, **(gas_price or {}))
        self._lock = threading.RLock()
        self._journal_offset = 0
        if self.journal_path:
            self._sync()

    # -- mutations -------------------------------------------------------

    def set_user_info(self, caller, reader, attrs) -> GasReceipt:
        """Replace a reader's attribute list; certifier only."""
        caller = _normalize(caller)
        reader = _normalize(reader)
        attrs = [self._check_attr(a) for a in attrs]
        with self._lock, self._write_guard():
            self._sync()
            if caller != self.certifier:
                raise UnauthorizedError(f"{caller} may not set user info")
            receipt = GasReceipt(
                "setUserInfo", SET_USER_INFO_GAS, self._gas_price["setUserInfo"], time.time()
            )
            self._apply_user_info(reader, attrs, receipt)
            self._journal("setUserInfo", caller, {"reader": reader, "attrs": attrs}, receipt)
        return receipt

    def set_ipfs_info(self, caller, message_id: int, pair: WordPair) -> GasReceipt:
        """Bind a message id to a locator word pair; data manager only, write-once."""
        caller = _normalize(caller)
        message_id = self._check_message_id(message_id)
        with self._lock, self._write_guard():
            self._sync()
            if caller != self.sdm:
                raise UnauthorizedError(f"{caller} may not set IPFS info")
            if message_id in self.messages:
                raise DuplicateMessageError(f"message {message_id} already bound")
            low, high = SET_IPFS_INFO_GAS_RANGE
            gas = round(self._rng.uniform(low, high))
            receipt = GasReceipt(
                "setIPFSInfo", gas, self._gas_price["setIPFSInfo"], time.time()
            )
            self._apply_ipfs_info(message_id, pair, receipt)
            self._journal(
                "setIPFSInfo",
                caller,
                {
                    "message_id": str(message_id),
                    "word1": pair.word1.hex(),
                    "word2": pair.word2.hex(),
                },
                receipt,
            )
        return receipt

    # -- reads (open to any caller) ------------------------------------------

    def get_user_info(self, reader) -> list[int]:
        reader = _normalize(reader)
        with self._lock:
            self._sync()
            return list(self.readers.get(reader, []))

    def get_ipfs_info(self, message_id: int) -> WordPair:
        message_id = self._check_message_id(message_id)
        with self._lock:
            self._sync()
            try:
                return self.messages[message_id]
            except KeyError:
                raise UnknownMessageError(f"message {message_id} not registered") from None

    def snapshot(self) -> dict:
        """Deep-copyable view of the registry state, for inspection and tests."""
        with self._lock:
            self._sync()
            return {
                "certifier": self.certifier,
                "sdm": self.sdm,
                "skm": self.skm,
                "readers": {k: list(v) for k, v in self.readers.items()},
                "messages": {
                    str(k): {"word1": v.word1.hex(), "word2": v.word2.hex()}
                    for k, v in self.messages.items()
                },
                "receipts": [r.to_json() for r in self.receipts],
            }

    # -- journaling ----------------------------------------------------------

    @classmethod
    def replay(cls, journal_path, certifier, sdm, skm) -> "Registry":
        """Reconstruct a registry from its journal."""
        return cls(certifier, sdm, skm, journal_path=journal_path)

    @contextlib.contextmanager
    def _write_guard(self):
        """Cross-process serialization of mutations via an advisory file lock."""
        if not self.journal_path:
            yield
            return
        fd = os.open(self.journal_path + ".lock", os.O_WRONLY | os.O_CREAT, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            yield
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
            os.close(fd)

    def _journal(self, op: str, caller: str, args: dict, receipt: GasReceipt) -> None:
        if not self.journal_path:
            return
        line = json.dumps(
            {"op": op, "caller": caller, "args": args, "receipt": receipt.to_json()},
            sort_keys=True,
        )
        data = (line + "\n").encode("utf-8")
        # The write guard is held, so the append lands at our known offset.
        fd = os.open(self.journal_path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, data)
        finally:
            os.close(fd)
        self._journal_offset += len(data)

    def _sync(self) -> None:
        """Apply journal lines appended since the last look (cross-process reads).

        Only whole lines are consumed; a torn tail from a concurrent append
        is left for the next pass.
        """
        if not self.journal_path or not os.path.exists(self.journal_path):
            return
        size = os.path.getsize(self.journal_path)
        if size <= self._journal_offset:
            return
        with open(self.journal_path, "rb") as fh:
            fh.seek(self._journal_offset)
            chunk = fh.read()
        end = chunk.rfind(b"\n")
        if end < 0:
            return
        chunk = chunk[: end + 1]
        self._journal_offset += len(chunk)
        for raw in chunk.splitlines():
            if not raw.strip():
                continue
            entry = json.loads(raw)
            receipt = GasReceipt.from_json(entry["receipt"])
            args = entry["args"]
            if entry["op"] == "setUserInfo":
                self._apply_user_info(args["reader"], [int(a) for a in args["attrs"]], receipt)
            elif entry["op"] == "setIPFSInfo":
                pair = WordPair(bytes.fromhex(args["word1"]), bytes.fromhex(args["word2"]))
                self._apply_ipfs_info(int(args["message_id"]), pair, receipt)
            else:
                raise SliceGateError(f"unknown journal op {entry['op']!r}")

    def _apply_user_info(self, reader: str, attrs: list[int], receipt: GasReceipt) -> None:
        self.readers[reader] = list(attrs)
        self.receipts.append(receipt)

    def _apply_ipfs_info(self, message_id: int, pair: WordPair, receipt: GasReceipt) -> None:
        if message_id in self.messages:
            raise DuplicateMessageError(f"message {message_id} already bound")
        self.messages[message_id] = pair
        self.receipts.append(receipt)

    @staticmethod
    def _check_attr(value) -> int:
        value = int(value)
        if not 0 <= value < 2**64:
            raise SliceGateError(f"attribute {value} outside u64 range")
        return value

    @staticmethod
    def _check_message_id(value) -> int:
        value = int(value)
        if not 0 <= value < 2**64:
            raise SliceGateError(f"message id {value} outside u64 range")
        return value
