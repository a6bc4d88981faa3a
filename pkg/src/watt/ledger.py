"""Append-only hash-chained block ledger with gas accounting.

Blocks hash a canonical, platform-independent byte layout (big-endian
integers, length-prefixed UTF-8 strings) so the same chain verifies to the
same digests anywhere. Gas follows the familiar 21000 + 16/byte schedule
and is reported, never charged; account money moves only through
transaction amounts, so the sum of all balances is conserved.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    DomainError,
    InsufficientBalanceError,
    ValidationError,
)

BLOCK_VERSION = 1
GAS_BASE = 21_000
GAS_PER_BYTE = 16
ZERO_HASH = bytes(32)


def compute_gas(payload_byte_length: int) -> int:
    """Gas figure for a transaction carrying a payload of the given size."""
    if payload_byte_length < 0:
        raise DomainError("payload byte length must be >= 0")
    return GAS_BASE + GAS_PER_BYTE * payload_byte_length


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


@dataclass(frozen=True)
class Transaction:
    tx_id: bytes
    from_account: str
    to_account: str
    amount_paise: int
    gas: int
    payload_hash: bytes
    timestamp_ms: int

    def canonical_bytes(self) -> bytes:
        return canonical_tx_bytes(
            self.from_account,
            self.to_account,
            self.amount_paise,
            self.gas,
            self.payload_hash,
            self.timestamp_ms,
        )

    def to_dict(self) -> dict:
        return {
            "amount_paise": self.amount_paise,
            "from_account": self.from_account,
            "gas": self.gas,
            "payload_hash": self.payload_hash.hex(),
            "timestamp_ms": self.timestamp_ms,
            "to_account": self.to_account,
            "tx_id": self.tx_id.hex(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Transaction":
        return cls(
            tx_id=bytes.fromhex(data["tx_id"]),
            from_account=data["from_account"],
            to_account=data["to_account"],
            amount_paise=int(data["amount_paise"]),
            gas=int(data["gas"]),
            payload_hash=bytes.fromhex(data["payload_hash"]),
            timestamp_ms=int(data["timestamp_ms"]),
        )


def canonical_tx_bytes(
    from_account: str,
    to_account: str,
    amount_paise: int,
    gas: int,
    payload_hash: bytes,
    timestamp_ms: int,
) -> bytes:
    if len(payload_hash) != 32:
        raise ValidationError("payload_hash must be exactly 32 bytes")
    if amount_paise < 0 or gas < 0:
        raise ValidationError("amount_paise and gas must be >= 0")
    return b"".join(
        (
            _pack_str(from_account),
            _pack_str(to_account),
            struct.pack(">Q", amount_paise),
            struct.pack(">Q", gas),
            payload_hash,
            struct.pack(">q", timestamp_ms),
        )
    )


def make_transaction(
    from_account: str,
    to_account: str,
    amount_paise: int,
    payload: bytes,
    timestamp_ms: int,
) -> Transaction:
    """Build a transaction, deriving gas, payload hash and tx id."""
    gas = compute_gas(len(payload))
    payload_hash = hashlib.sha256(payload).digest()
    body = canonical_tx_bytes(
        from_account, to_account, amount_paise, gas, payload_hash, timestamp_ms
    )
    return Transaction(
        tx_id=hashlib.sha256(body).digest(),
        from_account=from_account,
        to_account=to_account,
        amount_paise=amount_paise,
        gas=gas,
        payload_hash=payload_hash,
        timestamp_ms=timestamp_ms,
    )


@dataclass(frozen=True)
class Block:
    index: int
    timestamp_ms: int
    prev_hash: bytes
    transactions: tuple[Transaction, ...]
    gas_total: int
    hash: bytes

    def to_json_line(self) -> str:
        data = {
            "gas_total": self.gas_total,
            "hash": self.hash.hex(),
            "index": self.index,
            "prev_hash": self.prev_hash.hex(),
            "timestamp_ms": self.timestamp_ms,
            "transactions": [tx.to_dict() for tx in self.transactions],
        }
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json_line(cls, line: str) -> "Block":
        data = json.loads(line)
        return cls(
            index=int(data["index"]),
            timestamp_ms=int(data["timestamp_ms"]),
            prev_hash=bytes.fromhex(data["prev_hash"]),
            transactions=tuple(
                Transaction.from_dict(tx) for tx in data["transactions"]
            ),
            gas_total=int(data["gas_total"]),
            hash=bytes.fromhex(data["hash"]),
        )


def canonical_block_bytes(
    index: int,
    timestamp_ms: int,
    prev_hash: bytes,
    transactions: tuple[Transaction, ...],
) -> bytes:
    if len(prev_hash) != 32:
        raise ValidationError("prev_hash must be exactly 32 bytes")
    parts = [
        struct.pack(">I", BLOCK_VERSION),
        struct.pack(">Q", index),
        struct.pack(">q", timestamp_ms),
        prev_hash,
        struct.pack(">I", len(transactions)),
    ]
    parts.extend(tx.canonical_bytes() for tx in transactions)
    return b"".join(parts)


def hash_block(
    index: int,
    timestamp_ms: int,
    prev_hash: bytes,
    transactions: tuple[Transaction, ...],
) -> bytes:
    return hashlib.sha256(
        canonical_block_bytes(index, timestamp_ms, prev_hash, transactions)
    ).digest()


def genesis(timestamp_ms: int = 0) -> Block:
    """Anchor block: index 0, no transactions, all-zero previous hash."""
    return Block(
        index=0,
        timestamp_ms=timestamp_ms,
        prev_hash=ZERO_HASH,
        transactions=(),
        gas_total=0,
        hash=hash_block(0, timestamp_ms, ZERO_HASH, ()),
    )


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    first_bad_index: int | None = None


def verify_chain(blocks: list[Block]) -> VerifyResult:
    """Recompute every hash, link and gas sum; report the earliest break."""
    for i, block in enumerate(blocks):
        if block.index != i:
            return VerifyResult(False, i)
        expected_prev = ZERO_HASH if i == 0 else blocks[i - 1].hash
        if block.prev_hash != expected_prev:
            return VerifyResult(False, i)
        if block.gas_total != sum(tx.gas for tx in block.transactions):
            return VerifyResult(False, i)
        for tx in block.transactions:
            if hashlib.sha256(tx.canonical_bytes()).digest() != tx.tx_id:
                return VerifyResult(False, i)
        recomputed = hash_block(
            block.index, block.timestamp_ms, block.prev_hash, block.transactions
        )
        if recomputed != block.hash:
            return VerifyResult(False, i)
    return VerifyResult(True, None)


class Chain:
    """Single-writer chain with account balances.

    Balances start from ``initial_balances`` and change only by applying
    transaction amounts, block by block. With a ``path`` set, each appended
    block is written as one NDJSON line and the opening balances to a
    sidecar file, so a restart replays to the identical state.
    """

    def __init__(
        self,
        genesis_timestamp_ms: int = 0,
        initial_balances: dict[str, int] | None = None,
        path: str | Path | None = None,
    ):
        self._lock = threading.Lock()
        self._path = Path(path) if path is not None else None
        self.blocks: list[Block] = []
        self._initial_balances = dict(initial_balances or {})
        for account, balance in self._initial_balances.items():
            if balance < 0:
                raise ValidationError(f"negative opening balance for {account!r}")
        self.accounts: dict[str, int] = dict(self._initial_balances)
        if self._path is not None and self._path.exists():
            self._load()
        else:
            self.blocks.append(genesis(genesis_timestamp_ms))
            if self._path is not None:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with open(self._path, "w", encoding="utf-8") as fh:
                    fh.write(self.blocks[0].to_json_line() + "\n")
                self._write_accounts_sidecar()

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def _accounts_path(self) -> Path:
        assert self._path is not None
        return self._path.with_name("accounts.json")

    def _write_accounts_sidecar(self) -> None:
        with open(self._accounts_path(), "w", encoding="utf-8") as fh:
            json.dump(self._initial_balances, fh, sort_keys=True)
            fh.write("\n")

    def _load(self) -> None:
        assert self._path is not None
        sidecar = self._accounts_path()
        if sidecar.exists():
            with open(sidecar, encoding="utf-8") as fh:
                self._initial_balances = {
                    k: int(v) for k, v in json.load(fh).items()
                }
        self.accounts = dict(self._initial_balances)
        with open(self._path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                block = Block.from_json_line(line)
                self.blocks.append(block)
                self._apply_balances(block.transactions)

    def _apply_balances(self, transactions: tuple[Transaction, ...]) -> None:
        for tx in transactions:
            if tx.amount_paise:
                self.accounts[tx.from_account] = (
                    self.accounts.get(tx.from_account, 0) - tx.amount_paise
                )
                self.accounts[tx.to_account] = (
                    self.accounts.get(tx.to_account, 0) + tx.amount_paise
                )

    def balance(self, account: str) -> int:
        return self.accounts.get(account, 0)

    def add_block(
        self, transactions: list[Transaction], timestamp_ms: int
    ) -> Block:
        """Append one block, debiting and crediting balances atomically."""
        if not transactions:
            raise DomainError("refusing to append an empty block")
        with self._lock:
            running = dict(self.accounts)
            for tx in transactions:
                if hashlib.sha256(tx.canonical_bytes()).digest() != tx.tx_id:
                    raise ValidationError("transaction id does not match contents")
                if tx.amount_paise:
                    payer_balance = running.get(tx.from_account, 0)
                    if payer_balance < tx.amount_paise:
                        raise InsufficientBalanceError(
                            f"account {tx.from_account!r} has {payer_balance} paise, "
                            f"needs {tx.amount_paise}"
                        )
                    running[tx.from_account] = payer_balance - tx.amount_paise
                    running[tx.to_account] = (
                        running.get(tx.to_account, 0) + tx.amount_paise
                    )
            prev = self.head
            txs = tuple(transactions)
            block = Block(
                index=prev.index + 1,
                timestamp_ms=timestamp_ms,
                prev_hash=prev.hash,
                transactions=txs,
                gas_total=sum(tx.gas for tx in txs),
                hash=hash_block(prev.index + 1, timestamp_ms, prev.hash, txs),
            )
            self.blocks.append(block)
            self.accounts = running
            if self._path is not None:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(block.to_json_line() + "\n")
            return block

    def verify(self) -> VerifyResult:
        with self._lock:
            snapshot = list(self.blocks)
        return verify_chain(snapshot)

    def find_transaction(self, tx_id: bytes) -> tuple[Block, Transaction] | None:
        for block in self.blocks:
            for tx in block.transactions:
                if tx.tx_id == tx_id:
                    return block, tx
        return None


def load_chain_file(path: str | Path) -> list[Block]:
    """Parse a chain NDJSON file without applying balances."""
    blocks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            blocks.append(Block.from_json_line(line))
    return blocks


def verify_chain_file(path: str | Path) -> VerifyResult:
    """Verify a persisted chain, treating non-canonical lines as tampering.

    Every line must parse and re-serialize byte-identically (the writer
    only ever emits canonical JSON), then the reconstructed chain must pass
    ``verify_chain``. The earliest offending line/block index is reported.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    blocks = []
    for lineno, raw_line in enumerate(lines):
        try:
            line = raw_line.decode("utf-8")
            block = Block.from_json_line(line)
            canonical = block.to_json_line()
        except (ValueError, KeyError, TypeError, UnicodeDecodeError):
            return VerifyResult(False, lineno)
        if canonical != line:
            return VerifyResult(False, lineno)
        blocks.append(block)
    return verify_chain(blocks)
