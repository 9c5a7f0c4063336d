"""Hash-pointer ledger: provider (private) and public chains, drone identities and contracts.

Chains are immutable values; every append returns a new :class:`Chain`. Block digests
are SHA-256 over the canonical JSON of ``index``, ``prev_hash``, ``transactions``,
``proposer`` and ``timestamp_s`` (keys sorted, no whitespace, ASCII only).
"""

import hashlib
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import InitVar, dataclass, field
from enum import Enum
from typing import Any, Optional

logger = logging.getLogger(__name__)

GENESIS_PREV_HASH = "0" * 64
GENESIS_PROPOSER = "genesis"
AUTH_MESSAGES = 2

Rect = tuple[float, float, float, float]


class LedgerError(Exception):
    """Base class for ledger rule violations."""


class UnauthorizedProposerError(LedgerError):
    """Proposer or author is not a member of a private chain."""


class DuplicateIdentityError(LedgerError):
    """The drone already has an active identity."""


class UnknownIdentityError(LedgerError):
    """No active identity for the drone (or it belongs to another provider)."""


class InvalidContractError(LedgerError):
    """Contract terms break their own invariants."""


class EmptyBlockError(LedgerError):
    """A block needs at least one transaction."""


class ConsensusFailedError(LedgerError):
    """Validators could not reach quorum; the batch was not committed."""

    def __init__(self, validators: int, faulty: int, messages: int) -> None:
        super().__init__(
            f"consensus failed: {faulty} faulty of {validators} validators (needs n >= 3f + 1)"
        )
        self.validators = validators
        self.faulty = faulty
        self.messages = messages


class TxKind(str, Enum):
    IDENTITY_REGISTRATION = "IdentityRegistration"
    IDENTITY_REVOCATION = "IdentityRevocation"
    DELIVERY_RECEIPT = "DeliveryReceipt"
    CONTRACT_SIGNATURE = "ContractSignature"


class ChainMode(str, Enum):
    PUBLIC = "Public"
    PRIVATE = "Private"


class IdentityStatus(str, Enum):
    ACTIVE = "Active"
    REVOKED = "Revoked"


_PAYLOAD_KEYS: dict[TxKind, frozenset[str]] = {
    TxKind.IDENTITY_REGISTRATION: frozenset({"drone_id", "provider", "credential"}),
    TxKind.IDENTITY_REVOCATION: frozenset({"drone_id", "provider"}),
    TxKind.DELIVERY_RECEIPT: frozenset({"packet_id", "src", "dst", "relays", "delivered_at_s"}),
    TxKind.CONTRACT_SIGNATURE: frozenset(
        {
            "provider",
            "drone_id",
            "service_area",
            "resource_commitment",
            "valid_from_s",
            "valid_to_s",
        }
    ),
}


def canonical_json(value: Any) -> str:
    """Byte-stable JSON used for digests and exports."""
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False
    )


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    payload: Mapping[str, Any]
    author: str
    credential_token: str = ""
    checked: InitVar[bool] = True

    def __post_init__(self, checked: bool) -> None:
        expected = _PAYLOAD_KEYS[self.kind]
        if checked and set(self.payload) != expected:
            missing = sorted(expected - set(self.payload))
            extra = sorted(set(self.payload) - expected)
            raise ValueError(
                f"{self.kind.value} payload mismatch: missing {missing}, extra {extra}"
            )
        # Normalize to plain JSON types so parsed and in-memory transactions compare equal.
        object.__setattr__(self, "payload", json.loads(canonical_json(dict(self.payload))))

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "payload": dict(self.payload),
            "author": self.author,
            "credential_token": self.credential_token,
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any], checked: bool = True) -> "Transaction":
        """Rebuild a transaction; ``checked=False`` keeps a payload of the wrong shape as is."""
        return cls(
            kind=TxKind(record["kind"]),
            payload=record["payload"],
            author=record["author"],
            credential_token=record.get("credential_token", ""),
            checked=checked,
        )


def block_digest(
    index: int,
    prev_hash: str,
    transactions: Sequence[Transaction],
    proposer: str,
    timestamp_s: float,
) -> str:
    body = {
        "index": index,
        "prev_hash": prev_hash,
        "transactions": [tx.to_record() for tx in transactions],
        "proposer": proposer,
        "timestamp_s": timestamp_s,
    }
    return hashlib.sha256(canonical_json(body).encode("ascii")).hexdigest()


@dataclass(frozen=True)
class Block:
    index: int
    prev_hash: str
    hash: str
    transactions: tuple[Transaction, ...]
    proposer: str
    timestamp_s: float

    def computed_hash(self) -> str:
        return block_digest(
            self.index, self.prev_hash, self.transactions, self.proposer, self.timestamp_s
        )

    def to_record(self) -> dict[str, Any]:
        """Export record; key order is the documented field order."""
        return {
            "index": self.index,
            "prev_hash": self.prev_hash,
            "hash": self.hash,
            "proposer": self.proposer,
            "timestamp_s": self.timestamp_s,
            "transactions": [tx.to_record() for tx in self.transactions],
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any], checked: bool = True) -> "Block":
        return cls(
            index=record["index"],
            prev_hash=record["prev_hash"],
            hash=record["hash"],
            transactions=tuple(
                Transaction.from_record(tx, checked) for tx in record["transactions"]
            ),
            proposer=record["proposer"],
            timestamp_s=record["timestamp_s"],
        )


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...]
    mode: ChainMode = ChainMode.PUBLIC
    members: frozenset[str] = frozenset()

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    def __len__(self) -> int:
        return len(self.blocks)

    def transactions(self, kind: Optional[TxKind] = None) -> Iterable[Transaction]:
        for block in self.blocks:
            for tx in block.transactions:
                if kind is None or tx.kind is kind:
                    yield tx


@dataclass(frozen=True)
class IdentityRecord:
    drone_id: str
    provider: str
    credential: str
    status: IdentityStatus = IdentityStatus.ACTIVE


@dataclass(frozen=True)
class DroneContract:
    provider: str
    drone_id: str
    service_area: Rect
    valid_from_s: float
    valid_to_s: float
    resource_commitment: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.valid_from_s < self.valid_to_s:
            raise InvalidContractError(
                f"{self.drone_id}: valid_from_s {self.valid_from_s} must precede "
                f"valid_to_s {self.valid_to_s}"
            )
        x0, y0, x1, y1 = self.service_area
        if x0 > x1 or y0 > y1:
            raise InvalidContractError(
                f"{self.drone_id}: degenerate service area {self.service_area}"
            )

    def active_at(self, t_s: float) -> bool:
        return self.valid_from_s <= t_s < self.valid_to_s

    def covers(self, x: float, y: float) -> bool:
        x0, y0, x1, y1 = self.service_area
        return x0 <= x <= x1 and y0 <= y <= y1

    def to_payload(self) -> dict[str, Any]:
        return {
            "provider": self.provider,
            "drone_id": self.drone_id,
            "service_area": list(self.service_area),
            "resource_commitment": dict(self.resource_commitment),
            "valid_from_s": self.valid_from_s,
            "valid_to_s": self.valid_to_s,
        }

    @classmethod
    def from_payload(cls, payload: Mapping[str, Any]) -> "DroneContract":
        x0, y0, x1, y1 = payload["service_area"]
        return cls(
            provider=payload["provider"],
            drone_id=payload["drone_id"],
            service_area=(x0, y0, x1, y1),
            resource_commitment=payload["resource_commitment"],
            valid_from_s=payload["valid_from_s"],
            valid_to_s=payload["valid_to_s"],
        )


# --- chain primitives ---


def genesis(mode: ChainMode = ChainMode.PUBLIC, members: Iterable[str] = ()) -> Chain:
    """Start a chain holding only the genesis block."""
    member_set = frozenset(members)
    if mode is ChainMode.PRIVATE and not member_set:
        raise LedgerError("a private chain needs at least one member")
    block = Block(
        index=0,
        prev_hash=GENESIS_PREV_HASH,
        hash=block_digest(0, GENESIS_PREV_HASH, (), GENESIS_PROPOSER, 0.0),
        transactions=(),
        proposer=GENESIS_PROPOSER,
        timestamp_s=0.0,
    )
    return Chain(blocks=(block,), mode=mode, members=member_set)


def append_block(
    chain: Chain, txs: Sequence[Transaction], proposer: str, timestamp_s: float = 0.0
) -> Chain:
    """Return a new chain with one more block; ``chain`` itself is left as is.

    Raises:
        EmptyBlockError: no transactions
        UnauthorizedProposerError: proposer or a tx author is not a private-chain member
    """
    if not txs:
        raise EmptyBlockError("a block needs at least one transaction")
    if chain.mode is ChainMode.PRIVATE:
        if proposer not in chain.members:
            raise UnauthorizedProposerError(f"{proposer} is not a member of this private chain")
        for tx in txs:
            if tx.author not in chain.members:
                raise UnauthorizedProposerError(
                    f"{tx.kind.value} authored by non-member {tx.author}"
                )

    head = chain.head
    index = head.index + 1
    transactions = tuple(txs)
    block = Block(
        index=index,
        prev_hash=head.hash,
        hash=block_digest(index, head.hash, transactions, proposer, timestamp_s),
        transactions=transactions,
        proposer=proposer,
        timestamp_s=timestamp_s,
    )
    return Chain(blocks=chain.blocks + (block,), mode=chain.mode, members=chain.members)


def first_broken_block(chain: Chain) -> Optional[int]:
    """Position of the first block whose digest or linkage fails, None if intact."""
    if not chain.blocks:
        return 0
    for position, block in enumerate(chain.blocks):
        if position == 0:
            linked = block.index == 0 and block.prev_hash == GENESIS_PREV_HASH
        else:
            prev = chain.blocks[position - 1]
            linked = block.index == prev.index + 1 and block.prev_hash == prev.hash
        if not linked or block.hash != block.computed_hash():
            return position
    return None


def verify_chain(chain: Chain) -> bool:
    return first_broken_block(chain) is None


# --- consensus ---


def pbft_message_count(validators: int) -> int:
    """Pre-prepare broadcast plus all-to-all prepare and commit: (n-1) + 2n(n-1)."""
    n = validators
    return (n - 1) + 2 * n * (n - 1)


def consensus_commit(validators: int, faulty: int, txs: Sequence[Transaction]) -> tuple[bool, int]:
    """One PBFT-style round over ``txs``.

    Returns:
        (committed, consensus_messages); messages are charged either way
    """
    if validators < 1:
        raise ValueError(f"validators must be >= 1, got {validators}")
    if not 0 <= faulty <= validators:
        raise ValueError(f"faulty must be in [0, {validators}], got {faulty}")
    committed = validators >= 3 * faulty + 1
    messages = pbft_message_count(validators)
    logger.debug(
        "consensus round: %d txs, n=%d f=%d committed=%s messages=%d",
        len(txs),
        validators,
        faulty,
        committed,
        messages,
    )
    return committed, messages


def _commit(
    chain: Chain,
    txs: Sequence[Transaction],
    proposer: str,
    validators: int,
    faulty: int,
    timestamp_s: float,
) -> tuple[Chain, int]:
    committed, messages = consensus_commit(validators, faulty, txs)
    if not committed:
        raise ConsensusFailedError(validators, faulty, messages)
    return append_block(chain, txs, proposer, timestamp_s), messages


# --- identities ---


def identity_registry(chain: Chain) -> dict[str, IdentityRecord]:
    """Replay registrations and revocations into the current record per drone."""
    registry: dict[str, IdentityRecord] = {}
    for tx in chain.transactions():
        if tx.kind is TxKind.IDENTITY_REGISTRATION:
            p = tx.payload
            registry[p["drone_id"]] = IdentityRecord(p["drone_id"], p["provider"], p["credential"])
        elif tx.kind is TxKind.IDENTITY_REVOCATION:
            drone_id = tx.payload["drone_id"]
            record = registry.get(drone_id)
            if record is not None:
                registry[drone_id] = IdentityRecord(
                    record.drone_id, record.provider, record.credential, IdentityStatus.REVOKED
                )
    return registry


def _active(registry: Mapping[str, IdentityRecord], drone_id: str) -> Optional[IdentityRecord]:
    record = registry.get(drone_id)
    if record is None or record.status is not IdentityStatus.ACTIVE:
        return None
    return record


def register_identities(
    chain: Chain,
    entries: Sequence[tuple[str, str, str]],
    *,
    validators: int = 1,
    faulty: int = 0,
    timestamp_s: float = 0.0,
) -> tuple[Chain, list[IdentityRecord], int]:
    """Register ``(drone_id, provider, credential)`` entries in a single consensus round.

    Returns:
        (new chain, the Active records, consensus messages charged)

    Raises:
        DuplicateIdentityError: a drone is already active or listed twice
        ConsensusFailedError: quorum not reached
    """
    registry = identity_registry(chain)
    seen: set[str] = set()
    txs: list[Transaction] = []
    for drone_id, provider, credential in entries:
        if _active(registry, drone_id) is not None or drone_id in seen:
            raise DuplicateIdentityError(f"{drone_id} already has an active identity")
        seen.add(drone_id)
        txs.append(
            Transaction(
                kind=TxKind.IDENTITY_REGISTRATION,
                payload={"drone_id": drone_id, "provider": provider, "credential": credential},
                author=provider,
                credential_token=credential,
            )
        )
    proposer = entries[0][1] if entries else GENESIS_PROPOSER
    chain, messages = _commit(chain, txs, proposer, validators, faulty, timestamp_s)
    records = [IdentityRecord(d, p, c) for d, p, c in entries]
    return chain, records, messages


def register_identity(
    chain: Chain,
    drone_id: str,
    provider: str,
    credential: str,
    *,
    validators: int = 1,
    faulty: int = 0,
    timestamp_s: float = 0.0,
) -> tuple[Chain, IdentityRecord]:
    chain, records, _ = register_identities(
        chain,
        [(drone_id, provider, credential)],
        validators=validators,
        faulty=faulty,
        timestamp_s=timestamp_s,
    )
    return chain, records[0]


def revoke_identity(
    chain: Chain,
    drone_id: str,
    provider: str,
    *,
    validators: int = 1,
    faulty: int = 0,
    timestamp_s: float = 0.0,
) -> tuple[Chain, IdentityRecord]:
    """Commit a revocation; only the registering provider may revoke."""
    record = _active(identity_registry(chain), drone_id)
    if record is None or record.provider != provider:
        raise UnknownIdentityError(f"{provider} has no active identity for {drone_id}")
    tx = Transaction(
        kind=TxKind.IDENTITY_REVOCATION,
        payload={"drone_id": drone_id, "provider": provider},
        author=provider,
    )
    chain, _ = _commit(chain, [tx], provider, validators, faulty, timestamp_s)
    return chain, IdentityRecord(drone_id, provider, record.credential, IdentityStatus.REVOKED)


def authenticate(chain: Chain, drone_id: str, presented_credential: str) -> tuple[bool, int]:
    """Challenge-response against the replayed registry; always costs two messages."""
    record = _active(identity_registry(chain), drone_id)
    ok = record is not None and record.credential == presented_credential
    return ok, AUTH_MESSAGES


# --- contracts ---


def sign_contracts(
    chain: Chain,
    contracts: Sequence[DroneContract],
    *,
    area: Optional[tuple[float, float]] = None,
    validators: int = 1,
    faulty: int = 0,
    timestamp_s: float = 0.0,
) -> tuple[Chain, int]:
    """Commit contract signatures in a single consensus round.

    Raises:
        UnknownIdentityError: drone not active under the contract's provider
        InvalidContractError: service area outside ``area``
        ConsensusFailedError: quorum not reached
    """
    registry = identity_registry(chain)
    txs: list[Transaction] = []
    for terms in contracts:
        record = _active(registry, terms.drone_id)
        if record is None or record.provider != terms.provider:
            raise UnknownIdentityError(
                f"{terms.drone_id} is not an active drone of {terms.provider}"
            )
        if area is not None:
            x0, y0, x1, y1 = terms.service_area
            if x0 < 0 or y0 < 0 or x1 > area[0] or y1 > area[1]:
                raise InvalidContractError(
                    f"{terms.drone_id}: service area {terms.service_area} leaves the {area} area"
                )
        txs.append(
            Transaction(
                kind=TxKind.CONTRACT_SIGNATURE,
                payload=terms.to_payload(),
                author=terms.provider,
                credential_token=record.credential,
            )
        )
    proposer = contracts[0].provider if contracts else GENESIS_PROPOSER
    return _commit(chain, txs, proposer, validators, faulty, timestamp_s)


def sign_contract(
    chain: Chain,
    provider: str,
    drone_id: str,
    terms: DroneContract,
    *,
    area: Optional[tuple[float, float]] = None,
    validators: int = 1,
    faulty: int = 0,
    timestamp_s: float = 0.0,
) -> Chain:
    if terms.provider != provider or terms.drone_id != drone_id:
        raise InvalidContractError(
            f"terms are for ({terms.provider}, {terms.drone_id}), not ({provider}, {drone_id})"
        )
    chain, _ = sign_contracts(
        chain, [terms], area=area, validators=validators, faulty=faulty, timestamp_s=timestamp_s
    )
    return chain


def find_contract(chain: Chain, provider: str, drone_id: str) -> Optional[DroneContract]:
    """Latest contract signed between ``provider`` and ``drone_id``."""
    found: Optional[DroneContract] = None
    for tx in chain.transactions(TxKind.CONTRACT_SIGNATURE):
        if tx.payload["provider"] == provider and tx.payload["drone_id"] == drone_id:
            found = DroneContract.from_payload(tx.payload)
    return found


# --- export ---


def export_chain(chain: Chain) -> str:
    """One canonical JSON block record per line, newline terminated."""
    lines = [
        json.dumps(block.to_record(), separators=(",", ":"), ensure_ascii=True, allow_nan=False)
        for block in chain.blocks
    ]
    return "".join(line + "\n" for line in lines)


# --- run-scoped facade ---


@dataclass
class Ledger:
    """Both chains of one run plus the consensus bookkeeping the metrics need.

    Identities and contracts live on the private chain, whose members are the
    providers; delivery receipts are batched onto the public chain.
    """

    private: Chain
    public: Chain
    validators: int = 4
    faulty: int = 0
    consensus_messages: int = 0
    rounds: int = 0
    failed_rounds: int = 0
    pending: list[Transaction] = field(default_factory=list)
    _registry: dict[str, IdentityRecord] = field(default_factory=dict, repr=False)
    _contracts: dict[str, DroneContract] = field(default_factory=dict, repr=False)

    @classmethod
    def create(cls, providers: Iterable[str], validators: int = 4, faulty: int = 0) -> "Ledger":
        return cls(
            private=genesis(ChainMode.PRIVATE, providers),
            public=genesis(ChainMode.PUBLIC),
            validators=validators,
            faulty=faulty,
        )

    def _charge(self, messages: int, committed: bool) -> None:
        self.consensus_messages += messages
        self.rounds += 1
        if not committed:
            self.failed_rounds += 1

    def register_fleet(
        self, entries: Sequence[tuple[str, str, str]], timestamp_s: float = 0.0
    ) -> list[IdentityRecord]:
        """Register drones in one round. Returns no records if quorum fails."""
        if not entries:
            return []
        try:
            self.private, records, messages = register_identities(
                self.private,
                entries,
                validators=self.validators,
                faulty=self.faulty,
                timestamp_s=timestamp_s,
            )
        except ConsensusFailedError as e:
            self._charge(e.messages, committed=False)
            logger.warning("identity registration not committed: %s", e)
            return []
        self._charge(messages, committed=True)
        self._registry = identity_registry(self.private)
        logger.info("registered %d drone identities", len(records))
        return records

    def sign_fleet_contracts(
        self,
        contracts: Sequence[DroneContract],
        area: Optional[tuple[float, float]] = None,
        timestamp_s: float = 0.0,
    ) -> bool:
        if not contracts:
            return True
        try:
            self.private, messages = sign_contracts(
                self.private,
                contracts,
                area=area,
                validators=self.validators,
                faulty=self.faulty,
                timestamp_s=timestamp_s,
            )
        except ConsensusFailedError as e:
            self._charge(e.messages, committed=False)
            logger.warning("drone contracts not committed: %s", e)
            return False
        self._charge(messages, committed=True)
        for terms in contracts:
            self._contracts[terms.drone_id] = terms
        return True

    def revoke(self, drone_id: str, provider: str, timestamp_s: float = 0.0) -> bool:
        try:
            self.private, _ = revoke_identity(
                self.private,
                drone_id,
                provider,
                validators=self.validators,
                faulty=self.faulty,
                timestamp_s=timestamp_s,
            )
        except ConsensusFailedError as e:
            self._charge(e.messages, committed=False)
            return False
        self._charge(pbft_message_count(self.validators), committed=True)
        self._registry = identity_registry(self.private)
        return True

    def revoke_expired(self, timestamp_s: float) -> list[str]:
        """Revoke every active drone whose contract has run out by ``timestamp_s``."""
        expired = [
            drone_id
            for drone_id, record in sorted(self._registry.items())
            if record.status is IdentityStatus.ACTIVE
            and drone_id in self._contracts
            and self._contracts[drone_id].valid_to_s <= timestamp_s
        ]
        revoked = []
        for drone_id in expired:
            if self.revoke(drone_id, self._registry[drone_id].provider, timestamp_s):
                revoked.append(drone_id)
        if revoked:
            logger.info("revoked %d drones with expired contracts", len(revoked))
        return revoked

    def contract_for(self, drone_id: str) -> Optional[DroneContract]:
        """Latest committed contract of a registered drone."""
        if drone_id not in self._registry:
            return None
        return self._contracts.get(drone_id)

    def authenticate(self, drone_id: str, credential: str) -> tuple[bool, int]:
        """Same rule as :func:`authenticate`, served from the cached registry."""
        record = _active(self._registry, drone_id)
        return record is not None and record.credential == credential, AUTH_MESSAGES

    def record_delivery(
        self, packet_id: str, src: str, dst: str, relays: Sequence[str], delivered_at_s: float
    ) -> None:
        self.pending.append(
            Transaction(
                kind=TxKind.DELIVERY_RECEIPT,
                payload={
                    "packet_id": packet_id,
                    "src": src,
                    "dst": dst,
                    "relays": list(relays),
                    "delivered_at_s": delivered_at_s,
                },
                author=dst,
            )
        )

    def consensus_round(self, timestamp_s: float) -> bool:
        """Commit pending receipts to the public chain. Skipped when nothing is pending.

        Receipts stay pending when quorum fails and are retried next round.
        """
        if not self.pending:
            return False
        committed, messages = consensus_commit(self.validators, self.faulty, self.pending)
        self._charge(messages, committed)
        if not committed:
            return False
        proposer = f"V{self.rounds % self.validators}"
        self.public = append_block(self.public, self.pending, proposer, timestamp_s)
        logger.debug("block %d: %d receipts", self.public.head.index, len(self.pending))
        self.pending = []
        return True
