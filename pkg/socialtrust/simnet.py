"""Simulated pairwise trust establishment.

Two devices run a small protocol over a lossy simulated channel: exchange hello nonces,
derive a shared session salt, exchange contact tokens, intersect them and score the
peer from their own logs. Everything runs on a single-threaded virtual-time queue, so a
seed fully determines traces and reports.
"""

import hashlib
import heapq
import itertools
import json
import logging
import struct
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from .exceptions import (
    InvalidConfig,
    ProtocolError,
    ProtocolTimeout,
    PSIError,
    SaltMismatch,
    SimulationError,
)
from .features import extract_all
from .file_operations import read_text
from .models import FeatureVector
from .population import Device, SimConfig, generate_population
from .psi import (
    CombinationParams,
    ContactToken,
    HashedSetIntersector,
    Intersector,
    TrustEstimate,
    establish_trust,
    token_directory,
)
from .trustmetric import Combinator, GradingBands, QuantileTable, reference_table

logger = logging.getLogger(__name__)

LENGTH_PREFIX = struct.Struct(">I")
NONCE_BYTES = 16
GAP_BIN_WIDTH = 0.1


class ProtocolState(Enum):
    """Protocol progress of one peer."""

    IDLE = "Idle"
    HELLO_SENT = "HelloSent"
    SALT_AGREED = "SaltAgreed"
    TOKENS_SENT = "TokensSent"
    INTERSECTED = "Intersected"
    SCORED = "Scored"
    DONE = "Done"
    FAILED = "Failed"


STATE_ORDER = (
    ProtocolState.IDLE,
    ProtocolState.HELLO_SENT,
    ProtocolState.SALT_AGREED,
    ProtocolState.TOKENS_SENT,
    ProtocolState.INTERSECTED,
    ProtocolState.SCORED,
    ProtocolState.DONE,
)
TERMINAL_STATES = frozenset({ProtocolState.DONE, ProtocolState.FAILED})


def can_transition(current: ProtocolState, target: ProtocolState) -> bool:
    """Check whether a peer may move from ``current`` to ``target``."""
    if current in TERMINAL_STATES:
        return False
    if target is ProtocolState.FAILED:
        return True
    return STATE_ORDER.index(target) == STATE_ORDER.index(current) + 1


class MessageType(Enum):
    """Protocol message types."""

    HELLO = "hello"
    TOKENS = "tokens"


@dataclass(frozen=True)
class Envelope:
    """Protocol message: a length-prefixed JSON object ``{type, session, payload}``."""

    type: MessageType
    session: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def encode(self) -> bytes:
        """4-byte big-endian length followed by compact, key-sorted JSON."""
        body = json.dumps(
            {"type": self.type.value, "session": self.session, "payload": dict(self.payload)},
            sort_keys=True,
            separators=(",", ":"),
        ).encode("utf-8")
        return LENGTH_PREFIX.pack(len(body)) + body

    @classmethod
    def decode(cls, data: bytes) -> "Envelope":
        """Decode one encoded envelope.

        Raises:
            ProtocolError: If the frame is truncated or not a valid envelope
        """
        if len(data) < LENGTH_PREFIX.size:
            raise ProtocolError("Truncated frame header")
        (length,) = LENGTH_PREFIX.unpack_from(data)
        body = data[LENGTH_PREFIX.size :]
        if len(body) != length:
            raise ProtocolError(f"Frame length {length} does not match body of {len(body)} bytes")
        try:
            raw = json.loads(body)
            return cls(MessageType(raw["type"]), str(raw["session"]), raw["payload"])
        except (ValueError, KeyError, TypeError) as e:
            raise ProtocolError(f"Malformed envelope: {e}") from e


@dataclass(frozen=True)
class ProtocolEvent:
    """One entry of a protocol trace.

    Attributes:
        time: Virtual time in seconds
        peer: Protocol role, "a" (initiator) or "b"
        device: Device the event belongs to
        kind: ``send``, ``receive``, ``state`` or ``timeout``
        detail: Message type, new state name or failure reason
        size: Encoded message size in bytes (0 for state changes)
        attempts: Transmissions needed for a send
    """

    time: float
    peer: str
    device: str
    kind: str
    detail: str
    size: int = 0
    attempts: int = 0


@dataclass(frozen=True)
class ChannelModel:
    """Lossy channel with bounded retransmission.

    Attributes:
        loss: Drop probability of each transmission
        max_retries: Retransmissions after the first attempt
        latency: Virtual seconds per transmission
    """

    loss: float = 0.0
    max_retries: int = 3
    latency: float = 0.05

    def attempts(self, rng: np.random.Generator) -> int | None:
        """Transmissions until delivery, None when the retry budget runs out."""
        for attempt in range(1, self.max_retries + 2):
            if self.loss == 0.0 or rng.random() >= self.loss:
                return attempt
        return None


@dataclass(frozen=True)
class TrustSettings:
    """Everything a peer needs to score mutual contacts."""

    table: QuantileTable
    combinator: Combinator | None = None
    params: CombinationParams = field(default_factory=CombinationParams)
    bands: GradingBands | None = None


def derive_salt(initiator_nonce: bytes, responder_nonce: bytes) -> bytes:
    """Session salt shared by both peers."""
    return hashlib.sha256(initiator_nonce + responder_nonce).digest()


def salt_id(salt: bytes) -> str:
    """Short public fingerprint of a session salt."""
    return hashlib.sha256(salt).hexdigest()[:16]


class ProtocolPeer:
    """One side of a pairwise trust establishment."""

    def __init__(
        self,
        device: Device,
        role: str,
        session: str,
        nonce: bytes,
        settings: TrustSettings,
        trace: list[ProtocolEvent],
        features: Mapping[str, FeatureVector] | None = None,
        intersector: Intersector | None = None,
    ) -> None:
        """Initialize ProtocolPeer.

        Args:
            device: Simulated phone this peer runs on
            role: "a" for the initiator, whose nonce comes first in the salt, else "b"
            session: Session identifier shared by both peers
            nonce: Hello nonce of this peer
            settings: Trust scoring settings
            trace: Shared trace the peer appends to
            features: Precomputed features of the device's log
            intersector: Mutual-contact discovery (hashed sets by default)
        """
        self.device = device
        self.role = role
        self.session = session
        self.nonce = nonce
        self.settings = settings
        self.trace = trace
        self.features = features
        self.intersector = intersector or HashedSetIntersector()
        self.state = ProtocolState.IDLE
        self.salt: bytes | None = None
        self.directory: dict[ContactToken, str] = {}
        self.peer_tokens: set[ContactToken] | None = None
        self.pending: Envelope | None = None
        self.mutual: set[ContactToken] = set()
        self.estimate: TrustEstimate | None = None

    @property
    def initiator(self) -> bool:
        """Whether this peer opened the session."""
        return self.role == "a"

    def record(
        self, time: float, kind: str, detail: str, size: int = 0, attempts: int = 0
    ) -> None:
        """Append an event of this peer to the shared trace."""
        self.trace.append(
            ProtocolEvent(time, self.role, self.device.device_id, kind, detail, size, attempts)
        )

    def transition(self, target: ProtocolState, time: float, reason: str = "") -> None:
        """Move to ``target`` and record the change.

        Raises:
            ProtocolError: If the transition is not allowed
        """
        if not can_transition(self.state, target):
            raise ProtocolError(
                f"{self.device.device_id}/{self.role}: illegal transition "
                f"{self.state.value} -> {target.value}"
            )
        self.state = target
        self.record(time, "state", f"{target.value}({reason})" if reason else target.value)

    def hello(self) -> Envelope:
        """Hello message carrying this peer's nonce."""
        return Envelope(MessageType.HELLO, self.session, {"nonce": self.nonce.hex()})

    def tokens(self) -> Envelope:
        """Token message under the agreed salt."""
        if self.salt is None:
            raise ProtocolError(f"{self.device.device_id}: tokens requested before salt agreement")
        payload = {
            "salt_id": salt_id(self.salt),
            "tokens": sorted(token.hex() for token in self.directory),
        }
        return Envelope(MessageType.TOKENS, self.session, payload)

    def on_hello(self, envelope: Envelope, time: float) -> None:
        """Derive the session salt from both nonces and tokenize the address book."""
        peer_nonce = bytes.fromhex(envelope.payload["nonce"])
        if self.initiator:
            self.salt = derive_salt(self.nonce, peer_nonce)
        else:
            self.salt = derive_salt(peer_nonce, self.nonce)
        self.directory = token_directory(self.device.profile.address_book, self.salt)
        self.transition(ProtocolState.SALT_AGREED, time)

    def on_tokens(self, envelope: Envelope) -> None:
        """Store the peer's tokens after checking they use the agreed salt.

        Tokens that overtake the peer's hello are held until the salt is known.

        Raises:
            SaltMismatch: If the tokens were built under another salt
        """
        if self.salt is None:
            self.pending = envelope
            return
        expected = salt_id(self.salt)
        if envelope.payload.get("salt_id") != expected:
            raise SaltMismatch(
                f"{self.device.device_id}/{self.role}: peer tokens use salt "
                f"{envelope.payload.get('salt_id')}, expected {expected}"
            )
        self.peer_tokens = {ContactToken.from_hex(t) for t in envelope.payload["tokens"]}

    def release_pending(self) -> None:
        """Process tokens held back before the salt was agreed."""
        if self.pending is not None and self.salt is not None:
            envelope, self.pending = self.pending, None
            self.on_tokens(envelope)

    @property
    def ready_to_score(self) -> bool:
        """Own tokens are out and the peer's tokens have arrived."""
        return self.state is ProtocolState.TOKENS_SENT and self.peer_tokens is not None

    def score(self, time: float) -> TrustEstimate:
        """Intersect, estimate trust and finish."""
        if self.peer_tokens is None:
            raise ProtocolError(f"{self.device.device_id}: scoring before peer tokens arrived")
        self.mutual = self.intersector.intersect(set(self.directory), self.peer_tokens)
        self.transition(ProtocolState.INTERSECTED, time)
        profile = self.device.profile

        def resolve(token: ContactToken) -> str | None:
            number = self.directory.get(token)
            return profile.resolve(number) if number is not None else None

        self.estimate = establish_trust(
            self.device.log,
            self.mutual,
            self.settings.table,
            resolve,
            combinator=self.settings.combinator,
            params=self.settings.params,
            bands=self.settings.bands,
            features=self.features,
        )
        self.transition(ProtocolState.SCORED, time)
        self.transition(ProtocolState.DONE, time)
        return self.estimate


@dataclass(frozen=True)
class PairResult:
    """Outcome of one pairwise run."""

    device_a: str
    device_b: str
    trace: tuple[ProtocolEvent, ...]
    estimate_a: TrustEstimate
    estimate_b: TrustEstimate

    @property
    def messages(self) -> int:
        """Messages sent by both peers."""
        return sum(1 for e in self.trace if e.kind == "send")

    @property
    def bytes_sent(self) -> int:
        """Encoded bytes including retransmissions."""
        return sum(e.size * e.attempts for e in self.trace if e.kind == "send")

    @property
    def finished_at(self) -> float:
        """Virtual time of the last event."""
        return self.trace[-1].time if self.trace else 0.0


class _Session:
    """Virtual-time event loop connecting two peers."""

    def __init__(
        self,
        peers: tuple[ProtocolPeer, ProtocolPeer],
        channel: ChannelModel,
        rng: np.random.Generator,
    ) -> None:
        self.peers = peers
        self.channel = channel
        self.rng = rng
        self.queue: list[tuple[float, int, int, bytes]] = []
        self.sequence = itertools.count()

    def fail(self, reason: str, time: float) -> None:
        for peer in self.peers:
            if peer.state not in TERMINAL_STATES:
                peer.transition(ProtocolState.FAILED, time, reason)

    def send(self, sender: int, envelope: Envelope, time: float) -> None:
        peer = self.peers[sender]
        frame = envelope.encode()
        attempts = self.channel.attempts(self.rng)
        if attempts is None:
            budget = self.channel.max_retries + 1
            peer.record(time, "send", envelope.type.value, len(frame), budget)
            timeout_at = time + self.channel.latency * budget
            peer.record(timeout_at, "timeout", envelope.type.value)
            self.fail("timeout", timeout_at)
            raise ProtocolTimeout(
                f"{envelope.type.value} from {peer.device.device_id} lost after "
                f"{budget} attempts",
                list(peer.trace),
            )
        if attempts > 1:
            logger.debug(
                f"{peer.device.device_id}/{peer.role}: {envelope.type.value} "
                f"needed {attempts} attempts"
            )
        peer.record(time, "send", envelope.type.value, len(frame), attempts)
        arrival = time + self.channel.latency * attempts
        heapq.heappush(self.queue, (arrival, next(self.sequence), 1 - sender, frame))

    def run(self) -> None:
        for index, peer in enumerate(self.peers):
            peer.record(0.0, "state", ProtocolState.IDLE.value)
            self.send(index, peer.hello(), 0.0)
            peer.transition(ProtocolState.HELLO_SENT, 0.0)
        while self.queue:
            time, _, target, frame = heapq.heappop(self.queue)
            peer = self.peers[target]
            envelope = Envelope.decode(frame)
            peer.record(time, "receive", envelope.type.value, len(frame))
            try:
                if envelope.type is MessageType.HELLO:
                    peer.on_hello(envelope, time)
                    self.send(target, peer.tokens(), time)
                    peer.transition(ProtocolState.TOKENS_SENT, time)
                    peer.release_pending()
                else:
                    peer.on_tokens(envelope)
            except SaltMismatch as e:
                logger.warning(str(e))
                self.fail("salt-mismatch", time)
                raise
            if peer.ready_to_score:
                peer.score(time)


def run_pairwise(
    a: Device,
    b: Device,
    table: QuantileTable,
    seed: int | Sequence[int] = 0,
    channel: ChannelModel | None = None,
    settings: TrustSettings | None = None,
    features: Mapping[str, Mapping[str, FeatureVector]] | None = None,
) -> PairResult:
    """Run the trust-establishment protocol between two devices.

    Args:
        a: Initiating device
        b: Responding device (may be ``a`` itself)
        table: Calibrated quantile table
        seed: Seed for nonces and channel losses
        channel: Loss model (lossless by default)
        settings: Scoring settings; ``table`` is used when absent
        features: Precomputed features per device id

    Returns:
        PairResult with the trace and both independent estimates

    Raises:
        ProtocolTimeout: If a message is lost beyond the retry budget
        SaltMismatch: If a peer sends tokens under a different salt
    """
    rng = np.random.default_rng(seed)
    settings = settings or TrustSettings(table=table)
    features = features or {}
    session = rng.bytes(8).hex()
    trace: list[ProtocolEvent] = []
    peer_a = ProtocolPeer(
        a, "a", session, rng.bytes(NONCE_BYTES), settings, trace, features.get(a.device_id)
    )
    peer_b = ProtocolPeer(
        b, "b", session, rng.bytes(NONCE_BYTES), settings, trace, features.get(b.device_id)
    )
    _Session((peer_a, peer_b), channel or ChannelModel(), rng).run()

    if peer_a.estimate is None or peer_b.estimate is None:
        raise ProtocolError(f"Protocol between {a.device_id} and {b.device_id} did not finish")
    return PairResult(
        device_a=a.device_id,
        device_b=b.device_id,
        trace=tuple(trace),
        estimate_a=peer_a.estimate,
        estimate_b=peer_b.estimate,
    )


PairingPlan = list[tuple[int, int]]


def mesh_plan(n_devices: int) -> PairingPlan:
    """Every unordered pair of distinct devices."""
    return list(itertools.combinations(range(n_devices), 2))


def random_plan(n_devices: int, count: int, seed: int) -> PairingPlan:
    """``count`` distinct unordered pairs, sorted, drawn reproducibly."""
    pairs = mesh_plan(n_devices)
    if count >= len(pairs):
        return pairs
    rng = np.random.default_rng([seed, n_devices, count])
    chosen = sorted(int(i) for i in rng.choice(len(pairs), count, replace=False))
    return [pairs[i] for i in chosen]


def _device_index(token: str, n_devices: int) -> int:
    text = token.strip()
    if text.startswith("dev-"):
        text = text[4:]
    try:
        value = int(text)
    except ValueError as e:
        raise InvalidConfig(f"Unknown device reference {token!r} in pairing plan") from e
    if not 0 <= value < n_devices:
        raise InvalidConfig(f"Device {value} out of range 0-{n_devices - 1}")
    return value


def load_plan(path: Path, n_devices: int) -> PairingPlan:
    """Read a pairing plan of ``a,b`` lines (device indices or ``dev-NNNN`` ids).

    Blank lines and lines starting with ``#`` are ignored.

    Raises:
        InvalidConfig: If a line is malformed or names an unknown device
    """
    plan: PairingPlan = []
    for number, line in enumerate(read_text(path).splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InvalidConfig(f"{path}:{number}: expected 'a,b', got {line!r}")
        plan.append((_device_index(parts[0], n_devices), _device_index(parts[1], n_devices)))
    return plan


def parse_plan(plan: str, n_devices: int, seed: int) -> PairingPlan:
    """Resolve ``mesh``, ``random:N`` or a plan file path."""
    if plan == "mesh":
        return mesh_plan(n_devices)
    if plan.startswith("random:"):
        try:
            count = int(plan.split(":", 1)[1])
        except ValueError as e:
            raise InvalidConfig(f"Invalid random plan {plan!r}") from e
        if count < 0:
            raise InvalidConfig(f"Random plan needs a non-negative count, got {count}")
        return random_plan(n_devices, count, seed)
    return load_plan(Path(plan), n_devices)


SCENARIO_COLUMNS = (
    "pair_id",
    "mutual_count",
    "est_a",
    "est_b",
    "level_a",
    "level_b",
    "messages",
    "bytes",
    "status",
)


@dataclass(frozen=True)
class PairReport:
    """Scenario row for one pair; estimates are None for failed pairs."""

    pair_id: str
    device_a: str
    device_b: str
    estimate_a: TrustEstimate | None
    estimate_b: TrustEstimate | None
    messages: int = 0
    bytes_sent: int = 0
    failure: str | None = None

    @property
    def mutual_count(self) -> int | None:
        """Mutual contacts (identical on both sides)."""
        return self.estimate_a.mutual_count if self.estimate_a else None

    @property
    def gap(self) -> float | None:
        """Absolute difference of the combined scores."""
        if self.estimate_a is None or self.estimate_b is None:
            return None
        return abs(self.estimate_a.combined - self.estimate_b.combined)

    def row(self) -> dict[str, str]:
        """CSV row with fixed float formatting."""
        a, b = self.estimate_a, self.estimate_b
        return {
            "pair_id": self.pair_id,
            "mutual_count": "" if a is None else str(a.mutual_count),
            "est_a": "" if a is None else f"{a.combined:.6f}",
            "est_b": "" if b is None else f"{b.combined:.6f}",
            "level_a": "" if a is None else str(a.level.level),
            "level_b": "" if b is None else str(b.level.level),
            "messages": str(self.messages),
            "bytes": str(self.bytes_sent),
            "status": "ok" if self.failure is None else f"failed:{self.failure}",
        }


@dataclass(frozen=True)
class ScenarioReport:
    """Per-pair estimates and aggregate statistics of a scenario."""

    seed: int
    n_devices: int
    pairs: tuple[PairReport, ...] = ()

    def rows(self) -> list[dict[str, str]]:
        """CSV rows in plan order."""
        return [pair.row() for pair in self.pairs]

    def summary(self) -> dict[str, Any]:
        """Estimate distribution and symmetry-gap histogram."""
        finished = [p for p in self.pairs if p.failure is None]
        estimates = [
            e for p in finished for e in (p.estimate_a, p.estimate_b) if e is not None
        ]
        levels = Counter(e.level.level for e in estimates)
        gaps = [p.gap for p in finished if p.gap is not None]
        bins = Counter(min(int(gap / GAP_BIN_WIDTH), 9) for gap in gaps)
        return {
            "pairs": len(self.pairs),
            "failed": len(self.pairs) - len(finished),
            "insufficient_evidence": sum(e.insufficient_evidence for e in estimates),
            "mean_combined": round(float(np.mean([e.combined for e in estimates])), 6)
            if estimates
            else 0.0,
            "mean_mutual": round(float(np.mean([p.mutual_count or 0 for p in finished])), 6)
            if finished
            else 0.0,
            "level_counts": {str(level): levels.get(level, 0) for level in range(1, 6)},
            "asymmetric_levels": sum(
                1
                for p in finished
                if p.estimate_a and p.estimate_b and p.estimate_a.level != p.estimate_b.level
            ),
            "mean_gap": round(float(np.mean(gaps)), 6) if gaps else 0.0,
            "gap_histogram": {
                f"{i * GAP_BIN_WIDTH:.1f}-{(i + 1) * GAP_BIN_WIDTH:.1f}": bins.get(i, 0)
                for i in range(10)
            },
        }

    def to_dict(self) -> dict[str, Any]:
        """JSON document: seed, device count, summary and rows."""
        return {
            "seed": self.seed,
            "n_devices": self.n_devices,
            "summary": self.summary(),
            "pairs": self.rows(),
        }


def run_scenario(
    config: SimConfig,
    plan: PairingPlan,
    table: QuantileTable | None = None,
    settings: TrustSettings | None = None,
    tolerate_failures: bool = False,
    devices: Sequence[Device] | None = None,
) -> ScenarioReport:
    """Run every pair of a pairing plan over a generated population.

    Args:
        config: Population and channel parameters
        plan: Device index pairs to run
        table: Quantile table (the published table by default)
        settings: Scoring settings overriding ``table``
        tolerate_failures: Record failed pairs instead of raising
        devices: Pre-generated population for ``config``

    Returns:
        ScenarioReport in plan order

    Raises:
        SimulationError: Propagated from ``run_pairwise`` unless tolerated
    """
    table = table or reference_table()
    settings = settings or TrustSettings(table=table)
    if not plan:
        return ScenarioReport(seed=config.seed, n_devices=config.n_devices)
    population = list(devices) if devices is not None else generate_population(config)
    channel = ChannelModel(config.loss, config.max_retries, config.latency)
    features: dict[str, dict[str, FeatureVector]] = {}
    reports: list[PairReport] = []
    for i, j in plan:
        a, b = population[i], population[j]
        for device in (a, b):
            if device.device_id not in features:
                features[device.device_id] = extract_all(device.log)
        pair_id = f"{a.device_id}:{b.device_id}"
        try:
            result = run_pairwise(
                a, b, settings.table, [config.seed, i, j], channel, settings, features
            )
        except (SimulationError, PSIError) as e:
            if not tolerate_failures:
                raise
            logger.warning(f"Pair {pair_id} failed: {e}")
            reports.append(
                PairReport(pair_id, a.device_id, b.device_id, None, None, failure=type(e).__name__)
            )
            continue
        reports.append(
            PairReport(
                pair_id=pair_id,
                device_a=a.device_id,
                device_b=b.device_id,
                estimate_a=result.estimate_a,
                estimate_b=result.estimate_b,
                messages=result.messages,
                bytes_sent=result.bytes_sent,
            )
        )
    return ScenarioReport(seed=config.seed, n_devices=config.n_devices, pairs=tuple(reports))
