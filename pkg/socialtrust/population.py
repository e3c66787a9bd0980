"""Synthetic device population.

Generates phones with address books, communication logs and survey ratings whose
aggregate statistics follow the configured means. All randomness comes from numpy
generators seeded by the configuration, so a config always yields the same population.
"""

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import stats as sps

from .exceptions import InvalidConfig
from .ingest import select_survey_partners
from .models import (
    LIKERT_LEVELS,
    SECONDS_PER_DAY,
    CallDirection,
    CallRecord,
    MessageDirection,
    MessageRecord,
    ParticipantLog,
    PartnerRecord,
    Rating,
)
from .psi import anonymize_identifier

logger = logging.getLogger(__name__)

MIN_CONTACTS = 2
MIN_PARTNERS = 5
SHORT_LOG_DAYS = 7.0
SHORT_LOG_PARTNERS = 10
COMMUNITY_BLOCK = 2500
MIN_GLOBAL_POOL = 5000
TAGS = ("mobile", "home", "work")
TAG_WEIGHTS = (0.8, 0.1, 0.1)
CALL_DIRECTION_WEIGHTS = (0.45, 0.40, 0.15)


class SpanDistribution(Enum):
    """Distribution family of log spans."""

    LOGNORMAL = "lognormal"
    TRUNCATED_NORMAL = "truncated-normal"


@dataclass(frozen=True)
class SimConfig:
    """Population and protocol parameters.

    Attributes:
        n_devices: Number of simulated phones (>= 2)
        seed: Master seed
        contacts_mean: Mean address-book size
        contacts_sd: Standard deviation of the address-book size
        active_partners_mean: Mean number of communication partners per log
        calls_mean: Mean number of calls per log
        msgs_mean: Mean number of messages per log
        span_days_mean: Mean log span in days
        span_days_sd: Standard deviation of the log span
        trust_coupling: Correlation between log interaction volume and latent trust (0-1)
        span_distribution: Family used for log spans
        level_shares: Share of latent trust levels 1-5
        non_human_share: Share of partners that are not a person
        favorite_rate_trusted: Favorite probability at latent level >= 4
        favorite_rate_other: Favorite probability below level 4
        survey_size: Questionnaire slots per participant
        community_size: Devices sharing a block of phone numbers
        community_share: Share of a device's contacts drawn from its community block
        degenerate_fraction: Share of recently reset phones (short, sparse logs)
        loss: Per-message drop probability of the simulated channel
        max_retries: Retransmissions before a message times out
        latency: Virtual seconds per transmission
    """

    n_devices: int = 10
    seed: int = 0
    contacts_mean: float = 249.3
    contacts_sd: float = 308.7
    active_partners_mean: float = 32.0
    calls_mean: float = 304.6
    msgs_mean: float = 739.2
    span_days_mean: float = 90.0
    span_days_sd: float = 135.9
    trust_coupling: float = 0.6
    span_distribution: SpanDistribution = SpanDistribution.LOGNORMAL
    level_shares: tuple[float, ...] = (0.2, 0.15, 0.2, 0.2, 0.25)
    non_human_share: float = 0.05
    favorite_rate_trusted: float = 0.25
    favorite_rate_other: float = 0.03
    survey_size: int = 20
    community_size: int = 10
    community_share: float = 0.6
    degenerate_fraction: float = 0.0
    loss: float = 0.0
    max_retries: int = 3
    latency: float = 0.05

    def __post_init__(self) -> None:
        """Validate SimConfig attributes."""
        if self.n_devices < 2:
            raise InvalidConfig(f"n_devices must be >= 2, got {self.n_devices}")
        for name in (
            "contacts_mean",
            "contacts_sd",
            "active_partners_mean",
            "calls_mean",
            "msgs_mean",
            "span_days_mean",
            "span_days_sd",
            "latency",
        ):
            if getattr(self, name) < 0:
                raise InvalidConfig(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in (
            "trust_coupling",
            "non_human_share",
            "favorite_rate_trusted",
            "favorite_rate_other",
            "community_share",
            "degenerate_fraction",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if not 0.0 <= self.loss < 1.0:
            raise InvalidConfig(f"loss must lie in [0, 1), got {self.loss}")
        if self.max_retries < 0:
            raise InvalidConfig(f"max_retries must be >= 0, got {self.max_retries}")
        if self.survey_size < 1 or self.community_size < 1:
            raise InvalidConfig("survey_size and community_size must be >= 1")
        if len(self.level_shares) != len(LIKERT_LEVELS) or any(s < 0 for s in self.level_shares):
            raise InvalidConfig("level_shares needs five non-negative shares")
        if not math.isclose(sum(self.level_shares), 1.0, abs_tol=1e-9):
            raise InvalidConfig(f"level_shares must sum to 1, got {sum(self.level_shares)}")
        if self.active_partners_mean < MIN_PARTNERS:
            raise InvalidConfig(f"active_partners_mean must be >= {MIN_PARTNERS}")


@dataclass(frozen=True)
class DeviceProfile:
    """Ground truth of one simulated phone.

    Attributes:
        device_id: Stable device name
        phone_number: The phone's own number
        address_book: Contact numbers, sorted
        partner_ids: Number -> anonymized partner id, for every logged partner
        latent_trust: Partner id -> latent trust level
        degenerate: Whether the phone models a recently reset device
    """

    device_id: str
    phone_number: str
    address_book: tuple[str, ...]
    partner_ids: Mapping[str, str] = field(default_factory=dict)
    latent_trust: Mapping[str, int] = field(default_factory=dict)
    degenerate: bool = False

    def resolve(self, number: str) -> str | None:
        """Partner id of a contact number, None if it never appears in the log."""
        return self.partner_ids.get(number)


@dataclass(frozen=True)
class Device:
    """A simulated phone: its ground truth and its survey log."""

    profile: DeviceProfile
    log: ParticipantLog

    @property
    def device_id(self) -> str:
        """Stable device name."""
        return self.profile.device_id


def phone_number(index: int) -> str:
    """Number of the pool entry ``index``."""
    return f"+49 1{index:09d}"


def stratified_uniform(rng: np.random.Generator, n: int) -> np.ndarray:
    """One uniform draw per equal-probability stratum, in random order."""
    return (rng.permutation(n) + rng.random(n)) / n


def lognormal_params(mean: float, sd: float) -> tuple[float, float]:
    """(mu, sigma) of the log-normal with the given mean and standard deviation."""
    if mean <= 0:
        return 0.0, 0.0
    sigma2 = math.log1p((sd / mean) ** 2)
    return math.log(mean) - sigma2 / 2, math.sqrt(sigma2)


def _lognormal_ppf(u: np.ndarray, mean: float, sd: float) -> np.ndarray:
    mu, sigma = lognormal_params(mean, sd)
    if sigma == 0.0:
        return np.full_like(u, mean)
    return np.asarray(sps.lognorm.ppf(u, s=sigma, scale=math.exp(mu)))


def contact_sizes(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Address-book sizes from a log-normal matched to mean/sd, truncated below at 2."""
    u = stratified_uniform(rng, config.n_devices)
    draws = _lognormal_ppf(u, config.contacts_mean, config.contacts_sd)
    return np.maximum(np.rint(draws), MIN_CONTACTS).astype(np.int64)


def span_days(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Log spans in days, at least one day."""
    u = stratified_uniform(rng, config.n_devices)
    if config.span_distribution is SpanDistribution.TRUNCATED_NORMAL and config.span_days_sd > 0:
        a = (1.0 - config.span_days_mean) / config.span_days_sd
        draws = np.asarray(
            sps.truncnorm.ppf(u, a, np.inf, loc=config.span_days_mean, scale=config.span_days_sd)
        )
    else:
        draws = _lognormal_ppf(u, config.span_days_mean, config.span_days_sd)
    return np.maximum(draws, 1.0)


def _partner_count(config: SimConfig, rng: np.random.Generator, days: float) -> int:
    extra_mean = config.active_partners_mean - MIN_PARTNERS
    count = MIN_PARTNERS
    if extra_mean > 0:
        r = 2.0
        count += int(rng.negative_binomial(r, r / (r + extra_mean)))
    if days < SHORT_LOG_DAYS:
        count = max(count, SHORT_LOG_PARTNERS)
    return count


def _latent_levels(
    volumes: np.ndarray, coupling: float, shares: tuple[float, ...], rng: np.random.Generator
) -> np.ndarray:
    log_volume = np.log(volumes.astype(np.float64))
    spread = log_volume.std()
    z = (log_volume - log_volume.mean()) / spread if spread > 0 else np.zeros_like(log_volume)
    latent = coupling * z + math.sqrt(1.0 - coupling**2) * rng.standard_normal(len(volumes))
    cuts = sps.norm.ppf(np.cumsum(shares)[:-1])
    return np.searchsorted(cuts, latent) + 1


def _jitter(level: int, rng: np.random.Generator) -> int:
    return int(min(5, max(1, level + int(rng.integers(-1, 2)))))


class _Pool:
    """Phone-number layout: one block per community, then a global block."""

    def __init__(self, config: SimConfig) -> None:
        self.communities = math.ceil(config.n_devices / config.community_size)
        self.global_start = self.communities * COMMUNITY_BLOCK
        self.global_size = max(MIN_GLOBAL_POOL, 50 * config.n_devices)

    def device_number(self, device: int) -> str:
        # Own numbers live past the contact blocks
        return phone_number(self.global_start + self.global_size + device)

    def address_book(
        self, rng: np.random.Generator, community: int, size: int, share: float
    ) -> list[int]:
        local = min(round(share * size), COMMUNITY_BLOCK)
        glob = min(size - local, self.global_size)
        book = community * COMMUNITY_BLOCK + rng.choice(COMMUNITY_BLOCK, local, replace=False)
        book_global = self.global_start + rng.choice(self.global_size, glob, replace=False)
        return sorted(int(i) for i in np.concatenate([book, book_global]))

    def strangers(self, rng: np.random.Generator, exclude: set[int], count: int) -> list[int]:
        found: list[int] = []
        while len(found) < count:
            candidate = self.global_start + int(rng.integers(self.global_size))
            if candidate not in exclude:
                exclude.add(candidate)
                found.append(candidate)
        return found


def _event_counts(
    rng: np.random.Generator, partners: int, calls_mean: float, msgs_mean: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    affinity = rng.lognormal(0.0, 1.2, partners)
    call_pref = affinity * rng.lognormal(0.0, 0.5, partners)
    msg_pref = affinity * rng.lognormal(0.0, 0.5, partners)
    total_calls = int(rng.poisson(calls_mean))
    total_msgs = int(rng.poisson(msgs_mean))
    calls = rng.multinomial(total_calls, call_pref / call_pref.sum())
    msgs = rng.multinomial(total_msgs, msg_pref / msg_pref.sum())
    # Every partner appears in the log at least once
    silent = (calls + msgs) == 0
    call_share = calls_mean / (calls_mean + msgs_mean) if calls_mean + msgs_mean > 0 else 0.5
    as_call = rng.random(partners) < call_share
    calls = calls + (silent & as_call)
    msgs = msgs + (silent & ~as_call)
    return calls, msgs, affinity


def _build_device(
    config: SimConfig, index: int, book_size: int, days: float, pool: _Pool
) -> Device:
    rng = np.random.default_rng([config.seed, index])
    degenerate = rng.random() < config.degenerate_fraction
    salt = rng.bytes(16)
    community = index // config.community_size
    book_indices = pool.address_book(rng, community, book_size, config.community_share)

    if degenerate:
        days = float(rng.uniform(1.0 / 24, 1.0))
        partner_count = int(rng.integers(2, 5))
        calls, msgs, _ = _event_counts(rng, partner_count, 3.0, 5.0)
    else:
        partner_count = _partner_count(config, rng, days)
        calls, msgs, _ = _event_counts(rng, partner_count, config.calls_mean, config.msgs_mean)

    in_book = min(partner_count, len(book_indices))
    chosen = [book_indices[int(i)] for i in rng.choice(len(book_indices), in_book, replace=False)]
    chosen += pool.strangers(rng, set(book_indices), partner_count - in_book)
    numbers = [phone_number(i) for i in chosen]
    ids = [anonymize_identifier(number, salt) for number in numbers]

    span_seconds = max(1, round(days * SECONDS_PER_DAY))
    offset = int(rng.integers(0, 1_000_000))
    total_events = int(calls.sum() + msgs.sum())
    times = rng.integers(0, span_seconds + 1, total_events)
    times[0] = 0
    if total_events > 1:
        times[1] = span_seconds
    dates = offset + span_seconds - times

    partners: list[PartnerRecord] = []
    cursor = 0
    for k in range(partner_count):
        tag = str(rng.choice(TAGS, p=TAG_WEIGHTS))
        directions = rng.choice(3, int(calls[k]), p=CALL_DIRECTION_WEIGHTS)
        durations = np.maximum(np.rint(rng.lognormal(4.2, 1.0, int(calls[k]))), 1)
        call_records = []
        for d, duration in zip(directions, durations, strict=True):
            direction = (CallDirection.INCOMING, CallDirection.OUTGOING, CallDirection.MISSED)[d]
            call_records.append(
                CallRecord(
                    relative_date=int(dates[cursor]),
                    direction=direction,
                    duration=0 if direction is CallDirection.MISSED else int(duration),
                    tag=tag,
                )
            )
            cursor += 1
        lengths = np.maximum(np.rint(rng.lognormal(3.6, 0.8, int(msgs[k]))), 1)
        outgoing = rng.random(int(msgs[k])) < 0.5
        message_records = []
        for length, out in zip(lengths, outgoing, strict=True):
            message_records.append(
                MessageRecord(
                    relative_date=int(dates[cursor]),
                    direction=MessageDirection.OUTGOING if out else MessageDirection.INCOMING,
                    length=int(length),
                    tag=tag,
                )
            )
            cursor += 1
        partners.append(
            PartnerRecord(
                partner_id=ids[k],
                calls=tuple(call_records),
                messages=tuple(message_records),
            )
        )

    levels = _latent_levels(calls + msgs, config.trust_coupling, config.level_shares, rng)
    unrated = ParticipantLog(
        participant_id=f"dev-{index:04d}",
        address_book_size=len(book_indices),
        total_calls=int(calls.sum()),
        total_messages=int(msgs.sum()),
        partners=tuple(partners),
        active_partners=partner_count,
    )
    slots = select_survey_partners(unrated, n=config.survey_size, seed=int(rng.integers(2**31)))
    position = {slot.partner_id: i for i, slot in enumerate(slots, 1)}
    non_human = rng.random(partner_count) < config.non_human_share
    if slots:
        # The first surveyed partner is always a person
        non_human[ids.index(slots[0].partner_id)] = False

    rated: list[PartnerRecord] = []
    for k, partner in enumerate(partners):
        level = int(levels[k])
        favorite_rate = config.favorite_rate_trusted if level >= 4 else config.favorite_rate_other
        rating = Rating()
        if partner.partner_id in position and not non_human[k]:
            rating = Rating(
                closeness=_jitter(level, rng),
                trust_info=level,
                trust_best=_jitter(level, rng),
            )
        rated.append(
            replace(
                partner,
                rating=rating,
                is_human=not bool(non_human[k]),
                is_favorite=bool(rng.random() < favorite_rate),
                survey_position=position.get(partner.partner_id),
            )
        )

    profile = DeviceProfile(
        device_id=unrated.participant_id,
        phone_number=pool.device_number(index),
        address_book=tuple(phone_number(i) for i in book_indices),
        partner_ids=dict(zip(numbers, ids, strict=True)),
        latent_trust={ids[k]: int(levels[k]) for k in range(partner_count)},
        degenerate=degenerate,
    )
    return Device(profile=profile, log=replace(unrated, partners=tuple(rated)))


def generate_population(config: SimConfig) -> list[Device]:
    """Generate a reproducible device population.

    Args:
        config: Population parameters (validated on construction)

    Returns:
        Devices in index order; the same config always yields the same devices
    """
    rng = np.random.default_rng(config.seed)
    books = contact_sizes(config, rng)
    spans = span_days(config, rng)
    pool = _Pool(config)
    devices = [
        _build_device(config, i, int(books[i]), float(spans[i]), pool)
        for i in range(config.n_devices)
    ]
    logger.info(f"Generated {len(devices)} devices (seed {config.seed})")
    return devices
