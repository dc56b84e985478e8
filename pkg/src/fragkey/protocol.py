"""Server, users and intermediary wired through logged message channels.

One public channel carries bucket sequences (and is where an adversary may
sit); every other message travels on a private point-to-point channel.
Every message is serialized text, and the log of all messages plus the
verdict forms the session transcript.
"""

from __future__ import annotations

import json
import string
from collections import deque
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import gcd

import numpy as np

from . import io
from .attacks import AttackSpec, attack
from .binarize import binarize_smooth, binarize_sort
from .core import (
    BinarizeError,
    ConfigError,
    ProtocolError,
    check_pattern,
    check_upsample,
    derive_rng,
    derive_seed,
    make_speckles,
)
from .ghost import MeasurementConfig, measure, reconstruct_dg2, upsample
from .keys import extract_key, server_expected_key
from .patterns import SHAPES, FragmentSet, make_key_library, make_regular_pattern, split_fragments

__all__ = [
    "METHODS",
    "PRESETS",
    "SessionConfig",
    "Verdict",
    "Message",
    "Channel",
    "Network",
    "Server",
    "User",
    "Intermediary",
    "intermediary_synthesize",
    "SessionTranscript",
    "run_session",
    "rekey_config",
    "audit_channels",
]

METHODS = ("smoothing", "sorting")
TRANSCRIPT_FORMAT = "fragkey-transcript/1"
PUBLIC_KINDS = frozenset({"buckets"})


@dataclass(frozen=True)
class SessionConfig:
    t: int = 4
    p: int = 8
    q: int = 8
    nu: int = 8
    N: int = 4096
    shape: str = "rhombus"
    ratio: str | None = None
    method: str | tuple = "smoothing"
    seed: int = 0
    attack: AttackSpec | None = None
    noise_sigma: float = 0.0
    source_profile: np.ndarray | None = field(default=None, compare=False)
    parent: np.ndarray | None = field(default=None, compare=False)
    balanced: bool = False
    index_dark: bool = False
    discard_mode: str = "reject"
    alphabet: str = string.ascii_uppercase
    speckle_probability: float = 0.5

    def __post_init__(self):
        if self.t < 1:
            raise ConfigError("t must be at least 1")
        check_upsample(self.nu)
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape {self.shape!r}")
        methods = self.methods
        if len(methods) != self.t or any(m not in METHODS for m in methods):
            raise ConfigError(f"method must be one of {METHODS} or one per user")
        if self.discard_mode not in ("reject", "truncate"):
            raise ConfigError("discard_mode must be 'reject' or 'truncate'")
        if self.attack is not None and self.attack.target_user >= self.t:
            raise ConfigError(f"attack targets user {self.attack.target_user} but t={self.t}")
        if self.parent is not None:
            parent = check_pattern(self.parent, "parent")
            if parent.shape != (self.q, self.p):
                raise ConfigError(f"parent shape {parent.shape} does not match {self.q}x{self.p}")
            object.__setattr__(self, "parent", parent)
        # validates N, nu, noise and profile
        self.measurement()

    @property
    def methods(self) -> tuple:
        if isinstance(self.method, str):
            return (self.method,) * self.t
        return tuple(self.method)

    def measurement(self) -> MeasurementConfig:
        return MeasurementConfig(self.N, self.nu, self.noise_sigma, self.source_profile)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "p": self.p,
            "q": self.q,
            "nu": self.nu,
            "N": self.N,
            "shape": self.shape,
            "ratio": self.ratio,
            "method": self.method if isinstance(self.method, str) else list(self.method),
            "seed": self.seed,
            "attack": None if self.attack is None else self.attack.to_dict(),
            "noise_sigma": self.noise_sigma,
            "source_profile": None if self.source_profile is None else np.asarray(self.source_profile).tolist(),
            "parent": None if self.parent is None else io.serialize_pattern(self.parent),
            "balanced": self.balanced,
            "index_dark": self.index_dark,
            "discard_mode": self.discard_mode,
            "alphabet": self.alphabet,
            "speckle_probability": self.speckle_probability,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SessionConfig:
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if data.get("attack") is not None:
            data["attack"] = AttackSpec(**data["attack"])
        if isinstance(data.get("method"), list):
            data["method"] = tuple(data["method"])
        if data.get("source_profile") is not None:
            data["source_profile"] = np.asarray(data["source_profile"], dtype=np.float64)
        if data.get("parent") is not None:
            data["parent"] = io.deserialize_pattern(data["parent"])
        return cls(**data)


PRESETS = {
    "paper-fig3": dict(t=4, p=8, q=8, nu=8, N=4096, shape="rhombus", method="smoothing"),
    "paper-fig5": dict(t=4, p=8, q=8, nu=8, N=286, shape="rhombus", method="sorting"),
}


@dataclass(frozen=True)
class Verdict:
    authentic: bool
    overlap_cells: tuple = ()
    mismatch_cells: tuple = ()
    invalid_users: tuple = ()

    @property
    def evidence(self) -> list:
        return [*self.overlap_cells, *self.mismatch_cells, *(("user", u) for u in self.invalid_users)]

    def to_dict(self) -> dict:
        return {
            "status": "authentic" if self.authentic else "attacked",
            "overlap_cells": [list(c) for c in self.overlap_cells],
            "mismatch_cells": [list(c) for c in self.mismatch_cells],
            "invalid_users": list(self.invalid_users),
        }


def intermediary_synthesize(claims, expected, invalid_users=()) -> tuple[np.ndarray, Verdict]:
    """Overlay the users' claimed fragments and judge the result.

    Authentic only if the sum is binary, equals ``expected`` and every user
    delivered a valid claim.  Otherwise the verdict lists the cells where
    fragments overlap, the cells that differ from ``expected``, and the
    users whose claims were invalid.
    """
    expected = check_pattern(expected, "expected parent")
    stack = [check_pattern(c, f"claim {j}") for j, c in enumerate(claims)]
    if not stack:
        raise ProtocolError("no fragment claims to synthesize")
    for j, c in enumerate(stack):
        if c.shape != expected.shape:
            raise ProtocolError(f"claim {j} has shape {c.shape}, expected {expected.shape}")
    fsp = np.sum(np.stack(stack).astype(np.int64), axis=0)
    overlap = tuple(tuple(int(i) for i in rc) for rc in np.argwhere(fsp > 1))
    mismatch = tuple(tuple(int(i) for i in rc) for rc in np.argwhere(fsp != expected))
    invalid = tuple(sorted(int(u) for u in invalid_users))
    authentic = not overlap and not mismatch and not invalid
    return fsp, Verdict(authentic, overlap, mismatch, invalid)


@dataclass(frozen=True)
class Message:
    channel: str
    sender: str
    recipient: str
    kind: str
    payload: str


class Channel:
    """FIFO queue of serialized messages; every delivery is logged."""

    def __init__(self, name: str, public: bool, log: list, tap=None):
        self.name = name
        self.public = public
        self._log = log
        self._queue: deque = deque()
        self.tap = tap

    def send(self, sender: str, recipient: str, kind: str, payload: str) -> None:
        msg = Message(self.name, sender, recipient, kind, payload)
        if self.tap is not None:
            msg = self.tap(msg)
        self._queue.append(msg)
        record = {
            "seq": len(self._log),
            "channel": self.name,
            "public": self.public,
            "sender": sender,
            "recipient": recipient,
            "kind": kind,
            "bytes": len(msg.payload.encode("utf-8")),
            "sha256": io.digest(msg.payload),
        }
        if kind in _LOGGED_BODIES:
            record["body"] = msg.payload
        self._log.append(record)

    def recv(self) -> Message:
        if not self._queue:
            raise ProtocolError(f"channel {self.name} is empty")
        return self._queue.popleft()


# payloads small and non-secret enough to keep verbatim in the transcript
_LOGGED_BODIES = frozenset({"parent", "claim", "claim-status", "fsp", "verdict", "rekey"})


class Network:
    def __init__(self, tap=None):
        self.log: list = []
        self.public = Channel("public", True, self.log, tap)
        self._private: dict = {}

    def private(self, sender: str, recipient: str) -> Channel:
        key = (sender, recipient)
        if key not in self._private:
            self._private[key] = Channel(f"private:{sender}->{recipient}", False, self.log)
        return self._private[key]


@lru_cache(maxsize=4)
def _speckles_from_descriptor(text: str):
    d = json.loads(text)
    return make_speckles(d["count"], tuple(d["shape"]), d["seed"], d["probability"])


def _user(j: int) -> str:
    return f"user{j}"


class Server:
    name = "server"

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg

    def prepare(self) -> None:
        cfg = self.cfg
        if cfg.parent is not None:
            parent = cfg.parent
        else:
            parent = make_regular_pattern(cfg.shape, cfg.p, cfg.q, cfg.ratio)
        self.fragments: FragmentSet = split_fragments(parent, cfg.t, derive_rng(cfg.seed, "split"), cfg.balanced)
        self.libraries = [
            make_key_library(cfg.p, cfg.q, cfg.alphabet, derive_rng(cfg.seed, "library", j)) for j in range(cfg.t)
        ]
        shape = (cfg.q * cfg.nu, cfg.p * cfg.nu)
        self.speckles = make_speckles(cfg.N, shape, derive_seed(cfg.seed, "speckles"), cfg.speckle_probability)
        self.expected_keys = [
            server_expected_key(f, lib, cfg.index_dark) for f, lib in zip(self.fragments.fragments, self.libraries)
        ]

    def share_initial_keys(self, net: Network) -> None:
        descriptor = json.dumps(self.speckles.descriptor(), sort_keys=True)
        for j in range(self.cfg.t):
            ch = net.private(self.name, _user(j))
            ch.send(self.name, _user(j), "key-library", io.serialize_library(self.libraries[j]))
            ch.send(self.name, _user(j), "speckles", descriptor)
            ch.send(self.name, _user(j), "bright-count", str(int(self.fragments.fragments[j].sum())))
        net.private(self.name, "intermediary").send(
            self.name, "intermediary", "parent", io.serialize_pattern(self.fragments.parent)
        )

    def distribute(self, net: Network) -> None:
        cfg = self.cfg
        mcfg = cfg.measurement()
        for j, frag in enumerate(self.fragments.fragments):
            buckets = measure(upsample(frag, cfg.nu), self.speckles, mcfg, derive_rng(cfg.seed, "noise", j))
            net.public.send(self.name, _user(j), "buckets", io.serialize_buckets(buckets))


class User:
    def __init__(self, index: int, cfg: SessionConfig):
        self.index = index
        self.name = _user(index)
        self.cfg = cfg
        self.method = cfg.methods[index]
        self.claim = None
        self.error: str | None = None
        self.bucket_length: int | None = None
        self.key: str | None = None
        self.rekey = False

    def receive_initial_keys(self, net: Network) -> None:
        ch = net.private("server", self.name)
        self.library = io.deserialize_library(ch.recv().payload)
        self.speckles = _speckles_from_descriptor(ch.recv().payload)
        self.bright_count = int(ch.recv().payload)

    def reconstruct(self, net: Network) -> None:
        msg = net.public.recv()
        if msg.recipient != self.name:
            raise ProtocolError(f"{self.name} received a message addressed to {msg.recipient}")
        blank = np.zeros((self.cfg.q, self.cfg.p), dtype=np.uint8)
        try:
            buckets = io.deserialize_buckets(msg.payload)
            self.bucket_length = int(buckets.size)
            self.claim = user_reconstruct(
                buckets, self.speckles, self.method, self.cfg.nu, self.bright_count, self.cfg.discard_mode
            )
        except (ProtocolError, BinarizeError, ConfigError) as exc:
            self.error = f"{type(exc).__name__}: {exc}"
            self.claim = blank
        ch = net.private(self.name, "intermediary")
        ch.send(self.name, "intermediary", "claim", io.serialize_pattern(self.claim))
        ch.send(self.name, "intermediary", "claim-status", "invalid" if self.error else "ok")

    def receive_result(self, net: Network) -> None:
        ch = net.private("intermediary", self.name)
        msg = ch.recv()
        if msg.kind == "rekey":
            self.rekey = True
            return
        fsp = np.array(json.loads(msg.payload), dtype=np.int64)
        verdict = ch.recv()
        if verdict.payload != "authentic":
            raise ProtocolError(f"{self.name} got an FSP without an authentic verdict")
        self.key = extract_key(fsp, self.claim, self.library, self.cfg.index_dark)


def user_reconstruct(buckets, speckles, method: str, nu: int, bright_count: int | None = None, discard_mode: str = "reject"):
    """Correlate, then binarize into a pixel-unit fragment claim.

    A sequence shorter than the shared speckle set raises
    :class:`ProtocolError` unless ``discard_mode == "truncate"``, in which
    case only the leading speckles are used.
    """
    L = len(buckets)
    if L != speckles.count:
        if discard_mode != "truncate" or L > speckles.count or L < 2:
            raise ProtocolError(f"received {L} bucket values, expected {speckles.count}")
        speckles = speckles.head(L)
    image = reconstruct_dg2(buckets, speckles)
    if method == "smoothing":
        return binarize_smooth(image, nu)
    if method == "sorting":
        if bright_count is None:
            raise ConfigError("sorting needs the user's bright count")
        return binarize_sort(image, nu, bright_count)
    raise ConfigError(f"unknown binarization method {method!r}")


class Intermediary:
    name = "intermediary"

    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg

    def receive_parent(self, net: Network) -> None:
        self.expected = io.deserialize_pattern(net.private("server", self.name).recv().payload)

    def synthesize(self, net: Network) -> None:
        claims, invalid = [], []
        for j in range(self.cfg.t):
            ch = net.private(_user(j), self.name)
            claims.append(io.deserialize_pattern(ch.recv().payload))
            if ch.recv().payload != "ok":
                invalid.append(j)
        self.fsp, self.verdict = intermediary_synthesize(claims, self.expected, invalid)

    def respond(self, net: Network) -> None:
        for j in range(self.cfg.t):
            ch = net.private(self.name, _user(j))
            if self.verdict.authentic:
                ch.send(self.name, _user(j), "fsp", json.dumps(self.fsp.tolist()))
                ch.send(self.name, _user(j), "verdict", "authentic")
            else:
                ch.send(self.name, _user(j), "rekey", "discard keys; new session required")


@dataclass
class SessionTranscript:
    data: dict

    @property
    def authentic(self) -> bool:
        return self.data["verdict"]["status"] == "authentic"

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> SessionTranscript:
        data = json.loads(text)
        if data.get("format") != TRANSCRIPT_FORMAT:
            raise ProtocolError("not a fragkey transcript")
        return cls(data)

    def config(self) -> SessionConfig:
        return SessionConfig.from_dict(self.data["config"])


def _ratio_text(pattern) -> str:
    bright = int(np.asarray(pattern).sum())
    dark = int(np.asarray(pattern).size) - bright
    g = gcd(dark, bright) or 1
    return f"{dark // g}:{bright // g}"


def run_session(cfg: SessionConfig) -> SessionTranscript:
    """Run one full round: prepare, distribute, (attack), reconstruct,
    synthesize, respond and extract."""
    attack_record = {}

    def adversary(msg: Message) -> Message:
        spec = cfg.attack
        if spec is None or msg.kind != "buckets" or msg.recipient != _user(spec.target_user):
            return msg
        original = io.deserialize_buckets(msg.payload)
        seed = spec.seed if spec.seed is not None else derive_seed(cfg.seed, "attack")
        tampered = attack(original, replace(spec, seed=seed))
        payload = io.serialize_buckets(tampered)
        attack_record.update(
            spec=replace(spec, seed=seed).to_dict(),
            original_sha256=io.digest(msg.payload),
            attacked_sha256=io.digest(payload),
            original_length=int(original.size),
            attacked_length=int(tampered.size),
        )
        return replace(msg, payload=payload)

    net = Network(tap=adversary if cfg.attack is not None else None)
    server = Server(cfg)
    users = [User(j, cfg) for j in range(cfg.t)]
    mediator = Intermediary(cfg)

    server.prepare()
    server.share_initial_keys(net)
    for user in users:
        user.receive_initial_keys(net)
    mediator.receive_parent(net)
    server.distribute(net)
    for user in users:
        user.reconstruct(net)
    mediator.synthesize(net)
    mediator.respond(net)
    for user in users:
        user.receive_result(net)

    authentic = mediator.verdict.authentic
    keys = [u.key for u in users] if authentic else None
    data = {
        "format": TRANSCRIPT_FORMAT,
        "config": cfg.to_dict(),
        "parent": io.serialize_pattern(server.fragments.parent),
        "realized_ratio": _ratio_text(server.fragments.parent),
        "bright_counts": server.fragments.bright_counts(),
        "messages": net.log,
        "attack": attack_record or None,
        "users": [
            {
                "user": u.index,
                "method": u.method,
                "bucket_length": u.bucket_length,
                "status": "invalid" if u.error else "ok",
                "error": u.error,
                "claim": io.serialize_pattern(u.claim),
            }
            for u in users
        ],
        "fsp": mediator.fsp.tolist(),
        "verdict": mediator.verdict.to_dict(),
        "session_void": not authentic,
        "keys": keys,
        "key_agreement": (keys == server.expected_keys) if authentic else None,
    }
    return SessionTranscript(data)


def rekey_config(cfg: SessionConfig) -> SessionConfig:
    """Config for the replacement session after an attacked round."""
    return replace(cfg, seed=derive_seed(cfg.seed, "rekey"), attack=None)


def audit_channels(transcript: SessionTranscript | dict) -> list[str]:
    """Channel-discipline violations in a transcript (empty when clean).

    Bucket sequences may only travel on the public channel; everything
    else (initial keys, claims, FSP, verdicts) only on private channels.
    """
    data = transcript.data if isinstance(transcript, SessionTranscript) else transcript
    problems = []
    for rec in data["messages"]:
        on_public = rec["public"] or rec["channel"] == "public"
        if rec["kind"] in PUBLIC_KINDS and not on_public:
            problems.append(f"message {rec['seq']}: {rec['kind']} sent on private channel {rec['channel']}")
        if rec["kind"] not in PUBLIC_KINDS and on_public:
            problems.append(f"message {rec['seq']}: {rec['kind']} leaked on public channel")
        if not on_public and not rec["channel"].startswith("private:"):
            problems.append(f"message {rec['seq']}: unknown channel {rec['channel']}")
    return problems
