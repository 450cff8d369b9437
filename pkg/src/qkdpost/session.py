"""Two-party session engine running the full post-processing chain.

Alice and Bob are message-driven state machines. A scheduler delivers one
message at a time, in order, and records each one in the transcript, which
makes runs replayable and lets a :class:`~qkdpost.transcript.Tamper`
rewrite any single message in flight.

Message flow::

    alice -> bob   basis        (authenticated)
    bob -> alice   basis        (authenticated)
    bob -> alice   ec-request   (public)        } per bisection step,
    alice -> bob   ec-parity    (encrypted)     } X key then Z key
    bob -> alice   ec-done      (public error counts)
    alice -> bob   ev-tag       (encrypted tag over X||Z)
    bob -> alice   ev-result    (public; on reject, EC resumes)
    alice -> bob   pa-seed      (authenticated Toeplitz seed)
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .authmac import auth_failure_prob, make_tag, required_tag_len, verify_tag
from .budget import FailureBudget, KeyPool, PoolExhausted, ProtocolParams, net_key_length
from .channel import ChannelModel, simulate_quantum_exchange
from .errcorrect import CascadeCodec, ErrorCounts, ParityRequest, Responder, ShannonOracleCodec
from .gf2core import BitString
from .planner import PaChoice, PlanResult, optimize_plan, plan_privacy_amplification
from .privamp import pa_compress
from .sift import DetectionTable, RawKey, key_sift, split_by_basis
from .transcript import Message, Tamper, Transcript

ALICE, BOB = "alice", "bob"


class Status(enum.Enum):
    SUCCESS = "Success"
    AUTH_FAIL = "AuthFail"
    VERIFY_FAIL = "VerifyFailRetryExceeded"
    INFEASIBLE = "Infeasible"
    POOL_EXHAUSTED = "PoolExhausted"


class ProtocolAbort(Exception):
    def __init__(self, status: Status, reason: str):
        super().__init__(reason)
        self.status = status
        self.reason = reason


@dataclass(frozen=True)
class SessionConfig:
    """Run options. ``k_*`` override the derived tag lengths."""

    codec: str = "cascade"
    max_ec_retries: int = 3
    eps_ev: float | None = None
    k_bs: int | None = None
    k_ev: int | None = None
    k_pa: int | None = None
    passive: bool = False

    def __post_init__(self):
        if self.codec not in ("cascade", "oracle"):
            raise ValueError(f"unknown codec {self.codec!r}")
        if self.max_ec_retries < 0:
            raise ValueError("max_ec_retries must be >= 0")


@dataclass(frozen=True)
class Costs:
    """Pool bits spent per step, as charged to each party's pool."""

    k_bs: int
    k_ec: int
    k_ev: tuple[int, ...]
    k_pa: int
    t_oe: int

    @property
    def total(self) -> int:
        return 2 * self.k_bs + self.k_ec + sum(self.k_ev) + self.k_pa


@dataclass
class _Public:
    """Everything both parties agree on before the first classical message."""

    params: ProtocolParams
    config: SessionConfig
    plan: PlanResult
    n: int


class _Party:
    name = ""

    def __init__(self, pub: _Public, pool: KeyPool, rng: np.random.Generator, raw_bits, raw_basis):
        self.pub = pub
        self.pool = pool
        self.rng = rng
        self.raw_bits = np.asarray(raw_bits, dtype=np.uint8)
        self.raw_basis = np.asarray(raw_basis, dtype=np.uint8)
        self.state = "start"
        self.status: Status | None = None
        self.reason = ""
        self.keys: dict[str, np.ndarray] = {}
        self.k_ec = 0
        self.k_ev: list[int] = []
        self.eps_ev: list[float] = []
        self.k_pa = 0
        self.pa: PaChoice | None = None
        self.final_key: BitString | None = None
        self.counts: ErrorCounts | None = None
        self.budget: FailureBudget | None = None
        self.eps_bs = 0.0

    # shared arithmetic ------------------------------------------------
    @property
    def t_oe(self) -> int:
        return self.pub.plan.t_oe

    @property
    def k_bs(self) -> int:
        if self.pub.config.k_bs is not None:
            return self.pub.config.k_bs
        return math.ceil(self.pub.plan.t_oe + 1 + math.log2(self.pub.n))

    def k_ev_for(self, m: int) -> int:
        cfg = self.pub.config
        if cfg.k_ev is not None:
            return cfg.k_ev
        if cfg.eps_ev is not None:
            return required_tag_len(m, cfg.eps_ev)
        return math.ceil(self.t_oe + 1 + math.log2(m))

    def out(self, step, payload, tag=None, encrypted=False, **meta) -> Message:
        return Message(step, self.name, payload, tag, encrypted, meta)

    def fail(self, status: Status, reason: str) -> None:
        self.status, self.reason, self.state = status, reason, "done"

    def expect(self, msg: Message, *steps: str) -> None:
        if msg.step not in steps:
            raise ProtocolAbort(Status.AUTH_FAIL, f"{self.name} in {self.state} got unexpected {msg.step}")

    def sift(self, other_basis: BitString) -> None:
        mine = self.raw_basis
        theirs = other_basis.to_array()
        same = mine == theirs
        for b, code in (("x", 0), ("z", 1)):
            self.keys[b] = self.raw_bits[same & (mine == code)].copy()

    def verified_key(self) -> BitString:
        return BitString.from_array(self.keys["x"]) + BitString.from_array(self.keys["z"])

    def plan_pa(self, errors_x: int, errors_z: int) -> None:
        """Post-verification planning, identical on both sides (public inputs only)."""
        n_x, n_z = len(self.keys["x"]), len(self.keys["z"])
        self.counts = ErrorCounts(errors_x, errors_z, n_x, n_z)
        self.eps_bs = auth_failure_prob(self.pub.n, self.k_bs)
        spent = 2 * self.eps_bs + sum(self.eps_ev) + 2 * 2.0**-self.t_oe
        budget_ph = self.pub.params.eps_target - spent
        self.pa = plan_privacy_amplification(n_x, n_z, self.counts.e_bx, self.counts.e_bz, budget_ph, self.t_oe)
        if not self.pa.feasible:
            raise ProtocolAbort(Status.INFEASIBLE, f"no positive final length (phase budget {budget_ph:.3e})")
        n_pa = n_x * self.pa.use_x + n_z * self.pa.use_z
        m = n_pa + self.pa.l - 1
        self.k_pa = self.pub.config.k_pa or required_tag_len(m, 2.0**-self.t_oe)
        net = net_key_length(self.pa.l, self.k_bs, self.k_ec, sum(self.k_ev), self.k_pa)
        if net < 0:
            raise ProtocolAbort(Status.INFEASIBLE, f"net key {net} < 0")
        self.budget = FailureBudget(
            eps_bs=self.eps_bs,
            eps_ev=sum(self.eps_ev),
            eps_ph=self.pa.eps_ph,
            eps_pa=auth_failure_prob(m, self.k_pa) + 2.0**-self.t_oe,
        )

    def pa_input(self) -> BitString:
        parts = [BitString.from_array(self.keys[b]) for b, use in (("x", self.pa.use_x), ("z", self.pa.use_z)) if use]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out

    # driver ----------------------------------------------------------
    def handle(self, msg: Message) -> list[Message]:
        if self.state == "done":
            return []
        try:
            return self._handle(msg)
        except ProtocolAbort as ab:
            self.fail(ab.status, ab.reason)
        except PoolExhausted as exc:
            self.fail(Status.POOL_EXHAUSTED, str(exc))
        return []

    def _handle(self, msg: Message) -> list[Message]:
        raise NotImplementedError


class Alice(_Party):
    name = ALICE

    def start(self) -> list[Message]:
        try:
            bases = BitString.from_array(self.raw_basis)
            tag = make_tag(bases, self.pool.matrix_key(self.k_bs, 0), self.pool.draw(self.k_bs, "bs-pad-a2b"))
        except PoolExhausted as exc:
            self.fail(Status.POOL_EXHAUSTED, str(exc))
            return []
        self.state = "await-basis"
        return [self.out("basis", bases, tag)]

    def _handle(self, msg):
        if self.state == "await-basis":
            self.expect(msg, "basis")
            pad = self.pool.draw(self.k_bs, "bs-pad-b2a")
            if msg.payload.length != self.raw_basis.size or not verify_tag(
                msg.payload, msg.tag, self.pool.matrix_key(self.k_bs, 1), pad
            ):
                raise ProtocolAbort(Status.AUTH_FAIL, "basis message from Bob failed authentication")
            self.sift(msg.payload)
            self.responders: dict[str, Responder] = {}
            self.state = "ec"
            return []
        if self.state == "ec":
            self.expect(msg, "ec-request", "ec-done")
            if msg.step == "ec-request":
                basis, attempt = msg.meta["basis"], msg.meta["attempt"]
                key = (basis, attempt)
                if key not in self.responders:
                    self.responders[key] = Responder(self.keys[basis])
                try:
                    par = self.responders[key].respond(ParityRequest.from_meta(msg.meta["request"]))
                except (ValueError, KeyError, IndexError) as exc:
                    raise ProtocolAbort(Status.AUTH_FAIL, f"malformed parity request: {exc}") from exc
                plain = BitString.from_array(par)
                cipher = plain ^ self.pool.draw(plain.length, "ec-pad")
                self.k_ec += plain.length
                return [self.out("ec-parity", cipher, encrypted=True, basis=basis)]
            self.errors = (int(msg.meta["errors_x"]), int(msg.meta["errors_z"]))
            key = self.verified_key()
            k = self.k_ev_for(key.length)
            tag = make_tag(key, self.pool.matrix_key(k, 0), self.pool.draw(k, "ev-pad"))
            self.k_ev.append(k)
            self.eps_ev.append(auth_failure_prob(key.length, k))
            self.state = "await-ev-result"
            return [self.out("ev-tag", BitString.zeros(0), tag, encrypted=True)]
        if self.state == "await-ev-result":
            self.expect(msg, "ev-result")
            if msg.payload.length != 1:
                raise ProtocolAbort(Status.AUTH_FAIL, "malformed verification result")
            if not msg.payload[0]:
                if len(self.k_ev) > self.pub.config.max_ec_retries:
                    raise ProtocolAbort(Status.VERIFY_FAIL, "error verification kept failing")
                self.state = "ec"
                return []
            self.plan_pa(*self.errors)
            n_pa = self.pa_input().length
            seed = BitString.random(n_pa + self.pa.l - 1, self.rng)
            tag = make_tag(seed, self.pool.matrix_key(self.k_pa, 0), self.pool.draw(self.k_pa, "pa-pad"))
            self.final_key = pa_compress(self.pa_input(), seed, self.pa.l)
            self.status, self.state = Status.SUCCESS, "done"
            return [self.out("pa-seed", seed, tag)]
        raise ProtocolAbort(Status.AUTH_FAIL, f"alice has no handler for state {self.state}")


class Bob(_Party):
    name = BOB

    def __init__(self, *args, codecs, alice_keys=None, **kwargs):
        super().__init__(*args, **kwargs)
        self.codecs = codecs
        self._genie = alice_keys  # only the oracle codec looks at this
        self.attempt = 0

    def _next_request(self, reply=None) -> list[Message]:
        """Advance the running codec; move to the next basis, or to ec-done."""
        while True:
            try:
                req = next(self.driver) if reply is None else self.driver.send(reply)
                self.pending = req
                return [self.out("ec-request", BitString.zeros(0), basis=self.basis, attempt=self.attempt,
                                 request=req.to_meta())]
            except StopIteration as stop:
                self.keys[self.basis] = stop.value.bits
                reply = None
                if not self._start_basis(self._queue.popleft() if self._queue else None):
                    errs = [int(np.count_nonzero(self.keys[b] != self.sifted_raw[b])) for b in ("x", "z")]
                    self.errors = tuple(errs)
                    self.state = "await-ev-tag"
                    return [self.out("ec-done", BitString.zeros(0), errors_x=errs[0], errors_z=errs[1])]

    def _start_basis(self, basis) -> bool:
        if basis is None:
            return False
        self.basis = basis
        genie = None if self._genie is None else self._genie[basis]
        self.driver = self.codecs[basis].driver(self.keys[basis], self.rng, self.attempt, alice_bits=genie)
        return True

    def _begin_ec(self) -> list[Message]:
        self._queue = deque(b for b in ("x", "z") if len(self.keys[b]))
        self.state = "ec"
        if not self._start_basis(self._queue.popleft() if self._queue else None):
            raise ProtocolAbort(Status.INFEASIBLE, "no matched-basis rounds to correct")
        return self._next_request()

    def _handle(self, msg):
        if self.state == "start":
            self.expect(msg, "basis")
            pad = self.pool.draw(self.k_bs, "bs-pad-a2b")
            if msg.payload.length != self.raw_basis.size or not verify_tag(
                msg.payload, msg.tag, self.pool.matrix_key(self.k_bs, 0), pad
            ):
                raise ProtocolAbort(Status.AUTH_FAIL, "basis message from Alice failed authentication")
            bases = BitString.from_array(self.raw_basis)
            tag = make_tag(bases, self.pool.matrix_key(self.k_bs, 1), self.pool.draw(self.k_bs, "bs-pad-b2a"))
            self.sift(msg.payload)
            self.sifted_raw = {b: v.copy() for b, v in self.keys.items()}
            return [self.out("basis", bases, tag)] + self._begin_ec()
        if self.state == "ec":
            self.expect(msg, "ec-parity")
            m = self.pending.reply_length(len(self.keys[self.basis]))
            if msg.payload.length != m:
                raise ProtocolAbort(Status.AUTH_FAIL, "parity reply has the wrong length")
            plain = msg.payload ^ self.pool.draw(m, "ec-pad")
            self.k_ec += m
            return self._next_request(plain.to_array())
        if self.state == "await-ev-tag":
            self.expect(msg, "ev-tag")
            key = self.verified_key()
            k = self.k_ev_for(key.length)
            pad = self.pool.draw(k, "ev-pad")
            self.k_ev.append(k)
            self.eps_ev.append(auth_failure_prob(key.length, k))
            ok = msg.tag is not None and verify_tag(key, msg.tag, self.pool.matrix_key(k, 0), pad)
            result = self.out("ev-result", BitString(int(ok), 1))
            if not ok:
                if len(self.k_ev) > self.pub.config.max_ec_retries:
                    self.fail(Status.VERIFY_FAIL, "error verification kept failing")
                    return [result]
                self.attempt += 1
                return [result] + self._begin_ec()
            self.state = "await-seed"
            try:
                self.plan_pa(*self.errors)
            except ProtocolAbort as ab:
                self.fail(ab.status, ab.reason)
            return [result]
        if self.state == "await-seed":
            self.expect(msg, "pa-seed")
            pad = self.pool.draw(self.k_pa, "pa-pad")
            if not verify_tag(msg.payload, msg.tag, self.pool.matrix_key(self.k_pa, 0), pad):
                raise ProtocolAbort(Status.AUTH_FAIL, "privacy amplification seed failed authentication")
            key = self.pa_input()
            if msg.payload.length != key.length + self.pa.l - 1:
                raise ProtocolAbort(Status.AUTH_FAIL, "seed length disagrees with the locally planned length")
            self.final_key = pa_compress(key, msg.payload, self.pa.l)
            self.status, self.state = Status.SUCCESS, "done"
            return []
        raise ProtocolAbort(Status.AUTH_FAIL, f"bob has no handler for state {self.state}")


@dataclass
class SessionOutcome:
    status: Status
    reason: str
    alice_key: BitString | None
    bob_key: BitString | None
    plan: PlanResult
    pa: PaChoice | None
    budget: FailureBudget | None
    costs: Costs | None
    counts: ErrorCounts | None
    transcript: Transcript
    n: int
    n_x: int
    n_z: int
    ec_attempts: int
    pool_alice: KeyPool
    pool_bob: KeyPool
    sifted: dict = field(default_factory=dict, repr=False)

    @property
    def l(self) -> int:
        return self.pa.l if self.pa else 0

    @property
    def net_key(self) -> int | None:
        if self.costs is None or self.pa is None:
            return None
        return net_key_length(self.pa.l, self.costs.k_bs, self.costs.k_ec, sum(self.costs.k_ev), self.costs.k_pa)

    def summary(self) -> dict:
        d = {
            "status": self.status.value,
            "reason": self.reason,
            "n": self.n,
            "n_x": self.n_x,
            "n_z": self.n_z,
            "ec_attempts": self.ec_attempts,
            "l": self.l,
            "net_key": self.net_key,
            "messages": len(self.transcript),
            "pool_drawn_alice": self.pool_alice.drawn,
            "pool_drawn_bob": self.pool_bob.drawn,
        }
        if self.counts:
            d.update(e_bx=self.counts.e_bx, e_bz=self.counts.e_bz,
                     errors_x=self.counts.errors_x, errors_z=self.counts.errors_z)
        if self.pa:
            d.update(theta_x=self.pa.theta_x, theta_z=self.pa.theta_z, use_x=self.pa.use_x, use_z=self.pa.use_z)
        if self.costs:
            d.update(k_bs=self.costs.k_bs, k_ec=self.costs.k_ec, k_ev=list(self.costs.k_ev),
                     k_pa=self.costs.k_pa, t_oe=self.costs.t_oe)
        if self.budget:
            d.update(self.budget.as_dict())
        return d


def _codecs(params: ProtocolParams, config: SessionConfig):
    if config.codec == "oracle":
        return {"x": ShannonOracleCodec(), "z": ShannonOracleCodec()}
    return {"x": CascadeCodec(params.e_bx_cal), "z": CascadeCodec(params.e_bz_cal)}


def _schedule(alice: Alice, bob: Bob, transcript: Transcript, tamper: Tamper | None) -> None:
    queue = deque(alice.start())
    while queue:
        msg = queue.popleft()
        if tamper is not None:
            msg = tamper.apply(len(transcript), msg, transcript)
        transcript.append(msg)
        receiver = bob if msg.sender == ALICE else alice
        queue.extend(receiver.handle(msg))


def run_session(
    params: ProtocolParams,
    model: ChannelModel,
    pool_alice: KeyPool,
    pool_bob: KeyPool,
    max_ec_retries: int | None = None,
    config: SessionConfig | None = None,
    detections: DetectionTable | None = None,
    tamper: Tamper | None = None,
    plan: PlanResult | None = None,
    seed: int | None = None,
) -> SessionOutcome:
    """Run key sift through privacy amplification and return the outcome.

    ``plan`` is the pre-run plan at ``params.p_x`` (computed when omitted);
    it fixes t_oe and with it every tag length. The pools are consumed in
    place. ``seed`` defaults to the channel model's seed.
    """
    config = config or SessionConfig()
    if max_ec_retries is not None:
        config = SessionConfig(**{**config.__dict__, "max_ec_retries": max_ec_retries})
    if plan is None:
        plan = optimize_plan(params, optimize_q=False)
    if pool_alice.bits != pool_bob.bits or pool_alice.drawn != pool_bob.drawn:
        raise ValueError("the two pools must be mirrored copies")
    ss = np.random.SeedSequence(model.seed if seed is None else seed)
    rng_ch, rng_a, rng_b = (np.random.default_rng(s) for s in ss.spawn(3))
    if detections is None:
        detections = simulate_quantum_exchange(params.N, params.p_x, model, rng_ch)
    raw: RawKey = key_sift(detections, rng_b, passive=config.passive or model.passive)

    transcript = Transcript(header={
        "key_order": "x||z",
        "bit_order": "lsb-first",
        "toeplitz_entry": "diag[i-j+cols-1]",
        "codec": config.codec,
        "n": raw.n,
    })

    def outcome(status, reason, alice=None, bob=None):
        sifted = split_by_basis(raw.alice_bits, raw.bob_bits, raw.alice_basis, raw.bob_basis, raw.index)
        party = bob if bob is not None else alice
        costs = None
        if party is not None and party.pa is not None:
            costs = Costs(party.k_bs, party.k_ec, tuple(party.k_ev), party.k_pa, party.t_oe)
        return SessionOutcome(
            status, reason,
            alice.final_key if alice else None, bob.final_key if bob else None,
            plan, party.pa if party else None, party.budget if party else None, costs,
            party.counts if party else None, transcript, raw.n, sifted.n_x, sifted.n_z,
            len(party.k_ev) if party else 0, pool_alice, pool_bob,
            {"x": sifted.x_alice, "z": sifted.z_alice},
        )

    if not plan.feasible:
        return outcome(Status.INFEASIBLE, f"pre-run plan infeasible: {plan.diagnostics}")
    if raw.n == 0:
        return outcome(Status.INFEASIBLE, "no detections")

    pub = _Public(params, config, plan, raw.n)
    alice = Alice(pub, pool_alice, rng_a, raw.alice_bits, raw.alice_basis)
    genie = None
    if config.codec == "oracle":
        sifted = split_by_basis(raw.alice_bits, raw.bob_bits, raw.alice_basis, raw.bob_basis)
        genie = {"x": sifted.x_alice.to_array(), "z": sifted.z_alice.to_array()}
    bob = Bob(pub, pool_bob, rng_b, raw.bob_bits, raw.bob_basis, codecs=_codecs(params, config), alice_keys=genie)
    _schedule(alice, bob, transcript, tamper)

    for party in (bob, alice):
        if party.status not in (None, Status.SUCCESS):
            return outcome(party.status, f"{party.name}: {party.reason}", alice, bob)
    if alice.status is Status.SUCCESS and bob.status is Status.SUCCESS:
        return outcome(Status.SUCCESS, "", alice, bob)
    return outcome(Status.AUTH_FAIL, "protocol stalled: parties disagree on the next message", alice, bob)
