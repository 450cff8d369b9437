"""Classical messages exchanged during a session, and the transcript that records them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

from .authmac import AuthTag
from .gf2core import BitString

TRANSCRIPT_VERSION = 1


@dataclass(frozen=True)
class Message:
    """One classical message.

    ``meta`` holds public framing (pass numbers, ranges, counts); key
    material only ever travels in ``payload``.
    """

    step: str
    sender: str
    payload: BitString
    tag: AuthTag | None = None
    encrypted: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def authenticated(self) -> bool:
        return self.tag is not None

    @property
    def bits_on_wire(self) -> int:
        return self.payload.length + (self.tag.k if self.tag else 0)

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "sender": self.sender,
            "length": self.payload.length,
            "payload": self.payload.to_bytes()[8:].hex(),
            "tag": self.tag.to_bytes().hex() if self.tag else None,
            "authenticated": self.authenticated,
            "encrypted": self.encrypted,
            "bits_on_wire": self.bits_on_wire,
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Message":
        n = rec["length"]
        payload = BitString(int.from_bytes(bytes.fromhex(rec["payload"]), "little"), n)
        tag = AuthTag.from_bytes(bytes.fromhex(rec["tag"])) if rec["tag"] else None
        return cls(rec["step"], rec["sender"], payload, tag, rec["encrypted"], rec["meta"])


@dataclass
class Transcript:
    """Append-only message log. ``tampered`` lists indices altered in flight."""

    header: dict = field(default_factory=dict)
    messages: list[Message] = field(default_factory=list)
    tampered: list[int] = field(default_factory=list)

    def append(self, msg: Message) -> int:
        self.messages.append(msg)
        return len(self.messages) - 1

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self.messages)

    def by_step(self, step: str) -> list[Message]:
        return [m for m in self.messages if m.step == step]

    def bits(self, step_prefix: str = "", encrypted: bool | None = None) -> int:
        return sum(
            m.bits_on_wire
            for m in self.messages
            if m.step.startswith(step_prefix) and (encrypted is None or m.encrypted == encrypted)
        )

    def to_jsonl(self) -> str:
        head = {"version": TRANSCRIPT_VERSION, **self.header, "tampered": self.tampered}
        lines = [json.dumps(head, sort_keys=True)]
        lines += [json.dumps({"i": i, **m.to_record()}, sort_keys=True) for i, m in enumerate(self.messages)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "Transcript":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("version") != TRANSCRIPT_VERSION:
            raise ValueError("not a version-1 transcript")
        head = dict(rows[0])
        head.pop("version")
        tampered = head.pop("tampered", [])
        return cls(head, [Message.from_record(r) for r in rows[1:]], tampered)


Mutation = Callable[[Message], Message]


def flip_payload_bit(i: int) -> Mutation:
    def mutate(msg: Message) -> Message:
        return replace(msg, payload=msg.payload.flip(i % msg.payload.length))

    return mutate


def flip_tag_bit(i: int) -> Mutation:
    def mutate(msg: Message) -> Message:
        if msg.tag is None:
            raise ValueError(f"{msg.step} message carries no tag")
        return replace(msg, tag=AuthTag(msg.tag.ciphertext.flip(i % msg.tag.k)))

    return mutate


@dataclass
class Tamper:
    """In-flight mutation of one message.

    ``position`` is either a transcript index or a ``(step, occurrence)``
    pair, occurrence counting from 0 among messages of that step.
    """

    position: int | tuple[str, int]
    mutation: Mutation
    fired: bool = False

    def matches(self, index: int, msg: Message, transcript: Transcript) -> bool:
        if self.fired:
            return False
        if isinstance(self.position, int):
            return index == self.position
        step, occ = self.position
        return msg.step == step and len(transcript.by_step(step)) == occ

    def apply(self, index: int, msg: Message, transcript: Transcript) -> Message:
        if not self.matches(index, msg, transcript):
            return msg
        self.fired = True
        transcript.tampered.append(index)
        return self.mutation(msg)


def inject_tamper(position: int | tuple[str, int], mutation: Mutation) -> Tamper:
    return Tamper(position, mutation)
