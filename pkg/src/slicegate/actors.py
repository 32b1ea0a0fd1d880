"""Client roles and the end-to-end scenario harness.

A scenario script names an attribute dictionary, a roster of actors with
their certified attributes, and a list of messages (sender plus slices,
each slice carrying plaintext and a policy).  The harness stands up the
whole stack: content store, journaled registry, both manager services
behind real TCP servers, and an identity per actor.  It then walks the
protocol for every message and every reader and reports, per slice, the
expected decision (recomputed from the policies, never trusted from the
file), the observed decision, and the reader-side integrity verdict.

With ``restart_between_steps`` the services and their servers are torn
down and rebuilt from configuration before every protocol interaction,
which demonstrates that no durable state lives inside them.
"""

from __future__ import annotations

import json
import random
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .cas import ContentStore, Locator
from .errors import AccessDenied, NoAttributesError, SliceGateError
from .ledger import Registry
from .messagefile import MessageFile, verify_integrity
from .pairing import DEFAULT_PROFILE
from .pkcrypto import KeyPair
from .policy import AttributeDict, eval_policy, parse_policy
from .sdm import SecureDataManager
from .skm import SecureKeyManager
from .wire import ServiceServer, b64, call_service, unb64


@dataclass(frozen=True)
class ActorSpec:
    name: str
    attributes: tuple = ()


@dataclass(frozen=True)
class SliceSpec:
    plaintext: bytes
    policy: str
    comment: Optional[str] = None


@dataclass(frozen=True)
class MessageSpec:
    label: str
    sender: str
    slices: tuple[SliceSpec, ...]


@dataclass(frozen=True)
class Scenario:
    name: str
    attributes: dict[str, int]
    actors: tuple[ActorSpec, ...]
    messages: tuple[MessageSpec, ...]
    profile: str = DEFAULT_PROFILE
    expected: Optional[dict] = None  # cross-checked against the recomputed matrix

    @classmethod
    def from_json(cls, doc: dict) -> "Scenario":
        actors = tuple(
            ActorSpec(a["name"], tuple(a.get("attributes", ()))) for a in doc.get("actors", ())
        )
        messages = tuple(
            MessageSpec(
                m["label"],
                m["sender"],
                tuple(
                    SliceSpec(
                        s["plaintext"].encode("utf-8"),
                        s["policy"],
                        s.get("comment"),
                    )
                    for s in m["slices"]
                ),
            )
            for m in doc.get("messages", ())
        )
        return cls(
            name=doc.get("name", "scenario"),
            attributes={k: int(v) for k, v in doc.get("attributes", {}).items()},
            actors=actors,
            messages=messages,
            profile=doc.get("profile", DEFAULT_PROFILE),
            expected=doc.get("expected"),
        )

    @classmethod
    def from_file(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def dictionary(self) -> AttributeDict:
        return AttributeDict(self.attributes.items())

    def actor_attr_values(self, actor: ActorSpec) -> list[int]:
        out = []
        for attr in actor.attributes:
            if isinstance(attr, int) or str(attr).isdigit():
                out.append(int(attr))
            else:
                resolved = self.dictionary().resolve(str(attr))
                if resolved is None:
                    raise SliceGateError(
                        f"actor {actor.name!r} names unknown attribute {attr!r}"
                    )
                out.append(resolved.value)
        return out


def builtin_scenario(name: str = "drone") -> Scenario:
    """Scenario shipped with the package (the drone supply chain)."""
    blob = resources.files("slicegate").joinpath(f"scenarios/{name}.json").read_text("utf-8")
    return Scenario.from_json(json.loads(blob))


@dataclass(frozen=True)
class ReportRow:
    reader: str
    message: str
    slice_index: int  # 1-based position within the message
    slice_id: int
    expected: bool
    observed: bool
    integrity: Optional[bool]  # None when no plaintext was returned
    note: str = ""

    @property
    def match(self) -> bool:
        return self.expected == self.observed


@dataclass
class ScenarioReport:
    scenario: str
    rows: list[ReportRow] = field(default_factory=list)
    message_ids: dict[str, int] = field(default_factory=dict)
    receipts: list = field(default_factory=list)
    duration_seconds: float = 0.0

    def mismatches(self) -> list[ReportRow]:
        return [row for row in self.rows if not row.match]

    def integrity_failures(self) -> list[ReportRow]:
        return [row for row in self.rows if row.observed and row.integrity is not True]

    def allowed(self, reader: str, message: str) -> list[int]:
        return [
            row.slice_index
            for row in self.rows
            if row.reader == reader and row.message == message and row.observed
        ]


class ScenarioHarness:
    """Owns the full stack for one scenario run."""

    def __init__(
        self,
        scenario: Scenario,
        workdir=None,
        seed: Optional[int] = None,
        rsa_bits: int = 2048,
        restart_between_steps: bool = False,
    ):
        self.scenario = scenario
        self.workdir = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="slicegate-"))
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.rng = random.Random(seed) if seed is not None else None
        self.restart_between_steps = restart_between_steps
        self.dictionary = scenario.dictionary()

        self.certifier = KeyPair.generate(rsa_bits)
        self.sdm_keys = KeyPair.generate(rsa_bits)
        self.skm_keys = KeyPair.generate(rsa_bits)
        self.identities = {a.name: KeyPair.generate(rsa_bits) for a in scenario.actors}

        self.store = ContentStore(self.workdir / "cas")
        self.registry = Registry(
            self.certifier.address,
            self.sdm_keys.address,
            self.skm_keys.address,
            journal_path=self.workdir / "ledger.jsonl",
            rng=self.rng,
        )
        self._sdm_server: Optional[ServiceServer] = None
        self._skm_server: Optional[ServiceServer] = None

    # -- service lifecycle ----------------------------------------------------

    def start_services(self) -> None:
        sdm = SecureDataManager(
            self.sdm_keys,
            self.skm_keys.public_key,
            self.store,
            self.registry,
            self.dictionary,
            profile=self.scenario.profile,
            rng=self.rng,
        )
        skm = SecureKeyManager(self.skm_keys, self.store, self.registry, rng=self.rng)
        self._sdm_server = ServiceServer(sdm).start()
        self._skm_server = ServiceServer(skm).start()

    def stop_services(self) -> None:
        for server in (self._sdm_server, self._skm_server):
            if server is not None:
                server.stop()
        self._sdm_server = self._skm_server = None

    def _checkpoint(self) -> None:
        """Fresh service instances mid-protocol when restart mode is on."""
        if self.restart_between_steps:
            self.stop_services()
            self.start_services()

    # -- protocol actions ------------------------------------------------------

    def certify_all(self) -> None:
        for actor in self.scenario.actors:
            values = self.scenario.actor_attr_values(actor)
            if values:
                self.registry.set_user_info(
                    self.certifier.address, self.identities[actor.name].address, values
                )

    def send_message(self, message: MessageSpec) -> int:
        self._checkpoint()
        owner = self.identities[message.sender]
        body = {
            "slices": [
                {"plaintext": b64(s.plaintext), "policy": s.policy} for s in message.slices
            ]
        }
        response = call_service(
            self._sdm_server.endpoint,
            self.sdm_keys.public_key,
            owner,
            "cipher",
            {"body": body},
        )
        return int(response["message_id"])

    def read_message(self, reader_name: str, message_id: int):
        """Key request then access request; returns (granted, locator, note)."""
        reader = self.identities[reader_name]
        self._checkpoint()
        try:
            key_response = call_service(
                self._skm_server.endpoint,
                self.skm_keys.public_key,
                reader,
                "key",
                {"body": {"message_id": str(message_id)}},
            )
        except NoAttributesError:
            return {}, None, "no_attributes"
        locator = key_response["locator"]
        self._checkpoint()
        try:
            access_response = call_service(
                self._skm_server.endpoint,
                self.skm_keys.public_key,
                reader,
                "access",
                {"body": {"message_id": str(message_id), "sk": key_response["sk"]}},
            )
        except AccessDenied:
            return {}, locator, "access_denied"
        granted = {
            int(s["slice_id"]): (unb64(s["plaintext"]), unb64(s["salt"]))
            for s in access_response["slices"]
        }
        return granted, locator, ""

    # -- the full run ---------------------------------------------------------

    def run(self) -> ScenarioReport:
        started = time.perf_counter()
        report = ScenarioReport(scenario=self.scenario.name)
        self.certify_all()
        self.start_services()
        try:
            for message in self.scenario.messages:
                report.message_ids[message.label] = self.send_message(message)
            for actor in self.scenario.actors:
                attrs = self.scenario.actor_attr_values(actor)
                for message in self.scenario.messages:
                    self._score_reader(report, actor, attrs, message)
        finally:
            self.stop_services()
        report.receipts = list(self.registry.receipts)
        report.duration_seconds = time.perf_counter() - started
        self._check_scripted_expectations(report)
        return report

    def _score_reader(self, report, actor, attrs, message) -> None:
        message_id = report.message_ids[message.label]
        granted, locator, note = self.read_message(actor.name, message_id)
        stored = None
        if locator is not None:
            # Reader-side integrity source: fetch the stored file directly.
            stored = MessageFile.from_bytes(self.store.get(Locator(locator)))
        for index, slice_spec in enumerate(message.slices, start=1):
            expected = eval_policy(parse_policy(slice_spec.policy, self.dictionary), attrs)
            slice_id = stored.slices[index - 1].slice_id if stored else -1
            observed = slice_id in granted
            integrity = None
            if observed:
                plaintext, salt = granted[slice_id]
                integrity = verify_integrity(plaintext, salt, stored.slices[index - 1])
            report.rows.append(
                ReportRow(
                    reader=actor.name,
                    message=message.label,
                    slice_index=index,
                    slice_id=slice_id,
                    expected=expected,
                    observed=observed,
                    integrity=integrity,
                    note=note,
                )
            )

    def _check_scripted_expectations(self, report: ScenarioReport) -> None:
        """A scenario file may script its expected matrix; it must agree with
        the recomputed one (the file is documentation, not an oracle)."""
        scripted = self.scenario.expected
        if not scripted:
            return
        for reader, per_message in scripted.items():
            for label, allowed in per_message.items():
                expected_set = {
                    row.slice_index
                    for row in report.rows
                    if row.reader == reader and row.message == label and row.expected
                }
                if expected_set != set(allowed):
                    raise SliceGateError(
                        f"scenario file expectation for {reader}/{label} is "
                        f"{sorted(allowed)} but policies give {sorted(expected_set)}"
                    )


def run_scenario(
    scenario: Scenario,
    workdir=None,
    seed: Optional[int] = None,
    rsa_bits: int = 2048,
    restart_between_steps: bool = False,
) -> ScenarioReport:
    """Stand up the stack, replay the scenario, and report the access matrix."""
    harness = ScenarioHarness(
        scenario,
        workdir=workdir,
        seed=seed,
        rsa_bits=rsa_bits,
        restart_between_steps=restart_between_steps,
    )
    return harness.run()
