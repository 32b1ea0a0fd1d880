"""Operator command line.

A home directory (``--home`` or ``$SLICEGATE_HOME``) holds everything one
deployment needs: service and certifier keys, actor identities, the
attribute dictionary, the content store, the registry journal, and the
endpoint configuration.  ``slicegate init`` creates it, ``slicegate serve``
runs both manager services, and the actor verbs talk to them over the
authenticated wire protocol.  Registry verbs (``certifier``, ``ledger``)
operate on the journal directly, the same way the on-chain calls bypass
the managers.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import click

from . import __version__
from .actors import Scenario, builtin_scenario, run_scenario
from .cas import ContentStore
from .errors import SliceGateError
from .ledger import DEFAULT_ETH_EUR_RATE, Registry, cost_eur
from .messagefile import MessageFile, verify_integrity
from .pairing import DEFAULT_PROFILE, PROFILE_TABLE
from .pkcrypto import KeyPair
from .policy import AttributeDict
from .sdm import SecureDataManager
from .skm import SecureKeyManager
from .wire import ServiceServer, b64, call_service, unb64

DEFAULT_ATTRIBUTES = {
    "Manufacturer": 1,
    "Customer": 2,
    "Electronics": 3,
    "Mechanics": 4,
    "Customs": 5,
    "Courier": 6,
    "Supplier": 16,
}


class Home:
    """Paths and lazily loaded pieces of one deployment directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.config_path = self.root / "config.json"
        self.keys = self.root / "keys"
        self.identities = self.keys / "identities"
        self.cas_dir = self.root / "cas"
        self.journal = self.root / "ledger.jsonl"
        self.attributes_path = self.root / "attributes.tsv"

    def config(self) -> dict:
        if not self.config_path.exists():
            raise SliceGateError(f"{self.root} is not initialised; run 'slicegate init'")
        return json.loads(self.config_path.read_text("utf-8"))

    def dictionary(self) -> AttributeDict:
        return AttributeDict.from_file(self.attributes_path)

    def registry(self) -> Registry:
        cfg = self.config()
        return Registry(
            cfg["certifier_address"],
            cfg["sdm_address"],
            cfg["skm_address"],
            journal_path=self.journal,
        )

    def service_key(self, name: str) -> KeyPair:
        return KeyPair.load_pem(self.keys / f"{name}.pem")

    def identity(self, name: str) -> KeyPair:
        path = self.identities / f"{name}.pem"
        if not path.exists():
            raise SliceGateError(f"unknown identity {name!r}; run 'slicegate identity new {name}'")
        return KeyPair.load_pem(path)

    def endpoint(self, which: str) -> tuple[str, int]:
        cfg = self.config()[which]
        return (cfg["host"], int(cfg["port"]))


pass_home = click.make_pass_decorator(Home)


@click.group()
@click.version_option(__version__)
@click.option(
    "--home",
    "home_dir",
    envvar="SLICEGATE_HOME",
    default="./slicegate-home",
    show_default=True,
    help="Deployment directory (also via $SLICEGATE_HOME).",
)
@click.pass_context
def main(ctx, home_dir):
    """Policy-gated exchange of message slices."""
    ctx.obj = Home(Path(home_dir))


def _fail(exc: Exception):
    raise click.ClickException(str(exc))


@main.command()
@click.option("--profile", default=DEFAULT_PROFILE, type=click.Choice(sorted(PROFILE_TABLE)),
              show_default=True, help="Pairing profile for new messages.")
@click.option("--sdm-port", default=7741, show_default=True)
@click.option("--skm-port", default=7742, show_default=True)
@pass_home
def init(home: Home, profile, sdm_port, skm_port):
    """Create the home directory: keys, dictionary, registry, config."""
    if home.config_path.exists():
        _fail(SliceGateError(f"{home.root} already initialised"))
    for path in (home.root, home.keys, home.identities, home.cas_dir):
        path.mkdir(parents=True, exist_ok=True)
    keys = {name: KeyPair.generate() for name in ("certifier", "sdm", "skm")}
    for name, pair in keys.items():
        pair.save_pem(home.keys / f"{name}.pem")
    AttributeDict(DEFAULT_ATTRIBUTES.items()).to_file(home.attributes_path)
    home.journal.touch()
    config = {
        "profile": profile,
        "certifier_address": str(keys["certifier"].address),
        "sdm_address": str(keys["sdm"].address),
        "skm_address": str(keys["skm"].address),
        "sdm": {"host": "127.0.0.1", "port": sdm_port},
        "skm": {"host": "127.0.0.1", "port": skm_port},
        "eth_eur_rate": DEFAULT_ETH_EUR_RATE,
    }
    home.config_path.write_text(json.dumps(config, indent=2) + "\n", "utf-8")
    click.echo(f"initialised {home.root}")
    for name, pair in keys.items():
        click.echo(f"  {name}: {pair.address}")


@main.command()
@pass_home
def serve(home: Home):
    """Run both manager services until interrupted."""
    cfg = home.config()
    registry = home.registry()
    store = ContentStore(home.cas_dir)
    sdm_keys = home.service_key("sdm")
    skm_keys = home.service_key("skm")
    sdm = SecureDataManager(
        sdm_keys, skm_keys.public_key, store, registry, home.dictionary(),
        profile=cfg.get("profile", DEFAULT_PROFILE),
    )
    skm = SecureKeyManager(skm_keys, store, registry)
    servers = [
        ServiceServer(sdm, cfg["sdm"]["host"], int(cfg["sdm"]["port"])).start(),
        ServiceServer(skm, cfg["skm"]["host"], int(cfg["skm"]["port"])).start(),
    ]
    click.echo(f"sdm listening on {servers[0].host}:{servers[0].port}")
    click.echo(f"skm listening on {servers[1].host}:{servers[1].port}")
    try:
        import signal

        signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    finally:
        for server in servers:
            server.stop()


@main.group()
def identity():
    """Manage actor identities (key pairs and addresses)."""


@identity.command("new")
@click.argument("name")
@pass_home
def identity_new(home: Home, name):
    """Generate a key pair for NAME and print its address."""
    path = home.identities / f"{name}.pem"
    if path.exists():
        _fail(SliceGateError(f"identity {name!r} already exists"))
    home.identities.mkdir(parents=True, exist_ok=True)
    pair = KeyPair.generate()
    pair.save_pem(path)
    click.echo(str(pair.address))


@identity.command("list")
@pass_home
def identity_list(home: Home):
    """List identities and their addresses."""
    if home.identities.exists():
        for path in sorted(home.identities.glob("*.pem")):
            click.echo(f"{path.stem}\t{KeyPair.load_pem(path).address}")


@main.group()
def certifier():
    """Attribute certifier operations (direct registry writes)."""


@certifier.command("set-attrs")
@click.argument("address")
@click.argument("attrs", nargs=-1, required=True)
@pass_home
def certifier_set_attrs(home: Home, address, attrs):
    """Register ADDRESS with the given attributes (names or numbers)."""
    try:
        dictionary = home.dictionary()
        values = []
        for attr in attrs:
            if attr.isdigit():
                values.append(int(attr))
            else:
                resolved = dictionary.resolve(attr)
                if resolved is None:
                    _fail(SliceGateError(f"unknown attribute name {attr!r}"))
                values.append(resolved.value)
        receipt = home.registry().set_user_info(
            home.service_key("certifier").address, address, values
        )
    except SliceGateError as exc:
        _fail(exc)
    click.echo(f"registered {address} with {values} (gas {receipt.gas_used})")


@main.group()
def owner():
    """Data-owner operations."""


@owner.command("send")
@click.option("--identity", "identity_name", required=True, help="Sending identity name.")
@click.option("--file", "slices_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="JSON list of {plaintext|plaintext_b64, policy}.")
@pass_home
def owner_send(home: Home, identity_name, slices_file):
    """Encrypt and publish the slices; prints the fresh message id."""
    try:
        spec = json.loads(Path(slices_file).read_text("utf-8"))
        slices = []
        for item in spec:
            if "plaintext_b64" in item:
                plaintext = base64.b64decode(item["plaintext_b64"])
            else:
                plaintext = item["plaintext"].encode("utf-8")
            slices.append({"plaintext": b64(plaintext), "policy": item["policy"]})
        response = call_service(
            home.endpoint("sdm"),
            home.service_key("sdm").public_key,
            home.identity(identity_name),
            "cipher",
            {"body": {"slices": slices}},
        )
    except (SliceGateError, OSError, KeyError, ValueError) as exc:
        _fail(exc)
    click.echo(response["message_id"])


@main.group()
def reader():
    """Reader operations."""


@reader.command("key")
@click.argument("message_id")
@click.option("--identity", "identity_name", required=True)
@click.option("--out", "out_file", default="sk.bin", show_default=True,
              help="Where to write the issued decryption key.")
@pass_home
def reader_key(home: Home, message_id, identity_name, out_file):
    """Request a decryption key for MESSAGE_ID; prints the locator."""
    try:
        response = call_service(
            home.endpoint("skm"),
            home.service_key("skm").public_key,
            home.identity(identity_name),
            "key",
            {"body": {"message_id": message_id}},
        )
    except (SliceGateError, OSError) as exc:
        _fail(exc)
    Path(out_file).write_bytes(unb64(response["sk"]))
    click.echo(response["locator"])


@reader.command("access")
@click.argument("message_id")
@click.option("--identity", "identity_name", required=True)
@click.option("--key", "key_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default="recovered", show_default=True)
@pass_home
def reader_access(home: Home, message_id, identity_name, key_file, out_dir):
    """Recover the satisfied slices and print per-slice integrity verdicts."""
    try:
        sk_bytes = Path(key_file).read_bytes()
        response = call_service(
            home.endpoint("skm"),
            home.service_key("skm").public_key,
            home.identity(identity_name),
            "access",
            {"body": {"message_id": message_id, "sk": b64(sk_bytes)}},
        )
    except (SliceGateError, OSError) as exc:
        _fail(exc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # Reader-side integrity: fetch the stored file and compare salted hashes.
    try:
        words = home.registry().get_ipfs_info(int(message_id))
        stored = MessageFile.from_bytes(ContentStore(home.cas_dir).get(words.to_locator()))
    except SliceGateError as exc:
        _fail(exc)
    failures = 0
    for item in response["slices"]:
        slice_id = int(item["slice_id"])
        plaintext = unb64(item["plaintext"])
        salt = unb64(item["salt"])
        ok = verify_integrity(plaintext, salt, stored.find_slice(slice_id))
        failures += 0 if ok else 1
        path = out / f"slice_{slice_id}.bin"
        path.write_bytes(plaintext)
        click.echo(f"slice {slice_id}: integrity {'pass' if ok else 'FAIL'} -> {path}")
    if failures:
        raise click.ClickException(f"{failures} slice(s) failed the integrity check")


@main.group()
def ledger():
    """Registry inspection."""


@ledger.command("inspect")
@click.option("--figures", "figures_dir", default=None, type=click.Path(file_okay=False),
              help="Also render the gas/cost figure into this directory.")
@pass_home
def ledger_inspect(home: Home, figures_dir):
    """Dump readers, message bindings, and receipts with EUR costs."""
    try:
        registry = home.registry()
        snapshot = registry.snapshot()
        rate = float(home.config().get("eth_eur_rate", DEFAULT_ETH_EUR_RATE))
    except SliceGateError as exc:
        _fail(exc)
    click.echo("readers:")
    for address, attrs in sorted(snapshot["readers"].items()):
        click.echo(f"  {address}: {attrs}")
    click.echo("messages:")
    for message_id, words in sorted(snapshot["messages"].items()):
        click.echo(f"  {message_id}: {words['word1']}{words['word2'][:4]}")
    click.echo("receipts:")
    total = 0.0
    for receipt in snapshot["receipts"]:
        eur = cost_eur(receipt["gas_used"], receipt["gas_price"], rate)
        total += eur
        click.echo(
            f"  {receipt['op']}: gasUsed={receipt['gas_used']} "
            f"gasPrice={receipt['gas_price']} cost={eur:.5f} EUR"
        )
    click.echo(f"total: {total:.5f} EUR @ {rate} EUR/ETH")
    if figures_dir:
        from .report import render_gas_costs

        Path(figures_dir).mkdir(parents=True, exist_ok=True)
        out = render_gas_costs(registry.receipts, Path(figures_dir) / "gas_costs.png", rate)
        click.echo(f"figure: {out}")


@main.group()
def scenario():
    """End-to-end scenario harness."""


@scenario.command("run")
@click.option("--builtin", "builtin_name", default=None, help="Run a shipped scenario (e.g. drone).")
@click.option("--file", "scenario_file", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default="scenario-out", show_default=True,
              help="Directory for report.csv and the rendered figures.")
@click.option("--seed", default=None, type=int, help="Seed for reproducible runs.")
@click.option("--restart-between-steps", is_flag=True,
              help="Rebuild the services before every protocol step.")
@pass_home
def scenario_run(home: Home, builtin_name, scenario_file, out_dir, seed, restart_between_steps):
    """Replay a scenario against a freshly built stack and write its report."""
    if bool(builtin_name) == bool(scenario_file):
        _fail(SliceGateError("choose exactly one of --builtin or --file"))
    try:
        spec = builtin_scenario(builtin_name) if builtin_name else Scenario.from_file(scenario_file)
        report = run_scenario(spec, seed=seed, restart_between_steps=restart_between_steps)
    except SliceGateError as exc:
        _fail(exc)
    from .report import write_scenario_outputs

    paths = write_scenario_outputs(report, out_dir)
    allowed = sum(1 for row in report.rows if row.observed)
    click.echo(f"scenario: {report.scenario}")
    click.echo(f"rows: {len(report.rows)} allowed: {allowed} "
               f"mismatches: {len(report.mismatches())} "
               f"integrity failures: {len(report.integrity_failures())}")
    for label, message_id in report.message_ids.items():
        click.echo(f"  {label}: message_id {message_id}")
    for kind, path in paths.items():
        click.echo(f"  {kind}: {path}")
    click.echo(f"duration: {report.duration_seconds:.2f}s")
    if report.mismatches() or report.integrity_failures():
        raise click.ClickException("scenario outcome diverged from the policy expectations")


if __name__ == "__main__":
    main()
