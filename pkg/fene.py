import os
import sys
import logging
import argparse
import importlib
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv

load_dotenv()

from commands.base import Command, CommandOutcome
from errors import EXIT_ACCEPTANCE, EXIT_IO, EXIT_OK, ConfigError, FeneError
from experiment_config import ExperimentConfig, config_echo, load_config, with_overrides, write_effective_config
from reports import emit_report
import database

# -------------------------------------------------------------------------
# Logging
# -------------------------------------------------------------------------
logging.basicConfig(
    level=os.getenv("FENE_LOG_LEVEL", "INFO").upper(),
    format="%(levelname)s:%(name)s:%(message)s",
)
log = logging.getLogger("fene")


INITIAL_EXTENSIONS = [
    "commands.verify_constants",
    "commands.verify_identities",
    "commands.run",
    "commands.decay_study",
    "commands.spectrum",
    "commands.stability_sweep",
]


# -------------------------------------------------------------------------
# Command registry
# -------------------------------------------------------------------------
class CommandRegistry:
    """Subcommands by name; extensions add themselves through setup(registry)."""

    def __init__(self):
        self.commands: Dict[str, Command] = {}

    def add_command(self, command: Command) -> None:
        if command.name in self.commands:
            raise ValueError(f"command {command.name!r} registered twice")
        self.commands[command.name] = command

    def get(self, name: str) -> Command:
        try:
            return self.commands[name]
        except KeyError:
            raise ConfigError(f"unknown command {name!r}; expected one of {sorted(self.commands)}") from None

    def load_extensions(self, extensions: List[str]) -> "CommandRegistry":
        for ext in extensions:
            try:
                importlib.import_module(ext).setup(self)
                log.debug("Loaded extension %s", ext)
            except Exception as exc:
                log.exception("Failed to load extension %s: %s", ext, exc)
        return self


_REGISTRY: Optional[CommandRegistry] = None


def get_registry() -> CommandRegistry:
    global _REGISTRY
    if _REGISTRY is None:
        _REGISTRY = CommandRegistry().load_extensions(INITIAL_EXTENSIONS)
    return _REGISTRY


# -------------------------------------------------------------------------
# Dispatch
# -------------------------------------------------------------------------
def _db_path(config: ExperimentConfig) -> Path:
    env = os.getenv("FENE_DB_PATH")
    return Path(env) if env else config.out_dir / "fene_runs.db"


def _archive(command: str, config: ExperimentConfig, outcome: CommandOutcome, status: str) -> None:
    runs = outcome.runs or ({config.initial.seed: outcome.records} if outcome.records else {})
    for seed, records in runs.items():
        database.archive_run(command, seed, config_echo(config), records, status, path=_db_path(config))


def dispatch(command: str, config: ExperimentConfig) -> int:
    """Run one subcommand and write its report; returns the process exit code."""
    try:
        handler = get_registry().get(command)
        write_effective_config(config)
        outcome = handler.run(config)
        artifacts = emit_report(
            command,
            outcome.records,
            config.out_dir,
            config.outputs.formats,
            checks=outcome.checks,
            fits=outcome.fits,
            extra=outcome.extra,
            tables=outcome.tables,
        )
        if "sqlite" in config.outputs.formats:
            _archive(command, config, outcome, artifacts.status)
    except FeneError as exc:
        log.error("[%s] %s: %s", command, type(exc).__name__, exc)
        return exc.exit_code
    except Exception:
        log.exception("[%s] unexpected failure", command)
        return EXIT_IO

    if artifacts.status != "pass":
        failed = [c["name"] for c in artifacts.summary["checks"] if c["required"] and not c["passed"]]
        log.error("[%s] acceptance checks failed: %s", command, ", ".join(failed))
        return EXIT_ACCEPTANCE
    return EXIT_OK


# -------------------------------------------------------------------------
# Main entrypoint
# -------------------------------------------------------------------------
def build_parser(registry: CommandRegistry) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fene",
        description="Elastic FENE dumbbell micro-macro simulator and verification suite.",
    )
    parser.add_argument("command", choices=sorted(registry.commands))
    parser.add_argument("--config", required=True, type=Path, help="experiment KEY=VALUE document")
    parser.add_argument("--seed", type=int, default=None, help="override initial.seed")
    parser.add_argument("--out", default=None, help="override outputs.directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    registry = get_registry()
    args = build_parser(registry).parse_args(argv)
    try:
        config = with_overrides(load_config(args.config), seed=args.seed, out=args.out)
    except FeneError as exc:
        log.error("[config] %s", exc)
        return exc.exit_code

    log.info("Running %s with k=%s, M=%d, P=%d", args.command, config.model.k,
             config.discretization.M, config.discretization.P)
    return dispatch(args.command, config)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        log.info("Shutting down")
        sys.exit(EXIT_IO)
