import sys
import time
import traceback
from typing import Optional

from loguru import logger

from pbgcavity.errors import ConfigError, PbgCavityError
from pipelines import tracking
from pipelines.commands import COMMANDS
from pipelines.config import RunConfig, check_config, get_config
from pipelines.manifest import RunManifest

EXIT_OK = 0
EXIT_IO = 5
EXIT_UNEXPECTED = 3


def run(config: RunConfig, wandb_on: bool = False, events_sink: Optional[int] = None) -> int:
    """Execute the configured command, write the manifest and return the process exit code.

    `events_sink` is closed before the manifest is written so the event log is listed
    with its final hash.
    """
    manifest = RunManifest(config=config.echo(), output_dir=config.output_dir)
    command = COMMANDS[config.command.value]
    started = time.monotonic()
    code = EXIT_OK
    wandb_run = None

    try:
        wandb_run = tracking.init_wandb(config, wandb_on)
        logger.info(f"Running {config.command.value} into {config.output_dir}")
        command(config, manifest, wandb_run)
        logger.success(f"{config.command.value} finished in {time.monotonic() - started:.1f} s")
    except PbgCavityError as e:
        logger.error(e.describe())
        manifest.status = "failed"
        manifest.results["error"] = {"module": e.module, "message": e.message, "hint": e.hint}
        code = e.exit_code
    except OSError as e:
        logger.error(f"io: {e}")
        manifest.status = "failed"
        manifest.results["error"] = {"module": "io", "message": str(e)}
        code = EXIT_IO
    except Exception as e:
        logger.error(f"Unexpected failure: {e}\n{traceback.format_exc()}")
        manifest.status = "failed"
        manifest.results["error"] = {"module": "unknown", "message": str(e)}
        code = EXIT_UNEXPECTED
    finally:
        tracking.finish(wandb_run)

    manifest.timings["total"] = time.monotonic() - started
    if events_sink is not None:
        logger.remove(events_sink)
        for path in sorted(config.output_dir.glob("events*.log")):
            manifest.add_file(path)
    try:
        manifest.write()
    except OSError as e:
        logger.error(f"io: cannot write the manifest: {e}")
        return code or EXIT_IO
    return code


def main(argv: Optional[list] = None) -> int:
    try:
        args, config = get_config(argv)
    except ConfigError as e:
        for error in e.errors:
            logger.error(f"config: {error}")
        return e.exit_code
    try:
        events_sink = check_config(args, config)
    except OSError as e:
        logger.error(f"io: cannot prepare {config.output_dir}: {e}")
        return EXIT_IO
    return run(config, wandb_on=args.wandb_on, events_sink=events_sink)


if __name__ == "__main__":
    sys.exit(main())
