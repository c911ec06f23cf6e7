from typing import Optional

import wandb
from loguru import logger

import pbgcavity
from pipelines import env


def init_wandb(config, enabled: bool):
    """Start a Weights & Biases run for this command, or return None when tracking is off."""
    try:
        if not enabled:
            return None
        if env.WANDB_API_KEY:
            wandb.login(key=env.WANDB_API_KEY)

        run_name = f"{config.command.value}-{config.run.seed}-{pbgcavity.__version__}"
        run = wandb.init(
            name=run_name,
            project=pbgcavity.PROJECT_NAME,
            config=config.echo(),
            dir=str(config.output_dir),
            reinit=True,
        )
        logger.success(f"Started wandb run for project '{pbgcavity.PROJECT_NAME}'")
        return run
    except Exception as e:
        logger.error(f"Error in init_wandb: {e}")
        raise


def log_metrics(run, metrics: dict, step: Optional[int] = None):
    if run is None:
        return
    try:
        run.log(metrics, step=step)
    except Exception as e:
        logger.warning(f"Error logging to wandb: {e}")


def finish(run):
    if run is None:
        return
    try:
        run.finish()
    except Exception as e:
        logger.warning(f"Error closing wandb run: {e}")
