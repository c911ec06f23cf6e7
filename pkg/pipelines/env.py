import os

PBG_NUM_THREADS = int(os.environ.get("PBG_NUM_THREADS", os.cpu_count() or 1))
PBG_OUTPUT_ROOT = os.environ.get("PBG_OUTPUT_ROOT", "runs")
WANDB_API_KEY = os.environ.get("WANDB_API_KEY")
