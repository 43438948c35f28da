"""Default hyperparameters and process-level knobs."""

import os

KNN_K = 80
E_TAU_GRID = (0.6, 0.65, 0.7, 0.75)
S_MAX = 300
THRESHOLD_STEP = 0.05
PROPOSAL_ITERATIONS = 3
MAX_PROPOSAL_SIZE = 2 * S_MAX

HIDDEN_DIMS = (256, 64)
LEARNING_RATE = 0.01
MOMENTUM = 0.9

# Wider proposal grid used by the training recipe on small synthetic sets,
# where the default grid alone cannot reach well-separated classes.
WIDE_S_MAX_GRID = (40, 60, 80, 100, 300)
WIDE_E_TAU_GRID = (0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75)

MIN_PROPOSAL_SIZE = 2
DET_EPOCHS = 10
SEG_EPOCHS = 20
DET_ROTATIONS = 8
SEG_ROTATIONS = 4

IOP_LOW = 0.3
IOP_HIGH = 0.7
SEG_KEEP_THRESHOLD = 0.5
NUM_HYPOTHESES = 3


def worker_count():
    """Worker cap from ``GRAPHCLUS_THREADS``, else the CPU count."""
    raw = os.environ.get("GRAPHCLUS_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"GRAPHCLUS_THREADS must be an integer, got {raw!r}")
        if value < 1:
            raise ValueError("GRAPHCLUS_THREADS must be at least 1")
        return value
    return os.cpu_count() or 1
