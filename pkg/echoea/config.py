"""Configuration - single source of truth for enums, defaults and magic values.

Hyper-parameter defaults follow the reference DBP15K setup (d_e=300, lr=0.001,
margin 3, k=5 negatives, refresh every 10 epochs, weights 0.1/0.5/0.4).
Import from here instead of hardcoding values elsewhere.
"""
import os
from enum import Enum
from pathlib import Path

# Load .env if available
try:
    from dotenv import load_dotenv
    load_dotenv(Path(__file__).parent / ".env")
except ImportError:
    pass


# ═══════════════════════════════════════════════════════════════════════════════
# ENUMS
# ═══════════════════════════════════════════════════════════════════════════════

class Activation(Enum):
    """Nonlinearity applied after each GCN layer."""
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"


class RunMode(Enum):
    """Encoder mode. Dropout is active only in TRAIN."""
    TRAIN = "train"
    INFER = "infer"


class EvalDirection(Enum):
    """Which KG side is used as the ranking source."""
    LEFT_TO_RIGHT = "left_to_right"
    RIGHT_TO_LEFT = "right_to_left"
    AVERAGED = "averaged"


class AlignMode(Enum):
    """Final alignment used for reporting."""
    LOCAL = "local"
    GLOBAL = "global"


class Variant(Enum):
    """Model variants: basic, global, semi-supervised, complete and ablations."""
    FULL = "full"
    BASIC = "b"
    GLOBAL = "g"
    SEMI = "s"
    WO_PAN = "wo_pan"
    WO_EN = "wo_en"
    WO_CAN = "wo_can"


class Stage(Enum):
    """Pipeline stages reported through the stage trace."""
    PAN = "pan"
    EN = "en"
    CAN = "can"
    ABGS = "abgs"
    LOCAL_ALIGN = "local_align"
    GLOBAL_ALIGN = "global_align"


class EdgeDirection(Enum):
    """Role of the neighbor in a labelled edge."""
    HEAD_TO_TAIL = "head_to_tail"
    TAIL_TO_HEAD = "tail_to_head"


# Variant -> (use_pan, use_en, use_can, use_abgs, align_mode)
VARIANT_FLAGS = {
    Variant.FULL: (True, True, True, True, AlignMode.GLOBAL),
    Variant.BASIC: (True, True, True, False, AlignMode.LOCAL),
    Variant.GLOBAL: (True, True, True, False, AlignMode.GLOBAL),
    Variant.SEMI: (True, True, True, True, AlignMode.LOCAL),
    Variant.WO_PAN: (False, True, True, False, AlignMode.LOCAL),
    Variant.WO_EN: (True, False, True, False, AlignMode.LOCAL),
    Variant.WO_CAN: (True, True, False, False, AlignMode.LOCAL),
}


# ═══════════════════════════════════════════════════════════════════════════════
# ENCODER DEFAULTS
# ═══════════════════════════════════════════════════════════════════════════════

DEFAULT_ENTITY_DIM = 300
DEFAULT_DROPOUT = 0.05
DEFAULT_PAN_GCN_LAYERS = 1
DEFAULT_PAN_GAT_LAYERS = 2
DEFAULT_ACTIVATION = Activation.TANH
LEAKY_RELU_SLOPE = 0.2
GCN_INIT_NOISE_STD = 0.01


# ═══════════════════════════════════════════════════════════════════════════════
# TRAINING DEFAULTS
# ═══════════════════════════════════════════════════════════════════════════════

DEFAULT_LEARNING_RATE = 0.001
DEFAULT_MARGIN = 3.0
DEFAULT_NEG_PER_POS = 5
DEFAULT_REFRESH_PERIOD = 10
DEFAULT_MAX_EPOCHS = 100
DEFAULT_RNG_SEED = 0
DEFAULT_TRAIN_FRACTION = 0.3
DEFAULT_RUNS = 1

# Row block size for pairwise L1 distances
DISTANCE_CHUNK_ROWS = 1024


# ═══════════════════════════════════════════════════════════════════════════════
# SIMILARITY / BOOTSTRAPPING DEFAULTS
# ═══════════════════════════════════════════════════════════════════════════════

DEFAULT_ALPHA_REL = 0.1
DEFAULT_ALPHA_ATTR = 0.5
DEFAULT_ALPHA_VALUE = 0.4
DEFAULT_ATTR_MATCH_THRESHOLD = 0.85
DEGENERATE_NORMALIZED_VALUE = 0.5
HITS_AT = (1, 10)


# ═══════════════════════════════════════════════════════════════════════════════
# FILES AND ENVIRONMENT
# ═══════════════════════════════════════════════════════════════════════════════

TRIPLES_FILES = ("triples_1", "triples_2")
ENT_IDS_FILES = ("ent_ids_1", "ent_ids_2")
REL_IDS_FILES = ("rel_ids_1", "rel_ids_2")
ATTR_FILES = ("attrs_1", "attrs_2")
EMB_FILES = ("emb_1", "emb_2")
REF_FILE = "ref_ent_ids"

HISTORY_CSV = "history.csv"
EVAL_CSV = "eval.csv"
EVAL_SUMMARY_CSV = "eval_summary.csv"
BOOTSTRAP_CSV = "bootstrap_rounds.csv"
STAGE_TRACE_CSV = "stage_trace.csv"
ATTR_REPORT_CSV = "attribute_alignment.csv"
ALIGNMENT_CSV = "alignment.csv"
HISTORY_PLOT = "history.png"
BOOTSTRAP_PLOT = "bootstrap_rounds.png"
CHECKPOINT_DB = "checkpoints.db"
CSV_FLOAT_FORMAT = "%.6f"

CHECKPOINT_SCHEMA_VERSION = "echoea-checkpoint/1"
FINAL_EMBEDDING_GROUPS = ("final.kg1", "final.kg2")

LOG_LEVEL = os.environ.get("ECHOEA_LOG_LEVEL", "INFO").upper()
DATA_DIR = Path(os.environ.get("ECHOEA_DATA_DIR", "data"))
OUTPUT_DIR = Path(os.environ.get("ECHOEA_OUTPUT_DIR", "runs"))

# CLI exit codes
EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
