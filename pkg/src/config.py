from dotenv import load_dotenv
from logging import getLevelName
from os import getenv

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
LOG_LEVEL = getLevelName(getenv("ATTRIB_ENCODE_LOG_LEVEL", "INFO").upper())

WORKERS = max(1, int(getenv("ATTRIB_ENCODE_WORKERS", "1")))
CACHE_SIZE = int(getenv("ATTRIB_ENCODE_CACHE_SIZE", "4096"))

FORMAT_VERSION = 1

DEFAULT_WINDOW_LEN = 10
ATTENTION_WINDOW_LEN = 11
DEFAULT_IG_STEPS = 32
DEFAULT_SPLIT_LEN = 8

DEFAULT_TR_S = 1.5
DEFAULT_FOLDS = 5
DEFAULT_DELAYS = [0, 1, 2, 3, 4, 5, 6]
DEFAULT_ALPHAS = [10.0**e for e in range(-3, 7)]
DEFAULT_PCA_COMPONENTS = 20

CEILING_EPSILON = 0.05
DEFAULT_Q = 0.05
WILCOXON_EXACT_MAX_N = 25
WILCOXON_MIN_N = 5

UNKNOWN_TOKEN = "<unk>"
SUBWORD_PREFIX = "##"
OTHER_POS_TAG = "other"
