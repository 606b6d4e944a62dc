# Default caps for the brute-force engines. See `scottrank.configs.Caps`.

DEFAULT_CAP_UNIVERSE = 8
DEFAULT_CAP_TUPLE = 10 ** 6
DEFAULT_CAP_BUILD = 4096
DEFAULT_ZK = 64
DEFAULT_MARGIN = 2

REPORT_SCHEMA = 1

CAP_ENV_VARS = {
    "universe": "SCOTTRANK_CAP_UNIVERSE",
    "tuple_space": "SCOTTRANK_CAP_TUPLE",
    "build": "SCOTTRANK_CAP_BUILD",
    "zk": "SCOTTRANK_ZK",
    "margin": "SCOTTRANK_MARGIN",
}
