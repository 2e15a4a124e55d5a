import os

OUTPUT_DIR = os.environ.get("PHUNMIX_OUTPUT_DIR", "results")
DUMP_DIR = os.environ.get("PHUNMIX_DUMP_DIR", os.path.join(OUTPUT_DIR, "failures"))

DEFAULT_TRIALS = 1000
DEFAULT_SOLVERS = ("mwf", "nmwf", "phunalt", "phunalt*5", "phunlift", "phunlift+")

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3

SEPARATION_COLUMNS = ("solver", "m", "k", "mean_sdr_db", "source_sdrs_db", "wall_time_ms")

# Rows buffered in memory before the writer flushes them to disk.
WRITE_BATCH_ROWS = 500
