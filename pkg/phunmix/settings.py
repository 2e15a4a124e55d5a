EXACT_THRESHOLD = 1e-8
RANK_RTOL = 1e-12
MAGNITUDE_RTOL = 1e-10
GROUND_TRUTH_RTOL = 1e-12
MODEL_RTOL = 1e-10

ALT_TOL = 1e-3
ALT_MAX_ITER = 10_000
MULTISTART_RUNS = 5

BCD_NU = 0.0
BCD_TOL = 1e-3
BCD_MAX_ITER = 100_000
# BCD thresholds below are fractions of trace(C), the objective at X = I.
BCD_OBJECTIVE_FLOOR = 1e-15
BCD_STALL_RTOL = 1e-15
# Once the objective is this close to an exact fit, the relative-decrease test tightens to BCD_EXACT_FIT_TOL.
BCD_EXACT_FIT_RTOL = 1e-6
BCD_EXACT_FIT_TOL = 1e-6
PSD_EIGEN_FLOOR = 1e-9
HERMITIAN_ATOL = 1e-12

GRID_POINTS = 96
GRID_MIN_POINTS = 4
GRID_BUDGET = 10_000_000
GRID_CHUNK = 1 << 16

# Wiener solvers need sigma_n > 0; noiseless trials fall back to this fraction of the per-channel observation rms.
NOISELESS_WIENER_SIGMA_RTOL = 1e-6
NOISELESS_WIENER_SIGMA_FLOOR = 1e-12

SIGMA_RANGE = (0.0, 2.0)
MAX_SEED = (1 << 64) - 1
