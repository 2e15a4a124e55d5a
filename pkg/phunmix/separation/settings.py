SAMPLE_RATE = 16_000
WINDOW_LEN = 1024
HOP = 512
WINDOW = "hann"
COLA_TOL = 1e-10
# istft leaves samples whose squared-window sum is below this fraction of its peak at zero.
ENVELOPE_RTOL = 1e-3

# A source is skipped in a bin when it is this far below its own spectrogram peak.
THRESHOLD_DB = -40.0
GAIN_RANGE_DB = (-5.0, 5.0)
DELAY_RANGE = (0, 50)
MIX_RANK_RTOL = 1e-6
MAX_MIX_REDRAWS = 1000

SDR_CAP_DB = 100.0

SYNTHETIC_DURATION_S = 1.0
SYNTHETIC_PEAK = 0.5
CHIRP_FREQ_RANGE_HZ = (80.0, 6000.0)
# Chirp power relative to the unit-power noise floor.
CHIRP_TO_NOISE_DB = -10.0
# Pole of the first-order filter that colors the noise floor.
NOISE_POLE_RANGE = (-0.5, 0.5)
ENVELOPE_DEPTH = 0.2
ENVELOPE_RATE_HZ = (0.5, 3.0)

SPEC_MAGIC = b"PHUNSPEC"
WAV_SUBTYPES = ("PCM_16", "FLOAT")
