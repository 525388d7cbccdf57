"""Configuration constants for the interval-partition diffusion lab."""

# Retry configuration
MAX_RETRIES = 4
HORIZON_GROWTH = 2.0  # Horizon multiplier on each extend-horizon retry

# Default model parameters
DEFAULT_ALPHA = 0.5
DEFAULT_EPS = 1e-3  # Small-jump truncation of the scaffolding
DEFAULT_DT_FRACTION = 1e-3  # Spindle grid step as a fraction of its lifetime
SPINDLE_GRID_POINTS = 64  # Intervals per unit spindle when no absolute dt is given
DEFAULT_LEVELS = (0.25, 0.5, 1.0)
DEFAULT_HORIZON = 50.0
DEFAULT_REPLICATES = 200
DEFAULT_SEED = 20240101
DEFAULT_OUT = "out"

# Grid limits
MAX_GRID_POINTS = 1_000_000
MAX_EULER_STEPS = 10_000_000
WALKER_CHUNK = 4096  # Jumps drawn per vectorized walker step
MAX_WALKER_EVENTS = 50_000_000

# Local time at zero
DEFAULT_Y_CALIB_FRACTION = 0.5  # y_calib as a fraction of the lowest positive level
MIN_RESOLVABLE_RATIO = 20.0  # y_calib must exceed this many eps

# Bessel side
ROUND_TRIP_END_ZONE = 0.01
ROUND_TRIP_TOLERANCE = 0.05
MIN_SAMPLES_PER_BIN = 5

# Statistical test policy
SE_BAND = 4.0
KS_ALPHA = 0.01
KS_MIN_SIZE = 50
HILL_FRACTION = 0.01
HILL_SWEEP = (0.005, 0.01, 0.02)
HILL_MIN_TAIL = 20
HILL_BOOTSTRAP = 200
RATE_RATIO_TOLERANCE = 0.10
SLOPE_TOLERANCE = 0.05

# Output
FLOAT_DIGITS = 17
TOP_K_BLOCKS = 5

# Logging
VERBOSE = True
