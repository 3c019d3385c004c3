"""Default tunables for every stage of the pipeline.

Values here are the defaults used when a RunConfig file or CLI flag does not
override them.
"""

# ===================== GRID =====================
GRID_POINTS = 100  # samples on I = [0, 1]

# ===================== ALIGNMENT =====================
DP_MAX_STEP = 7  # lattice moves (a, b) with 1 <= a, b <= DP_MAX_STEP, gcd(a, b) = 1
ALIGN_TOL = 1e-4  # stop when ||q_bar - q_bar*||^2 <= tol
ALIGN_MAX_ITER = 20
WARP_MIN_INCREMENT = 1e-12  # flat DP steps are clamped to this before inversion

# ===================== PEAK PERSISTENCE =====================
LAMBDA_MAX = 0.2
LAMBDA_STEP = 0.005
TAU = 0.03  # minimum normalized curvature of a significant peak
THETA = 0.28  # minimum relative persistence p_k / p_k0
TRACK_RADIUS = 0.05  # max peak displacement between adjacent lambdas, fraction of I

# ===================== SHAPE FIT =====================
RHO = 1e-8  # smoothness weight
BASIS_SIZE = 10  # Fourier coefficients of the warping
MAX_EVALS = 5000
FTOL = 1e-12
GTOL = 1e-8
RESTARTS = 3
RESTART_JITTER = 0.05
NORM_CLAMP_MARGIN = 1e-3  # ||v|| is kept below pi - margin
MIN_HEIGHT_GAP = 1e-9  # smallest valley/peak separation accepted by the exp-gap map

# ===================== BOOTSTRAP =====================
BOOTSTRAP_B = 100
ALPHA = 0.05
MAX_DROP_FRACTION = 0.2

# ===================== SIMULATION NOISE =====================
SIGMA_A = 0.05
SIGMA_EPS_RATIO = 0.05  # sigma_eps = ratio * range(g)
EPS_MODES = 6
WARP_STRENGTH = 0.3
WARP_MODES = 4
SAMPLES = 100
KAPPA_GRID = (0.0, 0.01, 0.1, 1.0)

# ===================== RUNTIME =====================
SEED = 7
N_JOBS = 1
FLOAT_FORMAT = "%.17g"  # 17 significant digits keeps CSV round trips exact
