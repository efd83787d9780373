import os

# Root project directory
BASE_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "../../"))

# Log path (overridable so runs and tests can redirect it)
LOG_DIR = os.environ.get("ANOMTOUR_LOG_DIR", os.path.join(BASE_DIR, "logs"))

# Reference data
REFERENCE_DIR = os.path.join(BASE_DIR, "data/reference")
LIVER_NORMS_FILE = os.path.join(REFERENCE_DIR, "liver_norms.json")

# Run name used when the library is called without an input file
DEFAULT_RUN_NAME = "anomtour"
DEFAULT_SEED = 0

# Reference ellipse
ELLIPSE_POINTS = 128
DEFAULT_PROBABILITY = 0.95

# Guided tour optimizer
GUIDED_N_CANDIDATES = 50
GUIDED_INITIAL_RADIUS = 0.5
GUIDED_COOLING = 0.9
GUIDED_MIN_RADIUS = 0.01
GUIDED_MAX_ROUNDS = 200
FRAME_ANGLE_STEP = 0.05  # radians between emitted frames

# Grand tour
GRAND_TARGETS = 5
GRAND_STEPS_PER_LEG = 20

# Robust estimation
MAD_CONSISTENCY = 1.4826
MCD_SUPPORT_FRACTION = 0.75
MCD_STARTS = 20
MCD_MAX_STEPS = 100

# Directional clustering
KMEANS_STARTS = 10
KMEANS_MAX_ITER = 300
K_RANGE = (2, 8)

# Rendering
RENDER_WIDTH = 480
RENDER_HEIGHT = 480
RENDER_POINT_RADIUS = 3.0
RENDER_DPI = 100
CLUSTER_COLORS = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a",
    "#66a61e", "#e6ab02", "#a6761d", "#666666",
)
POINT_COLOR = "#333333"
OUTLIER_COLOR = "#d62728"
OVERLAY_COLOR = "#bbbbbb"
ELLIPSE_COLOR = "#1f77b4"

# Thread pools (1 keeps everything on the calling thread)
INDEX_NUM_THREADS = 1
MCD_NUM_THREADS = 1
RENDER_NUM_THREADS = 1

# Output file names inside a tour directory
TRACE_FILENAME = "trace.csv"
ELLIPSE_FILENAME = "ellipse.csv"
FRAMES_DIRNAME = "frames"
