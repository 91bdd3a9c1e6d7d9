# Collection of all constants

# Flow model
NODE_KINDS = ("inject", "work", "change", "link-in", "link-out", "offload-link", "sink")
OFFLOAD_LINK_SUFFIX = "-olink"
FLOW_FIELDS = ("tabs", "nodes", "wires")
TAB_FIELDS = ("id", "name", "offloadable")
NODE_FIELDS = ("id", "tab", "kind", "config")
WIRE_FIELDS = ("from", "to")

# Engine
DEFAULT_MAX_WORKERS = 4
DEFAULT_DRAIN_TIMEOUT_S = 600.0
JOB_RECORD_COLUMNS = ["job_id", "location", "duration_s", "success", "started_at", "finished_at"]

# Metrics
DEFAULT_SAMPLE_PERIOD_MS = 1000
MIN_SAMPLE_PERIOD_MS = 10
DEFAULT_SMOOTHING_ALPHA = 1.0
TEMP_BAND_C = (-20.0, 120.0)
DEFAULT_THERMAL_PATH = "/sys/class/thermal/thermal_zone0/temp"
DEFAULT_FREQ_PATH = "/sys/devices/system/cpu/cpu0/cpufreq/scaling_cur_freq"
FALLBACK_FREQ_MHZ = 1.0
REPLAY_COLUMNS = ["t_ms", "mem_util", "cpu_util", "cpu_temp_c", "jobs_in_flight", "cpu_freq_mhz"]

# Policy thresholds accepted by the grammar
POLICY_KINDS = ("jobs", "cpu", "mem", "temp", "all-of", "any-of", "always-local", "always-remote")
METRIC_POLICY_KINDS = ("jobs", "cpu", "mem", "temp")
COMBINATOR_KINDS = ("all-of", "any-of")
CONSTANT_POLICY_KINDS = ("always-local", "always-remote")
DEFAULT_STRATEGIES = ["jobs:4", "cpu:0.75", "mem:0.75", "temp:75"]

# Remote endpoint
DEFAULT_CONNECT_TIMEOUT_MS = 2000
DEFAULT_REQUEST_TIMEOUT_MS = 120000
FALLBACK_MODES = ("local", "fail")
DEFAULT_SERVE_HOST = "127.0.0.1"
DEFAULT_SERVE_PORT = 1880
UNKNOWN_FLOW_DETAIL = "unknown flow"

# Simulated gateway (Raspberry Pi 3 class, passively cooled)
GATEWAY_CORES = 4
GATEWAY_FREQ_LEVELS_MHZ = [1200, 900, 600]
GATEWAY_T_AMBIENT_C = 45.0
GATEWAY_T_LIMIT_C = 80.0
GATEWAY_HYSTERESIS_C = 3.0
# Fitted by grid search against the event-driven model to the characterization
# anchors: 23-26 s jobs, 80 C limit reached near 170 s, about 29 s once throttled.
GATEWAY_HEAT_RATE = 0.085
GATEWAY_COOL_RATE = 0.0065
GATEWAY_POWER_EXPONENT = 3.0
GATEWAY_CONTENTION = 0.1
GATEWAY_BASE_JOB_WORK = 24.5
GATEWAY_DURATION_JITTER_S = 1.5
GATEWAY_MEM_BASE = 0.35
GATEWAY_MEM_PER_JOB = 0.08

# Simulation
SIM_DT_S = 0.1
SIM_MAX_TIME_S = 1200.0
REMOTE_SERVICE_TIME_S = 12.0
REMOTE_RTT_S = 0.3
# simulated jobs carry their sampled work under this payload key
SIM_WORK_KEY = "sim_work"
SIM_REMOTE_URL = "sim://remote"
TIMESERIES_COLUMNS = ["t_s", "temp_c", "freq_mhz", "cpu_util", "jobs_in_flight"]

# Experiments
CHARACTERIZE_PARALLELISM = 4
CHARACTERIZE_TOTAL_JOBS = 80
COMPARE_INTER_ARRIVAL_S = 5.0
COMPARE_TOTAL_JOBS = 120
COMPARE_INITIAL_TEMP_C = 70.0
DEFAULT_SEED = 7
PRE_THROTTLE_BAND_S = (23.0, 26.0)

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_CHECKS_FAILED = 3
