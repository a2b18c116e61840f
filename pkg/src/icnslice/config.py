"""Named defaults shared across the emulator.

Everything here is a tuning knob, not a protocol constant: callers may
override per instance (per link, per slice, per scenario).
"""

# --- event clock ---------------------------------------------------------
# Offset used when an externally injected command is enqueued "now".
COMMAND_EPSILON_MS = 0.001
# Period of the monitoring snapshot event.
SNAPSHOT_PERIOD_MS = 1000.0

# --- access link presets (latency_ms, bandwidth_mbps) --------------------
ACCESS_PRESETS = {
    "LTE": (50.0, 20.0),
    "WiFi": (10.0, 100.0),
    "Ethernet": (1.0, 1000.0),
}

# --- ICN forwarding ------------------------------------------------------
DEFAULT_INTEREST_LIFETIME_MS = 4000.0
DEFAULT_MEDIA_FRESHNESS_MS = 60_000.0
SYNC_STATE_FRESHNESS_MS = 1000.0
# Wire-size model: header + name text, payload on top for data packets.
INTEREST_OVERHEAD_BYTES = 60
DATA_OVERHEAD_BYTES = 80
BYTES_PER_MB = 1_000_000

# --- slice load model ----------------------------------------------------
MBPS_PER_COMPUTE_UNIT = 100.0
DEFAULT_CACHE_WINDOW_S = 10.0
# Roster-synchronisation control traffic per participant.
SYNC_STREAM_KBPS = 64.0
SYNC_VNODE_CACHE_MB = 1.0
# Floor for the bandwidth reserved on a site<->sync virtual link.
SYNC_VLINK_MIN_MBPS = 0.5

# --- conference service --------------------------------------------------
FETCH_RETRY_BUDGET = 3
RETRY_BACKOFF_FACTOR = 2.0
DEFAULT_SEGMENT_BYTES = 1250
# Extra wait past the interest lifetime before a silent request (no data,
# no nack) is re-expressed. Generous so explicit nacks arrive first.
REEXPRESS_SLACK_MS = 1000.0

# --- mobility ------------------------------------------------------------
DEFAULT_DETACH_GAP_MS = 50.0
# Reserved control namespace and its slice id.
CONTROL_SLICE_ID = 0
POA_NAMESPACE = "poa"

# --- control api ---------------------------------------------------------
VIEW_SCHEMA_VERSION = 1
# How long a scenario keeps running after its last command, unless the
# script sets an explicit duration_ms.
SCENARIO_DRAIN_MS = 5000.0
