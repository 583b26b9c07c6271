"""Carbon-aware measurement and scheduling for end-to-end data movement.

The pipeline: discover the hop-by-hop path, geolocate each hop, look up
grid carbon intensity per location, aggregate into path reports, then
shift transfers in time, in space (replica choice), or across overlay
file-transfer nodes to cut the carbon cost of moving bytes.
"""

from .clock import Clock, SimulatedClock, SystemClock, parse_utc, utc
from .carbon import (
    CachedCarbonProvider,
    CarbonProvider,
    CarbonQuery,
    LiveCarbonClient,
    TraceCarbonProvider,
    TraceStore,
    ZoneMap,
    intensity_at,
    load_trace_store,
    load_zone_map,
    synth_series,
    zone_for_location,
)
from .discovery import (
    ProbeConfig,
    Prober,
    ProbeResponse,
    SimulatedProber,
    TopologyHop,
    discover_path,
)
from .errors import CarbonPathError
from .geo import (
    CachedGeoProvider,
    GeoProvider,
    OfflineGeoDatabase,
    OnlineGeoClient,
    geolocate,
    load_geo_database,
)
from .metrics import (
    HostMetrics,
    MetricsSnapshot,
    MetricsSource,
    NetworkMetrics,
    PsutilSource,
    SyntheticSource,
    TransferMetrics,
    emit,
    sample,
)
from .model import (
    CarbonSample,
    CarbonScore,
    CarbonSeries,
    GeoLocation,
    Hop,
    HopReading,
    IpAddress,
    NetworkPath,
    PathAverage,
    PathCarbonReport,
    TransferJob,
    TransferRecord,
    path_average_intensity,
    time_weighted_average,
)
from .pathcarbon import MonitorConfig, measure_path_carbon, monitor_path
from .scheduler import (
    ActiveTransfer,
    FtnCandidate,
    MigrationEvent,
    OverlayPlan,
    ReplicaChoice,
    TimeShiftDecision,
    carbon_score,
    migrate_if_exceeded,
    plan_overlay,
    schedule_space_shift,
    schedule_time_shift,
)
from .simulator import (
    Ftn,
    OverlayScenario,
    SimTransferResult,
    SpaceShiftScenario,
    TimeShiftScenario,
    TransferPlan,
    World,
    load_scenario,
    load_world,
    run_experiment,
    run_transfer,
)
from .store import RecordStore

__version__ = "0.1.0"
