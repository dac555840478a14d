//! Street maps, trajectories and user mobility.

pub mod graph;
pub mod mobility;
pub mod population;
pub mod raster;
pub mod traces;
pub mod trajectory;

pub use graph::{synth_street_graph, StreetGraph, NUM_ROAD_CLASSES, ROAD_CLASS_NAMES};
pub use mobility::{gm_trajectory, m_gm_trajectory, m_rwp_trajectory, m_rwp_with_legs, rwp_trajectory, GaussMarkovParams, RouteLeg};
pub use population::{ActiveUser, DEFAULT_V_RANGE, ArrivalRule, MobilityModel, MobilitySource, PopulationConfig, PopulationEvents, PopulationProcess};
pub use raster::{rasterize_graph, MapRaster, RASTER_SIZE};
pub use traces::{load_traces, read_traces, save_traces, write_traces};
pub use trajectory::{TrajPoint, Trajectory};
