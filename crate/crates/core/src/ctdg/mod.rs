//! Continuous-time dynamic graph data model: event streams, temporal
//! neighborhoods, persistent node states and chronological splits.

mod event;
pub mod io;
mod neighbors;
mod split;
mod state;

pub use event::{Event, EventKind, EventRef, EventStream, NodeId};
pub use io::{
    read_events, read_events_file, read_jodie, read_jodie_file, write_events, write_events_file, IngestOptions,
};
pub use neighbors::{NeighborEntry, NeighborStore, SamplerKind};
pub use split::{
    chronological_split, nodes_in, stream_stats, surprise_index, Phase, SplitSpec, StreamStats, DEFAULT_RATIOS,
};
pub use state::NodeStateTable;
