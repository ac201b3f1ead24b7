//! Slot-level orchestration of selection, channel, fusion and perception.

pub mod e2e;
pub mod record;
pub mod synthetic;

pub use e2e::{run_e2e, E2eConfig, Pipeline, SlotGrids, MAX_E2E_COLLABORATORS};
pub use record::{
    summarize_records, Aggregate, CavLink, CavRecord, CsvRow, CurvePoint, LatencyBreakdown, MeanSe, SeedAccumulator,
    SeedSummary, SlotRecord, Summary, CSV_SCHEMA, SLOT_SCHEMA, SUMMARY_SCHEMA,
};
pub use synthetic::{regret_at, run_synthetic, SyntheticConfig, SyntheticOutcome, SyntheticSlot};
