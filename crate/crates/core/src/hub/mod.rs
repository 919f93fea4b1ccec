//! Multi-energy hub: topology, converter curves and dispatch problems.

mod check;
mod config;
mod dispatch;
mod piecewise;
mod topology;

pub use check::{check_dispatch, InvariantReport, InvariantTolerances};
pub use config::{
    slot, BranchConfig, Carrier, CarrierPrices, ConverterKind, ConverterSpec, HubConfig, IntraDaySeries, NodeConfig,
    NodeKind, PriceConfig, PriceSchedule, Series, StorageSpec, TopologyConfig, HOURS, MAX_COP, MAX_EFFICIENCY,
    SCHEMA_VERSION, SECTORS,
};
pub use dispatch::{
    build_day_ahead, build_intra_day, build_joint, dispatch_cost, solve_sequential, Adjustment, CostBreakdown,
    CostClass, DayAheadPlan, DispatchProblem, Layout, LoadRow, SequentialOutcome, Stage, StageVars, LOAD_SLOTS,
};
pub use piecewise::{linearize_converter, piecewise_linearize, EmittedBlock, PiecewiseBlock};
pub use topology::{build_hub_matrices, Branch, HubMatrices, Node, Topology};
