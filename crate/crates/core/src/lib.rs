//! Privacy-budget scheduling over RDP-accounted data blocks.

pub mod block;
pub mod knapsack;
pub mod rdp;
pub mod scenarios;
pub mod sched;
pub mod sim;
pub mod task;
pub mod workload;

pub use block::{Availability, Block, BlockId};
pub use rdp::{AlphaGrid, DpGuarantee, RdpCurve};
pub use sched::Policy;
pub use task::{DemandVector, Task, TaskId};
