//! Rigid registration, linear assignment, and cluster-matching scene flow.

mod assignment;
mod flow;
mod icp;

pub use assignment::{gated_max_score_matching, hungarian, Assignment, CostMatrix};
pub use flow::{
    estimate_scene_flow, estimate_scene_flow_detailed, ClusterMatch, FlowConfig, FlowField, SceneFlow,
    GATED_COST,
};
pub use icp::{icp, icp_with_tree, kabsch, IcpParams, IcpResult};
