//! Rank-one MIMO Q ensemble.

mod checkpoint;
mod layer;
mod network;

pub use checkpoint::{Container, CRITIC_MAGIC, FORMAT_VERSION, POLICY_MAGIC};
pub use layer::{realize_member_weight, Activation, RankOneLayer};
pub use network::{
    blocks_to_heads, init_network, param_count_for, ForwardCache, GradBuffer, LayerGrads,
    MimoQNetwork, ParamCount,
};
