//! Recurrent belief encoder with per-subset policy and value heads.
//!
//! `h_t = tanh(W_o onehot(o_t) + w_r r_t / R_max + W_a onehot(a_{t-1}) + W_h h_{t-1} + b)`,
//! `pi_m(.|h) = softmax(P_m h + p_m)`, `V_m(h) = v_m . h + c_m`.

mod adam;
mod backward;
mod checkpoint;
mod params;

pub use adam::AdamState;
pub use backward::{backward, HeadGrad};
pub use checkpoint::Checkpoint;
pub use params::{consensus_probs, encode_step, policy_logits, policy_probs, softmax, unroll, value_estimate, Architecture, Params, Unroll};
