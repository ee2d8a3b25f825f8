//! Zero-shot vision-and-language navigation over a deterministic 2D
//! continuous simulator.
//!
//! The pipeline runs closed-loop per episode: egocentric view correction
//! (macro expert at initialization, micro controller after every action),
//! diffusion-based trajectory generation, farthest-first diversity
//! filtering, pose-conditioned imagined rollouts narrated into structured
//! text, and a navigation manager that selects trajectories and tracks
//! ordered subtask progress. All expert roles are scripted and
//! deterministic by default; remote chat-model adapters implementing the
//! same interfaces live in [`llm`].

pub mod config;
pub mod egoview;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod imagination;
pub mod llm_clients;
pub mod manager;
pub mod perception;
pub mod seeding;
pub mod trajgen;
pub mod worldsim;
