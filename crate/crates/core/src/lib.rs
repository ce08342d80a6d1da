//! Headless controlled-rearing chamber for pixels-to-actions agents.
//!
//! Agents see the chamber through a 96×96 software-rendered camera, act with a
//! discrete (translation, rotation) pair, and learn with PPO driven only by an
//! intrinsic reward. After rearing with a single rocking object they are
//! tested, with frozen weights, for imprinting and view-invariant recognition.
//!
//! Module map:
//! - [`world`]: chamber geometry, kinematics, stimulus and trial scheduling
//! - [`render`]: deterministic rasterizer for observations and display walls
//! - [`nn`]: explicit forward/backward layers and Adam
//! - [`ppo`]: policy/value network, GAE, clipped-surrogate updates
//! - [`intrinsic`]: curiosity, random-network distillation, contrastive novelty
//! - [`harness`]: training, test phase, checkpoints, run bookkeeping
//! - [`stats`]: preference scores, t-tests, noise bands, classification
//! - [`analysis`]: t-SNE, reference comparison, report emission

pub mod analysis;
pub mod harness;
pub mod intrinsic;
pub mod nn;
pub mod ppo;
pub mod render;
pub mod rng;
pub mod stats;
pub mod world;
