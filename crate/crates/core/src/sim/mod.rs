//! Plant simulation, noise, and the open- and closed-loop experiments.

pub mod closed_loop;
pub mod integrator;
pub mod noise;
pub mod open_loop;
pub mod plant;
pub mod sweep;

pub use integrator::{integrate, OdeSettings};
pub use noise::{sample_noise, NoiseSignal};
pub use plant::{integrate_plant, InputSignal, PlantSimulator, PlantTrace};
