//! System representation, output decoupling, noise models and the
//! ground-truth plant simulator.

pub mod aux;
pub mod decouple;
pub mod noise;
pub mod plant;
pub mod schedule;

pub use aux::{AuxAt, AuxMeasurementModel};
pub use decouple::{decouple, decouple_at, t1dot, t1dot_full, DecoupledSystem};
pub use noise::{
    gm_cov_rhs, gm_noise_step, GaussMarkovSpec, GmNoiseState, GmSampler, WhiteNoiseAt,
    WhiteNoiseSpec,
};
pub use plant::{
    simulate_plant, AuxSynthesis, Measurement, NoiseModel, PlantModel, PlantSimulator,
    PlantTrajectory,
};
pub use schedule::{Dims, MatrixSchedule, Signal, SystemAt, SystemDerivs, SystemSchedule};
