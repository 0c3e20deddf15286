//! Multiplexed dispersive readout through the amplifier.

pub mod budget;
pub mod classify;
pub mod dispersive;
pub mod filter;
pub mod simulate;

pub use budget::{delta_a_db, eta_at_amplifier_input, noise_budget_solve, NoiseBudget};
pub use classify::{demodulate_and_classify, ClassifierConfig, FidelityReport};
pub use dispersive::{
    dephasing_rate, efficiency, measurement_rate, pointer_states, DispersiveSystem,
};
pub use filter::Butterworth;
pub use simulate::{
    simulate_records, IQRecord, InjectedLine, QubitState, RecordSet, SimulationConfig,
};
