//! Independent amplitude computations used to check the simulator.
//!
//! [`free_fermion`] maps the hard-core chain onto free fermions and reads
//! amplitudes off determinants of the single-particle propagator.
//! [`path_sum`] enumerates occupation-number trajectories of a first-order
//! Trotter expansion, and [`slice_product`] multiplies the same slices as
//! dense operators.

pub mod free_fermion;
pub mod path_sum;
pub mod slice_product;

pub use free_fermion::{fermion_propagator, free_fermion_amplitude, FermionPropagator};
pub use path_sum::{path_sum_amplitude, phase_binned_weights, PathSum, PathSumOptions, Strategy, Trajectory};
pub use slice_product::linearized_product_amplitude;
