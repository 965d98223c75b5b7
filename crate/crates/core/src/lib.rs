// Copyright 2026 the rda-core authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Numerics for multiscale stochastic reaction-diffusion-advection equations
//! with a fast incompressible drift, and for their small-parameter limit: an
//! SPDE on the graph of Hamiltonian level sets.
//!
//! The crate provides full space-time discretizations (exponential Euler on a
//! 2D grid and on the graph), particle-level Monte Carlo schemes for both
//! regimes, and the experiment drivers used to measure convergence rates and
//! the asymptotic agreement between the two.

pub mod dense;
pub mod error;
pub mod experiments;
pub mod graph1d;
pub mod graph_ops;
pub mod hamiltonian;
pub mod noise;
pub mod particle;
pub mod rda2d;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double precision profile of the rotation Hamiltonian.
pub type HamiltonianProfile = hamiltonian::HamiltonianProfile<f64>;
/// Double precision radial perturbation profile.
pub type ZetaProfile = hamiltonian::ZetaProfile<f64>;
/// Double precision dense matrix.
pub type DenseMatrix = dense::DenseMatrix<f64>;
/// Double precision spectral kernel.
pub type SpectralKernel = noise::SpectralKernel<f64>;
/// Double precision Brownian increment stream.
pub type NoiseStream = noise::NoiseStream<f64>;
/// Double precision weight profile on the graph.
pub type WeightProfile = graph_ops::WeightProfile<f64>;
