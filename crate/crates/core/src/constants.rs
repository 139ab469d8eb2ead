//! Physical constants (2019 SI exact values where defined).

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K (exact).
pub const K_B: f64 = 1.380_649e-23;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// BCS weak-coupling gap ratio Δ(0)/(k_B·Tc).
pub const BCS_GAP_RATIO: f64 = 1.76;
