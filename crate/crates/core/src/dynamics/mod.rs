//! Surfaces and the synchronous update `S_{t+1}(x) = S_t(x) + F(∇S_t(x), ω(x, S_t(x)))`.

mod evolve;
mod rules;
mod surface;
mod velocity;

pub use evolve::{evolve_until, step, step_into, EvolveOptions, Snapshot, StopReason, Trajectory};
pub use rules::{audit_monotone, rule_lipschitz, rule_soft, MonotonePredicate, MonotoneTable, UpdateRule};
pub use surface::{Boundary, Surface, SurfaceRecord};
pub use velocity::{velocity_estimate, velocity_sweep, VelocityEstimate, VelocitySweep};

/// Largest absolute gradient of a surface with finite heights everywhere,
/// ignoring pairs that involve `-∞`.
pub fn max_abs_gradient(s: &Surface) -> i64 {
    let mut m = 0;
    for i in 0..s.len() {
        for g in s.gradients(i) {
            if let Some(v) = g.finite() {
                m = m.max(v.abs());
            }
        }
    }
    m
}
