use super::IterateRecord;

/// Sufficient-decrease constant certified by one iteration's step quantities,
/// `min{λ_min(A)ρ₁L₁(γ₁-1), min_j λ_min(B_j)ρ₂L₂(γ₂-1)}`.
pub fn decrease_constant_at(r: &IterateRecord) -> f64 {
    let c = &r.constants;
    let x = c.a_min * c.rho1 * c.l1 * (c.gamma1 - 1.0);
    (0..c.l2.len())
        .map(|j| c.b_min[j] * c.rho2[j] * c.l2[j] * (c.gamma2_eff[j] - 1.0))
        .fold(x, f64::min)
}

/// Smallest [`decrease_constant_at`] over a trace.
pub fn decrease_constant(trace: &[IterateRecord]) -> f64 {
    trace
        .iter()
        .map(decrease_constant_at)
        .fold(f64::INFINITY, f64::min)
}

/// Problem constants entering the subgradient bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResidualBoundInputs {
    /// Joint Lipschitz constant `M` of `∇H`.
    pub joint_lipschitz: f64,
    /// Lipschitz constant of `Υ` in its argument, maximised over blocks.
    pub upsilon_lipschitz: f64,
    /// Subgradient bound `ν` of `ψ`.
    pub nu: f64,
}

/// `2M + μ̂ν + 3ξ` with `ξ = max{max‖A‖·max α, max_j max‖B_j‖·max β_j}`,
/// so that `residual_{k} ≤ factor · increment_{k}` along the trace.
pub fn residual_bound_factor(trace: &[IterateRecord], inputs: ResidualBoundInputs) -> f64 {
    let max = |f: &dyn Fn(&IterateRecord) -> f64| trace.iter().map(f).fold(0.0, f64::max);
    let x = max(&|r| r.constants.a_norm) * max(&|r| r.alpha);
    let blocks = trace.first().map_or(0, |r| r.constants.betas.len());
    let xi = (0..blocks)
        .map(|j| max(&|r| r.constants.b_norm[j]) * max(&|r| r.constants.betas[j]))
        .fold(x, f64::max);
    2.0 * inputs.joint_lipschitz + inputs.upsilon_lipschitz * inputs.nu + 3.0 * xi
}
