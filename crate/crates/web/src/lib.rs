//! Browser bindings: a majorant explorer, the group shrinkage map, and a
//! step-by-step reconstruction of a small synthetic scan.

use wasm_bindgen::prelude::*;

use cpalm::blockspace::C64;
use cpalm::composite::{prox_shrink, CompositeTerm};
use cpalm::mri::{
    build_problem, rel_err, snr, synthesize_dataset, MaskKind, ModelSpec, MriDataset, MriProblem,
    SynthConfig,
};
use cpalm::solver::{cpalm_step, SolverConfig, State};

fn js_err(e: cpalm::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn term(kind: &str, param: f64) -> Result<CompositeTerm, JsValue> {
    match kind {
        "logsum" => CompositeTerm::log_sum(param).map_err(js_err),
        "power" => CompositeTerm::power(1.0, param).map_err(js_err),
        _ => Err(JsValue::from_str("kind must be `logsum` or `power`")),
    }
}

/// Samples `g(t) = φ(|t|)` and its tangent majorant about `anchor` on
/// `[-t_max, t_max]`. Returns `[t, g, q]` triples, flattened.
#[wasm_bindgen]
pub fn majorant_curve(kind: &str, param: f64, anchor: f64, t_max: f64, samples: usize) -> Result<Vec<f64>, JsValue> {
    let g = term(kind, param)?;
    let a = [C64::new(anchor, 0.0)];
    let n = samples.max(2);
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let t = -t_max + 2.0 * t_max * i as f64 / (n - 1) as f64;
        let y = [C64::new(t, 0.0)];
        out.extend([t, g.eval_group(&y), g.majorant_group(&y, &a)]);
    }
    Ok(out)
}

/// Point `w⁺ = argmin weight·‖w‖ + (beta/2)‖w - c‖²` for a 2-D centre `c`.
#[wasm_bindgen]
pub fn shrink_point(weight: f64, beta: f64, cx: f64, cy: f64) -> Vec<f64> {
    let w = prox_shrink(weight, &[C64::new(cx, 0.0), C64::new(cy, 0.0)], beta);
    vec![w[0].re, w[1].re]
}

/// Runs CPALM on a synthetic scan one batch of iterations at a time.
#[wasm_bindgen]
pub struct Reconstruction {
    data: MriDataset,
    mp: MriProblem,
    cfg: SolverConfig,
    state: State,
    objective: f64,
    iters: usize,
}

#[wasm_bindgen]
impl Reconstruction {
    /// `model` is `logsum` or `lp`; `p` is used only by `lp`.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, coils: usize, ratio: f64, sigma: f64, seed: u32, model: &str, p: f64) -> Result<Reconstruction, JsValue> {
        let data = synthesize_dataset(&SynthConfig {
            rows: size,
            cols: size,
            coils,
            mask: MaskKind::Poisson(ratio),
            noise_sigma: sigma,
            seed: seed.into(),
        })
        .map_err(js_err)?;
        let spec = match model {
            "logsum" => ModelSpec::log_sum(1e-4),
            "lp" => ModelSpec::lp(1e-4, p),
            _ => return Err(JsValue::from_str("model must be `logsum` or `lp`")),
        };
        let cfg = SolverConfig::default();
        let mp = build_problem(&data, &spec, &cfg).map_err(js_err)?;
        let state = mp.init.clone();
        let objective = mp.problem.objective(&state).map_err(js_err)?;
        Ok(Reconstruction { data, mp, cfg, state, objective, iters: 0 })
    }

    /// Advances `n` iterations and returns the objective after them.
    pub fn step(&mut self, n: usize) -> Result<f64, JsValue> {
        for _ in 0..n {
            self.iters += 1;
            let (next, _, _) = cpalm_step(&self.mp.problem, &self.state, &self.cfg, self.iters).map_err(js_err)?;
            self.state = next;
        }
        self.objective = self.mp.problem.objective(&self.state).map_err(js_err)?;
        Ok(self.objective)
    }

    pub fn iterations(&self) -> usize {
        self.iters
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn size(&self) -> usize {
        self.data.rows
    }

    pub fn ratio(&self) -> f64 {
        self.data.ratio()
    }

    pub fn image(&self) -> Vec<f64> {
        self.state.x.magnitude()
    }

    pub fn ground_truth(&self) -> Vec<f64> {
        self.data.ground_truth.clone()
    }

    pub fn zero_filled(&self) -> Vec<f64> {
        self.mp.init.x.magnitude()
    }

    pub fn mask(&self) -> Vec<u8> {
        self.data.mask.clone()
    }

    pub fn snr_db(&self) -> f64 {
        snr(&self.image(), &self.data.ground_truth).unwrap_or(f64::NAN)
    }

    pub fn zero_filled_snr_db(&self) -> f64 {
        snr(&self.zero_filled(), &self.data.ground_truth).unwrap_or(f64::NAN)
    }

    pub fn rel_err(&self) -> f64 {
        rel_err(&self.image(), &self.data.ground_truth).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_touches_at_anchor() {
        let c = majorant_curve("power", 0.5, 1.0, 2.0, 5).unwrap();
        assert_eq!(c.len(), 15);
        // samples at -2, -1, 0, 1, 2; |t| = 1 is the anchor level
        assert!((c[3 * 3 + 1] - c[3 * 3 + 2]).abs() < 1e-12);
        assert!(c.chunks(3).all(|s| s[2] >= s[1] - 1e-12));
    }

    #[test]
    fn shrink_point_matches_closed_form() {
        let w = shrink_point(1.0, 2.0, 3.0, 4.0);
        assert!((w[0] - 2.7).abs() < 1e-12 && (w[1] - 3.6).abs() < 1e-12);
        assert_eq!(shrink_point(10.0, 1.0, 0.3, 0.4), vec![0.0, 0.0]);
    }

    #[test]
    fn reconstruction_improves_on_zero_filling() {
        let mut r = Reconstruction::new(32, 4, 0.3, 0.003, 1, "logsum", 0.5).unwrap();
        let f0 = r.objective();
        let f = r.step(40).unwrap();
        assert!(f < f0);
        assert_eq!(r.iterations(), 40);
        assert!(r.snr_db() > r.zero_filled_snr_db());
        assert_eq!(r.image().len(), 32 * 32);
    }
}
