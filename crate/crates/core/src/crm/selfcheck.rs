use rand::Rng;
use serde::Serialize;

use super::{
    crm_forward, dilated_conv, forward_with_pad_skew, gate_mask, reference, BatchNorm, ConvWeights,
    CrmConfig, CrmParams, Preset, Tensor3,
};
use crate::error::Result;
use crate::rng::{derive_seed, rng_from_seed};

/// Relative tolerance of the optimized path against the reference.
pub const ORACLE_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct SelfCheckOptions {
    pub presets: Vec<Preset>,
    /// Random (shape, params) cases per preset.
    pub cases: usize,
    pub seed: u64,
    /// Extra parameters (with their config) to check against the reference.
    pub extra: Option<(CrmConfig, CrmParams)>,
    /// Test hook: skews the optimized path's padding by one pixel.
    pub inject_padding_fault: bool,
}

impl Default for SelfCheckOptions {
    fn default() -> Self {
        Self {
            presets: vec![Preset::Global, Preset::Block],
            cases: 20,
            seed: 0,
            extra: None,
            inject_padding_fault: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst observed deviation (meaning depends on the check).
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfCheckReport {
    pub checks: Vec<CheckResult>,
}

impl SelfCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: String, dev: f64, tol: f64) -> CheckResult {
    CheckResult {
        name,
        max_deviation: dev,
        tolerance: tol,
        passed: dev <= tol,
    }
}

fn rel_dev(got: &Tensor3, want: &Tensor3) -> f64 {
    if got.shape() != want.shape() {
        return f64::INFINITY;
    }
    got.max_abs_diff(want) / want.max_abs().max(f64::MIN_POSITIVE)
}

/// Runs the module's invariant suite.
pub fn run_selfcheck(opts: &SelfCheckOptions) -> Result<SelfCheckReport> {
    let skew = usize::from(opts.inject_padding_fault);
    let mut checks = Vec::new();
    for (pi, &preset) in opts.presets.iter().enumerate() {
        let cfg = CrmConfig::preset(preset);
        let tag = format!("{preset:?}").to_lowercase();

        let mut oracle = 0.0f64;
        let mut gate_margin = f64::INFINITY;
        let mut locality = 0.0f64;
        for case in 0..opts.cases {
            let mut rng = rng_from_seed(derive_seed(opts.seed, (pi * 1_000_003 + case) as u64));
            let c = rng.random_range(1..=4);
            let h = rng.random_range(3..=10);
            let w = rng.random_range(3..=10);
            let x = Tensor3::random(c, h, w, &mut rng);
            let params = CrmParams::random(c, &cfg, &mut rng);
            let got = forward_with_pad_skew(&x, &params, &cfg, skew)?;
            oracle = oracle.max(rel_dev(&got, &reference::crm_forward(&x, &params, &cfg)));

            let f_hat = Tensor3::random(cfg.branches() * c, h, w, &mut rng);
            let mask = gate_mask(&f_hat, &params)?;
            for &m in &mask.data {
                gate_margin = gate_margin.min(m.min(1.0 - m));
            }
            let j = rng.random_range(0..f_hat.c);
            let mut bumped = f_hat.clone();
            let plane = h * w;
            bumped.data[j * plane..(j + 1) * plane]
                .iter_mut()
                .for_each(|v| *v += 0.75);
            let mask2 = gate_mask(&bumped, &params)?;
            for ch in (0..f_hat.c).filter(|&ch| ch != j) {
                for i in ch * plane..(ch + 1) * plane {
                    locality = locality.max((mask.data[i] - mask2.data[i]).abs());
                }
            }
        }
        checks.push(check(format!("{tag}/oracle_equivalence"), oracle, ORACLE_REL_TOL));
        // Deviation reported as how far the closest mask value is from the
        // open interval; passes when strictly inside.
        checks.push(CheckResult {
            name: format!("{tag}/gate_range"),
            max_deviation: if gate_margin > 0.0 { 0.0 } else { -gate_margin },
            tolerance: 0.0,
            passed: gate_margin > 0.0,
        });
        checks.push(check(format!("{tag}/gate_group_locality"), locality, 0.0));

        let mut rng = rng_from_seed(derive_seed(opts.seed, 7_000_000 + pi as u64));
        let x = Tensor3::random(8, 16, 16, &mut rng);
        let params = CrmParams::random(8, &cfg, &mut rng);
        let y = forward_with_pad_skew(&x, &params, &cfg, skew)?;
        checks.push(check(
            format!("{tag}/shape_preservation"),
            if y.shape() == x.shape() { 0.0 } else { 1.0 },
            0.0,
        ));

        let mut zeroed = params.clone();
        zeroed.out_proj.weights.fill(0.0);
        zeroed.out_proj.bias.fill(0.0);
        zeroed.out_norm = BatchNorm::identity(8);
        let y = forward_with_pad_skew(&x, &zeroed, &cfg, skew)?;
        checks.push(check(format!("{tag}/shortcut_identity"), y.max_abs_diff(&x), 0.0));

        let mut ident = 0.0f64;
        for &d in &cfg.dilations {
            let y = dilated_conv(&x, &ConvWeights::identity(8, cfg.k), d)?;
            ident = ident.max(y.max_abs_diff(&x));
        }
        checks.push(check(format!("{tag}/conv_identity"), ident, 0.0));
    }

    if let Some((cfg, params)) = &opts.extra {
        params.validate(cfg)?;
        let mut rng = rng_from_seed(derive_seed(opts.seed, 9_000_000));
        let x = Tensor3::random(params.channels, 9, 11, &mut rng);
        let got = crm_forward(&x, params, cfg)?;
        checks.push(check(
            "file/oracle_equivalence".into(),
            rel_dev(&got, &reference::crm_forward(&x, params, cfg)),
            ORACLE_REL_TOL,
        ));
    }
    Ok(SelfCheckReport { checks })
}
