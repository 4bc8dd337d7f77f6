//! Independent oracles shared by the integration suites. Nothing here calls
//! into the code paths it is used to check.
#![allow(dead_code)]

use ced_core::model::ModelConfig;

/// Layer-by-layer parameter count from the architecture description.
pub fn analytic_param_count(cfg: &ModelConfig) -> usize {
    let lin = |i: usize, o: usize| i * o + o;
    let ln = |d: usize| 2 * d;
    let (c, t) = (cfg.conformer_units, cfg.transformer_units);
    let ff = |d: usize, h: usize| ln(d) + lin(d, h) + lin(h, d);
    let mhsa = |d: usize| 4 * lin(d, d);
    let conv = ln(c) + lin(c, 2 * c) + cfg.conv_kernel * c + c + ln(c) + lin(c, c);
    let block = 2 * ff(c, cfg.conformer_ff_dim) + ln(c) + mhsa(c) + conv + ln(c);
    let cross = mhsa(t) + ln(t) + lin(t, cfg.cross_ff_dim) + lin(cfg.cross_ff_dim, t) + ln(t);
    let cross_sets = if cfg.share_cross_weights { 1 } else { 2 };
    lin(cfg.input_dim, c)
        + cfg.conformer_layers * block
        + lin(c, t)
        + cross_sets * cfg.cross_layers * cross
        + lin(2 * t, cfg.head_hidden)
        + lin(cfg.head_hidden, 1)
}

/// Tiny configuration: input dim 8, units 16/8, heads 2.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_dim: 8,
        conformer_units: 16,
        transformer_units: 8,
        heads: 2,
        conv_kernel: 3,
        conformer_ff_dim: 24,
        cross_ff_dim: 12,
        head_hidden: 8,
        dropout: 0.0,
        init_seed: 5,
        ..ModelConfig::default()
    }
}

/// Piecewise smooth-L1 evaluated coordinate by coordinate.
pub fn smooth_l1_direct(u: &[f64], v: &[f64], beta: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..u.len() {
        let d = (u[i] - v[i]).abs();
        total += if d < beta { 0.5 * d * d / beta } else { d - 0.5 * beta };
    }
    total
}

/// Sample Pearson r from the textbook two-pass formula.
pub fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sided p-value of Student's t with integer `dof`, from the closed-form
/// finite series for P(|T| < t) (Abramowitz & Stegun 26.7.3 / 26.7.4).
pub fn t_two_sided_p_series(t: f64, dof: usize) -> f64 {
    assert!(dof >= 1);
    let theta = (t.abs() / (dof as f64).sqrt()).atan();
    let (s, c) = (theta.sin(), theta.cos());
    let inside = if dof % 2 == 1 {
        let mut sum = 0.0;
        if dof > 1 {
            let mut term = c;
            sum = term;
            let mut k = 1;
            while 2 * k + 1 < dof - 1 {
                term *= c * c * (2 * k) as f64 / (2 * k + 1) as f64;
                sum += term;
                k += 1;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k <= dof - 2 {
            term *= c * c * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    };
    (1.0 - inside).max(0.0)
}
