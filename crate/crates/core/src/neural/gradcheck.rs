//! Central finite-difference oracle for tape gradients.
//!
//! Only forward evaluations of the loss are used, so the check is
//! independent of the reverse pass it validates. A coordinate whose two
//! one-sided slopes disagree, with the analytic value matching one of them,
//! sits on a ReLU/LeakyReLU kink; a mismatch there is counted as a skip
//! rather than a failure.

use super::{Gradients, ParameterStore};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tolerance: f64,
    /// Gradients smaller than this are compared absolutely.
    pub magnitude_floor: f64,
    /// Check at most this many evenly spaced entries per parameter.
    pub max_entries_per_param: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tolerance: 1e-4,
            magnitude_floor: 1e-6,
            max_entries_per_param: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
        self.failures += other.failures;
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst.clone();
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` over every
/// parameter of every store. Parameters missing from `analytic` are expected
/// to have zero gradient.
pub fn check_gradients<F>(
    stores: &mut [&mut ParameterStore],
    analytic: &Gradients,
    loss: F,
    opts: GradCheckOptions,
) -> GradCheckReport
where
    F: Fn(&[&ParameterStore]) -> f64,
{
    let eval = |stores: &[&mut ParameterStore]| {
        let refs: Vec<&ParameterStore> = stores.iter().map(|s| &**s).collect();
        loss(&refs)
    };
    let base = eval(stores);
    let mut report = GradCheckReport::default();
    for k in 0..stores.len() {
        let names: Vec<String> = stores[k].iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let len = stores[k].get(&name).expect("listed").len();
            let stride = len.div_ceil(opts.max_entries_per_param.max(1)).max(1);
            for idx in (0..len).step_by(stride) {
                let orig = stores[k].get(&name).expect("listed").as_slice().expect("contiguous")[idx];
                let set = |stores: &mut [&mut ParameterStore], v: f64| {
                    stores[k]
                        .value_mut(&name)
                        .expect("listed")
                        .as_slice_mut()
                        .expect("contiguous")[idx] = v;
                };
                set(stores, orig + opts.eps);
                let plus = eval(stores);
                set(stores, orig - opts.eps);
                let minus = eval(stores);
                set(stores, orig);

                let numeric = (plus - minus) / (2.0 * opts.eps);
                let a = analytic
                    .get(&name)
                    .map(|g| g[[idx / g.ncols(), idx % g.ncols()]])
                    .unwrap_or(0.0);
                let err = relative_error(a, numeric, opts.magnitude_floor);
                report.checked += 1;
                if err >= opts.tolerance {
                    let fwd = (plus - base) / opts.eps;
                    let bwd = (base - minus) / opts.eps;
                    let one_sided = |slope: f64| relative_error(a, slope, opts.magnitude_floor) < 1e-3;
                    let kink = relative_error(fwd, bwd, opts.magnitude_floor) > opts.tolerance
                        && (one_sided(fwd) || one_sided(bwd));
                    if kink {
                        report.skipped_kinks += 1;
                        continue;
                    }
                    report.failures += 1;
                }
                if err > report.max_rel_error {
                    report.max_rel_error = err;
                    report.worst = Some((name.clone(), idx, a, numeric));
                }
            }
        }
    }
    report
}
