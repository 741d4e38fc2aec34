use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::Result;
use crate::tensor::Mode;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor of the relative error, scaled by `max(1, |loss|)`
    /// since round-off in the differenced loss grows with its magnitude.
    pub floor: f64,
    /// Seed handed to every graph, so dropout masks replay identically.
    pub seed: u64,
    pub mode: Mode,
    /// Check at most this many randomly chosen elements per parameter.
    pub max_elements: Option<usize>,
    /// Negative control: perturbs one analytic gradient element per parameter.
    pub corrupt: bool,
    /// Only parameters whose names start with one of these; empty checks all.
    pub prefixes: Vec<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-5,
            seed: 0,
            mode: Mode::Train,
            max_elements: None,
            corrupt: false,
            prefixes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn max_rel_error(&self) -> f64 {
        self.worst().map_or(0.0, |p| p.max_rel_error)
    }
}

/// Compares `backward` against central differences for every trainable
/// parameter of `store`. `build` must construct a scalar loss.
pub fn finite_diff_check<F>(store: &ParamStore, build: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let (grads, loss) = {
        let mut g = Graph::new(store, opts.mode, opts.seed);
        let loss = build(&mut g)?;
        (g.backward(loss)?, g.value(loss).item())
    };
    let floor = opts.floor * loss.abs().max(1.0);
    let mut work = store.clone();
    let eval = |work: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(work, opts.mode, opts.seed);
        let loss = build(&mut g)?;
        Ok(g.value(loss).item())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let mut params = Vec::new();
    let selected = store
        .trainable_ids()
        .into_iter()
        .filter(|&id| opts.prefixes.is_empty() || opts.prefixes.iter().any(|p| store.name(id).starts_with(p.as_str())));
    for id in selected {
        let mut analytic = grads.get(id, store);
        let n = analytic.len();
        if opts.corrupt && n > 0 {
            let a = &mut analytic.data_mut()[0];
            *a += 0.1 * a.abs().max(1e-2);
        }
        let indices: Vec<usize> = match opts.max_elements {
            Some(k) if k < n => sample(&mut rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            name: store.name(id).to_string(),
            checked: indices.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in indices {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + opts.step;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - opts.step;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if err > check.max_rel_error || !err.is_finite() {
                check.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        params,
    })
}
