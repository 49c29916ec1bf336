//! Central finite differences for checking analytic gradients.

use super::tensor::{GradientSet, ParamSet};

/// Default perturbation.
pub const FD_STEP: f64 = 1e-5;

/// `(f(x + h) − f(x − h)) / 2h` for every entry of `x`.
pub fn numerical_gradient<F>(x: &[f64], step: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Finite-difference gradient of a scalar function of a whole [`ParamSet`].
pub fn numerical_param_gradient<F>(params: &ParamSet, step: f64, mut f: F) -> GradientSet
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut probe = params.clone();
    let mut out = params.zeros_like();
    let names: Vec<String> = params.names().map(String::from).collect();
    for name in names {
        let n = params.get(&name).map_or(0, |p| p.as_slice().len());
        for i in 0..n {
            let orig = probe.get(&name).unwrap().as_slice()[i];
            probe.get_mut(&name).unwrap().as_mut_slice()[i] = orig + step;
            let plus = f(&probe);
            probe.get_mut(&name).unwrap().as_mut_slice()[i] = orig - step;
            let minus = f(&probe);
            probe.get_mut(&name).unwrap().as_mut_slice()[i] = orig;
            out.get_mut(&name).unwrap().as_mut_slice()[i] = (plus - minus) / (2.0 * step);
        }
    }
    out
}

/// Relative error `|a − n| / max(|a| + |n|, floor)`.
///
/// The floor keeps entries whose true gradient is zero from being judged on
/// pure rounding noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Largest relative error across two congruent sets, with the offending name.
pub fn max_relative_error(analytic: &GradientSet, numeric: &GradientSet, floor: f64) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for ((name, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
        for (i, (&av, &nv)) in a.as_slice().iter().zip(n.as_slice()).enumerate() {
            let e = relative_error(av, nv, floor);
            if e > worst.0 {
                worst = (e, format!("{name}[{i}]"));
            }
        }
    }
    worst
}

pub fn max_relative_error_slices(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, floor))
        .fold(0.0, f64::max)
}

/// Up to `per_param` distinct entry indices of every parameter, chosen by a
/// seeded shuffle, for checking large layers without perturbing every weight.
pub fn sample_entries(params: &ParamSet, per_param: usize, seed: u64) -> Vec<(String, usize)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, p) in params.iter() {
        let mut idx: Vec<usize> = (0..p.as_slice().len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(per_param);
        idx.sort_unstable();
        out.extend(idx.into_iter().map(|i| (name.to_string(), i)));
    }
    out
}

/// Central difference with respect to one entry of one parameter.
pub fn numerical_entry<F>(params: &ParamSet, name: &str, index: usize, step: f64, mut f: F) -> f64
where
    F: FnMut(&ParamSet) -> f64,
{
    let mut probe = params.clone();
    let orig = params.get(name).expect("known parameter").as_slice()[index];
    probe.get_mut(name).unwrap().as_mut_slice()[index] = orig + step;
    let plus = f(&probe);
    probe.get_mut(name).unwrap().as_mut_slice()[index] = orig - step;
    let minus = f(&probe);
    (plus - minus) / (2.0 * step)
}
