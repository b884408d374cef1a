//! Monte Carlo and exact estimators of `R_I(F, x)` and Gaussian widths.
//!
//! Each trial owns the generator `stream.trial(k)`. The noise matrix is the
//! first thing drawn from it, so two estimates run with the same stream see
//! the same draws (common random numbers). Per-trial values are collected in
//! trial order and reduced sequentially, which makes the result independent
//! of the rayon pool size.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{
    component_sums, hidden_features, hidden_sum_norms, project_w, sup_mixed_norm_from_sums,
    sup_trace_norm_from_sums, ClassSpec, CompositeSpec,
};
use crate::error::{invalid, Error, Result};
use crate::index_map::IndexMap;
use crate::numerics::{axpy, empirical_covariance, norm, top_eigenvector, DataSample, Matrix};
use crate::rng::{sample_noise, NoiseKind, NoiseMatrix, RngStream};

pub const DEFAULT_TRIALS: usize = 2000;
/// Largest sign support enumerated by [`exact_r`].
pub const DEFAULT_MAX_SUPPORT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√trials`.
    pub stderr: f64,
    pub trials: usize,
    pub master_seed: u64,
}

impl McEstimate {
    pub fn from_values(values: &[f64], master_seed: u64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr: (var / n).sqrt(),
            trials: values.len(),
            master_seed,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        McEstimate {
            mean: self.mean * s,
            stderr: self.stderr * s.abs(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AscentConfig {
    pub restarts: usize,
    pub steps: usize,
    /// Step length; `None` means `0.1 · b / √K`.
    pub step_size: Option<f64>,
    /// Central differences instead of the analytic subgradient.
    pub finite_difference: bool,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            restarts: 8,
            steps: 200,
            step_size: None,
            finite_difference: false,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(invalid("restarts", "must be positive"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be positive"));
        }
        if let Some(s) = self.step_size {
            if !(s.is_finite() && s > 0.0) {
                return Err(invalid("step_size", "must be positive"));
            }
        }
        Ok(())
    }

    fn step_for(&self, spec: &CompositeSpec) -> f64 {
        self.step_size
            .unwrap_or(0.1 * spec.b / (spec.k as f64).sqrt())
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < 2 {
        return Err(invalid("trials", format!("need at least 2, got {trials}")));
    }
    Ok(())
}

fn check_sample(sample: &DataSample, map: &IndexMap) -> Result<()> {
    if sample.len() != map.n_examples() {
        return Err(Error::DimensionMismatch {
            expected: map.n_examples(),
            found: sample.len(),
        });
    }
    Ok(())
}

/// Runs `trials` independent evaluations in parallel and reduces them in
/// trial order.
pub fn run_trials<F>(trials: usize, stream: &RngStream, f: F) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let values = (0..trials as u64)
        .into_par_iter()
        .map(|k| f(&mut stream.trial(k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_values(&values, stream.master_seed))
}

/// Per-draw supremum `sup_f Σ_t Σ_{i∈I_t} ξ_{ti} f_t(x_i)` (unnormalized).
pub fn draw_supremum(
    class: &ClassSpec,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
    ascent: Option<&AscentConfig>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    match class {
        ClassSpec::MixedNorm(s) => {
            let v = component_sums(sample, map, noise)?;
            Ok(sup_mixed_norm_from_sums(s, &v))
        }
        ClassSpec::TraceNorm(s) => {
            let v = component_sums(sample, map, noise)?;
            sup_trace_norm_from_sums(s, &v)
        }
        ClassSpec::Composite(s) => {
            let cfg = ascent.ok_or_else(|| {
                invalid(
                    "ascent",
                    "composite classes require an ascent configuration",
                )
            })?;
            Ok(composite_ascent(s, noise, sample, map, cfg, rng)?.value)
        }
    }
}

fn estimate_with_noise(
    kind: NoiseKind,
    class: &ClassSpec,
    sample: &DataSample,
    map: &IndexMap,
    trials: usize,
    stream: &RngStream,
    ascent: Option<&AscentConfig>,
) -> Result<McEstimate> {
    class.validate()?;
    check_trials(trials)?;
    check_sample(sample, map)?;
    if let (ClassSpec::Composite(_), None) = (class, ascent) {
        return Err(invalid(
            "ascent",
            "composite classes require an ascent configuration",
        ));
    }
    if let Some(cfg) = ascent {
        cfg.validate()?;
    }
    run_trials(trials, stream, |rng| {
        let noise = sample_noise(kind, rng, map);
        draw_supremum(class, &noise, sample, map, ascent, rng)
    })
}

/// Monte Carlo estimate of `R_I(F, x) = (1/N) E sup_f Σ_t Σ_{i∈I_t} ε_{ti} f_t(x_i)`.
///
/// Exact per draw for the linear classes; for composite classes every draw
/// contributes the ascent value, a lower estimate of the true supremum.
pub fn estimate_r(
    class: &ClassSpec,
    sample: &DataSample,
    map: &IndexMap,
    trials: usize,
    stream: &RngStream,
    ascent: Option<&AscentConfig>,
) -> Result<McEstimate> {
    let raw = estimate_with_noise(
        NoiseKind::Rademacher,
        class,
        sample,
        map,
        trials,
        stream,
        ascent,
    )?;
    Ok(raw.scaled(1.0 / sample.len() as f64))
}

/// `estimate_r` for the composite class.
pub fn estimate_composite_r(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
    trials: usize,
    config: &AscentConfig,
    stream: &RngStream,
) -> Result<McEstimate> {
    estimate_r(
        &ClassSpec::Composite(*spec),
        sample,
        map,
        trials,
        stream,
        Some(config),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWidth {
    /// `E sup_f Σ_t Σ_{i∈I_t} γ_{ti} f_t(x_i)`
    pub unnormalized: McEstimate,
    /// The same divided by `N`.
    pub normalized: McEstimate,
}

pub fn estimate_gaussian_width(
    class: &ClassSpec,
    sample: &DataSample,
    map: &IndexMap,
    trials: usize,
    stream: &RngStream,
    ascent: Option<&AscentConfig>,
) -> Result<GaussianWidth> {
    let raw = estimate_with_noise(
        NoiseKind::Gaussian,
        class,
        sample,
        map,
        trials,
        stream,
        ascent,
    )?;
    Ok(GaussianWidth {
        unnormalized: raw,
        normalized: raw.scaled(1.0 / sample.len() as f64),
    })
}

/// Gaussian width of the hidden-layer image `Y = {W x : W in the ball}`
/// `⊂ R^{KN}`: `E sup_W Σ_k ⟨w_k, Σ_i γ_{ki} x_i⟩`, exact per draw.
pub fn estimate_hidden_width(
    spec: &CompositeSpec,
    sample: &DataSample,
    trials: usize,
    stream: &RngStream,
) -> Result<McEstimate> {
    spec.validate()?;
    check_trials(trials)?;
    let d = sample.dim();
    run_trials(trials, stream, |rng| {
        let mut g = vec![0.0; d];
        let row_norms: Vec<f64> = (0..spec.k)
            .map(|_| {
                g.iter_mut().for_each(|v| *v = 0.0);
                for x in sample.iter() {
                    let gamma: f64 = rng.sample(StandardNormal);
                    axpy(gamma, x, &mut g);
                }
                norm(&g)
            })
            .collect();
        Ok(spec.w_norm.dual_sup(spec.b, &row_norms))
    })
}

/// Exact `R_I(F, x)` for a linear class by enumerating all `2^M` sign
/// patterns.
pub fn exact_r(
    class: &ClassSpec,
    sample: &DataSample,
    map: &IndexMap,
    max_support: usize,
) -> Result<f64> {
    if !class.is_linear() {
        return Err(Error::UnsupportedClass(
            "exact enumeration needs a closed-form supremum",
        ));
    }
    class.validate()?;
    check_sample(sample, map)?;
    let m = map.support();
    if m > max_support || m > 62 {
        return Err(Error::SupportTooLarge {
            support: m,
            cap: max_support.min(62),
        });
    }
    let total = enumerate_patterns(m, |pattern| {
        let noise = NoiseMatrix::from_pattern(map, pattern);
        let v = component_sums(sample, map, &noise)?;
        match class {
            ClassSpec::MixedNorm(s) => Ok(sup_mixed_norm_from_sums(s, &v)),
            ClassSpec::TraceNorm(s) => sup_trace_norm_from_sums(s, &v),
            ClassSpec::Composite(_) => unreachable!("rejected above"),
        }
    })?;
    Ok(total / sample.len() as f64)
}

/// Mean of `f(pattern)` over all `2^bits` patterns, reduced in a fixed order.
pub(crate) fn enumerate_patterns<F>(bits: usize, f: F) -> Result<f64>
where
    F: Fn(u64) -> Result<f64> + Sync,
{
    const CHUNK: u64 = 4096;
    let count = 1u64 << bits;
    let chunks = count.div_ceil(CHUNK);
    let partial = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = 0.0;
            for p in (c * CHUNK)..((c + 1) * CHUNK).min(count) {
                acc += f(p)?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(partial.iter().sum::<f64>() / count as f64)
}

/// Outcome of the ascent for one draw.
#[derive(Debug, Clone)]
pub struct AscentResult {
    /// `a · J(W*)` at the best feasible `W*` found.
    pub value: f64,
    pub w: Matrix,
}

/// Unit-`a` objective `J(W) = Σ_t ‖Σ_{i∈I_t} ξ_{ti} φ(W x_i)‖`.
fn objective(
    spec: &CompositeSpec,
    w: &Matrix,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<f64> {
    let h = hidden_features(spec, w, sample)?;
    Ok(hidden_sum_norms(&h, noise, map).iter().sum())
}

/// Subgradient of `J` with respect to `W`.
fn objective_gradient(
    spec: &CompositeSpec,
    w: &Matrix,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
) -> Matrix {
    let k = w.rows();
    let pre: Vec<Vec<f64>> = sample.iter().map(|x| w.matvec(x)).collect();
    let act = spec.activation;
    // coefficient of φ(z_i) in the directional derivative, per example
    let mut coef = vec![vec![0.0; k]; sample.len()];
    let mut s = vec![0.0; k];
    for (t, subset) in map.subsets().iter().enumerate() {
        s.iter_mut().for_each(|v| *v = 0.0);
        for (&i, &e) in subset.iter().zip(noise.row(t)) {
            for (sk, zk) in s.iter_mut().zip(&pre[i]) {
                *sk += e * act.eval(*zk);
            }
        }
        let ns = norm(&s);
        if ns == 0.0 {
            continue;
        }
        for (&i, &e) in subset.iter().zip(noise.row(t)) {
            for (c, sk) in coef[i].iter_mut().zip(&s) {
                *c += e * sk / ns;
            }
        }
    }
    let mut grad = Matrix::zeros(k, w.cols());
    for (i, x) in sample.iter().enumerate() {
        for r in 0..k {
            let g = coef[i][r] * act.derivative(pre[i][r]);
            if g != 0.0 {
                axpy(g, x, grad.row_mut(r));
            }
        }
    }
    grad
}

fn fd_gradient(
    spec: &CompositeSpec,
    w: &Matrix,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<Matrix> {
    const H: f64 = 1e-6;
    let mut grad = Matrix::zeros(w.rows(), w.cols());
    let mut probe = w.clone();
    for r in 0..w.rows() {
        for c in 0..w.cols() {
            let orig = probe[(r, c)];
            probe[(r, c)] = orig + H;
            let up = objective(spec, &probe, noise, sample, map)?;
            probe[(r, c)] = orig - H;
            let down = objective(spec, &probe, noise, sample, map)?;
            probe[(r, c)] = orig;
            grad[(r, c)] = (up - down) / (2.0 * H);
        }
    }
    Ok(grad)
}

/// Matrix with every row equal to the top eigenvector of `Ĉ`, projected onto
/// the ball.
fn spectral_start(spec: &CompositeSpec, sample: &DataSample) -> Result<Matrix> {
    let u = top_eigenvector(&empirical_covariance(sample))?;
    let mut w = Matrix::zeros(spec.k, sample.dim());
    for r in 0..spec.k {
        for (c, ui) in u.iter().enumerate() {
            w[(r, c)] = spec.b * ui;
        }
    }
    Ok(project_w(spec.w_norm, spec.b, &w))
}

/// Gaussian direction scaled to a uniform fraction of the ball radius.
fn random_start(spec: &CompositeSpec, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..spec.k * d)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut w = Matrix::from_vec(spec.k, d, data).expect("shape matches");
    let n = spec.w_norm.norm_of(&w);
    let frac: f64 = rng.random_range(0.0..=1.0);
    if n > 0.0 {
        w.scale(spec.b * frac / n);
    }
    project_w(spec.w_norm, spec.b, &w)
}

/// Projected (sub)gradient ascent over the `W` ball for one draw.
///
/// Restart 0 starts from the spectral warm start, the others from random
/// points of the ball drawn from `rng` in restart order. Steps are
/// normalized gradient steps of length `step / √(1 + s/10)`. The returned
/// value is attained at a feasible point.
pub fn composite_ascent(
    spec: &CompositeSpec,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
    config: &AscentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AscentResult> {
    spec.validate()?;
    config.validate()?;
    check_sample(sample, map)?;
    let step = config.step_for(spec);
    let mut best_j = f64::NEG_INFINITY;
    let mut best_w = Matrix::zeros(spec.k, sample.dim());
    for restart in 0..config.restarts {
        let mut w = if restart == 0 {
            spectral_start(spec, sample)?
        } else {
            random_start(spec, sample.dim(), rng)
        };
        let mut j = objective(spec, &w, noise, sample, map)?;
        if j > best_j {
            best_j = j;
            best_w = w.clone();
        }
        if spec.b == 0.0 {
            continue;
        }
        for s in 0..config.steps {
            let g = if config.finite_difference {
                fd_gradient(spec, &w, noise, sample, map)?
            } else {
                objective_gradient(spec, &w, noise, sample, map)
            };
            let gn = g.frobenius();
            if gn == 0.0 || !gn.is_finite() {
                break;
            }
            let eta = step / (1.0 + s as f64 / 10.0).sqrt() / gn;
            let mut next = w.clone();
            for (r, c) in (0..w.rows()).flat_map(|r| (0..w.cols()).map(move |c| (r, c))) {
                next[(r, c)] += eta * g[(r, c)];
            }
            w = project_w(spec.w_norm, spec.b, &next);
            j = objective(spec, &w, noise, sample, map)?;
            if j > best_j {
                best_j = j;
                best_w = w.clone();
            }
        }
    }
    Ok(AscentResult {
        value: spec.a * best_j.max(0.0),
        w: best_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::{Activation, HiddenNorm, MixedNormSpec, TraceNormSpec};
    use crate::index_map::{make_mc, make_mt};

    fn orthonormal_pair() -> DataSample {
        DataSample::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    fn w2inf(b: f64) -> ClassSpec {
        ClassSpec::MixedNorm(MixedNormSpec::new(f64::INFINITY, b).unwrap())
    }

    #[test]
    fn exact_orthonormal_cases() {
        let x = orthonormal_pair();
        let mt = make_mt(1, 2).unwrap();
        let r = exact_r(&w2inf(1.0), &x, &mt, DEFAULT_MAX_SUPPORT).unwrap();
        assert!((r - 2f64.sqrt() / 2.0).abs() < 1e-15);

        let mc = make_mc(2, 2).unwrap();
        let r = exact_r(&w2inf(1.0), &x, &mc, DEFAULT_MAX_SUPPORT).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);

        let singles = make_mt(2, 1).unwrap();
        let r = exact_r(&w2inf(1.0), &x, &singles, DEFAULT_MAX_SUPPORT).unwrap();
        assert!((r - 1.0).abs() < 1e-15);

        let tr = ClassSpec::TraceNorm(TraceNormSpec { b: 1.0 });
        let w22 = ClassSpec::MixedNorm(MixedNormSpec::new(2.0, 1.0).unwrap());
        assert_eq!(
            exact_r(&tr, &x, &mt, 20).unwrap(),
            exact_r(&w22, &x, &mt, 20).unwrap()
        );
    }

    #[test]
    fn exact_rejects_large_support() {
        let x = DataSample::new(vec![vec![1.0]; 21]).unwrap();
        let map = make_mc(1, 21).unwrap();
        let err = exact_r(&w2inf(1.0), &x, &map, DEFAULT_MAX_SUPPORT).unwrap_err();
        assert_eq!(
            err,
            Error::SupportTooLarge {
                support: 21,
                cap: 20
            }
        );
        assert!(err.to_string().contains("21") && err.to_string().contains("20"));
    }

    #[test]
    fn estimate_orthonormal_pair() {
        // every sign pattern gives √2, so the estimate is exact with zero spread
        let x = orthonormal_pair();
        let mt = make_mt(1, 2).unwrap();
        let e = estimate_r(&w2inf(1.0), &x, &mt, 200, &RngStream::new(3), None).unwrap();
        assert!((e.mean - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(e.stderr < 1e-12);
        let mc = make_mc(2, 2).unwrap();
        let e = estimate_r(&w2inf(1.0), &x, &mc, 200, &RngStream::new(3), None).unwrap();
        assert!((e.mean - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn estimate_zero_radius_and_errors() {
        let x = orthonormal_pair();
        let mt = make_mt(1, 2).unwrap();
        let e = estimate_r(&w2inf(0.0), &x, &mt, 10, &RngStream::new(1), None).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        assert!(estimate_r(&w2inf(1.0), &x, &mt, 1, &RngStream::new(1), None).is_err());
        let comp = ClassSpec::Composite(CompositeSpec {
            k: 1,
            w_norm: HiddenNorm::TwoTwo,
            b: 1.0,
            a: 1.0,
            activation: Activation::RELU,
        });
        assert!(estimate_r(&comp, &x, &mt, 10, &RngStream::new(1), None).is_err());
    }

    #[test]
    fn gaussian_width_half_normal() {
        let x = DataSample::new(vec![vec![1.0]]).unwrap();
        let map = make_mc(1, 1).unwrap();
        let class = ClassSpec::MixedNorm(MixedNormSpec::new(2.0, 1.0).unwrap());
        let g =
            estimate_gaussian_width(&class, &x, &map, 20_000, &RngStream::new(11), None).unwrap();
        let target = (2.0 / std::f64::consts::PI).sqrt();
        assert!((g.unnormalized.mean - target).abs() < 3.0 * g.unnormalized.stderr + 1e-3);
        let zero = ClassSpec::MixedNorm(MixedNormSpec::new(2.0, 0.0).unwrap());
        let g0 = estimate_gaussian_width(&zero, &x, &map, 10, &RngStream::new(1), None).unwrap();
        assert_eq!(g0.unnormalized.mean, 0.0);
    }

    fn scalar_composite(a: f64, b: f64) -> CompositeSpec {
        CompositeSpec {
            k: 1,
            w_norm: HiddenNorm::TwoTwo,
            b,
            a,
            activation: Activation::IDENTITY,
        }
    }

    #[test]
    fn composite_scalar_case_is_exact() {
        let x = DataSample::new(vec![vec![1.0]]).unwrap();
        let map = make_mc(1, 1).unwrap();
        let e = estimate_composite_r(
            &scalar_composite(1.0, 1.0),
            &x,
            &map,
            50,
            &AscentConfig::default(),
            &RngStream::new(5),
        )
        .unwrap();
        assert!((e.mean - 1.0).abs() < 1e-12);
        let z = estimate_composite_r(
            &scalar_composite(0.0, 1.0),
            &x,
            &map,
            10,
            &AscentConfig::default(),
            &RngStream::new(5),
        )
        .unwrap();
        assert_eq!(z.mean, 0.0);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let x = DataSample::new(vec![
            vec![0.3, -0.8, 0.5],
            vec![0.9, 0.1, -0.2],
            vec![-0.4, 0.4, 0.7],
        ])
        .unwrap();
        let map = make_mc(2, 3).unwrap();
        let spec = CompositeSpec {
            k: 2,
            w_norm: HiddenNorm::TwoTwo,
            b: 1.0,
            a: 1.0,
            activation: Activation::TANH,
        };
        let mut rng = RngStream::new(8).trial(0);
        let noise = sample_noise(NoiseKind::Gaussian, &mut rng, &map);
        let w = Matrix::from_rows(&[vec![0.2, -0.1, 0.4], vec![0.5, 0.3, -0.2]]).unwrap();
        let g = objective_gradient(&spec, &w, &noise, &x, &map);
        let fd = fd_gradient(&spec, &w, &noise, &x, &map).unwrap();
        assert!(g.sub(&fd).unwrap().frobenius() < 1e-6);
    }

    #[test]
    fn trials_independent_of_pool_size() {
        let x = DataSample::new(vec![vec![0.6, 0.8], vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let map = make_mc(2, 3).unwrap();
        let class = ClassSpec::TraceNorm(TraceNormSpec { b: 1.0 });
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_r(&class, &x, &map, 500, &RngStream::new(77), None).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
