//! Numeric checks of the inequalities the complexity bounds are built from.
//!
//! Exact checks enumerate every sign pattern; the remaining ones are Monte
//! Carlo with a `3·stderr` band.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bounds::{chain_rule_components, component_mass};
use crate::classes::{apply_activation, component_sums, hidden_features, project_w, CompositeSpec};
use crate::error::{invalid, Error, Result};
use crate::estimators::{enumerate_patterns, estimate_hidden_width, run_trials};
use crate::index_map::{make_mc, IndexMap};
use crate::numerics::{
    add_outer, dot, lambda_max, min_eigenvalue, norm, sigma_max, DataSample, Matrix,
    DEFAULT_REL_TOL,
};
use crate::rng::{sample_noise, NoiseKind, NoiseMatrix, RngStream};

/// Absolute tolerance on the smallest eigenvalue of a PSD gap.
pub const PSD_TOL: f64 = 1e-9;
/// Band width, in standard errors, for Monte Carlo comparisons.
pub const MC_BAND: f64 = 3.0;

/// Result of an inequality check `lhs ≤ rhs` (or `≥`, per `name`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Standard error of the Monte Carlo side, if any.
    pub stderr: Option<f64>,
    pub passed: bool,
}

impl CheckOutcome {
    fn upper(name: impl Into<String>, lhs: f64, rhs: f64, stderr: Option<f64>, slack: f64) -> Self {
        let band = stderr.map_or(0.0, |s| MC_BAND * s);
        CheckOutcome {
            name: name.into(),
            lhs,
            rhs,
            stderr,
            passed: lhs - band <= rhs + slack,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdCheckResult {
    pub min_eigenvalue_of_gap: f64,
    pub passed: bool,
    pub instance: String,
}

pub fn double_factorial(p: u32) -> Result<u64> {
    if p < 1 {
        return Err(invalid("p", "must be at least 1"));
    }
    Ok((1..=p as u64).map(|i| 2 * i - 1).product())
}

/// Exact left and right sides of `E[Q_V^p] ≼ (2p−1)!! α^{p−1} E[Q_V]` for
/// `V = Σ_i ε_i x_i`, `α = Σ_i ‖x_i‖²`.
pub fn subexp_sides(sample: &DataSample, p: u32) -> Result<(Matrix, Matrix)> {
    let n = sample.len();
    let d = sample.dim();
    if n > 24 {
        return Err(Error::InstanceTooLarge(format!("n = {n} sign variables")));
    }
    let df = double_factorial(p)? as f64;
    let alpha: f64 = sample.squared_norms().iter().sum();
    let mut lhs = Matrix::zeros(d, d);
    let count = 1u64 << n;
    let mut v = vec![0.0; d];
    for pattern in 0..count {
        v.iter_mut().for_each(|x| *x = 0.0);
        for (i, x) in sample.iter().enumerate() {
            let s = if (pattern >> i) & 1 == 1 { 1.0 } else { -1.0 };
            crate::numerics::axpy(s, x, &mut v);
        }
        // Q_V^p = ‖V‖^{2(p−1)} V Vᵀ
        let w = dot(&v, &v).powi(p as i32 - 1);
        add_outer(&mut lhs, w, &v);
    }
    lhs.scale(1.0 / count as f64);
    let mut rhs = Matrix::zeros(d, d);
    for x in sample.iter() {
        add_outer(&mut rhs, 1.0, x);
    }
    rhs.scale(df * alpha.powi(p as i32 - 1));
    Ok((lhs, rhs))
}

pub fn check_subexp_lemma(sample: &DataSample, p: u32, max_n: usize) -> Result<PsdCheckResult> {
    if sample.len() > max_n || sample.dim() > 6 || p > 4 {
        return Err(Error::InstanceTooLarge(format!(
            "n = {} (max {max_n}), d = {} (max 6), p = {p} (max 4)",
            sample.len(),
            sample.dim()
        )));
    }
    let (lhs, rhs) = subexp_sides(sample, p)?;
    let gap = rhs.sub(&lhs)?;
    let min_eig = min_eigenvalue(&gap)?;
    Ok(PsdCheckResult {
        min_eigenvalue_of_gap: min_eig,
        passed: min_eig >= -PSD_TOL,
        instance: format!("n={} d={} p={p}", sample.len(), sample.dim()),
    })
}

/// `E‖Σ_i ε_i x_i‖ ≥ (1/√2) √(Σ_i ‖x_i‖²)`; exact for `n ≤ 20`, otherwise
/// Monte Carlo.
pub fn check_szarek_lower(sample: &DataSample) -> Result<CheckOutcome> {
    let n = sample.len();
    let map = make_mc(1, n)?;
    let rhs = (sample.squared_norms().iter().sum::<f64>() / 2.0).sqrt();
    let norm_of = |noise: &NoiseMatrix| -> Result<f64> {
        Ok(norm(component_sums(sample, &map, noise)?.row(0)))
    };
    let (lhs, stderr) = if n <= 20 {
        let lhs = enumerate_patterns(n, |pattern| {
            norm_of(&NoiseMatrix::from_pattern(&map, pattern))
        })?;
        (lhs, None)
    } else {
        let est = run_trials(10_000, &RngStream::new(0x5A3E), |rng| {
            norm_of(&sample_noise(NoiseKind::Rademacher, rng, &map))
        })?;
        (est.mean, Some(est.stderr))
    };
    let band = stderr.map_or(0.0, |s| MC_BAND * s);
    Ok(CheckOutcome {
        name: "szarek_lower".into(),
        lhs,
        rhs,
        stderr,
        passed: lhs + band >= rhs * (1.0 - 1e-12),
    })
}

/// `h(z) = max_j (⟨g_j, z⟩ + c_j)`; its Lipschitz constant is `max_j ‖g_j‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxAffine {
    pub slopes: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl MaxAffine {
    pub fn new(slopes: Vec<Vec<f64>>, offsets: Vec<f64>) -> Result<Self> {
        if slopes.is_empty() || slopes.len() != offsets.len() {
            return Err(invalid("slopes", "need one offset per slope, at least one"));
        }
        Ok(MaxAffine { slopes, offsets })
    }

    /// Zero function on `R^t`.
    pub fn zero(t: usize) -> Self {
        MaxAffine {
            slopes: vec![vec![0.0; t]],
            offsets: vec![0.0],
        }
    }

    /// Random pieces with gradient norms at most `lipschitz`.
    pub fn random<R: Rng + ?Sized>(t: usize, pieces: usize, lipschitz: f64, rng: &mut R) -> Self {
        let slopes = (0..pieces)
            .map(|_| {
                let g: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm(&g).max(f64::MIN_POSITIVE);
                let r = lipschitz * rng.random_range(0.0..=1.0);
                g.iter().map(|v| v / n * r).collect()
            })
            .collect();
        let offsets = (0..pieces).map(|_| rng.random_range(-1.0..1.0)).collect();
        MaxAffine { slopes, offsets }
    }

    pub fn lipschitz(&self) -> f64 {
        self.slopes.iter().map(|g| norm(g)).fold(0.0, f64::max)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.slopes
            .iter()
            .zip(&self.offsets)
            .map(|(g, c)| dot(g, z) + c)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A finite class of linear maps `x ↦ W x`, `W : R^d → R^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLinearClass {
    pub maps: Vec<Matrix>,
}

impl FiniteLinearClass {
    pub fn new(maps: Vec<Matrix>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| invalid("class", "empty class"))?;
        let (t, d) = (first.rows(), first.cols());
        if maps.iter().any(|m| m.rows() != t || m.cols() != d) {
            return Err(invalid("class", "maps must share their shape"));
        }
        Ok(FiniteLinearClass { maps })
    }

    pub fn outputs(&self) -> usize {
        self.maps[0].rows()
    }
}

/// Vector contraction: `E sup_f Σ_i ε_i h_i(f(x_i)) ≤ √2 L E sup_f Σ_{t,i} ε_{ti} f_t(x_i)`,
/// both sides by exact enumeration.
pub fn check_contraction(
    sample: &DataSample,
    lipschitz_fns: &[MaxAffine],
    class: &FiniteLinearClass,
    max_support: usize,
) -> Result<CheckOutcome> {
    let n = sample.len();
    let t = class.outputs();
    if lipschitz_fns.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: lipschitz_fns.len(),
        });
    }
    if class.maps[0].cols() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: class.maps[0].cols(),
        });
    }
    let support = n * t;
    if support > max_support || n > max_support {
        return Err(Error::SupportTooLarge {
            support,
            cap: max_support,
        });
    }
    // f(x_i) for every map and example
    let outputs: Vec<Vec<Vec<f64>>> = class
        .maps
        .iter()
        .map(|w| sample.iter().map(|x| w.matvec(x)).collect())
        .collect();
    let loss: Vec<Vec<f64>> = outputs
        .iter()
        .map(|fx| {
            fx.iter()
                .zip(lipschitz_fns)
                .map(|(z, h)| h.eval(z))
                .collect()
        })
        .collect();
    let lhs = enumerate_patterns(n, |pattern| {
        Ok(loss
            .iter()
            .map(|li| {
                li.iter()
                    .enumerate()
                    .map(|(i, v)| if (pattern >> i) & 1 == 1 { *v } else { -*v })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max))
    })?;
    let rhs = enumerate_patterns(support, |pattern| {
        Ok(outputs
            .iter()
            .map(|fx| {
                let mut s = 0.0;
                for (i, z) in fx.iter().enumerate() {
                    for (k, zk) in z.iter().enumerate() {
                        let bit = i * t + k;
                        s += if (pattern >> bit) & 1 == 1 { *zk } else { -*zk };
                    }
                }
                s
            })
            .fold(f64::NEG_INFINITY, f64::max))
    })?;
    let lip = lipschitz_fns
        .iter()
        .map(MaxAffine::lipschitz)
        .fold(0.0, f64::max);
    let bound = std::f64::consts::SQRT_2 * lip * rhs;
    Ok(CheckOutcome {
        name: "contraction".into(),
        lhs,
        rhs: bound,
        stderr: None,
        passed: lhs <= bound + 1e-9,
    })
}

/// Operator Bernstein-type bound for `A_t = Q_{V_t}`, `V_t = Σ_{i∈I_t} ε_{ti} x_i`:
/// `√(E‖Σ_t A_t‖) ≤ √‖E Σ_t A_t‖ + √(R (ln d + 1))`, `R = 2 max_t α_t`.
pub fn check_main_tool(
    sample: &DataSample,
    map: &IndexMap,
    trials: usize,
    stream: &RngStream,
) -> Result<CheckOutcome> {
    if trials < 100 {
        return Err(invalid("trials", "need at least 100"));
    }
    let est = run_trials(trials, stream, |rng| {
        let noise = sample_noise(NoiseKind::Rademacher, rng, map);
        let d = component_sums(sample, map, &noise)?;
        Ok(sigma_max(&d, DEFAULT_REL_TOL)?.powi(2))
    })?;
    let lhs = est.mean.sqrt();
    let stderr = if est.mean > 0.0 {
        est.stderr / (2.0 * lhs)
    } else {
        0.0
    };
    let dim = sample.dim();
    let mut expected = Matrix::zeros(dim, dim);
    for s in map.subsets() {
        for &i in s {
            add_outer(&mut expected, 1.0, sample.x(i));
        }
    }
    let r = 2.0 * component_mass(sample, map).into_iter().fold(0.0, f64::max);
    let rhs =
        lambda_max(&expected, DEFAULT_REL_TOL)?.sqrt() + (r * ((dim as f64).ln() + 1.0)).sqrt();
    Ok(CheckOutcome::upper(
        "main_tool",
        lhs,
        rhs,
        Some(stderr),
        1e-12 * rhs,
    ))
}

/// Monte Carlo `G(Wx)` against its closed-form bound.
pub fn check_gaussian_width_component(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
    trials: usize,
    stream: &RngStream,
) -> Result<CheckOutcome> {
    let bound = chain_rule_components(spec, sample, map)?.gwidth_y;
    let est = estimate_hidden_width(spec, sample, trials, stream)?;
    Ok(CheckOutcome::upper(
        "gaussian_width_G(Y)",
        est.mean,
        bound,
        Some(est.stderr),
        1e-12 * bound,
    ))
}

/// Random feasible `W`: a Gaussian direction pushed to the boundary of the
/// ball, then shrunk by a uniform factor half of the time.
fn random_feasible<R: Rng + ?Sized>(spec: &CompositeSpec, d: usize, rng: &mut R) -> Matrix {
    let data = (0..spec.k * d)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let mut w = Matrix::from_vec(spec.k, d, data).expect("shape matches");
    let n = spec.w_norm.norm_of(&w);
    let shrink: f64 = if rng.random::<bool>() {
        1.0
    } else {
        rng.random_range(0.0..=1.0)
    };
    if n > 0.0 {
        w.scale(spec.b * shrink / n);
    }
    project_w(spec.w_norm, spec.b, &w)
}

/// `W x` flattened over `(k, i)`.
fn image(w: &Matrix, sample: &DataSample) -> Vec<f64> {
    sample.iter().flat_map(|x| w.matvec(x)).collect()
}

/// Largest `‖W x − W′ x‖` over sampled feasible pairs (including antipodal
/// ones) against the diameter bound.
pub fn check_diameter_component(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
    pairs: usize,
    stream: &RngStream,
) -> Result<CheckOutcome> {
    let bound = chain_rule_components(spec, sample, map)?.diameter_y;
    let mut rng = stream.rng();
    let mut worst = 0.0f64;
    for k in 0..pairs {
        let w1 = random_feasible(spec, sample.dim(), &mut rng);
        let w2 = if k % 2 == 0 {
            let mut m = w1.clone();
            m.scale(-1.0);
            m
        } else {
            random_feasible(spec, sample.dim(), &mut rng)
        };
        let y1 = image(&w1, sample);
        let y2 = image(&w2, sample);
        let dist = norm(&y1.iter().zip(&y2).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(dist);
    }
    Ok(CheckOutcome::upper(
        "diameter_D(Y)",
        worst,
        bound,
        None,
        1e-9 * bound.max(1.0),
    ))
}

/// `f_V(y) = (⟨v_t, φ(y_i)⟩)_{t, i∈I_t}` for hidden features `φ(y_i)` given as
/// rows.
fn readout(v: &Matrix, features: &Matrix, map: &IndexMap) -> Vec<f64> {
    map.subsets()
        .iter()
        .enumerate()
        .flat_map(|(t, s)| s.iter().map(move |&i| dot(v.row(t), features.row(i))))
        .collect()
}

fn random_readout<R: Rng + ?Sized>(t: usize, k: usize, a: f64, rng: &mut R) -> Matrix {
    let mut v = Matrix::zeros(t, k);
    for r in 0..t {
        let g: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g).max(f64::MIN_POSITIVE);
        let len = a * rng.random_range(0.5..=1.0);
        v.row_mut(r)
            .iter_mut()
            .zip(&g)
            .for_each(|(dst, gi)| *dst = gi / n * len);
    }
    v
}

/// Largest sampled `‖f(y) − f(y′)‖ / ‖y − y′‖` against `L(F)`.
pub fn check_lipschitz_component(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
    pairs: usize,
    stream: &RngStream,
) -> Result<CheckOutcome> {
    let bound = chain_rule_components(spec, sample, map)?.lipschitz_f;
    let mut rng = stream.rng();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let w1 = random_feasible(spec, sample.dim(), &mut rng);
        let w2 = random_feasible(spec, sample.dim(), &mut rng);
        let v = random_readout(map.t(), spec.k, spec.a, &mut rng);
        let f1 = readout(&v, &hidden_features(spec, &w1, sample)?, map);
        let f2 = readout(&v, &hidden_features(spec, &w2, sample)?, map);
        let dy = norm(
            &image(&w1, sample)
                .iter()
                .zip(image(&w2, sample))
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if dy == 0.0 {
            continue;
        }
        let df = norm(&f1.iter().zip(&f2).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(df / dy);
    }
    Ok(CheckOutcome::upper(
        "lipschitz_L(F)",
        worst,
        bound,
        None,
        1e-9 * bound.max(1.0),
    ))
}

/// For sampled pairs `(y, y′)`, the Monte Carlo quotient
/// `E sup_v ⟨γ, f_v(y) − f_v(y′)⟩ / ‖y − y′‖
///  = a E Σ_t ‖Σ_{i∈I_t} γ_{ti} (φ(y_i) − φ(y′_i))‖ / ‖y − y′‖`
/// against `Q(F)`; reports the pair with the largest quotient.
pub fn check_q_component(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
    pairs: usize,
    trials: usize,
    stream: &RngStream,
) -> Result<CheckOutcome> {
    let bound = chain_rule_components(spec, sample, map)?.q_f;
    let mut rng = stream.rng();
    let mut worst = (0.0f64, 0.0f64);
    for pair in 0..pairs {
        let w1 = random_feasible(spec, sample.dim(), &mut rng);
        let w2 = random_feasible(spec, sample.dim(), &mut rng);
        let h1 = hidden_features(spec, &w1, sample)?;
        let h2 = hidden_features(spec, &w2, sample)?;
        let diff = h1.sub(&h2)?;
        let dy = norm(
            &image(&w1, sample)
                .iter()
                .zip(image(&w2, sample))
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>(),
        );
        if dy == 0.0 {
            continue;
        }
        let est = run_trials(
            trials,
            &stream.derive(pair as u64 + 1),
            |trng: &mut ChaCha8Rng| {
                let noise = sample_noise(NoiseKind::Gaussian, trng, map);
                let total: f64 = crate::classes::hidden_sum_norms(&diff, &noise, map)
                    .iter()
                    .sum();
                Ok(spec.a * total / dy)
            },
        )?;
        if est.mean > worst.0 {
            worst = (est.mean, est.stderr);
        }
    }
    Ok(CheckOutcome::upper(
        "quotient_Q(F)",
        worst.0,
        bound,
        Some(worst.1),
        1e-9 * bound.max(1.0),
    ))
}

/// Empirical Lipschitz ratio of an activation on random pairs.
pub fn activation_lipschitz_ratio<R: Rng + ?Sized>(
    act: &crate::classes::Activation,
    dim: usize,
    pairs: usize,
    rng: &mut R,
) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let du = norm(&u.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        if du == 0.0 {
            continue;
        }
        let fu = apply_activation(act, &u);
        let fv = apply_activation(act, &v);
        let df = norm(&fu.iter().zip(&fv).map(|(a, b)| a - b).collect::<Vec<_>>());
        worst = worst.max(df / du);
    }
    worst
}
