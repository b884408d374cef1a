//! Function classes and their per-draw suprema.
//!
//! For a draw of `ε_{ti}` (or `γ_{ti}`) write `V_t = Σ_{i∈I_t} ε_{ti} x_i`.
//! Linear classes have closed-form suprema of `Σ_t ⟨w_t, V_t⟩` by norm
//! duality; the composite class `V ∘ φ ∘ W` has a closed form only for fixed
//! `W`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::index_map::IndexMap;
use crate::numerics::{axpy, norm, sigma_max, DataSample, Matrix, DEFAULT_REL_TOL};
use crate::rng::NoiseMatrix;

/// Feasibility slack for `W` against its ball.
pub const BALL_TOL: f64 = 1e-9;

/// `{W : ‖W‖_{2,p} ≤ B·T^{1/p}}`. `p = f64::INFINITY` is the `(2,∞)` ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedNormSpec {
    #[serde(with = "exponent")]
    pub p: f64,
    pub b: f64,
}

impl MixedNormSpec {
    pub fn new(p: f64, b: f64) -> Result<Self> {
        let s = MixedNormSpec { p, b };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_nan() || self.p < 1.0 {
            return Err(invalid("p", format!("must lie in [1, ∞], got {}", self.p)));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(invalid(
                "B",
                format!("must be finite and nonnegative, got {}", self.b),
            ));
        }
        Ok(())
    }

    /// Dual exponent `q` with `1/p + 1/q = 1`.
    pub fn q(&self) -> f64 {
        dual_exponent(self.p)
    }

    /// Radius `B·T^{1/p}` of the constraint on `‖W‖_{2,p}`.
    pub fn radius(&self, t: usize) -> f64 {
        if self.p.is_infinite() {
            self.b
        } else {
            self.b * (t as f64).powf(1.0 / self.p)
        }
    }
}

/// `p` as a JSON number, or the string `"inf"` for `∞`.
mod exponent {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(p),
            Raw::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
                other => other
                    .parse::<f64>()
                    .map_err(|_| de::Error::custom(format!("bad exponent `{t}`"))),
            },
        }
    }
}

pub fn dual_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `{W : ‖W‖_tr ≤ B√T}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceNormSpec {
    pub b: f64,
}

impl TraceNormSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(invalid(
                "B",
                format!("must be finite and nonnegative, got {}", self.b),
            ));
        }
        Ok(())
    }
}

/// Which mixed norm constrains the hidden-layer matrix `W : R^d → R^K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenNorm {
    /// `‖W‖_{2,∞} ≤ b_∞`
    #[serde(rename = "2inf")]
    TwoInf,
    /// `‖W‖_{2,2} ≤ b_2`
    #[serde(rename = "22")]
    TwoTwo,
    /// `‖W‖_{2,1} ≤ b_1`
    #[serde(rename = "21")]
    TwoOne,
}

impl HiddenNorm {
    pub fn label(self) -> &'static str {
        match self {
            HiddenNorm::TwoInf => "2inf",
            HiddenNorm::TwoTwo => "22",
            HiddenNorm::TwoOne => "21",
        }
    }

    /// `‖W‖_{2,·}` of a `K × d` matrix.
    pub fn norm_of(self, w: &Matrix) -> f64 {
        let rows = w.row_iter().map(norm);
        match self {
            HiddenNorm::TwoInf => rows.fold(0.0, f64::max),
            HiddenNorm::TwoTwo => w.frobenius(),
            HiddenNorm::TwoOne => rows.sum(),
        }
    }

    /// `sup_{W in ball(b)} Σ_k ⟨w_k, g_k⟩` given the row norms `‖g_k‖`.
    pub fn dual_sup(self, radius: f64, row_norms: &[f64]) -> f64 {
        let dual = match self {
            HiddenNorm::TwoInf => row_norms.iter().sum::<f64>(),
            HiddenNorm::TwoTwo => norm(row_norms),
            HiddenNorm::TwoOne => row_norms.iter().copied().fold(0.0, f64::max),
        };
        radius * dual
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Relu,
    Tanh,
}

/// Componentwise activation `s · base(x)` with `base(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Activation {
    pub kind: ActivationKind,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Activation {
    pub const IDENTITY: Activation = Activation {
        kind: ActivationKind::Identity,
        scale: 1.0,
    };
    pub const RELU: Activation = Activation {
        kind: ActivationKind::Relu,
        scale: 1.0,
    };
    pub const TANH: Activation = Activation {
        kind: ActivationKind::Tanh,
        scale: 1.0,
    };

    pub fn scaled(kind: ActivationKind, scale: f64) -> Self {
        Activation { kind, scale }
    }

    /// All three base maps are 1-Lipschitz.
    pub fn lipschitz(&self) -> f64 {
        self.scale.abs()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let base = match self.kind {
            ActivationKind::Identity => x,
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Tanh => x.tanh(),
        };
        self.scale * base
    }

    /// Derivative, with subgradient 0 at the ReLU kink.
    pub fn derivative(&self, x: f64) -> f64 {
        let base = match self.kind {
            ActivationKind::Identity => 1.0,
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Tanh => 1.0 - x.tanh().powi(2),
        };
        self.scale * base
    }
}

pub fn apply_activation(act: &Activation, v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| act.eval(x)).collect()
}

/// `{x ↦ V φ(W x) : ‖W‖_{2,·} ≤ b, ‖V‖_{2,∞} ≤ a}` with hidden width `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeSpec {
    pub k: usize,
    pub w_norm: HiddenNorm,
    pub b: f64,
    pub a: f64,
    pub activation: Activation,
}

impl CompositeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("K", "hidden width must be at least 1"));
        }
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(invalid(
                "a",
                format!("must be finite and nonnegative, got {}", self.a),
            ));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(invalid(
                "b",
                format!("must be finite and nonnegative, got {}", self.b),
            ));
        }
        if !(self.activation.scale.is_finite() && self.activation.scale >= 0.0) {
            return Err(invalid(
                "activation.scale",
                "must be finite and nonnegative",
            ));
        }
        Ok(())
    }

    pub fn lipschitz_phi(&self) -> f64 {
        self.activation.lipschitz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClassSpec {
    MixedNorm(MixedNormSpec),
    TraceNorm(TraceNormSpec),
    Composite(CompositeSpec),
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ClassSpec::MixedNorm(s) => s.validate(),
            ClassSpec::TraceNorm(s) => s.validate(),
            ClassSpec::Composite(s) => s.validate(),
        }
    }

    /// Short label used in reports, e.g. `W2p(p=3)`.
    pub fn label(&self) -> String {
        match self {
            ClassSpec::MixedNorm(s) if s.p.is_infinite() => "W2inf".to_string(),
            ClassSpec::MixedNorm(s) => format!("W2p(p={})", s.p),
            ClassSpec::TraceNorm(_) => "Wtr".to_string(),
            ClassSpec::Composite(s) => format!("V.phi.W{}", s.w_norm.label()),
        }
    }

    /// Whether the per-draw supremum has a closed form.
    pub fn is_linear(&self) -> bool {
        !matches!(self, ClassSpec::Composite(_))
    }
}

fn check_shapes(sample: &DataSample, map: &IndexMap, noise: &NoiseMatrix) -> Result<()> {
    if map.n_examples() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: map.n_examples(),
            found: sample.len(),
        });
    }
    if noise.t() != map.t() {
        return Err(Error::DimensionMismatch {
            expected: map.t(),
            found: noise.t(),
        });
    }
    for (t, s) in map.subsets().iter().enumerate() {
        if noise.row(t).len() != s.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                found: noise.row(t).len(),
            });
        }
    }
    Ok(())
}

/// Rows `V_t = Σ_{i∈I_t} ε_{ti} x_i` as a `T × d` matrix.
pub fn component_sums(sample: &DataSample, map: &IndexMap, noise: &NoiseMatrix) -> Result<Matrix> {
    check_shapes(sample, map, noise)?;
    let mut v = Matrix::zeros(map.t(), sample.dim());
    for (t, s) in map.subsets().iter().enumerate() {
        let row = v.row_mut(t);
        for (&i, &e) in s.iter().zip(noise.row(t)) {
            axpy(e, sample.x(i), row);
        }
    }
    Ok(v)
}

/// Power mean `(mean u^q)^{1/q}` of nonnegative values, scaled by the max so
/// that equal entries give the exact common value.
fn power_mean(u: &[f64], q: f64) -> f64 {
    let m = u.iter().copied().fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    if q.is_infinite() {
        return m;
    }
    let n = u.len() as f64;
    let mean = if q == 1.0 {
        u.iter().map(|x| x / m).sum::<f64>() / n
    } else if q == 2.0 {
        u.iter().map(|x| (x / m) * (x / m)).sum::<f64>() / n
    } else {
        u.iter().map(|x| (x / m).powf(q)).sum::<f64>() / n
    };
    if q == 1.0 {
        m * mean
    } else if q == 2.0 {
        m * mean.sqrt()
    } else {
        m * mean.powf(1.0 / q)
    }
}

/// `sup_{‖W‖_{2,p} ≤ B T^{1/p}} Σ_t ⟨w_t, V_t⟩ = B T^{1/p} ‖(‖V_t‖)_t‖_q`,
/// evaluated as `B · T · M_q(‖V_1‖, …, ‖V_T‖)`.
pub fn sup_mixed_norm(
    spec: &MixedNormSpec,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<f64> {
    spec.validate()?;
    let v = component_sums(sample, map, noise)?;
    Ok(sup_mixed_norm_from_sums(spec, &v))
}

pub(crate) fn sup_mixed_norm_from_sums(spec: &MixedNormSpec, v: &Matrix) -> f64 {
    if spec.b == 0.0 {
        return 0.0;
    }
    let u: Vec<f64> = v.row_iter().map(norm).collect();
    spec.b * v.rows() as f64 * power_mean(&u, spec.q())
}

/// `sup_{‖W‖_tr ≤ B√T} tr(WᵀD) = B √T ‖D‖_∞`, `D` having rows `V_t`.
pub fn sup_trace_norm(
    spec: &TraceNormSpec,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<f64> {
    spec.validate()?;
    let v = component_sums(sample, map, noise)?;
    sup_trace_norm_from_sums(spec, &v)
}

pub(crate) fn sup_trace_norm_from_sums(spec: &TraceNormSpec, v: &Matrix) -> Result<f64> {
    if spec.b == 0.0 {
        return Ok(0.0);
    }
    Ok(spec.b * (v.rows() as f64).sqrt() * sigma_max(v, DEFAULT_REL_TOL)?)
}

/// Hidden representations `h_i = φ(W x_i)`, one row per example.
pub fn hidden_features(spec: &CompositeSpec, w: &Matrix, sample: &DataSample) -> Result<Matrix> {
    if w.cols() != sample.dim() {
        return Err(Error::DimensionMismatch {
            expected: sample.dim(),
            found: w.cols(),
        });
    }
    let mut h = Matrix::zeros(sample.len(), w.rows());
    for (i, x) in sample.iter().enumerate() {
        let pre = w.matvec(x);
        h.row_mut(i)
            .copy_from_slice(&apply_activation(&spec.activation, &pre));
    }
    Ok(h)
}

pub fn check_feasible(spec: &CompositeSpec, w: &Matrix) -> Result<()> {
    if w.rows() != spec.k {
        return Err(Error::DimensionMismatch {
            expected: spec.k,
            found: w.rows(),
        });
    }
    let n = spec.w_norm.norm_of(w);
    if n > spec.b + BALL_TOL * spec.b.max(1.0) {
        return Err(Error::WOutsideBall {
            norm: n,
            radius: spec.b,
        });
    }
    Ok(())
}

/// `sup_{‖v_t‖ ≤ a} Σ_t ⟨v_t, Σ_{i∈I_t} ε_{ti} φ(W x_i)⟩
///  = a Σ_t ‖Σ_{i∈I_t} ε_{ti} φ(W x_i)‖` for a fixed feasible `W`.
pub fn sup_composite_given_w(
    spec: &CompositeSpec,
    w: &Matrix,
    noise: &NoiseMatrix,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<f64> {
    spec.validate()?;
    check_feasible(spec, w)?;
    check_shapes(sample, map, noise)?;
    if spec.a == 0.0 {
        return Ok(0.0);
    }
    let h = hidden_features(spec, w, sample)?;
    Ok(spec.a * hidden_sum_norms(&h, noise, map).iter().sum::<f64>())
}

/// `‖Σ_{i∈I_t} ε_{ti} h_i‖` for each `t`.
pub(crate) fn hidden_sum_norms(h: &Matrix, noise: &NoiseMatrix, map: &IndexMap) -> Vec<f64> {
    let mut acc = vec![0.0; h.cols()];
    map.subsets()
        .iter()
        .enumerate()
        .map(|(t, s)| {
            acc.iter_mut().for_each(|x| *x = 0.0);
            for (&i, &e) in s.iter().zip(noise.row(t)) {
                axpy(e, h.row(i), &mut acc);
            }
            norm(&acc)
        })
        .collect()
}

/// Euclidean projection onto `{W : ‖W‖_{2,·} ≤ b}`.
pub fn project_w(w_norm: HiddenNorm, b: f64, w: &Matrix) -> Matrix {
    let mut out = w.clone();
    match w_norm {
        HiddenNorm::TwoInf => {
            for k in 0..out.rows() {
                let row = out.row_mut(k);
                let n = norm(row);
                if n > b {
                    let s = if n > 0.0 { b / n } else { 0.0 };
                    row.iter_mut().for_each(|x| *x *= s);
                }
            }
        }
        HiddenNorm::TwoTwo => {
            let n = out.frobenius();
            if n > b {
                out.scale(b / n);
            }
        }
        HiddenNorm::TwoOne => {
            let r: Vec<f64> = out.row_iter().map(norm).collect();
            if r.iter().sum::<f64>() > b {
                let tau = simplex_threshold(&r, b);
                for (k, &rk) in r.iter().enumerate() {
                    let target = (rk - tau).max(0.0);
                    let s = if rk > 0.0 { target / rk } else { 0.0 };
                    out.row_mut(k).iter_mut().for_each(|x| *x *= s);
                }
            }
        }
    }
    out
}

/// Threshold `τ ≥ 0` with `Σ_k max(r_k − τ, 0) = b` for nonnegative `r`
/// whose sum exceeds `b`.
fn simplex_threshold(r: &[f64], b: f64) -> f64 {
    let mut sorted = r.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let cand = (cumsum - b) / (j + 1) as f64;
        if v - cand > 0.0 {
            tau = cand;
        } else {
            break;
        }
    }
    tau.max(0.0)
}
