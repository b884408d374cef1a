//! Closed-form complexity bounds with per-term breakdowns.
//!
//! Notation: `α_t = Σ_{i∈I_t} ‖x_i‖² = |I_t| tr(Ĉ_t)`, `n = N/T`, and
//! `θ = θ_I` from the index map.

use serde::{Deserialize, Serialize};

use crate::classes::{dual_exponent, CompositeSpec, HiddenNorm, MixedNormSpec, TraceNormSpec};
use crate::error::{invalid, Error, Result};
use crate::index_map::{IndexKind, IndexMap};
use crate::numerics::{
    add_outer, empirical_covariance, lambda_max, DataSample, Matrix, DEFAULT_REL_TOL,
};

/// Unit-norm tolerance for the bounds that assume `‖x_i‖ = 1`.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    /// Additive terms; `value` is their sum.
    pub terms: Vec<(String, f64)>,
    pub constants_used: Vec<(String, f64)>,
    pub preconditions_checked: Vec<(String, bool)>,
    /// The universal constants were not supplied by theory and carry
    /// placeholder values.
    pub nominal_constants: bool,
    /// Equivalent closed forms valid in special cases (e.g. unit-norm data
    /// with multi-task or multi-category maps).
    pub alternate_forms: Vec<(String, f64)>,
}

impl BoundReport {
    fn new(name: &str, terms: Vec<(String, f64)>) -> Self {
        BoundReport {
            name: name.to_string(),
            value: terms.iter().map(|(_, v)| v).sum(),
            terms,
            constants_used: Vec::new(),
            preconditions_checked: Vec::new(),
            nominal_constants: false,
            alternate_forms: Vec::new(),
        }
    }

    fn single(name: &str, value: f64) -> Self {
        Self::new(name, vec![(name.to_string(), value)])
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn alternate(&self, name: &str) -> Option<f64> {
        self.alternate_forms
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

fn check_sizes(sample: &DataSample, map: &IndexMap) -> Result<()> {
    if sample.len() != map.n_examples() {
        return Err(Error::DimensionMismatch {
            expected: map.n_examples(),
            found: sample.len(),
        });
    }
    Ok(())
}

/// `α_t` for every component.
pub fn component_mass(sample: &DataSample, map: &IndexMap) -> Vec<f64> {
    map.subsets()
        .iter()
        .map(|s| sample.squared_norm_sum(s))
        .collect()
}

fn is_unit_norm(sample: &DataSample) -> bool {
    sample.check_unit_norm(UNIT_NORM_TOL).is_ok()
}

fn is_mc_or_mt(map: &IndexMap) -> bool {
    matches!(map.kind(), IndexKind::MultiCategory | IndexKind::MultiTask)
}

fn require_large_p(spec: &MixedNormSpec) -> Result<()> {
    spec.validate()?;
    if spec.p < 2.0 {
        return Err(invalid(
            "p",
            format!("p = {} < 2; use bound_mixed_small_p", spec.p),
        ));
    }
    Ok(())
}

/// Upper bound for `W_{2,p}`, `p ∈ [2, ∞]`:
/// `(B√T/N) √(Σ_t |I_t| tr(Ĉ_t))`.
pub fn bound_mixed_upper(
    spec: &MixedNormSpec,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<BoundReport> {
    require_large_p(spec)?;
    check_sizes(sample, map)?;
    let t = map.t() as f64;
    let n_total = sample.len() as f64;
    let mass: f64 = component_mass(sample, map).iter().sum();
    let mut r = BoundReport::single("mixed_upper", spec.b * t.sqrt() / n_total * mass.sqrt());
    r.constants_used.push(("B".into(), spec.b));
    if is_unit_norm(sample) && is_mc_or_mt(map) {
        let n = map.per_task_n();
        r.alternate_forms
            .push(("simplified".into(), spec.b * map.theta() * (1.0 / n).sqrt()));
    }
    Ok(r)
}

/// Lower bound for `W_{2,∞}` (hence for every `W_{2,p}`, `p ≥ 2`):
/// `(B/(√2 N)) Σ_t √(|I_t| tr(Ĉ_t))`.
pub fn bound_mixed_lower(
    spec: &MixedNormSpec,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<BoundReport> {
    require_large_p(spec)?;
    check_sizes(sample, map)?;
    let n_total = sample.len() as f64;
    let s: f64 = component_mass(sample, map).iter().map(|a| a.sqrt()).sum();
    let mut r = BoundReport::single(
        "mixed_lower",
        spec.b / (std::f64::consts::SQRT_2 * n_total) * s,
    );
    r.constants_used.push(("B".into(), spec.b));
    if is_unit_norm(sample) && is_mc_or_mt(map) {
        let n = map.per_task_n();
        r.alternate_forms.push((
            "simplified".into(),
            spec.b * map.theta() * (1.0 / (2.0 * n)).sqrt(),
        ));
    }
    Ok(r)
}

/// Bound for `W_{2,p}`, `p ∈ (1, 2]`:
/// `(2^{1/q} T^{1/p} B √q / N) (Σ_t α_t^{q/2})^{1/q}`, valid when every
/// `α_t ≥ 1/q`.
pub fn bound_mixed_small_p(
    spec: &MixedNormSpec,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<BoundReport> {
    spec.validate()?;
    check_sizes(sample, map)?;
    if spec.p == 1.0 {
        return Err(Error::DegenerateExponent);
    }
    if spec.p > 2.0 {
        return Err(invalid(
            "p",
            format!("p = {} > 2; use bound_mixed_upper", spec.p),
        ));
    }
    let q = spec.q();
    let mass = component_mass(sample, map);
    let mut checks = Vec::with_capacity(mass.len());
    for (t, &a) in mass.iter().enumerate() {
        let ok = a >= 1.0 / q;
        checks.push((format!("alpha_{t} >= 1/q"), ok));
        if !ok {
            return Err(Error::PreconditionFailed {
                t,
                sum: a,
                threshold: 1.0 / q,
            });
        }
    }
    let t = map.t() as f64;
    let inner: f64 = mass.iter().map(|a| a.powf(q / 2.0)).sum();
    let value = 2f64.powf(1.0 / q) * t.powf(1.0 / spec.p) * spec.b * q.sqrt() / sample.len() as f64
        * inner.powf(1.0 / q);
    let mut r = BoundReport::single("mixed_small_p", value);
    r.preconditions_checked = checks;
    r.constants_used.push(("B".into(), spec.b));
    r.constants_used.push(("q".into(), q));
    if is_unit_norm(sample) && is_mc_or_mt(map) {
        let n = map.per_task_n();
        r.alternate_forms.push((
            "simplified".into(),
            2f64.powf(1.0 / q) * spec.b * map.theta() * (q / n).sqrt(),
        ));
    }
    Ok(r)
}

/// One-vs-all multi-category bound for `p ∈ [1, 2]`: `B √(q T tr(Ĉ) / n)`.
/// Infinite at `p = 1` where `q = ∞`.
pub fn bound_mixed_mc(
    spec: &MixedNormSpec,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<BoundReport> {
    spec.validate()?;
    check_sizes(sample, map)?;
    let full = map.subsets().iter().all(|s| s.len() == map.n_examples());
    if !full {
        return Err(Error::NotMultiCategory);
    }
    if spec.p > 2.0 {
        return Err(invalid("p", format!("p = {} outside [1, 2]", spec.p)));
    }
    let q = dual_exponent(spec.p);
    let tr = empirical_covariance(sample).trace();
    let value = if spec.b == 0.0 || tr == 0.0 {
        0.0
    } else {
        spec.b * (q * map.t() as f64 * tr / map.per_task_n()).sqrt()
    };
    let mut r = BoundReport::single("mixed_mc", value);
    r.constants_used.push(("B".into(), spec.b));
    r.constants_used.push(("q".into(), q));
    r.constants_used.push(("trace".into(), tr));
    Ok(r)
}

/// `Σ_t |I_t| Ĉ_t = Σ_i c_i x_i x_iᵀ` with `c_i` the multiplicity of `i`.
fn weighted_second_moment(sample: &DataSample, map: &IndexMap) -> Matrix {
    let d = sample.dim();
    let mut m = Matrix::zeros(d, d);
    for s in map.subsets() {
        for &i in s {
            add_outer(&mut m, 1.0, sample.x(i));
        }
    }
    m
}

/// Trace-norm bound
/// `(B/N) √(2T max_t α_t (ln N + 1)) + (B/N) √(T λ_max(Σ_t |I_t| Ĉ_t))`.
pub fn bound_tracenorm(
    spec: &TraceNormSpec,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<BoundReport> {
    spec.validate()?;
    check_sizes(sample, map)?;
    let t = map.t() as f64;
    let n_total = sample.len() as f64;
    let max_mass = component_mass(sample, map).into_iter().fold(0.0, f64::max);
    let lam = lambda_max(&weighted_second_moment(sample, map), DEFAULT_REL_TOL)?;
    let log_term = spec.b / n_total * (2.0 * t * max_mass * (n_total.ln() + 1.0)).sqrt();
    let spectral_term = spec.b / n_total * (t * lam).sqrt();
    let mut r = BoundReport::new(
        "tracenorm",
        vec![
            ("log_term".into(), log_term),
            ("spectral_term".into(), spectral_term),
        ],
    );
    r.constants_used.push(("B".into(), spec.b));
    r.constants_used.push(("lambda_max_weighted".into(), lam));
    if is_unit_norm(sample) && is_mc_or_mt(map) {
        let n = map.per_task_n();
        let c = empirical_covariance(sample);
        let lam_c = lambda_max(&c, DEFAULT_REL_TOL)?;
        let nt = n * t;
        let main =
            spec.b * map.theta() * ((2.0 * (nt.ln() + 1.0) / nt).sqrt() + (lam_c / n).sqrt());
        r.alternate_forms.push(("simplified".into(), main));
    }
    Ok(r)
}

/// Ratio of the trace-norm bound to the `W_{2,2}` lower bound:
/// `2√((ln(nT) + 1)/T) + √(2 λ_max(Ĉ)/tr(Ĉ))`. Requires unit-norm data.
pub fn quotient_trace_vs_frobenius(sample: &DataSample, map: &IndexMap) -> Result<BoundReport> {
    check_sizes(sample, map)?;
    sample.check_unit_norm(UNIT_NORM_TOL)?;
    let t = map.t() as f64;
    let n = map.per_task_n();
    let c = empirical_covariance(sample);
    let tr = c.trace();
    let lam = lambda_max(&c, DEFAULT_REL_TOL)?;
    let mut r = BoundReport::new(
        "quotient_trace_vs_frobenius",
        vec![
            ("log_term".into(), 2.0 * (((n * t).ln() + 1.0) / t).sqrt()),
            ("spectral_term".into(), (2.0 * lam / tr).sqrt()),
        ],
    );
    r.constants_used.push(("trace".into(), tr));
    r.constants_used.push(("lambda_max".into(), lam));
    Ok(r)
}

/// Quantities entering the Gaussian chain rule for `V ∘ φ ∘ W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRuleComponents {
    /// Bound on `L(F)`.
    pub lipschitz_f: f64,
    /// Bound on `Q(F)`.
    pub q_f: f64,
    /// Bound on the diameter `D(Y)` of `Y = {W x}`.
    pub diameter_y: f64,
    /// Bound on the Gaussian width `G(Y)`.
    pub gwidth_y: f64,
}

pub fn chain_rule_components(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
) -> Result<ChainRuleComponents> {
    spec.validate()?;
    check_sizes(sample, map)?;
    let c = empirical_covariance(sample);
    let tr = c.trace();
    let lam = lambda_max(&c, DEFAULT_REL_TOL)?;
    let n_total = sample.len() as f64;
    let k = spec.k as f64;
    let b = spec.b;
    let lip = spec.a * spec.lipschitz_phi() * map.theta();
    let (diameter, gwidth) = match spec.w_norm {
        HiddenNorm::TwoInf => (
            2.0 * b * (k * n_total * lam).sqrt(),
            b * k * (n_total * tr).sqrt(),
        ),
        HiddenNorm::TwoTwo => (
            2.0 * b * (n_total * lam).sqrt(),
            b * (k * n_total * tr).sqrt(),
        ),
        HiddenNorm::TwoOne => (
            2.0 * b * (n_total * lam).sqrt(),
            b * (2.0 * n_total * (tr + 8.0 * lam * k.ln())).sqrt(),
        ),
    };
    Ok(ChainRuleComponents {
        lipschitz_f: lip,
        q_f: lip * (map.t() as f64).sqrt(),
        diameter_y: diameter,
        gwidth_y: gwidth,
    })
}

/// Universal constants of the chain rule; both default to a nominal 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConstants {
    pub c1: f64,
    pub c2: f64,
}

impl Default for ChainConstants {
    fn default() -> Self {
        ChainConstants { c1: 1.0, c2: 1.0 }
    }
}

/// Composite-class bound `L_φ a b θ (c1·first + c2·second)` with the
/// first/second terms depending on the hidden-layer norm.
pub fn bound_composite(
    spec: &CompositeSpec,
    sample: &DataSample,
    map: &IndexMap,
    constants: ChainConstants,
) -> Result<BoundReport> {
    spec.validate()?;
    check_sizes(sample, map)?;
    if !(constants.c1 > 0.0 && constants.c2 > 0.0) {
        return Err(invalid("c1/c2", "universal constants must be positive"));
    }
    let c = empirical_covariance(sample);
    let tr = c.trace();
    let lam = lambda_max(&c, DEFAULT_REL_TOL)?;
    let n = map.per_task_n();
    let t = map.t() as f64;
    let k = spec.k as f64;
    let scale = spec.lipschitz_phi() * spec.a * spec.b * map.theta();
    let (first, second) = match spec.w_norm {
        HiddenNorm::TwoInf => (k * (tr / (n * t)).sqrt(), (k * lam / n).sqrt()),
        HiddenNorm::TwoTwo => ((k * tr / (n * t)).sqrt(), (lam / n).sqrt()),
        HiddenNorm::TwoOne => (
            ((2.0 * tr + 8.0 * lam * k.ln()) / (n * t)).sqrt(),
            (lam / n).sqrt(),
        ),
    };
    let mut r = BoundReport::new(
        "composite",
        vec![
            ("c1_trace_term".into(), scale * constants.c1 * first),
            ("c2_lambda_term".into(), scale * constants.c2 * second),
        ],
    );
    r.constants_used = vec![
        ("c1".into(), constants.c1),
        ("c2".into(), constants.c2),
        ("L_phi".into(), spec.lipschitz_phi()),
        ("a".into(), spec.a),
        ("b".into(), spec.b),
        ("theta".into(), map.theta()),
        ("trace".into(), tr),
        ("lambda_max".into(), lam),
    ];
    r.nominal_constants = true;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    MultiCategory,
    MultiTask,
}

/// Dominant term of the excess-risk bound: `2√2·L·R` (multi-category) or
/// `2·L·R` (multi-task).
pub fn risk_dominant_term(setting: Setting, lipschitz: f64, complexity: f64) -> Result<f64> {
    if lipschitz.is_nan() || lipschitz < 0.0 {
        return Err(invalid("L", "must be nonnegative"));
    }
    if complexity.is_nan() || complexity < 0.0 {
        return Err(invalid("R", "must be nonnegative"));
    }
    Ok(match setting {
        Setting::MultiCategory => 2.0 * std::f64::consts::SQRT_2 * lipschitz * complexity,
        Setting::MultiTask => 2.0 * lipschitz * complexity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::Activation;
    use crate::index_map::{make_mc, make_mt};

    fn e(d: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        v
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn mixed_pair_examples() {
        let x = DataSample::new(vec![e(2, 0), e(2, 1)]).unwrap();
        let map = make_mt(1, 2).unwrap();
        let spec = MixedNormSpec::new(f64::INFINITY, 1.0).unwrap();
        let up = bound_mixed_upper(&spec, &x, &map).unwrap();
        let lo = bound_mixed_lower(&spec, &x, &map).unwrap();
        assert!(close(up.value, 0.5f64.sqrt(), 1e-15));
        assert!(close(lo.value, 0.5, 1e-15));
        assert!(close(up.alternate("simplified").unwrap(), up.value, 1e-12));
        assert!(close(lo.alternate("simplified").unwrap(), lo.value, 1e-12));

        let zero = MixedNormSpec::new(3.0, 0.0).unwrap();
        assert_eq!(bound_mixed_upper(&zero, &x, &map).unwrap().value, 0.0);
        assert_eq!(bound_mixed_lower(&zero, &x, &map).unwrap().value, 0.0);

        let small = MixedNormSpec::new(1.5, 1.0).unwrap();
        assert!(bound_mixed_upper(&small, &x, &map).is_err());
    }

    #[test]
    fn small_p_examples() {
        // unit-norm, mt with n = 2, T = 2
        let x = DataSample::new(vec![e(3, 0), e(3, 1), e(3, 2), e(3, 0)]).unwrap();
        let map = make_mt(2, 2).unwrap();
        let spec = MixedNormSpec::new(2.0, 1.0).unwrap();
        let r = bound_mixed_small_p(&spec, &x, &map).unwrap();
        assert!(close(r.value, 2f64.sqrt(), 1e-14));
        assert!(r.preconditions_checked.iter().all(|(_, ok)| *ok));
        assert!(close(r.alternate("simplified").unwrap(), r.value, 1e-12));

        let p1 = MixedNormSpec::new(1.0, 1.0).unwrap();
        let err = bound_mixed_small_p(&p1, &x, &map).unwrap_err();
        assert_eq!(err, Error::DegenerateExponent);
        assert_eq!(err.to_string(), "q=∞ degenerate; use p>1");
    }

    #[test]
    fn small_p_precondition_failure_names_component() {
        let x = DataSample::new(vec![vec![1.0], vec![0.1]]).unwrap();
        let map = make_mt(2, 1).unwrap();
        let spec = MixedNormSpec::new(1.5, 1.0).unwrap();
        match bound_mixed_small_p(&spec, &x, &map) {
            Err(Error::PreconditionFailed { t, .. }) => assert_eq!(t, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mc_bound_examples() {
        // B = 1, q = 2, T = 2, n = 2, tr = 1
        let x = DataSample::new(vec![e(2, 0), e(2, 1), e(2, 0), e(2, 1)]).unwrap();
        let map = make_mc(2, 4).unwrap();
        let spec = MixedNormSpec::new(2.0, 1.0).unwrap();
        assert!(close(
            bound_mixed_mc(&spec, &x, &map).unwrap().value,
            2f64.sqrt(),
            1e-15
        ));

        let zeros = DataSample::new(vec![vec![0.0, 0.0]; 4]).unwrap();
        assert_eq!(bound_mixed_mc(&spec, &zeros, &map).unwrap().value, 0.0);

        let x16: Vec<Vec<f64>> = (0..16).map(|i| e(2, i % 2)).collect();
        let x16 = DataSample::new(x16).unwrap();
        let big = bound_mixed_mc(&spec, &x16, &make_mc(2, 16).unwrap()).unwrap();
        assert!(close(big.value, 2f64.sqrt() / 2.0, 1e-15));

        assert_eq!(
            bound_mixed_mc(&spec, &x, &make_mt(2, 2).unwrap()),
            Err(Error::NotMultiCategory)
        );
        let p1 = MixedNormSpec::new(1.0, 1.0).unwrap();
        assert!(bound_mixed_mc(&p1, &x, &map).unwrap().value.is_infinite());
    }

    #[test]
    fn tracenorm_example() {
        let x = DataSample::new(vec![e(2, 0), e(2, 1)]).unwrap();
        let map = make_mt(1, 2).unwrap();
        let r = bound_tracenorm(&TraceNormSpec { b: 1.0 }, &x, &map).unwrap();
        let log_term = 0.5 * (4.0 * (2f64.ln() + 1.0)).sqrt();
        assert!(close(r.term("log_term").unwrap(), log_term, 1e-14));
        assert!(close(r.term("spectral_term").unwrap(), 0.5, 1e-12));
        assert!(close(r.value, 1.8012, 1e-4));
        assert!(close(r.alternate("simplified").unwrap(), r.value, 1e-12));
        let z = bound_tracenorm(&TraceNormSpec { b: 0.0 }, &x, &map).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn quotient_examples() {
        // whitened d = 4: n = 4, T = 4, N = 16, x cycling through e_k
        let rows: Vec<Vec<f64>> = (0..16).map(|i| e(4, i % 4)).collect();
        let x = DataSample::new(rows).unwrap();
        let map = make_mt(4, 4).unwrap();
        let r = quotient_trace_vs_frobenius(&x, &map).unwrap();
        assert!(close(
            r.term("log_term").unwrap(),
            (16f64.ln() + 1.0).sqrt(),
            1e-14
        ));
        assert!(close(
            r.term("spectral_term").unwrap(),
            0.5f64.sqrt(),
            1e-10
        ));

        let rank_one = DataSample::new(vec![e(3, 0); 4]).unwrap();
        let r = quotient_trace_vs_frobenius(&rank_one, &make_mt(2, 2).unwrap()).unwrap();
        assert!(close(r.term("spectral_term").unwrap(), 2f64.sqrt(), 1e-12));

        let not_unit = DataSample::new(vec![vec![2.0], vec![1.0]]).unwrap();
        assert!(matches!(
            quotient_trace_vs_frobenius(&not_unit, &make_mt(1, 2).unwrap()),
            Err(Error::NotUnitNorm { row: 0, .. })
        ));
    }

    #[test]
    fn chain_rule_examples() {
        let x: Vec<Vec<f64>> = (0..4).map(|i| e(4, i)).collect();
        let x = DataSample::new(x).unwrap();
        let spec = CompositeSpec {
            k: 3,
            w_norm: HiddenNorm::TwoTwo,
            b: 1.0,
            a: 1.0,
            activation: Activation::RELU,
        };
        let c = chain_rule_components(&spec, &x, &make_mt(4, 1).unwrap()).unwrap();
        assert_eq!(c.lipschitz_f, 1.0);
        assert_eq!(c.q_f, 2.0);

        let x2 = DataSample::new(vec![e(2, 0), e(2, 1)]).unwrap();
        let c = chain_rule_components(&spec, &x2, &make_mt(1, 2).unwrap()).unwrap();
        assert!(close(c.gwidth_y, 6f64.sqrt(), 1e-15));

        let one = CompositeSpec {
            k: 1,
            w_norm: HiddenNorm::TwoOne,
            ..spec
        };
        let c = chain_rule_components(&one, &x2, &make_mt(1, 2).unwrap()).unwrap();
        assert!(close(c.gwidth_y, (2.0 * 2.0 * 1.0f64).sqrt(), 1e-15));
    }

    #[test]
    fn composite_examples() {
        // K = 4, n = 4, T = 4, tr = 1, λ_max = 1/4, mt so θ = 1
        let rows: Vec<Vec<f64>> = (0..16).map(|i| e(4, i % 4)).collect();
        let x = DataSample::new(rows).unwrap();
        let map = make_mt(4, 4).unwrap();
        let spec = CompositeSpec {
            k: 4,
            w_norm: HiddenNorm::TwoTwo,
            b: 1.0,
            a: 1.0,
            activation: Activation::IDENTITY,
        };
        let r = bound_composite(&spec, &x, &map, ChainConstants::default()).unwrap();
        assert!(close(r.value, 0.75, 1e-10));
        assert!(r.nominal_constants);
        assert!(r.constants_used.iter().any(|(n, v)| n == "c1" && *v == 1.0));

        let zero_a = CompositeSpec { a: 0.0, ..spec };
        assert_eq!(
            bound_composite(&zero_a, &x, &map, ChainConstants::default())
                .unwrap()
                .value,
            0.0
        );

        let one = CompositeSpec {
            k: 1,
            w_norm: HiddenNorm::TwoOne,
            ..spec
        };
        let r = bound_composite(&one, &x, &map, ChainConstants::default()).unwrap();
        let expect_first = (2.0f64 / 16.0).sqrt();
        assert!(close(r.term("c1_trace_term").unwrap(), expect_first, 1e-14));
    }

    #[test]
    fn risk_examples() {
        let mc = risk_dominant_term(Setting::MultiCategory, 1.0, 0.5).unwrap();
        assert!(close(mc, 2f64.sqrt(), 1e-15));
        assert_eq!(
            risk_dominant_term(Setting::MultiTask, 1.0, 0.5).unwrap(),
            1.0
        );
        assert_eq!(
            risk_dominant_term(Setting::MultiTask, 3.0, 0.0).unwrap(),
            0.0
        );
        assert!(risk_dominant_term(Setting::MultiTask, -1.0, 0.5).is_err());
    }
}
