//! Synthetic samples with a prescribed covariance spectrum, and the plain-text
//! dataset format (one comma-separated vector per line, no header).

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{norm, DataSample, Matrix};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumProfile {
    /// Flat spectrum on the first `d_eff` coordinates.
    Whitened {
        d_eff: usize,
    },
    /// `λ_j = j^{−exponent}`, `j = 1..d`.
    PowerLaw {
        exponent: f64,
    },
    Custom {
        eigenvalues: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub d: usize,
    pub profile: SpectrumProfile,
    #[serde(default = "yes")]
    pub unit_norm: bool,
}

fn yes() -> bool {
    true
}

impl SpectrumSpec {
    pub fn whitened(d: usize, unit_norm: bool) -> Self {
        SpectrumSpec {
            d,
            profile: SpectrumProfile::Whitened { d_eff: d },
            unit_norm,
        }
    }

    /// Population eigenvalues along the coordinate axes.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if self.d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        let ev = match &self.profile {
            SpectrumProfile::Whitened { d_eff } => {
                if *d_eff == 0 || *d_eff > self.d {
                    return Err(invalid("d_eff", format!("must lie in 1..={}", self.d)));
                }
                (0..self.d)
                    .map(|j| if j < *d_eff { 1.0 } else { 0.0 })
                    .collect()
            }
            SpectrumProfile::PowerLaw { exponent } => {
                if !exponent.is_finite() {
                    return Err(invalid("exponent", "must be finite"));
                }
                (1..=self.d).map(|j| (j as f64).powf(-exponent)).collect()
            }
            SpectrumProfile::Custom { eigenvalues } => {
                if eigenvalues.len() != self.d {
                    return Err(Error::DimensionMismatch {
                        expected: self.d,
                        found: eigenvalues.len(),
                    });
                }
                eigenvalues.clone()
            }
        };
        let ev: Vec<f64> = ev;
        if ev.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("eigenvalues", "must be finite and nonnegative"));
        }
        if ev.iter().all(|v| *v == 0.0) {
            return Err(invalid("eigenvalues", "at least one must be positive"));
        }
        Ok(ev)
    }
}

/// Draws `N` Gaussian vectors with covariance `diag(λ)`, then (optionally)
/// projects every row onto the unit sphere.
pub fn generate(spec: &SpectrumSpec, n: usize, stream: &RngStream) -> Result<DataSample> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let scales: Vec<f64> = spec.eigenvalues()?.iter().map(|l| l.sqrt()).collect();
    let mut rng = stream.rng();
    let mut rows = Matrix::zeros(n, spec.d);
    for i in 0..n {
        loop {
            let row = rows.row_mut(i);
            for (x, s) in row.iter_mut().zip(&scales) {
                let g: f64 = rng.sample(StandardNormal);
                *x = s * g;
            }
            let nr = norm(row);
            if !spec.unit_norm {
                break;
            }
            if nr > 0.0 {
                row.iter_mut().for_each(|x| *x /= nr);
                break;
            }
        }
    }
    DataSample::from_matrix(rows)
}

pub fn save_dataset(sample: &DataSample, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(to_csv(sample).as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Rows as comma-separated shortest round-trip decimals.
pub fn to_csv(sample: &DataSample) -> String {
    let mut out = String::new();
    for x in sample.iter() {
        let line: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn load_dataset(path: &Path) -> Result<DataSample> {
    parse_csv(&fs::read_to_string(path)?)
}

pub fn parse_csv(text: &str) -> Result<DataSample> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::Parse {
                        line: line_no,
                        reason: format!("non-numeric cell `{cell}`"),
                    }),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    DataSample::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{empirical_covariance, SpectralSummary};

    #[test]
    fn unit_norm_rows() {
        let spec = SpectrumSpec {
            d: 5,
            profile: SpectrumProfile::PowerLaw { exponent: 1.0 },
            unit_norm: true,
        };
        let x = generate(&spec, 40, &RngStream::new(3)).unwrap();
        for r in x.iter() {
            assert!((norm(r) - 1.0).abs() < 1e-12);
        }
        assert!((empirical_covariance(&x).trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_rank_one() {
        let x = generate(&SpectrumSpec::whitened(4, true), 1, &RngStream::new(9)).unwrap();
        let s = SpectralSummary::of(&empirical_covariance(&x)).unwrap();
        assert!((s.lambda_max - s.trace).abs() < 1e-12);
    }

    #[test]
    fn whitened_effective_dimension() {
        // λ_max sits near the Marchenko–Pastur edge (1 + √(d/N))² / d
        let d = 8;
        for (mult, want) in [
            (50usize, 1.0 / (1.0 + (1.0f64 / 50.0).sqrt()).powi(2)),
            (400, 1.0),
        ] {
            let x = generate(
                &SpectrumSpec::whitened(d, true),
                mult * d,
                &RngStream::new(21),
            )
            .unwrap();
            let s = SpectralSummary::of(&empirical_covariance(&x)).unwrap();
            let ratio = s.effective_dimension() / d as f64;
            assert!(
                (ratio - want).abs() < 0.15 * want,
                "N = {mult}d: ratio {ratio}"
            );
        }
    }

    #[test]
    fn deterministic() {
        let spec = SpectrumSpec::whitened(3, false);
        assert_eq!(
            generate(&spec, 10, &RngStream::new(5)).unwrap(),
            generate(&spec, 10, &RngStream::new(5)).unwrap()
        );
    }

    #[test]
    fn invalid_spectra() {
        let bad = SpectrumSpec {
            d: 3,
            profile: SpectrumProfile::Whitened { d_eff: 4 },
            unit_norm: true,
        };
        assert!(generate(&bad, 3, &RngStream::new(1)).is_err());
        let neg = SpectrumSpec {
            d: 2,
            profile: SpectrumProfile::Custom {
                eigenvalues: vec![1.0, -1.0],
            },
            unit_norm: false,
        };
        assert!(generate(&neg, 3, &RngStream::new(1)).is_err());
        assert!(generate(&SpectrumSpec::whitened(2, true), 0, &RngStream::new(1)).is_err());
    }

    #[test]
    fn identity_round_trip() {
        let x = DataSample::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(to_csv(&x), "1.0,0.0\n0.0,1.0\n");
        assert_eq!(parse_csv(&to_csv(&x)).unwrap(), x);
    }

    #[test]
    fn ragged_and_bad_cells_report_line() {
        assert_eq!(
            parse_csv("1,2\n3\n"),
            Err(Error::Parse {
                line: 2,
                reason: "expected 2 values, found 1".into()
            })
        );
        match parse_csv("1,2\n3,4\n5,x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
