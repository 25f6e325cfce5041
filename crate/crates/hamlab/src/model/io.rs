//! Model file format.
//!
//! ```json
//! {
//!   "n": 2,
//!   "alpha": [1.0, 0.6180339887498949],
//!   "modes": [
//!     { "k": [1, 0], "re": [ { "exp": [0, 0], "c": 0.5 } ], "im": [] }
//!   ],
//!   "r": 4.0,
//!   "s": 0.5
//! }
//! ```
//!
//! Only modes with lexicographically positive (or zero) wave vector are
//! stored; the conjugate mode at `−k` is implied. `r` (action domain radius)
//! and `s` (analyticity width) are optional.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::freq::FrequencyVector;
use crate::model::field::{FieldBuilder, FourierTaylorField, ModePoly, ModelError};
use crate::model::poly::ActionPolynomial;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    pub exp: Vec<u32>,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: Vec<i32>,
    #[serde(default)]
    pub re: Vec<TermEntry>,
    #[serde(default)]
    pub im: Vec<TermEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n: usize,
    pub alpha: Vec<f64>,
    pub modes: Vec<ModeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

fn lex_sign(k: &[i32]) -> i32 {
    for &x in k {
        if x != 0 {
            return x.signum();
        }
    }
    0
}

fn poly_from_terms(n: usize, terms: &[TermEntry], what: &str) -> Result<ActionPolynomial, ModelError> {
    let mut p = ActionPolynomial::zero(n);
    let mut seen = std::collections::BTreeSet::new();
    for t in terms {
        if t.exp.len() != n {
            return Err(ModelError::Validation(format!(
                "{what}: exponent multi-index {:?} must have length n={n}",
                t.exp
            )));
        }
        if !t.c.is_finite() {
            return Err(ModelError::Validation(format!(
                "{what}: coefficient {} is not finite",
                t.c
            )));
        }
        if !seen.insert(t.exp.clone()) {
            return Err(ModelError::Validation(format!(
                "{what}: duplicate exponent multi-index {:?}",
                t.exp
            )));
        }
        p.add_term(&t.exp, t.c);
    }
    Ok(p)
}

/// Check every invariant of the file and assemble the frequency vector and
/// perturbation field.
pub fn validate_model_file(file: &ModelFile) -> Result<(FrequencyVector, FourierTaylorField), ModelError> {
    if file.n < 2 {
        return Err(ModelError::Validation(format!(
            "n must be at least 2, got {}",
            file.n
        )));
    }
    if file.alpha.len() != file.n {
        return Err(ModelError::Validation(format!(
            "alpha has {} components, expected n={}",
            file.alpha.len(),
            file.n
        )));
    }
    if file.alpha.iter().any(|a| !a.is_finite()) {
        return Err(ModelError::Validation("alpha has non-finite components".into()));
    }
    let alpha = FrequencyVector::from_normalized(file.alpha.clone())?;
    if let Some(r) = file.r {
        if !(r > 0.0) {
            return Err(ModelError::Validation(format!("domain radius r must be positive, got {r}")));
        }
    }
    if let Some(s) = file.s {
        if !(s > 0.0) {
            return Err(ModelError::Validation(format!("analyticity width s must be positive, got {s}")));
        }
    }

    let mut builder = FieldBuilder::new(file.n)
        .domain_radius(file.r.unwrap_or(f64::INFINITY))
        .analyticity_width(file.s.unwrap_or(0.5));
    let mut seen_k = std::collections::BTreeSet::new();
    for mode in &file.modes {
        if mode.k.len() != file.n {
            return Err(ModelError::Validation(format!(
                "wave vector {:?} must have length n={}",
                mode.k, file.n
            )));
        }
        if lex_sign(&mode.k) < 0 {
            return Err(ModelError::Validation(format!(
                "wave vector {:?} is lexicographically negative; store its conjugate instead",
                mode.k
            )));
        }
        if !seen_k.insert(mode.k.clone()) {
            return Err(ModelError::Validation(format!("duplicate wave vector {:?}", mode.k)));
        }
        let re = poly_from_terms(file.n, &mode.re, "re")?;
        let im = poly_from_terms(file.n, &mode.im, "im")?;
        if lex_sign(&mode.k) == 0 && !im.is_zero() {
            return Err(ModelError::Validation(
                "the zero mode must have a real coefficient (empty or zero \"im\")".into(),
            ));
        }
        builder = builder.complex_pair(&mode.k, ModePoly { re, im });
    }
    Ok((alpha, builder.build()))
}

pub fn load_model(path: &Path) -> Result<(FrequencyVector, FourierTaylorField), ModelError> {
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    validate_model_file(&file)
}

/// Serialise a field back to the canonical-half representation.
pub fn save_model(
    path: &Path,
    alpha: &FrequencyVector,
    field: &FourierTaylorField,
) -> Result<(), ModelError> {
    let mut modes = Vec::new();
    for (k, c) in field.modes() {
        if lex_sign(k) < 0 {
            continue; // conjugate is implied
        }
        let to_terms = |p: &ActionPolynomial| -> Vec<TermEntry> {
            p.terms()
                .map(|(e, &v)| TermEntry { exp: e.clone(), c: v })
                .collect()
        };
        modes.push(ModeEntry {
            k: k.clone(),
            re: to_terms(&c.re),
            im: to_terms(&c.im),
        });
    }
    let file = ModelFile {
        n: field.n(),
        alpha: alpha.components().to_vec(),
        modes,
        r: field.domain_radius().is_finite().then(|| field.domain_radius()),
        s: Some(field.analyticity_width()),
    };
    fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::golden_mean;

    fn golden_g2_json() -> String {
        format!(
            r#"{{
              "n": 2,
              "alpha": [1.0, {g}],
              "modes": [
                {{ "k": [1, 0], "re": [ {{ "exp": [0, 0], "c": 0.5 }} ] }},
                {{ "k": [0, 1], "re": [ {{ "exp": [0, 0], "c": 0.5 }} ] }},
                {{ "k": [0, 0], "re": [ {{ "exp": [2, 0], "c": 0.5 }}, {{ "exp": [0, 2], "c": 0.5 }} ] }}
              ]
            }}"#,
            g = golden_mean()
        )
    }

    #[test]
    fn parse_and_validate_g2_model() {
        let file: ModelFile = serde_json::from_str(&golden_g2_json()).unwrap();
        let (alpha, field) = validate_model_file(&file).unwrap();
        assert_eq!(alpha.n(), 2);
        assert_eq!(field.num_modes(), 5); // ±(1,0), ±(0,1), (0,0)
        assert_eq!(field.max_wave(), 1);
        assert_eq!(field.reality_defect(), 0.0);
        // evaluates to cos(2πθ1) + cos(2πθ2) + (I1²+I2²)/2
        let v = field.evaluate(&[0.0, 0.5], &[1.0, 1.0]);
        approx::assert_relative_eq!(v, 1.0 - 1.0 + 1.0, max_relative = 1e-14);
    }

    #[test]
    fn reject_lex_negative_wave_vector() {
        let text = r#"{ "n": 2, "alpha": [1.0, 0.5],
            "modes": [ { "k": [-1, 0], "re": [ { "exp": [0,0], "c": 1.0 } ] } ] }"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        assert!(matches!(validate_model_file(&file), Err(ModelError::Validation(_))));
    }

    #[test]
    fn reject_complex_zero_mode() {
        let text = r#"{ "n": 2, "alpha": [1.0, 0.5],
            "modes": [ { "k": [0, 0], "im": [ { "exp": [0,0], "c": 1.0 } ] } ] }"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        assert!(matches!(validate_model_file(&file), Err(ModelError::Validation(_))));
    }

    #[test]
    fn reject_unnormalized_alpha() {
        let text = r#"{ "n": 2, "alpha": [2.0, 1.0], "modes": [] }"#;
        let file: ModelFile = serde_json::from_str(text).unwrap();
        assert!(validate_model_file(&file).is_err());
    }

    #[test]
    fn reject_unknown_fields() {
        let text = r#"{ "n": 2, "alpha": [1.0, 0.5], "modes": [], "extra": 1 }"#;
        assert!(serde_json::from_str::<ModelFile>(text).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let file: ModelFile = serde_json::from_str(&golden_g2_json()).unwrap();
        let (alpha, field) = validate_model_file(&file).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &alpha, &field).unwrap();
        let (alpha2, field2) = load_model(&path).unwrap();
        assert_eq!(alpha.components(), alpha2.components());
        assert_eq!(field, field2);
    }
}
