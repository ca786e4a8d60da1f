//! Synthetic flow datasets with controllable separation between families.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Category, FlowRecord};
use crate::error::{Error, Result};
use crate::seed::Seed;
use crate::timeline::family;

/// Generated feature values are clipped to this range.
pub const CLIP_MIN: f64 = 0.0;
pub const CLIP_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub category: Category,
    pub sub_attacks: Vec<String>,
    pub mean: Vec<f64>,
    /// Per-feature standard deviation.
    pub scale: f64,
    pub rows_per_sub_attack: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub num_features: usize,
    pub families: Vec<FamilySpec>,
    /// Expected Euclidean distance between family means, indexed like
    /// `families`. Checked against the means by [`ScenarioSpec::validate`].
    #[serde(default)]
    pub divergence_matrix: Option<Vec<Vec<f64>>>,
    pub seed: Seed,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Spec(m));
        if self.num_features == 0 {
            return bad("num_features must be at least 1".into());
        }
        if self.families.is_empty() {
            return bad("scenario has no families".into());
        }
        for f in &self.families {
            if f.mean.len() != self.num_features {
                return bad(format!(
                    "family {} has a {}-dimensional mean, expected {}",
                    f.name,
                    f.mean.len(),
                    self.num_features
                ));
            }
            if f.mean.iter().any(|v| !v.is_finite()) {
                return bad(format!("family {} has a non-finite mean", f.name));
            }
            if !(f.scale.is_finite() && f.scale >= 0.0) {
                return bad(format!("family {} has invalid scale {}", f.name, f.scale));
            }
            if f.rows_per_sub_attack == 0 {
                return bad(format!("family {} must generate at least one row per sub-attack", f.name));
            }
            if f.sub_attacks.is_empty() {
                return bad(format!("family {} lists no sub-attacks", f.name));
            }
            for s in &f.sub_attacks {
                match Category::from_sub_attack(s) {
                    Some(c) if c == f.category => {}
                    Some(c) => {
                        return bad(format!(
                            "sub-attack {s} belongs to {}, not family category {}",
                            c.name(),
                            f.category.name()
                        ))
                    }
                    None => return bad(format!("unrecognised sub-attack {s}")),
                }
            }
        }
        if let Some(d) = &self.divergence_matrix {
            let n = self.families.len();
            if d.len() != n || d.iter().any(|r| r.len() != n) {
                return bad(format!("divergence_matrix must be {n}x{n}"));
            }
            for (i, fi) in self.families.iter().enumerate() {
                for (j, fj) in self.families.iter().enumerate() {
                    let got = distance(&fi.mean, &fj.mean);
                    if (got - d[i][j]).abs() > 1e-6 * (1.0 + d[i][j].abs()) {
                        return bad(format!(
                            "means of {} and {} are {got:.6} apart, divergence_matrix says {}",
                            fi.name, fj.name, d[i][j]
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Pairwise distances between family means.
    pub fn mean_distances(&self) -> Vec<Vec<f64>> {
        self.families
            .iter()
            .map(|a| self.families.iter().map(|b| distance(&a.mean, &b.mean)).collect())
            .collect()
    }
}

/// Draws every sub-attack's rows from an isotropic Gaussian at its family
/// mean, clipped to `[CLIP_MIN, CLIP_MAX]`. `order_index` counts up within
/// each sub-attack.
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<FlowRecord>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(
        spec.families
            .iter()
            .map(|f| f.sub_attacks.len() * f.rows_per_sub_attack)
            .sum(),
    );
    for f in &spec.families {
        let noise = Normal::new(0.0, f.scale).map_err(|e| Error::Spec(e.to_string()))?;
        for s in &f.sub_attacks {
            let mut rng = spec.seed.child("synth").child(s).rng();
            for i in 0..f.rows_per_sub_attack {
                let features = f
                    .mean
                    .iter()
                    .map(|m| (m + noise.sample(&mut rng)).clamp(CLIP_MIN, CLIP_MAX))
                    .collect();
                out.push(FlowRecord::new(features, s.clone(), i)?);
            }
        }
    }
    Ok(out)
}

/// Angle of each attack family on the circle of family means, in degrees.
/// MQTT and DDoS sit opposite each other; DoS and DDoS are close, every
/// other pair is more than 60 degrees apart.
const FAMILY_ANGLES: [(Category, f64); 5] = [
    (Category::Mqtt, 0.0),
    (Category::Spoofing, 80.0),
    (Category::Dos, 150.0),
    (Category::Ddos, 180.0),
    (Category::Recon, 250.0),
];

/// Radius of the circle of family means, in units of the noise scale.
const FAMILY_RADIUS: f64 = 6.0;
/// Displacement shared by every attack family along a third block of
/// features. It makes part of each family's signature common, so a model
/// trained on one family partly recognises the others.
const COMMON_SHIFT: f64 = 3.0;
/// Features carrying each of the circle coordinates and the common shift.
const BLOCK: usize = 10;
const ROWS_PER_SUB_ATTACK: usize = 1200;

/// Full 17-attack roster plus Benign, 45 features, unit noise. Benign sits at
/// the centre of the feature box; each attack family is displaced from it
/// along a direction in a plane spanned by two blocks of ten features, plus a
/// shift shared by all attacks on a third block.
pub fn default_paper_shaped_scenario(seed: Seed) -> ScenarioSpec {
    let num_features = 45;
    let centre = (CLIP_MIN + CLIP_MAX) / 2.0;
    let per_feature = FAMILY_RADIUS / (BLOCK as f64).sqrt();
    let mean_at = |angle: Option<f64>| -> Vec<f64> {
        let mut m = vec![centre; num_features];
        if let Some(deg) = angle {
            let (s, c) = deg.to_radians().sin_cos();
            for v in &mut m[..BLOCK] {
                *v += per_feature * c;
            }
            for v in &mut m[BLOCK..2 * BLOCK] {
                *v += per_feature * s;
            }
            for v in &mut m[2 * BLOCK..3 * BLOCK] {
                *v += COMMON_SHIFT / (BLOCK as f64).sqrt();
            }
        }
        m
    };
    let families = Category::ALL
        .iter()
        .map(|&cat| {
            let angle = FAMILY_ANGLES.iter().find(|(c, _)| *c == cat).map(|(_, a)| *a);
            FamilySpec {
                name: cat.name().to_string(),
                category: cat,
                sub_attacks: family(cat).map(String::from).collect(),
                mean: mean_at(angle),
                scale: 1.0,
                rows_per_sub_attack: ROWS_PER_SUB_ATTACK,
            }
        })
        .collect();
    ScenarioSpec {
        num_features,
        families,
        divergence_matrix: None,
        seed,
    }
}
