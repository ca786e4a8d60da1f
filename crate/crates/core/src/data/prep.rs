//! Cleaning, stratified splitting and min-max scaling.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::index;

use super::FlowRecord;
use crate::error::{Error, Result};
use crate::seed::Seed;

/// Sub-attack removed from every experiment (no valid rows survive cleaning in
/// the public dataset).
pub const EXCLUDED_SUB_ATTACK: &str = "MQTT-DoS-Publish_Flood";

/// Drops rows with a missing or non-finite feature and every row of the excluded
/// sub-attack, then renumbers `order_index` densely within each sub-attack.
pub fn clean(records: Vec<FlowRecord>) -> Vec<FlowRecord> {
    let mut next: HashMap<String, usize> = HashMap::new();
    let mut kept: Vec<FlowRecord> = records
        .into_iter()
        .filter(|r| r.sub_attack != EXCLUDED_SUB_ATTACK && r.features.iter().all(|v| v.is_finite()))
        .collect();
    // Renumber in chronological order, keeping the list order untouched.
    let mut by_class: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    for (pos, r) in kept.iter().enumerate() {
        by_class
            .entry(&r.sub_attack)
            .or_default()
            .push((r.order_index, pos));
    }
    let mut renumber = Vec::with_capacity(kept.len());
    for (class, mut rows) in by_class {
        rows.sort_unstable();
        let slot = next.entry(class.to_string()).or_insert(0);
        for (_, pos) in rows {
            renumber.push((pos, *slot));
            *slot += 1;
        }
    }
    for (pos, idx) in renumber {
        kept[pos].order_index = idx;
    }
    kept
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per-sub-attack random split: `round_half_up(train_fraction * n)` rows of each
/// class go to the training side. Both halves keep the input order.
pub fn stratified_split(
    records: &[FlowRecord],
    train_fraction: f64,
    seed: Seed,
) -> Result<(Vec<FlowRecord>, Vec<FlowRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Data(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_class.entry(&r.sub_attack).or_default().push(i);
    }
    let mut to_train = vec![false; records.len()];
    for (class, rows) in by_class {
        let n = rows.len();
        if n < 2 {
            warn!("class `{class}` has {n} row(s); assigning it entirely to the training split");
            rows.iter().for_each(|&i| to_train[i] = true);
            continue;
        }
        let k = round_half_up(train_fraction * n as f64).min(n);
        let mut rng = seed.child("split").child(class).rng();
        for j in index::sample(&mut rng, n, k) {
            to_train[rows[j]] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in records.iter().zip(to_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    Ok((train, test))
}

/// Per-feature minimum and maximum of the training rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalerStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(train: &[FlowRecord]) -> Result<ScalerStats> {
    let first = train
        .first()
        .ok_or_else(|| Error::Data("cannot fit a scaler on an empty training set".into()))?;
    let mut min = first.features.clone();
    let mut max = first.features.clone();
    for r in train {
        if r.features.len() != min.len() {
            return Err(Error::Data("records disagree on feature count".into()));
        }
        for (k, &v) in r.features.iter().enumerate() {
            min[k] = min[k].min(v);
            max[k] = max[k].max(v);
        }
    }
    Ok(ScalerStats { min, max })
}

/// `(x - min) / (max - min)` clamped to `[0, 1]`; constant features map to 0.
pub fn apply_scaler(stats: &ScalerStats, records: &[FlowRecord]) -> Vec<FlowRecord> {
    records
        .iter()
        .map(|r| {
            let mut out = r.clone();
            for (k, v) in out.features.iter_mut().enumerate() {
                let range = stats.max[k] - stats.min[k];
                *v = if range > 0.0 {
                    ((*v - stats.min[k]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
            out
        })
        .collect()
}
