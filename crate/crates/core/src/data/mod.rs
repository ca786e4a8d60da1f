//! Flow records, label taxonomy and preprocessing.

mod io;
mod prep;

pub use io::{load_records, write_records, ColumnSpec};
pub use prep::{
    apply_scaler, clean, fit_scaler, stratified_split, ScalerStats, EXCLUDED_SUB_ATTACK,
};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Dataset;

/// Attack category. The discriminant order is the six-class label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Benign,
    #[serde(rename = "MQTT")]
    Mqtt,
    #[serde(rename = "DoS")]
    Dos,
    #[serde(rename = "DDoS")]
    Ddos,
    Recon,
    Spoofing,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Benign,
        Category::Mqtt,
        Category::Dos,
        Category::Ddos,
        Category::Recon,
        Category::Spoofing,
    ];

    /// Attack categories in the order they enter the timeline.
    pub const ATTACKS: [Category; 5] = [
        Category::Mqtt,
        Category::Dos,
        Category::Ddos,
        Category::Recon,
        Category::Spoofing,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Benign => "Benign",
            Category::Mqtt => "MQTT",
            Category::Dos => "DoS",
            Category::Ddos => "DDoS",
            Category::Recon => "Recon",
            Category::Spoofing => "Spoofing",
        }
    }

    /// Maps a sub-attack label to its category by prefix.
    ///
    /// `TCP_IP-DDoS-` is tested before `TCP_IP-DoS-`; the match is case-sensitive
    /// on the prefix only, so suffixes such as `TCP_IP-DDoS-UDP1` still resolve.
    pub fn from_sub_attack(label: &str) -> Option<Category> {
        const PREFIXES: [(&str, Category); 7] = [
            ("Benign", Category::Benign),
            ("MQTT-", Category::Mqtt),
            ("TCP_IP-DDoS-", Category::Ddos),
            ("TCP_IP-DoS-", Category::Dos),
            ("Recon-", Category::Recon),
            ("ARP_Spoofing", Category::Spoofing),
            ("Spoofing", Category::Spoofing),
        ];
        PREFIXES
            .iter()
            .find(|(p, _)| label.starts_with(p))
            .map(|&(_, c)| c)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One network-flow sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub features: Vec<f64>,
    pub sub_attack: String,
    pub category: Category,
    /// Chronological position within the record's sub-attack class.
    pub order_index: usize,
}

impl FlowRecord {
    pub fn new(
        features: Vec<f64>,
        sub_attack: impl Into<String>,
        order_index: usize,
    ) -> Result<Self> {
        let sub_attack = sub_attack.into();
        let category = Category::from_sub_attack(&sub_attack)
            .ok_or_else(|| Error::UnknownLabels(vec![sub_attack.clone()]))?;
        Ok(FlowRecord {
            features,
            sub_attack,
            category,
            order_index,
        })
    }
}

/// Classification task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Binary,
    SixClass,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::SixClass => "six-class",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::SixClass => 6,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Global mapping from sub-attack labels to class indices.
///
/// The mapping depends only on the task, never on which records are encoded, so
/// every split, period and client sees the same indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCodec {
    task: Task,
}

impl LabelCodec {
    pub fn new(task: Task) -> Self {
        LabelCodec { task }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn class_names(&self) -> Vec<&'static str> {
        match self.task {
            Task::Binary => vec!["Benign", "Attack"],
            Task::SixClass => Category::ALL.iter().map(|c| c.name()).collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.task.num_classes()
    }

    /// Index of the benign class (0 for both tasks).
    pub fn benign_index(&self) -> usize {
        0
    }

    pub fn class_of_category(&self, c: Category) -> usize {
        match self.task {
            Task::Binary => usize::from(c != Category::Benign),
            Task::SixClass => c.index(),
        }
    }

    pub fn encode(&self, sub_attack: &str) -> Result<usize> {
        Category::from_sub_attack(sub_attack)
            .map(|c| self.class_of_category(c))
            .ok_or_else(|| Error::UnknownLabels(vec![sub_attack.to_string()]))
    }
}

/// Encodes records into a feature matrix plus class indices.
pub fn encode_labels<'a, I>(codec: &LabelCodec, records: I) -> Result<Dataset>
where
    I: IntoIterator<Item = &'a FlowRecord>,
{
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for r in records {
        let w = *width.get_or_insert(r.features.len());
        if r.features.len() != w {
            return Err(Error::Data(format!(
                "record of `{}` has {} features, expected {w}",
                r.sub_attack,
                r.features.len()
            )));
        }
        labels.push(codec.encode(&r.sub_attack)?);
        data.extend_from_slice(&r.features);
    }
    let features = Matrix::from_vec(labels.len(), width.unwrap_or(0), data)?;
    Dataset::new(features, labels)
}
