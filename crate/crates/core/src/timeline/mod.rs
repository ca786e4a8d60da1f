//! Drift timeline: which sub-attacks appear in each period, how each period's
//! data is carved out of the chronological record stream, and how every
//! strategy assembles its training set.

mod compose;
mod segment;

pub use compose::{
    compose_training_set, composition_report, plan_strategy, render_label_sets, Composition,
    CompositionPart, CompositionRow, PeriodPlan, Source, UsageHistory,
};
pub use segment::{
    cap_classes, cap_rows, partition_iid, segment_bounds, temporal_segment, Caps, ClassSegments,
    ClientShard, SegmentedData,
};

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Category, Task};
use crate::error::{Error, Result};

/// Sub-attacks of the drift roster, grouped by category.
pub const ROSTER: [(&str, Category); 18] = [
    ("Benign", Category::Benign),
    ("MQTT-Malformed_Data", Category::Mqtt),
    ("MQTT-DoS-Connect_Flood", Category::Mqtt),
    ("MQTT-DDoS-Publish_Flood", Category::Mqtt),
    ("MQTT-DDoS-Connect_Flood", Category::Mqtt),
    ("TCP_IP-DoS-TCP", Category::Dos),
    ("TCP_IP-DoS-ICMP", Category::Dos),
    ("TCP_IP-DoS-SYN", Category::Dos),
    ("TCP_IP-DoS-UDP", Category::Dos),
    ("TCP_IP-DDoS-SYN", Category::Ddos),
    ("TCP_IP-DDoS-ICMP", Category::Ddos),
    ("TCP_IP-DDoS-UDP", Category::Ddos),
    ("TCP_IP-DDoS-TCP", Category::Ddos),
    ("Recon-Ping_Sweep", Category::Recon),
    ("Recon-VulScan", Category::Recon),
    ("Recon-OS_Scan", Category::Recon),
    ("Recon-Port_Scan", Category::Recon),
    ("ARP_Spoofing", Category::Spoofing),
];

/// One fixed sub-attack per category; the six-class baseline period trains on these.
pub const REPRESENTATIVES: [(Category, &str); 6] = [
    (Category::Benign, "Benign"),
    (Category::Mqtt, "MQTT-DDoS-Connect_Flood"),
    (Category::Dos, "TCP_IP-DoS-UDP"),
    (Category::Ddos, "TCP_IP-DDoS-UDP"),
    (Category::Recon, "Recon-Port_Scan"),
    (Category::Spoofing, "ARP_Spoofing"),
];

pub fn family(c: Category) -> impl Iterator<Item = &'static str> {
    ROSTER
        .iter()
        .filter(move |(_, cat)| *cat == c)
        .map(|(n, _)| *n)
}

pub fn representative(c: Category) -> &'static str {
    REPRESENTATIVES
        .iter()
        .find(|(cat, _)| *cat == c)
        .map(|(_, n)| *n)
        .unwrap_or("Benign")
}

/// Position of a sub-attack in [`ROSTER`]; unknown names sort last.
pub fn roster_rank(sub_attack: &str) -> usize {
    ROSTER
        .iter()
        .position(|(n, _)| *n == sub_attack)
        .unwrap_or(ROSTER.len())
}

/// Time period `t0 .. t6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Period(pub u8);

/// Period after which no training data exists.
pub const TEST_ONLY_PERIOD: Period = Period(6);

impl Period {
    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    /// Attack family first introduced at this period (t1 .. t5).
    pub fn new_family(self) -> Option<Category> {
        match self.0 {
            1..=5 => Some(Category::ATTACKS[self.index() - 1]),
            _ => None,
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl FromStr for Period {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('t')
            .and_then(|d| d.parse::<u8>().ok())
            .filter(|&d| d <= TEST_ONLY_PERIOD.0)
            .map(Period)
            .ok_or_else(|| Error::Schedule(format!("unknown period `{s}`")))
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// First period with training data for a task.
pub fn first_period(task: Task) -> Period {
    match task {
        Task::Binary => Period(1),
        Task::SixClass => Period(0),
    }
}

/// Periods that carry training data for a task (t0/t1 .. t5).
pub fn training_periods(task: Task) -> Vec<Period> {
    (first_period(task).0..TEST_ONLY_PERIOD.0)
        .map(Period)
        .collect()
}

/// Periods that carry test data for a task (t0/t1 .. t6).
pub fn test_periods(task: Task) -> Vec<Period> {
    (first_period(task).0..=TEST_ONLY_PERIOD.0)
        .map(Period)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Static,
    Cumulative,
    Simple,
    Representative,
    Retain,
    AvgEqual,
    AvgSample,
    AvgEma,
}

/// A training strategy and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Retention buffer size per class (`Retain` only).
    #[serde(default = "default_retain_r")]
    pub retain_r: usize,
    /// EMA smoothing factor (`AvgEma` only).
    #[serde(default = "default_ema_alpha")]
    pub ema_alpha: f64,
}

fn default_retain_r() -> usize {
    100
}

fn default_ema_alpha() -> f64 {
    0.6
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            retain_r: default_retain_r(),
            ema_alpha: default_ema_alpha(),
        }
    }

    pub fn retain(r: usize) -> Self {
        StrategyConfig {
            retain_r: r,
            ..StrategyConfig::new(StrategyKind::Retain)
        }
    }

    /// The ten strategy rows of the reference result tables, in table order.
    pub fn all_rows() -> Vec<StrategyConfig> {
        use StrategyKind::*;
        vec![
            StrategyConfig::new(Static),
            StrategyConfig::new(Cumulative),
            StrategyConfig::new(Simple),
            StrategyConfig::new(Representative),
            StrategyConfig::retain(100),
            StrategyConfig::retain(500),
            StrategyConfig::retain(1000),
            StrategyConfig::new(AvgEma),
            StrategyConfig::new(AvgSample),
            StrategyConfig::new(AvgEqual),
        ]
    }

    /// Identifier used for file names and filters, e.g. `retain-500`.
    pub fn id(&self) -> String {
        match self.kind {
            StrategyKind::Static => "static".into(),
            StrategyKind::Cumulative => "cumulative".into(),
            StrategyKind::Simple => "simple".into(),
            StrategyKind::Representative => "representative".into(),
            StrategyKind::Retain => format!("retain-{}", self.retain_r),
            StrategyKind::AvgEqual => "avg-equal".into(),
            StrategyKind::AvgSample => "avg-sample".into(),
            StrategyKind::AvgEma => "avg-ema".into(),
        }
    }

    /// Human-readable row label.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Static => "Static".into(),
            StrategyKind::Cumulative => "Cumulative Incremental".into(),
            StrategyKind::Simple => "Simple Incremental".into(),
            StrategyKind::Representative => "Representative Incremental".into(),
            StrategyKind::Retain => format!("Incremental Retain ({})", self.retain_r),
            StrategyKind::AvgEqual => "Incremental Avg (Equal)".into(),
            StrategyKind::AvgSample => "Incremental Avg (Samples)".into(),
            StrategyKind::AvgEma => format!("Incremental Avg (EMA a={})", self.ema_alpha),
        }
    }

    /// Violated constraints as `(field, message)` pairs.
    pub fn diagnostics(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if self.retain_r == 0 {
            out.push(("retain_r".into(), "must be > 0".into()));
        }
        if !(self.ema_alpha > 0.0 && self.ema_alpha < 1.0) {
            out.push((
                "ema_alpha".into(),
                format!("must be in (0, 1), got {}", self.ema_alpha),
            ));
        }
        out
    }

    /// Whether the period-`i` model starts from an average of earlier checkpoints.
    pub fn averages_history(&self) -> bool {
        matches!(
            self.kind,
            StrategyKind::AvgEqual | StrategyKind::AvgSample | StrategyKind::AvgEma
        )
    }
}

/// Class presence for one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodSchedule {
    pub period: Period,
    /// Sub-attacks present in this period's test data.
    pub included: BTreeSet<String>,
    /// Sub-attacks appearing for the first time.
    pub introduced: BTreeSet<String>,
    /// Sub-attacks carried into training as retention samples.
    pub retained_marks: BTreeSet<String>,
    pub has_training: bool,
}

fn names<'a>(it: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    it.into_iter().map(str::to_string).collect()
}

/// Builds the drift schedule.
///
/// Six-class starts at a t0 baseline holding one representative per category;
/// binary starts at t1 with Benign and the MQTT family. Families then arrive in
/// the order MQTT (t1), DoS, DDoS, Recon, Spoofing (t5). Test-side presence
/// accumulates, t6 repeats t5 without training data, and from t2 onward every
/// class trained in the previous period (minus the family arriving now) is
/// marked for retention.
pub fn build_schedule(task: Task) -> Vec<PeriodSchedule> {
    let mut out = Vec::new();
    let mut included = BTreeSet::new();
    let mut trained_prev: BTreeSet<String> = BTreeSet::new();
    for p in test_periods(task) {
        let mut schedule = PeriodSchedule {
            period: p,
            included: BTreeSet::new(),
            introduced: BTreeSet::new(),
            retained_marks: BTreeSet::new(),
            has_training: p != TEST_ONLY_PERIOD,
        };
        let mut trained_now = BTreeSet::new();
        match p.new_family() {
            None if p == TEST_ONLY_PERIOD => {}
            None => {
                // Six-class baseline.
                trained_now = names(REPRESENTATIVES.iter().map(|(_, n)| *n));
            }
            Some(fam) => {
                let fam_names = names(family(fam));
                if p.0 >= 2 {
                    schedule.retained_marks =
                        trained_prev.difference(&fam_names).cloned().collect();
                }
                trained_now.insert("Benign".to_string());
                trained_now.extend(trained_prev.iter().cloned());
                trained_now.extend(fam_names);
            }
        }
        for n in &trained_now {
            if included.insert(n.clone()) {
                schedule.introduced.insert(n.clone());
            }
        }
        schedule.included = included.clone();
        trained_prev = if p.0 >= 1 {
            trained_now
        } else {
            BTreeSet::new()
        };
        out.push(schedule);
    }
    out
}
