//! Per-strategy training-set composition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::segment::{partition_iid, ClientShard, SegmentedData};
use super::{
    family, representative, roster_rank, Period, PeriodSchedule, StrategyConfig, StrategyKind,
    REPRESENTATIVES,
};
use crate::data::Category;
use crate::error::{Error, Result};
use crate::seed::Seed;

/// Where a class's rows come from in a period's training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// The class's own segment for the current period.
    Segment,
    /// A rehearsal sample of rows used in earlier periods.
    Retained,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Segment => "segment",
            Source::Retained => "retained",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositionPart {
    pub sub_attack: String,
    pub source: Source,
    /// Row ids into [`SegmentedData::train_rows`].
    pub rows: Vec<usize>,
}

/// Global (pre-partition) training set of one strategy at one period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composition {
    pub period: Period,
    pub parts: Vec<CompositionPart>,
}

impl Composition {
    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn total_rows(&self) -> usize {
        self.parts.iter().map(|p| p.rows.len()).sum()
    }

    pub fn labels(&self) -> BTreeSet<&str> {
        self.parts.iter().map(|p| p.sub_attack.as_str()).collect()
    }

    pub fn class_rows(&self) -> Vec<(String, Vec<usize>)> {
        self.parts
            .iter()
            .map(|p| (p.sub_attack.clone(), p.rows.clone()))
            .collect()
    }
}

/// Training rows each class has contributed in earlier periods.
#[derive(Debug, Clone, Default)]
pub struct UsageHistory {
    used: BTreeMap<String, BTreeSet<usize>>,
}

impl UsageHistory {
    pub fn record(&mut self, comp: &Composition) {
        for p in &comp.parts {
            self.used
                .entry(p.sub_attack.clone())
                .or_default()
                .extend(&p.rows);
        }
    }

    pub fn used(&self, class: &str) -> Option<&BTreeSet<usize>> {
        self.used.get(class)
    }
}

fn representatives() -> Vec<&'static str> {
    REPRESENTATIVES.iter().map(|(_, n)| *n).collect()
}

fn benign_plus(fam: Category) -> Vec<&'static str> {
    std::iter::once("Benign").chain(family(fam)).collect()
}

/// Sub-attacks trained from their current segment, and sub-attacks trained from
/// retention samples, for one strategy at one period.
fn class_plan(
    strategy: &StrategyConfig,
    entry: &PeriodSchedule,
    is_first: bool,
) -> Result<(Vec<&'static str>, Vec<String>)> {
    let p = entry.period;
    let baseline = || -> Result<Vec<&'static str>> {
        match p.new_family() {
            None => Ok(representatives()),
            Some(f) => Ok(benign_plus(f)),
        }
    };
    let new_family = || {
        p.new_family()
            .ok_or_else(|| Error::Schedule(format!("{p} introduces no attack family")))
    };
    let plan = match strategy.kind {
        StrategyKind::Static if is_first => (baseline()?, Vec::new()),
        StrategyKind::Static => (Vec::new(), Vec::new()),
        _ if p.0 == 0 => (representatives(), Vec::new()),
        StrategyKind::Cumulative => {
            let newest = new_family()?;
            let mut classes = vec!["Benign"];
            for &c in Category::ATTACKS.iter().take_while(|&&c| c <= newest) {
                classes.extend(family(c));
            }
            (classes, Vec::new())
        }
        StrategyKind::Simple
        | StrategyKind::AvgEqual
        | StrategyKind::AvgSample
        | StrategyKind::AvgEma => (benign_plus(new_family()?), Vec::new()),
        StrategyKind::Representative => {
            let fam = new_family()?;
            let mut classes = benign_plus(fam);
            classes.extend(
                Category::ATTACKS
                    .iter()
                    .filter(|&&c| c != fam)
                    .map(|&c| representative(c)),
            );
            (classes, Vec::new())
        }
        StrategyKind::Retain if p.0 == 1 => (benign_plus(new_family()?), Vec::new()),
        StrategyKind::Retain => {
            let fam = new_family()?;
            (
                family(fam).collect(),
                entry.retained_marks.iter().cloned().collect(),
            )
        }
    };
    Ok(plan)
}

/// Assembles one strategy's training set for `period`.
///
/// Segment-sourced classes contribute their (capped) segment of this period.
/// Retention classes contribute `min(R, available)` rows drawn uniformly without
/// replacement from every row the class contributed in earlier periods; the
/// buffer is re-drawn each period.
pub fn compose_training_set(
    strategy: &StrategyConfig,
    period: Period,
    schedule: &[PeriodSchedule],
    data: &SegmentedData,
    history: &UsageHistory,
    seed: Seed,
) -> Result<Composition> {
    let entry = schedule
        .iter()
        .find(|s| s.period == period)
        .ok_or_else(|| Error::Schedule(format!("period {period} is not part of the schedule")))?;
    if !entry.has_training {
        return Err(Error::Schedule(format!(
            "period {period} has no training data"
        )));
    }
    let is_first = schedule.first().map(|s| s.period) == Some(period);
    let (segment_classes, retained_classes) = class_plan(strategy, entry, is_first)?;

    let mut parts: Vec<CompositionPart> = segment_classes
        .iter()
        .map(|&c| CompositionPart {
            sub_attack: c.to_string(),
            source: Source::Segment,
            rows: data.train_segment(c, period).to_vec(),
        })
        .collect();
    for class in retained_classes {
        let pool: Vec<usize> = history
            .used(&class)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        let k = strategy.retain_r.min(pool.len());
        let mut rng = seed.child("retain").child(&class).rng();
        let mut pick = index::sample(&mut rng, pool.len(), k).into_vec();
        pick.sort_unstable();
        parts.push(CompositionPart {
            rows: pick.into_iter().map(|i| pool[i]).collect(),
            sub_attack: class,
            source: Source::Retained,
        });
    }
    parts.sort_by_key(|p| roster_rank(&p.sub_attack));
    Ok(Composition { period, parts })
}

/// A strategy's data for one training period, after client partitioning.
#[derive(Debug, Clone)]
pub struct PeriodPlan {
    pub period: Period,
    pub composition: Composition,
    pub clients: Vec<ClientShard>,
}

impl PeriodPlan {
    /// Rows used for local training across all clients.
    pub fn train_sample_count(&self) -> usize {
        self.clients.iter().map(|c| c.train.len()).sum()
    }
}

/// Composes and partitions every training period of a strategy in order.
/// Periods where the strategy does not train (Static after its first period)
/// are omitted. Seeds depend on the period and class, not on the strategy.
pub fn plan_strategy(
    strategy: &StrategyConfig,
    schedule: &[PeriodSchedule],
    data: &SegmentedData,
    num_clients: usize,
    seed: Seed,
) -> Result<Vec<PeriodPlan>> {
    let mut history = UsageHistory::default();
    let mut plans = Vec::new();
    for entry in schedule.iter().filter(|s| s.has_training) {
        let period_seed = seed.child(&entry.period.to_string());
        let comp = compose_training_set(
            strategy,
            entry.period,
            schedule,
            data,
            &history,
            period_seed.child("compose"),
        )?;
        if comp.is_empty() {
            continue;
        }
        let clients = partition_iid(
            &comp.class_rows(),
            num_clients,
            period_seed.child("partition"),
        );
        history.record(&comp);
        plans.push(PeriodPlan {
            period: entry.period,
            composition: comp,
            clients,
        });
    }
    Ok(plans)
}

/// One line of the composition audit table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionRow {
    pub strategy: String,
    pub period: Period,
    pub sub_attack: String,
    pub source: Source,
    pub rows: usize,
}

pub fn composition_report(strategy: &StrategyConfig, plans: &[PeriodPlan]) -> Vec<CompositionRow> {
    let id = strategy.id();
    plans
        .iter()
        .flat_map(|plan| {
            let id = id.clone();
            plan.composition.parts.iter().map(move |p| CompositionRow {
                strategy: id.clone(),
                period: plan.period,
                sub_attack: p.sub_attack.clone(),
                source: p.source,
                rows: p.rows.len(),
            })
        })
        .collect()
}

/// Label-set view of a composition report (`period,sub_attack,source` per
/// line), the format of the schedule golden files.
pub fn render_label_sets(rows: &[CompositionRow]) -> String {
    let mut out = String::from("period,sub_attack,source\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.period, r.sub_attack, r.source.name());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FlowRecord, Task};
    use crate::timeline::{build_schedule, cap_classes, Caps, ROSTER};

    /// Every roster class with `per_class` rows in each split.
    fn data(task: Task, per_class: usize, caps: Caps) -> SegmentedData {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (name, _) in ROSTER {
            for i in 0..per_class {
                train.push(FlowRecord::new(vec![0.0], name, i).unwrap());
                test.push(FlowRecord::new(vec![0.0], name, i).unwrap());
            }
        }
        cap_classes(SegmentedData::build(task, train, test), caps, Seed::new(1))
    }

    fn labels_at(plans: &[PeriodPlan], p: u8) -> BTreeSet<String> {
        plans
            .iter()
            .find(|pl| pl.period == Period(p))
            .map(|pl| {
                pl.composition
                    .labels()
                    .into_iter()
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn categories_at(plans: &[PeriodPlan], p: u8) -> BTreeSet<Category> {
        labels_at(plans, p)
            .iter()
            .map(|l| Category::from_sub_attack(l).unwrap())
            .collect()
    }

    #[test]
    fn simple_binary_t2_is_benign_and_dos() {
        let d = data(Task::Binary, 60, Caps::default());
        let s = build_schedule(Task::Binary);
        let plans = plan_strategy(
            &StrategyConfig::new(StrategyKind::Simple),
            &s,
            &d,
            5,
            Seed::new(0),
        )
        .unwrap();
        let expect: BTreeSet<String> = [
            "Benign",
            "TCP_IP-DoS-TCP",
            "TCP_IP-DoS-ICMP",
            "TCP_IP-DoS-SYN",
            "TCP_IP-DoS-UDP",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(labels_at(&plans, 2), expect);
    }

    #[test]
    fn static_trains_once() {
        for task in [Task::Binary, Task::SixClass] {
            let d = data(task, 60, Caps::default());
            let s = build_schedule(task);
            let plans = plan_strategy(
                &StrategyConfig::new(StrategyKind::Static),
                &s,
                &d,
                5,
                Seed::new(0),
            )
            .unwrap();
            assert_eq!(plans.len(), 1);
            assert_eq!(plans[0].period, s[0].period);
        }
    }

    #[test]
    fn cumulative_six_class_t3() {
        let d = data(Task::SixClass, 60, Caps::default());
        let s = build_schedule(Task::SixClass);
        let plans = plan_strategy(
            &StrategyConfig::new(StrategyKind::Cumulative),
            &s,
            &d,
            5,
            Seed::new(0),
        )
        .unwrap();
        assert_eq!(plans.len(), 6);
        let mut expect: BTreeSet<String> = ["Benign".to_string()].into();
        for c in [Category::Mqtt, Category::Dos, Category::Ddos] {
            expect.extend(family(c).map(String::from));
        }
        assert_eq!(labels_at(&plans, 3), expect);
        for w in plans.windows(2) {
            let a = w[0].composition.labels();
            let b = w[1].composition.labels();
            if w[0].period.0 >= 1 {
                assert!(b.is_superset(&a));
            }
        }
    }

    #[test]
    fn representative_always_covers_six_categories() {
        for task in [Task::Binary, Task::SixClass] {
            let d = data(task, 60, Caps::default());
            let s = build_schedule(task);
            let plans = plan_strategy(
                &StrategyConfig::new(StrategyKind::Representative),
                &s,
                &d,
                5,
                Seed::new(0),
            )
            .unwrap();
            for pl in &plans {
                assert_eq!(
                    categories_at(&plans, pl.period.0).len(),
                    6,
                    "{task} {}",
                    pl.period
                );
            }
        }
    }

    #[test]
    fn simple_never_revisits_old_families() {
        let d = data(Task::SixClass, 60, Caps::default());
        let s = build_schedule(Task::SixClass);
        let plans = plan_strategy(
            &StrategyConfig::new(StrategyKind::Simple),
            &s,
            &d,
            5,
            Seed::new(0),
        )
        .unwrap();
        for pl in plans.iter().filter(|p| p.period.0 >= 1) {
            let cats = categories_at(&plans, pl.period.0);
            let expect: BTreeSet<Category> =
                [Category::Benign, pl.period.new_family().unwrap()].into();
            assert_eq!(cats, expect);
        }
    }

    #[test]
    fn retention_draws_at_most_r_previously_used_rows() {
        let d = data(Task::SixClass, 1200, Caps::default());
        let s = build_schedule(Task::SixClass);
        let strat = StrategyConfig::retain(100);
        let plans = plan_strategy(&strat, &s, &d, 5, Seed::new(0)).unwrap();
        let mut history = UsageHistory::default();
        for pl in &plans {
            for part in &pl.composition.parts {
                if part.source == Source::Retained {
                    assert!(part.rows.len() <= 100);
                    assert!(!part.rows.is_empty());
                    let used = history.used(&part.sub_attack).unwrap();
                    assert!(part.rows.iter().all(|r| used.contains(r)));
                }
            }
            history.record(&pl.composition);
        }
        let t3: Vec<_> = plans[3]
            .composition
            .parts
            .iter()
            .filter(|p| p.source == Source::Retained)
            .collect();
        assert_eq!(t3.len(), 9, "Benign + MQTT(4) + DoS(4)");
        assert!(plans[3]
            .composition
            .parts
            .iter()
            .any(|p| p.sub_attack == "TCP_IP-DDoS-UDP" && p.source == Source::Segment));
    }

    #[test]
    fn cumulative_rows_respect_cap() {
        let caps = Caps { train: 7, test: 3 };
        let d = data(Task::Binary, 200, caps);
        let s = build_schedule(Task::Binary);
        let plans = plan_strategy(
            &StrategyConfig::new(StrategyKind::Cumulative),
            &s,
            &d,
            5,
            Seed::new(0),
        )
        .unwrap();
        for row in composition_report(&StrategyConfig::new(StrategyKind::Cumulative), &plans) {
            assert!(row.rows <= 7);
        }
    }

    #[test]
    fn test_only_and_unknown_periods_rejected() {
        let d = data(Task::Binary, 12, Caps::default());
        let s = build_schedule(Task::Binary);
        let strat = StrategyConfig::new(StrategyKind::Simple);
        let h = UsageHistory::default();
        assert!(compose_training_set(&strat, Period(6), &s, &d, &h, Seed::new(0)).is_err());
        assert!(compose_training_set(&strat, Period(0), &s, &d, &h, Seed::new(0)).is_err());
    }

    #[test]
    fn composition_is_deterministic() {
        let d = data(Task::Binary, 300, Caps::default());
        let s = build_schedule(Task::Binary);
        let strat = StrategyConfig::retain(10);
        let a = plan_strategy(&strat, &s, &d, 5, Seed::new(4)).unwrap();
        let b = plan_strategy(&strat, &s, &d, 5, Seed::new(4)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.composition, y.composition);
            assert_eq!(x.clients, y.clients);
        }
    }
}
