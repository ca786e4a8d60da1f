//! Temporal segmentation, class capping and IID client partitioning.

use std::collections::BTreeMap;
use std::ops::Range;

use log::warn;
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{roster_rank, test_periods, training_periods, Period, PeriodSchedule, ROSTER};
use crate::data::{encode_labels, FlowRecord, LabelCodec, Task};
use crate::error::Result;
use crate::nn::Dataset;
use crate::seed::Seed;

/// Per-class, per-period row limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub train: usize,
    pub test: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            train: 10_000,
            test: 2_000,
        }
    }
}

/// Boundaries of `n` contiguous parts of a length-`len` sequence. Sizes differ
/// by at most one; the first `len % n` parts take the extra row.
pub fn segment_bounds(len: usize, n: usize) -> Vec<Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let base = len / n;
    let extra = len % n;
    let mut start = 0;
    (0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

/// Splits one class's records into `num_periods` disjoint chronological parts.
/// Records are ordered by `order_index` first.
pub fn temporal_segment(class_records: &[FlowRecord], num_periods: usize) -> Vec<Vec<FlowRecord>> {
    let mut sorted: Vec<&FlowRecord> = class_records.iter().collect();
    sorted.sort_by_key(|r| r.order_index);
    segment_bounds(sorted.len(), num_periods)
        .into_iter()
        .map(|range| sorted[range].iter().map(|r| (*r).clone()).collect())
        .collect()
}

/// Uniform subsample without replacement down to `cap`, keeping input order.
pub fn cap_rows(rows: &[usize], cap: usize, seed: Seed) -> Vec<usize> {
    if rows.len() <= cap {
        return rows.to_vec();
    }
    let mut keep = index::sample(&mut seed.rng(), rows.len(), cap).into_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| rows[i]).collect()
}

/// Row ids of one sub-attack, per period, on each side of the train/test split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassSegments {
    pub train: BTreeMap<Period, Vec<usize>>,
    pub test: BTreeMap<Period, Vec<usize>>,
}

/// Normalised records of both splits with their per-period segments.
///
/// Row ids index `train_rows` or `test_rows` respectively.
#[derive(Debug, Clone)]
pub struct SegmentedData {
    pub task: Task,
    pub train_rows: Vec<FlowRecord>,
    pub test_rows: Vec<FlowRecord>,
    pub classes: BTreeMap<String, ClassSegments>,
}

fn group_sorted(rows: &[FlowRecord]) -> BTreeMap<String, Vec<usize>> {
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        by_class.entry(r.sub_attack.clone()).or_default().push(i);
    }
    for ids in by_class.values_mut() {
        ids.sort_by_key(|&i| rows[i].order_index);
    }
    by_class
}

impl SegmentedData {
    /// Segments every roster class chronologically: the training split into one
    /// part per training period, the test split into one part per test period.
    /// Classes outside the roster are dropped with a warning.
    pub fn build(task: Task, train_rows: Vec<FlowRecord>, test_rows: Vec<FlowRecord>) -> Self {
        let train_p = training_periods(task);
        let test_p = test_periods(task);
        let mut classes: BTreeMap<String, ClassSegments> = ROSTER
            .iter()
            .map(|(n, _)| (n.to_string(), ClassSegments::default()))
            .collect();
        for (side, rows, periods) in [(0, &train_rows, &train_p), (1, &test_rows, &test_p)] {
            for (class, ids) in group_sorted(rows) {
                let Some(seg) = classes.get_mut(&class) else {
                    warn!(
                        "sub-attack `{class}` is not part of the drift roster; ignoring its rows"
                    );
                    continue;
                };
                let target = if side == 0 {
                    &mut seg.train
                } else {
                    &mut seg.test
                };
                for (p, range) in periods.iter().zip(segment_bounds(ids.len(), periods.len())) {
                    target.insert(*p, ids[range].to_vec());
                }
            }
        }
        for seg in classes.values_mut() {
            for p in &train_p {
                seg.train.entry(*p).or_default();
            }
            for p in &test_p {
                seg.test.entry(*p).or_default();
            }
        }
        SegmentedData {
            task,
            train_rows,
            test_rows,
            classes,
        }
    }

    pub fn train_segment(&self, class: &str, period: Period) -> &[usize] {
        self.classes
            .get(class)
            .and_then(|c| c.train.get(&period))
            .map_or(&[], Vec::as_slice)
    }

    pub fn test_segment(&self, class: &str, period: Period) -> &[usize] {
        self.classes
            .get(class)
            .and_then(|c| c.test.get(&period))
            .map_or(&[], Vec::as_slice)
    }

    /// Global test rows of a period: the period's test segment of every included
    /// sub-attack, in roster order.
    pub fn test_ids(&self, schedule: &PeriodSchedule) -> Vec<usize> {
        let mut classes: Vec<&String> = schedule.included.iter().collect();
        classes.sort_by_key(|c| roster_rank(c));
        classes
            .into_iter()
            .flat_map(|c| self.test_segment(c, schedule.period).iter().copied())
            .collect()
    }

    pub fn test_dataset(&self, codec: &LabelCodec, schedule: &PeriodSchedule) -> Result<Dataset> {
        let ids = self.test_ids(schedule);
        encode_labels(codec, ids.iter().map(|&i| &self.test_rows[i]))
    }

    pub fn train_dataset(&self, codec: &LabelCodec, ids: &[usize]) -> Result<Dataset> {
        encode_labels(codec, ids.iter().map(|&i| &self.train_rows[i]))
    }
}

/// Caps every class at `caps.train` training and `caps.test` test rows per
/// period. Classes at or below the cap are untouched.
pub fn cap_classes(mut data: SegmentedData, caps: Caps, seed: Seed) -> SegmentedData {
    let seed = seed.child("cap");
    for (class, seg) in data.classes.iter_mut() {
        for (side, map, cap) in [
            ("train", &mut seg.train, caps.train),
            ("test", &mut seg.test, caps.test),
        ] {
            for (p, rows) in map.iter_mut() {
                let s = seed.child(class).child(side).index(u64::from(p.0));
                *rows = cap_rows(rows, cap, s);
            }
        }
    }
    data
}

/// One client's rows for a period.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientShard {
    pub train: Vec<usize>,
    pub client_test: Vec<usize>,
    pub validation: Vec<usize>,
}

impl ClientShard {
    pub fn total(&self) -> usize {
        self.train.len() + self.client_test.len() + self.validation.len()
    }
}

/// Fractions of a client's allocation used for local training and client-side
/// testing (60% and 10% of the data against the 80% training portion);
/// the rest is validation.
const CLIENT_TRAIN_FRACTION: f64 = 0.75;
const CLIENT_TEST_FRACTION: f64 = 0.125;

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Deals each class's rows round-robin over `num_clients` after a seeded
/// shuffle, then splits each client's share of the class into train,
/// client-test and validation parts. The dealing position carries over from
/// one class to the next, so per-class and total shard sizes differ by at most
/// one.
pub fn partition_iid(
    class_rows: &[(String, Vec<usize>)],
    num_clients: usize,
    seed: Seed,
) -> Vec<ClientShard> {
    let mut shards = vec![ClientShard::default(); num_clients];
    if num_clients == 0 {
        return shards;
    }
    let mut offset = 0;
    for (class, rows) in class_rows {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut seed.child(class).rng());
        let mut dealt: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
        for (j, row) in shuffled.into_iter().enumerate() {
            dealt[(offset + j) % num_clients].push(row);
        }
        offset = (offset + rows.len()) % num_clients;
        for (shard, part) in shards.iter_mut().zip(dealt) {
            let n = part.len();
            let n_train = round_half_up(CLIENT_TRAIN_FRACTION * n as f64).min(n);
            let n_test = round_half_up(CLIENT_TEST_FRACTION * n as f64).min(n - n_train);
            shard.train.extend_from_slice(&part[..n_train]);
            shard
                .client_test
                .extend_from_slice(&part[n_train..n_train + n_test]);
            shard
                .validation
                .extend_from_slice(&part[n_train + n_test..]);
        }
    }
    shards
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn records(label: &str, n: usize) -> Vec<FlowRecord> {
        (0..n)
            .map(|i| FlowRecord::new(vec![i as f64], label, i).unwrap())
            .collect()
    }

    fn sizes(parts: &[Range<usize>]) -> Vec<usize> {
        parts.iter().map(|r| r.len()).collect()
    }

    #[test]
    fn segmentation_arithmetic() {
        assert_eq!(sizes(&segment_bounds(462_480, 6)), vec![77_080; 6]);
        assert_eq!(
            sizes(&segment_bounds(6_877, 6)),
            vec![1147, 1146, 1146, 1146, 1146, 1146]
        );
        assert_eq!(sizes(&segment_bounds(0, 6)), vec![0; 6]);
    }

    #[test]
    fn six_rows_into_six_periods() {
        let mut recs = records("Benign", 6);
        recs.reverse();
        let segs = temporal_segment(&recs, 6);
        for (i, s) in segs.iter().enumerate() {
            assert_eq!(s.len(), 1);
            assert_eq!(s[0].order_index, i);
        }
    }

    #[test]
    fn capping() {
        let rows: Vec<usize> = (0..77_080).collect();
        let capped = cap_rows(&rows, 10_000, Seed::new(1));
        assert_eq!(capped.len(), 10_000);
        assert!(capped.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(capped, cap_rows(&rows, 10_000, Seed::new(1)));
        let small: Vec<usize> = (0..500).collect();
        assert_eq!(cap_rows(&small, 10_000, Seed::new(1)), small);
    }

    #[test]
    fn partition_sizes() {
        let rows = vec![("Benign".to_string(), (0..10_000).collect::<Vec<_>>())];
        assert!(partition_iid(&rows, 5, Seed::new(0))
            .iter()
            .all(|s| s.total() == 2000));
        let rows = vec![("Benign".to_string(), (0..10_003).collect::<Vec<_>>())];
        let got: Vec<usize> = partition_iid(&rows, 5, Seed::new(0))
            .iter()
            .map(ClientShard::total)
            .collect();
        assert_eq!(got, vec![2001, 2001, 2001, 2000, 2000]);
    }

    #[test]
    fn client_split_is_60_10_10_of_80() {
        let rows = vec![("Benign".to_string(), (0..400).collect::<Vec<_>>())];
        for s in partition_iid(&rows, 5, Seed::new(2)) {
            assert_eq!(
                (s.train.len(), s.client_test.len(), s.validation.len()),
                (60, 10, 10)
            );
        }
    }

    #[test]
    fn build_segments_train_and_test_sides() {
        let data =
            SegmentedData::build(Task::SixClass, records("Benign", 60), records("Benign", 14));
        assert_eq!(data.train_segment("Benign", Period(0)).len(), 10);
        assert_eq!(data.train_segment("Benign", Period(6)).len(), 0);
        assert_eq!(data.test_segment("Benign", Period(6)).len(), 2);
        assert_eq!(data.train_segment("ARP_Spoofing", Period(3)).len(), 0);
        let bin = SegmentedData::build(Task::Binary, records("Benign", 50), records("Benign", 12));
        assert_eq!(bin.train_segment("Benign", Period(1)).len(), 10);
        assert!(bin.train_segment("Benign", Period(0)).is_empty());
    }

    proptest! {
        #[test]
        fn segments_are_disjoint_exhaustive_and_ordered(len in 0usize..500, n in 1usize..9) {
            let recs = records("Benign", len);
            let segs = temporal_segment(&recs, n);
            let flat: Vec<usize> = segs.iter().flatten().map(|r| r.order_index).collect();
            prop_assert_eq!(flat, (0..len).collect::<Vec<_>>());
            let max = segs.iter().map(Vec::len).max().unwrap();
            let min = segs.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn client_shards_balanced_per_class(counts in proptest::collection::vec(0usize..60, 1..5), clients in 1usize..7) {
            let rows: Vec<(String, Vec<usize>)> = counts.iter().enumerate().scan(0usize, |next, (k, &c)| {
                let ids: Vec<usize> = (*next..*next + c).collect();
                *next += c;
                Some((format!("class{k}"), ids))
            }).collect();
            let shards = partition_iid(&rows, clients, Seed::new(5));
            for (_, ids) in &rows {
                let per: Vec<usize> = shards.iter().map(|s| {
                    s.train.iter().chain(&s.client_test).chain(&s.validation).filter(|i| ids.contains(i)).count()
                }).collect();
                let max = *per.iter().max().unwrap();
                let min = *per.iter().min().unwrap();
                prop_assert!(max - min <= 1);
                prop_assert_eq!(per.iter().sum::<usize>(), ids.len());
            }
            let totals: Vec<usize> = shards.iter().map(ClientShard::total).collect();
            prop_assert!(totals.iter().max().unwrap() - totals.iter().min().unwrap() <= 1);
        }
    }
}
