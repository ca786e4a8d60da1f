//! Classification metrics, the cross-period evaluation grid and the
//! attack-to-attack generalization matrix.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{encode_labels, Category, FlowRecord, LabelCodec, Task};
use crate::error::{Error, Result};
use crate::fed::{run_timeline, Checkpoint, ClientData, FedConfig, PeriodData};
use crate::matrix::Matrix;
use crate::nn::{predict, Dataset, ModelArch, ModelParams};
use crate::timeline::{partition_iid, Period, StrategyConfig, StrategyKind};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape {
                expected: format!("{} predictions", truth.len()),
                got: format!("{} predictions", predicted.len()),
            });
        }
        let mut counts = vec![0u64; num_classes * num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if let Some(&label) = [t, p].iter().find(|&&l| l >= num_classes) {
                return Err(Error::Label {
                    label,
                    classes: num_classes,
                });
            }
            counts[t * num_classes + p] += 1;
        }
        Ok(Self {
            classes: num_classes,
            counts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn row_total(&self, truth: usize) -> u64 {
        (0..self.classes).map(|j| self.get(truth, j)).sum()
    }

    pub fn col_total(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, predicted)).sum()
    }

    /// Counts as nested rows, for reports.
    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes.max(1)).map(<[u64]>::to_vec).collect()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    ConfusionMatrix::new(truth, predicted, num_classes)
}

/// Fraction of correctly classified samples.
pub fn micro_accuracy(m: &ConfusionMatrix) -> Result<f64> {
    match m.total() {
        0 => Err(Error::Metric("accuracy of an empty confusion matrix".into())),
        n => Ok(m.trace() as f64 / n as f64),
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class precision, recall and F1 averaged over the classes that occur in
/// the true labels. Zero denominators count as 0.
pub fn macro_prf(m: &ConfusionMatrix) -> (f64, f64, f64) {
    let present: Vec<usize> = (0..m.num_classes()).filter(|&c| m.row_total(c) > 0).collect();
    if present.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for &c in &present {
        let tp = m.get(c, c);
        let pc = ratio(tp, m.col_total(c));
        let rc = ratio(tp, m.row_total(c));
        p += pc;
        r += rc;
        f += f1(pc, rc);
    }
    let k = present.len() as f64;
    (p / k, r / k, f / k)
}

/// Pooled precision, recall and F1. For single-label classification all
/// three reduce to accuracy; they are reported for completeness.
pub fn micro_prf(m: &ConfusionMatrix) -> (f64, f64, f64) {
    let tp = m.trace();
    let n = m.total();
    let p = ratio(tp, n);
    (p, p, f1(p, p))
}

/// Share of benign rows predicted as any other class.
pub fn false_alarm_rate(m: &ConfusionMatrix, benign_index: usize) -> Result<f64> {
    if benign_index >= m.num_classes() {
        return Err(Error::Label {
            label: benign_index,
            classes: m.num_classes(),
        });
    }
    let benign = m.row_total(benign_index);
    if benign == 0 {
        return Err(Error::Metric("false alarm rate without benign samples".into()));
    }
    Ok(ratio(benign - m.get(benign_index, benign_index), benign))
}

/// Runs [`predict`] and times the whole pass.
pub fn measure_inference(params: &ModelParams, test_set: &Matrix) -> Result<(Vec<usize>, f64)> {
    let start = Instant::now();
    let pred = predict(params, test_set)?;
    Ok((pred, start.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub checkpoint_period: Period,
    pub test_period: Period,
    pub samples: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// `None` when the test set holds no benign rows.
    pub far: Option<f64>,
    pub inference_seconds: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    pub fn from_confusion(
        m: &ConfusionMatrix,
        checkpoint_period: Period,
        test_period: Period,
        benign_index: usize,
        inference_seconds: f64,
    ) -> Result<Self> {
        let (precision, recall, f1) = macro_prf(m);
        let (micro_precision, micro_recall, micro_f1) = micro_prf(m);
        Ok(Self {
            checkpoint_period,
            test_period,
            samples: m.total(),
            accuracy: micro_accuracy(m)?,
            precision,
            recall,
            f1,
            micro_precision,
            micro_recall,
            micro_f1,
            far: false_alarm_rate(m, benign_index).ok(),
            inference_seconds,
            confusion: m.to_rows(),
        })
    }
}

/// Global test set of one period.
#[derive(Debug, Clone)]
pub struct TestPeriod {
    pub period: Period,
    pub data: Dataset,
}

/// Every checkpoint evaluated on every test period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalGrid {
    pub checkpoint_periods: Vec<Period>,
    pub test_periods: Vec<Period>,
    /// `reports[i][j]`: checkpoint `i` on test period `j`.
    pub reports: Vec<Vec<MetricsReport>>,
}

pub fn cross_period_eval(checkpoints: &[Checkpoint], tests: &[TestPeriod], benign_index: usize) -> Result<EvalGrid> {
    if checkpoints.is_empty() {
        return Err(Error::Metric("no checkpoints to evaluate".into()));
    }
    if let Some(t) = tests.iter().find(|t| t.data.is_empty()) {
        return Err(Error::Metric(format!("test period {} is empty", t.period)));
    }
    let mut reports = Vec::with_capacity(checkpoints.len());
    for c in checkpoints {
        let classes = c.params.arch().output_dim;
        let row = tests
            .iter()
            .map(|t| {
                let (pred, secs) = measure_inference(&c.params, &t.data.features)?;
                let m = confusion(&t.data.labels, &pred, classes)?;
                MetricsReport::from_confusion(&m, c.period, t.period, benign_index, secs)
            })
            .collect::<Result<Vec<_>>>()?;
        reports.push(row);
    }
    Ok(EvalGrid {
        checkpoint_periods: checkpoints.iter().map(|c| c.period).collect(),
        test_periods: tests.iter().map(|t| t.period).collect(),
        reports,
    })
}

impl EvalGrid {
    pub fn get(&self, checkpoint: Period, test: Period) -> Option<&MetricsReport> {
        let i = self.checkpoint_periods.iter().position(|&p| p == checkpoint)?;
        let j = self.test_periods.iter().position(|&p| p == test)?;
        Some(&self.reports[i][j])
    }

    /// The reported sequence: the first test period uses the first
    /// checkpoint, every later period `t_j` the newest checkpoint trained
    /// before it (so `t_j` is unseen drifted data). A strategy with a single
    /// checkpoint is evaluated with it throughout.
    pub fn protocol(&self) -> Result<Vec<&MetricsReport>> {
        let first = *self
            .checkpoint_periods
            .first()
            .ok_or_else(|| Error::Metric("grid has no checkpoints".into()))?;
        self.test_periods
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let i = if t <= first {
                    0
                } else {
                    self.checkpoint_periods
                        .iter()
                        .rposition(|&c| c < t)
                        .ok_or_else(|| Error::Metric(format!("no checkpoint precedes test period {t}")))?
                };
                Ok(&self.reports[i][j])
            })
            .collect()
    }

    /// Mean protocol accuracy over all test periods.
    pub fn protocol_average(&self) -> Result<f64> {
        let row = self.protocol()?;
        Ok(row.iter().map(|r| r.accuracy).sum::<f64>() / row.len() as f64)
    }

    /// Protocol-row inference latency summed over periods.
    pub fn protocol_latency(&self) -> Result<f64> {
        Ok(self.protocol()?.iter().map(|r| r.inference_seconds).sum())
    }
}

/// Accuracy of a model trained on Benign plus one family, tested on Benign
/// plus each family. `accuracy[i]` has one entry per family and the row mean
/// last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationMatrix {
    pub families: Vec<Category>,
    pub accuracy: Vec<Vec<f64>>,
}

fn binary_subset(records: &[FlowRecord], family: Category) -> Vec<&FlowRecord> {
    records
        .iter()
        .filter(|r| r.category == Category::Benign || r.category == family)
        .collect()
}

/// Federated binary training on (Benign, family) for every family, with
/// cross-family testing. Families lacking training or test rows are skipped
/// with a warning.
pub fn attack_generalization_matrix(
    families: &[Category],
    train: &[FlowRecord],
    test: &[FlowRecord],
    arch: ModelArch,
    cfg: &FedConfig,
) -> Result<GeneralizationMatrix> {
    let codec = LabelCodec::new(Task::Binary);
    let has = |rs: &[FlowRecord], c: Category| rs.iter().any(|r| r.category == c);
    if !has(train, Category::Benign) || !has(test, Category::Benign) {
        return Err(Error::Metric("generalization matrix needs benign rows in both splits".into()));
    }
    let usable: Vec<Category> = families
        .iter()
        .copied()
        .filter(|&f| {
            let ok = f != Category::Benign && has(train, f) && has(test, f);
            if !ok {
                log::warn!("skipping family {} in generalization matrix: no data", f.name());
            }
            ok
        })
        .collect();
    if usable.len() < 2 {
        return Err(Error::Metric("generalization matrix needs at least two families".into()));
    }
    let tests: Vec<Dataset> = usable
        .iter()
        .map(|&f| encode_labels(&codec, binary_subset(test, f)))
        .collect::<Result<_>>()?;

    let strategy = StrategyConfig::new(StrategyKind::Static);
    let mut accuracy = Vec::with_capacity(usable.len());
    for &f in &usable {
        let rows = binary_subset(train, f);
        let data = encode_labels(&codec, rows.iter().copied())?;
        let mut by_label: Vec<(String, Vec<usize>)> = vec![("benign".into(), Vec::new()), ("attack".into(), Vec::new())];
        for (i, &y) in data.labels.iter().enumerate() {
            by_label[y].1.push(i);
        }
        let fam_cfg = FedConfig {
            seed: cfg.seed.child("generalization").child(f.name()),
            ..cfg.clone()
        };
        let clients = partition_iid(&by_label, cfg.num_clients, fam_cfg.seed.child("partition"))
            .into_iter()
            .filter(|s| !s.train.is_empty())
            .map(|s| ClientData {
                train: data.subset(&s.train),
                validation: data.subset(&s.validation),
            })
            .collect();
        let period = PeriodData {
            period: Period(0),
            clients,
        };
        let run = run_timeline(&strategy, std::slice::from_ref(&period), arch, &fam_cfg)?;
        let params = &run.checkpoints[0].params;
        let mut row = tests
            .iter()
            .map(|t| {
                let pred = predict(params, &t.features)?;
                micro_accuracy(&confusion(&t.labels, &pred, 2)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        row.push(row.iter().sum::<f64>() / row.len() as f64);
        accuracy.push(row);
    }
    Ok(GeneralizationMatrix {
        families: usable,
        accuracy,
    })
}
