//! Federated rounds, checkpoint chaining between periods and history-averaged
//! initialization.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::LabelCodec;
use crate::error::{Error, Result};
use crate::nn::{init_params, predict, train_local, Dataset, ModelArch, ModelParams, TrainConfig};
use crate::seed::Seed;
use crate::timeline::{Period, PeriodPlan, SegmentedData, StrategyConfig, StrategyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub num_clients: usize,
    pub rounds: usize,
    pub train: TrainConfig,
    pub seed: Seed,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            num_clients: 5,
            rounds: 15,
            train: TrainConfig::default(),
            seed: Seed::new(0),
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::Config("num_clients must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        self.train.validate()
    }
}

/// Size-weighted element-wise mean of client parameters.
pub fn fedavg_aggregate(client_params: &[ModelParams], client_sizes: &[usize]) -> Result<ModelParams> {
    let weights: Vec<f64> = client_sizes.iter().map(|&n| n as f64).collect();
    weighted_mean(client_params, &weights)
}

fn check_same_arch(params: &[ModelParams]) -> Result<&ModelParams> {
    let first = params
        .first()
        .ok_or_else(|| Error::Aggregation("no parameter sets to combine".into()))?;
    if let Some((i, p)) = params.iter().enumerate().find(|(_, p)| p.arch() != first.arch()) {
        return Err(Error::Aggregation(format!(
            "parameter set {i} has architecture {:?}, expected {:?}",
            p.arch(),
            first.arch()
        )));
    }
    Ok(first)
}

fn weighted_mean(params: &[ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = check_same_arch(params)?;
    if params.len() != weights.len() {
        return Err(Error::Aggregation(format!(
            "{} parameter sets but {} weights",
            params.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Aggregation(format!("total weight must be positive, got {total}")));
    }
    let mut out = ModelParams::zeros(*first.arch())?;
    let acc = out.as_mut_slice();
    for (p, &w) in params.iter().zip(weights) {
        let share = w / total;
        for (a, v) in acc.iter_mut().zip(p.as_slice()) {
            *a += share * v;
        }
    }
    Ok(out)
}

/// Data one client holds during a period.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub train: Dataset,
    pub validation: Dataset,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub params: ModelParams,
    pub client_wall_clock: Vec<f64>,
    pub samples: usize,
}

/// One FedAvg round: every client trains from `global` and the results are
/// averaged by training-set size. Client `c` in round `r` trains with seed
/// `cfg.seed.index(r).index(c)`.
pub fn run_round(global: &ModelParams, clients: &[ClientData], cfg: &FedConfig, round: usize) -> Result<RoundOutcome> {
    if clients.is_empty() {
        return Err(Error::Aggregation("round has no clients".into()));
    }
    if let Some(c) = clients.iter().position(|c| c.train.is_empty()) {
        return Err(Error::Round {
            client: c,
            message: "client has no training rows".into(),
        });
    }
    let round_seed = cfg.seed.index(round as u64);
    let mut params = Vec::with_capacity(clients.len());
    let mut sizes = Vec::with_capacity(clients.len());
    let mut clocks = Vec::with_capacity(clients.len());
    for (c, client) in clients.iter().enumerate() {
        let train = TrainConfig {
            seed: round_seed.index(c as u64),
            ..cfg.train.clone()
        };
        let update = train_local(global, &client.train, &train).map_err(|e| Error::Round {
            client: c,
            message: e.to_string(),
        })?;
        sizes.push(update.samples);
        clocks.push(update.wall_clock);
        params.push(update.params);
    }
    Ok(RoundOutcome {
        params: fedavg_aggregate(&params, &sizes)?,
        client_wall_clock: clocks,
        samples: sizes.iter().sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvgMode {
    Equal,
    Sample,
    Ema,
}

impl AvgMode {
    pub fn for_strategy(kind: StrategyKind) -> Option<Self> {
        match kind {
            StrategyKind::AvgEqual => Some(AvgMode::Equal),
            StrategyKind::AvgSample => Some(AvgMode::Sample),
            StrategyKind::AvgEma => Some(AvgMode::Ema),
            _ => None,
        }
    }
}

/// Combines the final parameters of earlier periods into a starting point.
/// EMA runs oldest to newest with `e_1 = θ_1`.
pub fn init_from_history(mode: AvgMode, history: &[Checkpoint], ema_alpha: f64) -> Result<ModelParams> {
    let params: Vec<ModelParams> = history.iter().map(|c| c.params.clone()).collect();
    check_same_arch(&params)?;
    match mode {
        AvgMode::Equal => weighted_mean(&params, &vec![1.0; params.len()]),
        AvgMode::Sample => {
            let w: Vec<f64> = history.iter().map(|c| c.train_sample_count as f64).collect();
            weighted_mean(&params, &w)
        }
        AvgMode::Ema => {
            if !(0.0..=1.0).contains(&ema_alpha) {
                return Err(Error::Config(format!("ema_alpha must lie in [0, 1], got {ema_alpha}")));
            }
            let mut iter = params.into_iter();
            let mut e = iter.next().expect("history checked non-empty");
            for p in iter {
                for (ev, pv) in e.as_mut_slice().iter_mut().zip(p.as_slice()) {
                    *ev = ema_alpha * pv + (1.0 - ema_alpha) * *ev;
                }
            }
            Ok(e)
        }
    }
}

/// Final global model of one training period.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub period: Period,
    pub train_sample_count: usize,
    /// Seconds of local training plus aggregation summed over the period.
    pub train_wall_clock: f64,
}

const MAGIC: &[u8; 4] = b"FDCK";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 5 * 4 + 1 + 8 + 8 + 8;

impl Checkpoint {
    /// Little-endian container; see the README for the field table.
    pub fn to_bytes(&self) -> Vec<u8> {
        let a = self.params.arch();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [a.input_dim, a.hidden_layers, a.hidden_units, a.output_dim, a.seq_len] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.period.0);
        out.extend_from_slice(&(self.train_sample_count as u64).to_le_bytes());
        out.extend_from_slice(&self.train_wall_clock.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in self.params.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Serialized form with the wall-clock field zeroed, for reproducibility
    /// comparisons.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        Checkpoint {
            train_wall_clock: 0.0,
            ..self.clone()
        }
        .to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let mut pos = 4;
        let mut take = |n: usize| {
            let s = &bytes[pos..pos + n];
            pos += n;
            s
        };
        let version = u16::from_le_bytes(take(2).try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = u32::from_le_bytes(take(4).try_into().unwrap()) as usize;
        }
        let period = Period(take(1)[0]);
        let samples = u64::from_le_bytes(take(8).try_into().unwrap()) as usize;
        let wall = f64::from_le_bytes(take(8).try_into().unwrap());
        let count = u64::from_le_bytes(take(8).try_into().unwrap()) as usize;
        let arch = ModelArch {
            input_dim: dims[0],
            hidden_layers: dims[1],
            hidden_units: dims[2],
            output_dim: dims[3],
            seq_len: dims[4],
        };
        arch.validate()
            .map_err(|e| Error::Checkpoint(format!("invalid architecture: {e}")))?;
        if count != arch.param_count() {
            return Err(Error::Checkpoint(format!(
                "{count} parameters stored, architecture needs {}",
                arch.param_count()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * count {
            return Err(bad("parameter block length does not match count"));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Checkpoint {
            params: ModelParams::unflatten(arch, values)?,
            period,
            train_sample_count: samples,
            train_wall_clock: wall,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Client datasets of one training period.
#[derive(Debug, Clone)]
pub struct PeriodData {
    pub period: Period,
    pub clients: Vec<ClientData>,
}

/// Turns composed, partitioned row ids into encoded client datasets.
pub fn materialize(plans: &[PeriodPlan], data: &SegmentedData, codec: &LabelCodec) -> Result<Vec<PeriodData>> {
    plans
        .iter()
        .map(|plan| {
            let clients = plan
                .clients
                .iter()
                .map(|shard| {
                    Ok(ClientData {
                        train: data.train_dataset(codec, &shard.train)?,
                        validation: data.train_dataset(codec, &shard.validation)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(PeriodData {
                period: plan.period,
                clients,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub period: Period,
    pub round: usize,
    /// Global-model accuracy on the pooled client validation rows; `None`
    /// when no client holds validation rows.
    pub validation_accuracy: Option<f64>,
    pub wall_clock: f64,
}

#[derive(Debug, Clone)]
pub struct TimelineRun {
    pub checkpoints: Vec<Checkpoint>,
    pub rounds: Vec<RoundLog>,
}

/// Starting parameters for the next period: fresh weights when nothing has
/// been trained yet, a history average for the averaging strategies, and the
/// latest checkpoint otherwise.
pub fn initial_params(
    strategy: &StrategyConfig,
    history: &[Checkpoint],
    arch: ModelArch,
    seed: Seed,
) -> Result<ModelParams> {
    match (history.last(), AvgMode::for_strategy(strategy.kind)) {
        (None, _) => init_params(arch, seed.child("model")),
        (Some(_), Some(mode)) => init_from_history(mode, history, strategy.ema_alpha),
        (Some(last), None) => Ok(last.params.clone()),
    }
}

fn validation_accuracy(params: &ModelParams, clients: &[ClientData]) -> Result<Option<f64>> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for c in clients.iter().filter(|c| !c.validation.is_empty()) {
        let pred = predict(params, &c.validation.features)?;
        correct += pred.iter().zip(&c.validation.labels).filter(|(p, y)| p == y).count();
        total += pred.len();
    }
    Ok((total > 0).then(|| correct as f64 / total as f64))
}

/// Trains a strategy through its periods in order, chaining checkpoints.
///
/// Seeds derive from (period, round, client) only: strategies given the same
/// config share the initial model and every source of training randomness,
/// so their results differ only through their data.
pub fn run_timeline(
    strategy: &StrategyConfig,
    periods: &[PeriodData],
    arch: ModelArch,
    cfg: &FedConfig,
) -> Result<TimelineRun> {
    cfg.validate()?;
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    let mut rounds = Vec::new();
    for pd in periods {
        let mut global = initial_params(strategy, &checkpoints, arch, cfg.seed)?;
        let period_cfg = FedConfig {
            seed: cfg.seed.child(&pd.period.to_string()),
            ..cfg.clone()
        };
        let mut wall = 0.0;
        let mut samples = 0;
        for r in 0..cfg.rounds {
            let start = Instant::now();
            let outcome = run_round(&global, &pd.clients, &period_cfg, r)?;
            let elapsed = start.elapsed().as_secs_f64();
            wall += elapsed;
            samples = outcome.samples;
            global = outcome.params;
            let acc = validation_accuracy(&global, &pd.clients)?;
            log::debug!(
                "{} {} round {}/{}: validation accuracy {:?}",
                strategy.id(),
                pd.period,
                r + 1,
                cfg.rounds,
                acc
            );
            rounds.push(RoundLog {
                period: pd.period,
                round: r + 1,
                validation_accuracy: acc,
                wall_clock: elapsed,
            });
        }
        checkpoints.push(Checkpoint {
            params: global,
            period: pd.period,
            train_sample_count: samples,
            train_wall_clock: wall,
        });
    }
    Ok(TimelineRun { checkpoints, rounds })
}
