//! Orchestrators for GSFL and the three baselines (centralized, vanilla split
//! learning, federated averaging), plus per-round evaluation.
//!
//! All four runners share one [`Experiment`]: the same data, shards, initial
//! parameters and per-(round, client, epoch) batch schedules. This is what
//! makes the degenerate cases line up exactly (GSFL with one group is SL,
//! FL with one client is CL).

mod fedavg;

pub use fedavg::fedavg;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetSource, ExperimentConfig};
use crate::data::{self, derive_seed, Dataset, MiniBatch, ShardPlan, SplitTag, Topology};
use crate::error::{Error, Result};
use crate::latency::{round_latency, LatencyParams, RoundLatency, Scheme};
use crate::nn::{forward, init_params, train_step, ModelSpec, Params};
use crate::split::{split_model, split_train_step, stitch_model, SplitModel};

const STREAM_INIT: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_EPOCH: u64 = 3;

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    /// 1-based.
    pub round: usize,
    pub scheme: Scheme,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub round_latency_s: f64,
    pub cumulative_latency_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scheme: Scheme,
    pub metrics: Vec<RoundMetrics>,
    /// Global model after each round.
    pub round_params: Vec<Params>,
    /// Server-side (or local, for FL/CL) SGD steps over the whole run.
    pub gradient_steps: u64,
}

impl RunReport {
    pub fn final_params(&self) -> &Params {
        self.round_params.last().expect("at least one round")
    }

    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.test_accuracy)
    }

    /// First round (1-based) whose accuracy reaches `target`.
    pub fn rounds_to_reach(&self, target: f64) -> Option<usize> {
        self.metrics.iter().find(|m| m.test_accuracy >= target).map(|m| m.round)
    }
}

/// Fraction of test samples whose arg-max logit equals the label (ties go to the lowest class).
pub fn evaluate(spec: &ModelSpec, params: &Params, test: &Dataset) -> Result<f64> {
    if test.dim() != spec.input_dim() {
        return Err(Error::Shape {
            layer: 0,
            expected: format!("{} input features", spec.input_dim()),
            found: format!("{}", test.dim()),
        });
    }
    let indices: Vec<usize> = (0..test.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = test.gather(chunk)?;
        let (logits, _) = forward(spec, params, &batch.x)?;
        correct += batch
            .y
            .iter()
            .enumerate()
            .filter(|&(i, &y)| argmax(logits.row(i)) == y)
            .count();
    }
    Ok(correct as f64 / test.len() as f64)
}

fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
}

/// Everything a run needs, built once from a config.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    train: Dataset,
    test: Dataset,
    split: SplitModel,
    topo: Topology,
    plan: ShardPlan,
    init: Params,
}

struct LaneResult {
    client: Params,
    server: Params,
    loss_sum: f64,
    steps: u64,
    samples: usize,
}

struct LocalResult {
    params: Params,
    loss_sum: f64,
    steps: u64,
}

impl Experiment {
    /// Loads or generates the configured dataset and sets up the run.
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (train, test) = match &config.dataset {
            DatasetSource::Synthetic {
                classes,
                dim,
                n_train,
                n_test,
                seed,
            } => data::gen_synthetic(*classes, *dim, *n_train, *n_test, seed.unwrap_or(config.seed))?,
            DatasetSource::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => {
                let train = data::load_idx(train_images, train_labels)?;
                let test = data::load_idx(test_images, test_labels)?;
                let classes = train.num_classes().max(test.num_classes());
                let train = Dataset::new(train.features().clone(), train.labels().to_vec(), classes, SplitTag::Train)?;
                let test = Dataset::new(test.features().clone(), test.labels().to_vec(), classes, SplitTag::Test)?;
                (train, test)
            }
        };
        Self::with_data(config, train, test)
    }

    pub fn with_data(config: &ExperimentConfig, train: Dataset, test: Dataset) -> Result<Self> {
        config.validate()?;
        if train.dim() != test.dim() || train.num_classes() != test.num_classes() {
            return Err(Error::Data("train and test sets disagree on feature width or class count".into()));
        }
        let spec = ModelSpec::mlp(train.dim(), &config.hidden, train.num_classes())?;
        let split = split_model(&spec, config.cut)?;
        let topo = Topology::new(config.n_clients, config.n_groups)?;
        let plan = data::partition(
            &train,
            &topo,
            config.partition,
            config.batch_size,
            derive_seed(config.seed, &[STREAM_PARTITION]),
        )?;
        let init = init_params(&spec, derive_seed(config.seed, &[STREAM_INIT]))?;
        Ok(Self {
            config: config.clone(),
            train,
            test,
            split,
            topo,
            plan,
            init,
        })
    }

    /// Replaces the shard plan (it must still partition the training set).
    pub fn with_plan(mut self, plan: ShardPlan) -> Result<Self> {
        if plan.shards().len() != self.topo.n_clients() || !plan.is_partition_of(self.train.len()) {
            return Err(Error::config("partition", "shard plan must partition the training set across all clients"));
        }
        if plan.sizes().iter().any(|&s| s < self.config.batch_size) {
            return Err(Error::config("partition", "every shard needs at least one full batch"));
        }
        self.plan = plan;
        Ok(self)
    }

    pub fn with_init(mut self, init: Params) -> Result<Self> {
        init.check_matches(self.split.full_spec())?;
        self.init = init;
        Ok(self)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn test(&self) -> &Dataset {
        &self.test
    }

    pub fn split(&self) -> &SplitModel {
        &self.split
    }

    pub fn spec(&self) -> &ModelSpec {
        self.split.full_spec()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn plan(&self) -> &ShardPlan {
        &self.plan
    }

    pub fn init(&self) -> &Params {
        &self.init
    }

    /// Seed of the batch shuffle for `client` in local epoch `epoch` of `round`.
    pub fn epoch_seed(&self, round: usize, client: usize, epoch: usize) -> u64 {
        derive_seed(
            self.config.seed,
            &[STREAM_EPOCH, round as u64, client as u64, epoch as u64],
        )
    }

    pub fn client_batches(&self, round: usize, client: usize, epoch: usize) -> Result<Vec<MiniBatch>> {
        data::batches(
            &self.train,
            self.plan.shard(client),
            self.config.batch_size,
            self.epoch_seed(round, client, epoch),
        )
    }

    /// Batches for one centralized epoch: the whole training set as a single shard.
    pub fn pooled_batches(&self, round: usize) -> Result<Vec<MiniBatch>> {
        let all: Vec<usize> = (0..self.train.len()).collect();
        data::batches(&self.train, &all, self.config.batch_size, self.epoch_seed(round, 0, 0))
    }

    /// Mini-batch steps each client takes per round (all local epochs included).
    pub fn client_steps(&self) -> Vec<usize> {
        self.plan
            .sizes()
            .iter()
            .map(|s| s / self.config.batch_size * self.config.local_epochs)
            .collect()
    }

    /// Gradient steps one round of `scheme` performs.
    pub fn steps_per_round(&self, scheme: Scheme) -> u64 {
        match scheme {
            Scheme::Cl => (self.train.len() / self.config.batch_size) as u64,
            _ => self.client_steps().iter().sum::<usize>() as u64,
        }
    }

    pub fn round_latency(&self, scheme: Scheme) -> Result<RoundLatency> {
        self.latency_with(scheme, &self.config.latency)
    }

    fn latency_with(&self, scheme: Scheme, params: &LatencyParams) -> Result<RoundLatency> {
        let batches = match scheme {
            Scheme::Cl => vec![self.train.len() / self.config.batch_size],
            _ => self.client_steps(),
        };
        round_latency(scheme, &self.topo, &self.split, params, self.config.batch_size, &batches)
    }

    pub fn evaluate(&self, params: &Params) -> Result<f64> {
        evaluate(self.spec(), params, &self.test)
    }

    pub fn run(&self) -> Result<RunReport> {
        self.run_scheme(self.config.scheme)
    }

    pub fn run_scheme(&self, scheme: Scheme) -> Result<RunReport> {
        match scheme {
            Scheme::Gsfl => self.run_gsfl(),
            Scheme::Sl => self.run_sl_vanilla(),
            Scheme::Fl => self.run_fl(),
            Scheme::Cl => self.run_centralized(),
        }
    }

    /// Sequential split training through `order`, relaying the client-side
    /// model from client to client and sharing one server-side model.
    fn train_relay(&self, order: &[usize], client: &Params, server: &Params, round: usize) -> Result<LaneResult> {
        let lr = self.config.lr;
        let mut client = client.clone();
        let mut server = server.clone();
        let mut loss_sum = 0.0;
        let mut steps = 0u64;
        let mut samples = 0;
        for &k in order {
            samples += self.plan.shard(k).len();
            for epoch in 0..self.config.local_epochs {
                for batch in self.client_batches(round, k, epoch)? {
                    let (c, s, loss) = split_train_step(&self.split, &client, &server, &batch.x, &batch.y, steps, lr)?;
                    client = c;
                    server = s;
                    loss_sum += loss;
                    steps += 1;
                }
            }
        }
        Ok(LaneResult {
            client,
            server,
            loss_sum,
            steps,
            samples,
        })
    }

    fn train_local(&self, k: usize, start: &Params, round: usize) -> Result<LocalResult> {
        let mut params = start.clone();
        let mut loss_sum = 0.0;
        let mut steps = 0u64;
        for epoch in 0..self.config.local_epochs {
            for batch in self.client_batches(round, k, epoch)? {
                let (p, loss) = train_step(self.spec(), &params, &batch.x, &batch.y, self.config.lr)?;
                params = p;
                loss_sum += loss;
                steps += 1;
            }
        }
        Ok(LocalResult { params, loss_sum, steps })
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_round(
        &self,
        scheme: Scheme,
        round: usize,
        params: &Params,
        loss_sum: f64,
        steps: u64,
        latency_s: f64,
        metrics: &mut Vec<RoundMetrics>,
    ) -> Result<()> {
        if !params.is_finite() {
            return Err(Error::Contract(format!("{scheme} round {round} produced non-finite parameters")));
        }
        let cumulative = metrics.last().map_or(0.0, |m| m.cumulative_latency_s) + latency_s;
        metrics.push(RoundMetrics {
            round,
            scheme,
            train_loss: if steps == 0 { f64::NAN } else { loss_sum / steps as f64 },
            test_accuracy: self.evaluate(params)?,
            round_latency_s: latency_s,
            cumulative_latency_s: cumulative,
        });
        Ok(())
    }

    /// Group-based split federated learning.
    ///
    /// Each round the global model is split at the cut; every group starts
    /// from the same client-side and server-side parameters, trains its
    /// clients in relay order, and the AP then averages the groups'
    /// client-side and server-side models separately, weighting by the
    /// groups' sample counts.
    pub fn run_gsfl(&self) -> Result<RunReport> {
        let latency = self.round_latency(Scheme::Gsfl)?.total_s;
        let mut global = self.init.clone();
        let mut metrics = Vec::with_capacity(self.config.rounds);
        let mut round_params = Vec::with_capacity(self.config.rounds);
        let mut total_steps = 0;
        for round in 1..=self.config.rounds {
            let (client, server) = self.split.split_params(&global)?;
            let lanes: Vec<LaneResult> = self
                .topo
                .groups()
                .par_iter()
                .map(|order| self.train_relay(order, &client, &server, round))
                .collect::<Result<_>>()?;
            let weights: Vec<f64> = lanes.iter().map(|l| l.samples as f64).collect();
            let clients: Vec<Params> = lanes.iter().map(|l| l.client.clone()).collect();
            let servers: Vec<Params> = lanes.iter().map(|l| l.server.clone()).collect();
            let (_, stitched) = stitch_model(&self.split, &fedavg(&clients, &weights)?, &fedavg(&servers, &weights)?)?;
            global = stitched;
            let loss_sum: f64 = lanes.iter().map(|l| l.loss_sum).sum();
            let steps: u64 = lanes.iter().map(|l| l.steps).sum();
            total_steps += steps;
            self.finish_round(Scheme::Gsfl, round, &global, loss_sum, steps, latency, &mut metrics)?;
            round_params.push(global.clone());
        }
        Ok(RunReport {
            scheme: Scheme::Gsfl,
            metrics,
            round_params,
            gradient_steps: total_steps,
        })
    }

    /// Vanilla relay split learning: one server-side model, all clients in
    /// ascending id order, no aggregation.
    pub fn run_sl_vanilla(&self) -> Result<RunReport> {
        let latency = self.round_latency(Scheme::Sl)?.total_s;
        let order: Vec<usize> = (0..self.topo.n_clients()).collect();
        let (mut client, mut server) = self.split.split_params(&self.init)?;
        let mut metrics = Vec::with_capacity(self.config.rounds);
        let mut round_params = Vec::with_capacity(self.config.rounds);
        let mut total_steps = 0;
        for round in 1..=self.config.rounds {
            let lane = self.train_relay(&order, &client, &server, round)?;
            client = lane.client;
            server = lane.server;
            let (_, global) = stitch_model(&self.split, &client, &server)?;
            total_steps += lane.steps;
            self.finish_round(Scheme::Sl, round, &global, lane.loss_sum, lane.steps, latency, &mut metrics)?;
            round_params.push(global);
        }
        Ok(RunReport {
            scheme: Scheme::Sl,
            metrics,
            round_params,
            gradient_steps: total_steps,
        })
    }

    /// Federated averaging: every client trains the full model on its shard,
    /// then the AP averages with shard-size weights.
    pub fn run_fl(&self) -> Result<RunReport> {
        let latency = self.round_latency(Scheme::Fl)?.total_s;
        let weights: Vec<f64> = self.plan.sizes().iter().map(|&s| s as f64).collect();
        let mut global = self.init.clone();
        let mut metrics = Vec::with_capacity(self.config.rounds);
        let mut round_params = Vec::with_capacity(self.config.rounds);
        let mut total_steps = 0;
        for round in 1..=self.config.rounds {
            let locals: Vec<LocalResult> = (0..self.topo.n_clients())
                .into_par_iter()
                .map(|k| self.train_local(k, &global, round))
                .collect::<Result<_>>()?;
            let models: Vec<Params> = locals.iter().map(|l| l.params.clone()).collect();
            global = fedavg(&models, &weights)?;
            let loss_sum: f64 = locals.iter().map(|l| l.loss_sum).sum();
            let steps: u64 = locals.iter().map(|l| l.steps).sum();
            total_steps += steps;
            self.finish_round(Scheme::Fl, round, &global, loss_sum, steps, latency, &mut metrics)?;
            round_params.push(global.clone());
        }
        Ok(RunReport {
            scheme: Scheme::Fl,
            metrics,
            round_params,
            gradient_steps: total_steps,
        })
    }

    /// Plain SGD on the pooled training set; one round is one epoch.
    pub fn run_centralized(&self) -> Result<RunReport> {
        self.centralized(self.config.rounds, None)
    }

    /// Centralized training stopped after exactly `steps` SGD steps (the last
    /// epoch may be partial and still counts as a round).
    pub fn run_centralized_steps(&self, steps: u64) -> Result<RunReport> {
        let per_epoch = self.steps_per_round(Scheme::Cl);
        let rounds = steps.div_ceil(per_epoch).max(1) as usize;
        self.centralized(rounds, Some(steps))
    }

    fn centralized(&self, rounds: usize, budget: Option<u64>) -> Result<RunReport> {
        let first = self.round_latency(Scheme::Cl)?.total_s;
        let later = self
            .latency_with(
                Scheme::Cl,
                &LatencyParams {
                    include_data_transfer: false,
                    ..self.config.latency
                },
            )?
            .total_s;
        let mut params = self.init.clone();
        let mut metrics = Vec::with_capacity(rounds);
        let mut round_params = Vec::with_capacity(rounds);
        let mut total_steps = 0;
        for round in 1..=rounds {
            let mut loss_sum = 0.0;
            let mut steps = 0;
            for batch in self.pooled_batches(round)? {
                if budget.is_some_and(|b| total_steps >= b) {
                    break;
                }
                let (p, loss) = train_step(self.spec(), &params, &batch.x, &batch.y, self.config.lr)?;
                params = p;
                loss_sum += loss;
                steps += 1;
                total_steps += 1;
            }
            let latency = if round == 1 { first } else { later };
            let latency = latency * steps as f64 / self.steps_per_round(Scheme::Cl) as f64;
            self.finish_round(Scheme::Cl, round, &params, loss_sum, steps, latency, &mut metrics)?;
            round_params.push(params.clone());
        }
        Ok(RunReport {
            scheme: Scheme::Cl,
            metrics,
            round_params,
            gradient_steps: total_steps,
        })
    }
}

pub fn run_gsfl(config: &ExperimentConfig) -> Result<RunReport> {
    Experiment::prepare(config)?.run_gsfl()
}

pub fn run_sl_vanilla(config: &ExperimentConfig) -> Result<RunReport> {
    Experiment::prepare(config)?.run_sl_vanilla()
}

pub fn run_fl(config: &ExperimentConfig) -> Result<RunReport> {
    Experiment::prepare(config)?.run_fl()
}

pub fn run_centralized(config: &ExperimentConfig) -> Result<RunReport> {
    Experiment::prepare(config)?.run_centralized()
}

/// Runs all four schemes on one prepared experiment, in the order CL, SL, FL, GSFL.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<RunReport>> {
    let exp = Experiment::prepare(config)?;
    Scheme::ALL.iter().map(|&s| exp.run_scheme(s)).collect()
}
