//! Analytic per-round delay accounting.
//!
//! Costs are computed from FLOP and bit counts rather than measured, so the
//! same run always reports the same simulated time. Every total is the plain
//! sum of the [`CostBreakdown`] entries on its critical path.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Topology;
use crate::error::{Error, Result};
use crate::nn::{Layer, ModelSpec};
use crate::split::SplitModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Cl,
    Fl,
    Sl,
    Gsfl,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Cl, Scheme::Sl, Scheme::Fl, Scheme::Gsfl];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Cl => "cl",
            Scheme::Fl => "fl",
            Scheme::Sl => "sl",
            Scheme::Gsfl => "gsfl",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cl" => Ok(Scheme::Cl),
            "fl" => Ok(Scheme::Fl),
            "sl" => Ok(Scheme::Sl),
            "gsfl" => Ok(Scheme::Gsfl),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}`, expected cl|fl|sl|gsfl"))),
        }
    }
}

/// Link rates (bits/s), compute speeds (FLOP/s) and fixed overheads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    pub uplink_bps: f64,
    pub downlink_bps: f64,
    pub client_flops: f64,
    pub server_flops: f64,
    pub bits_per_value: u32,
    /// Seconds charged once per aggregation at the AP.
    pub aggregation_s: f64,
    /// Charge the one-off upload of every client's raw data to the centralized baseline.
    pub include_data_transfer: bool,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Self {
            uplink_bps: 5e6,
            downlink_bps: 20e6,
            client_flops: 1e9,
            server_flops: 100e9,
            bits_per_value: 32,
            aggregation_s: 0.01,
            include_data_transfer: false,
        }
    }
}

impl LatencyParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latency.uplink_bps", self.uplink_bps),
            ("latency.downlink_bps", self.downlink_bps),
            ("latency.client_flops", self.client_flops),
            ("latency.server_flops", self.server_flops),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be a positive finite number, got {v}")));
            }
        }
        if self.bits_per_value == 0 {
            return Err(Error::config("latency.bits_per_value", "must be positive"));
        }
        if !(self.aggregation_s.is_finite() && self.aggregation_s >= 0.0) {
            return Err(Error::config("latency.aggregation_s", "must be a non-negative finite number"));
        }
        Ok(())
    }
}

pub fn comm_time(bits: u64, rate_bps: f64) -> Result<f64> {
    if rate_bps.is_nan() || rate_bps <= 0.0 {
        return Err(Error::config("rate", format!("link rate must be positive, got {rate_bps}")));
    }
    Ok(bits as f64 / rate_bps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Dense forward `2·B·in·out`, Dense backward `4·B·in·out`, ReLU `B·width` either way.
pub fn flops(spec: &ModelSpec, batch: usize, direction: Direction) -> u64 {
    let b = batch as u64;
    spec.layers()
        .iter()
        .enumerate()
        .map(|(i, layer)| match *layer {
            Layer::Dense { in_dim, out_dim } => {
                let per = match direction {
                    Direction::Forward => 2,
                    Direction::Backward => 4,
                };
                per * b * in_dim as u64 * out_dim as u64
            }
            Layer::Relu => b * spec.width_at(i) as u64,
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    /// Cut-layer activations plus one label per sample.
    Smashed,
    Grad,
    ClientModel,
    ServerModel,
    FullModel,
}

pub fn message_bits(kind: MessageKind, split: &SplitModel, batch: usize, bits_per_value: u32) -> u64 {
    let bpv = u64::from(bits_per_value);
    let b = batch as u64;
    let width = split.cut_width() as u64;
    match kind {
        MessageKind::Smashed => b * width * bpv + b * bpv,
        MessageKind::Grad => b * width * bpv,
        MessageKind::ClientModel => split.client_spec().param_count() as u64 * bpv,
        MessageKind::ServerModel => split.server_spec().param_count() as u64 * bpv,
        MessageKind::FullModel => split.full_spec().param_count() as u64 * bpv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// Client-side model sent from the AP to a group's first client.
    Distribution,
    ClientForward,
    SmashedUplink,
    ServerCompute,
    GradDownlink,
    ClientBackward,
    /// Client-side model relayed to the next client via the AP (or uploaded by the last one).
    Handoff,
    ModelDownlink,
    LocalCompute,
    ModelUplink,
    ServerEpoch,
    DataUpload,
    Aggregation,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Distribution => "distribution",
            EventKind::ClientForward => "client_fwd",
            EventKind::SmashedUplink => "smashed_up",
            EventKind::ServerCompute => "server_compute",
            EventKind::GradDownlink => "grad_down",
            EventKind::ClientBackward => "client_bwd",
            EventKind::Handoff => "model_handoff",
            EventKind::ModelDownlink => "model_down",
            EventKind::LocalCompute => "local_compute",
            EventKind::ModelUplink => "model_up",
            EventKind::ServerEpoch => "server_epoch",
            EventKind::DataUpload => "data_up",
            EventKind::Aggregation => "aggregation",
        }
    }

    fn is_training(self) -> bool {
        matches!(
            self,
            EventKind::ClientForward
                | EventKind::SmashedUplink
                | EventKind::ServerCompute
                | EventKind::GradDownlink
                | EventKind::ClientBackward
                | EventKind::LocalCompute
                | EventKind::ServerEpoch
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub event: EventKind,
    pub client: Option<usize>,
    pub compute_s: f64,
    pub uplink_s: f64,
    pub downlink_s: f64,
    pub total_s: f64,
}

impl CostBreakdown {
    fn new(event: EventKind, client: Option<usize>, compute_s: f64, uplink_s: f64, downlink_s: f64) -> Self {
        Self {
            event,
            client,
            compute_s,
            uplink_s,
            downlink_s,
            total_s: compute_s + uplink_s + downlink_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLatency {
    pub total_s: f64,
    /// Events on the round's critical path; they sum to `total_s`.
    pub breakdown: Vec<CostBreakdown>,
    /// Per parallel lane: per group for GSFL, per client for FL, a single entry otherwise.
    pub lane_totals: Vec<f64>,
}

impl RoundLatency {
    fn from_breakdown(breakdown: Vec<CostBreakdown>, lane_totals: Vec<f64>) -> Self {
        let total_s = breakdown.iter().map(|c| c.total_s).sum();
        Self {
            total_s,
            breakdown,
            lane_totals,
        }
    }

    /// Mini-batch training time on the critical path, excluding model transfers and aggregation.
    pub fn training_s(&self) -> f64 {
        self.breakdown
            .iter()
            .filter(|c| c.event.is_training())
            .map(|c| c.total_s)
            .sum()
    }

    pub fn sum_of(&self, event: EventKind) -> f64 {
        self.breakdown
            .iter()
            .filter(|c| c.event == event)
            .map(|c| c.total_s)
            .sum()
    }
}

struct Costs<'a> {
    split: &'a SplitModel,
    p: &'a LatencyParams,
    batch_size: usize,
}

impl Costs<'_> {
    fn up(&self, kind: MessageKind) -> f64 {
        message_bits(kind, self.split, self.batch_size, self.p.bits_per_value) as f64 / self.p.uplink_bps
    }

    fn down(&self, kind: MessageKind) -> f64 {
        message_bits(kind, self.split, self.batch_size, self.p.bits_per_value) as f64 / self.p.downlink_bps
    }

    fn on_client(&self, spec: &ModelSpec, dir: Direction) -> f64 {
        flops(spec, self.batch_size, dir) as f64 / self.p.client_flops
    }

    fn on_server(&self, spec: &ModelSpec) -> f64 {
        (flops(spec, self.batch_size, Direction::Forward) + flops(spec, self.batch_size, Direction::Backward))
            as f64
            / self.p.server_flops
    }

    /// Split-training events for one client followed by its model handoff.
    fn split_segment(&self, client: usize, batches: usize, last: bool, out: &mut Vec<CostBreakdown>) {
        let n = batches as f64;
        let who = Some(client);
        let (cs, ss) = (self.split.client_spec(), self.split.server_spec());
        out.push(CostBreakdown::new(EventKind::ClientForward, who, n * self.on_client(cs, Direction::Forward), 0.0, 0.0));
        out.push(CostBreakdown::new(EventKind::SmashedUplink, who, 0.0, n * self.up(MessageKind::Smashed), 0.0));
        out.push(CostBreakdown::new(EventKind::ServerCompute, who, n * self.on_server(ss), 0.0, 0.0));
        out.push(CostBreakdown::new(EventKind::GradDownlink, who, 0.0, 0.0, n * self.down(MessageKind::Grad)));
        out.push(CostBreakdown::new(EventKind::ClientBackward, who, n * self.on_client(cs, Direction::Backward), 0.0, 0.0));
        let relay_down = if last { 0.0 } else { self.down(MessageKind::ClientModel) };
        out.push(CostBreakdown::new(EventKind::Handoff, who, 0.0, self.up(MessageKind::ClientModel), relay_down));
    }

    fn sequential_lane(&self, order: &[usize], batches: &[usize]) -> Vec<CostBreakdown> {
        let mut events = Vec::with_capacity(order.len() * 6);
        for (pos, &client) in order.iter().enumerate() {
            self.split_segment(client, batches[client], pos + 1 == order.len(), &mut events);
        }
        events
    }
}

fn lane_sum(events: &[CostBreakdown]) -> f64 {
    events.iter().map(|c| c.total_s).sum()
}

/// Index of the first maximum; ties resolve to the lowest index.
fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > values[best] { i } else { best })
}

/// Simulated duration of one training round.
///
/// `batches[k]` is the number of mini-batch steps client `k` performs this
/// round (all local epochs included). For [`Scheme::Cl`] it must hold a single
/// entry: the pooled step count of one epoch.
///
/// * SL: client-model download to the first client, then every client's
///   segment in turn (training, then relay through the AP; the last client
///   only uploads).
/// * GSFL: the same per group, groups running in parallel; the round takes
///   the slowest group, plus one distribution download and the aggregation.
/// * FL: slowest client's full-model download, local training and upload,
///   plus aggregation.
/// * CL: one epoch of server-side compute (plus raw-data upload when enabled).
pub fn round_latency(
    scheme: Scheme,
    topo: &Topology,
    split: &SplitModel,
    params: &LatencyParams,
    batch_size: usize,
    batches: &[usize],
) -> Result<RoundLatency> {
    params.validate()?;
    let costs = Costs {
        split,
        p: params,
        batch_size,
    };
    let expected = if scheme == Scheme::Cl { 1 } else { topo.n_clients() };
    if batches.len() != expected {
        return Err(Error::config(
            "batches",
            format!("{scheme} round needs {expected} batch counts, got {}", batches.len()),
        ));
    }
    let distribution = || {
        CostBreakdown::new(EventKind::Distribution, None, 0.0, 0.0, costs.down(MessageKind::ClientModel))
    };
    let aggregation = CostBreakdown::new(EventKind::Aggregation, None, params.aggregation_s, 0.0, 0.0);

    Ok(match scheme {
        Scheme::Sl => {
            let order: Vec<usize> = (0..topo.n_clients()).collect();
            let mut events = vec![distribution()];
            events.extend(costs.sequential_lane(&order, batches));
            let lane = lane_sum(&events);
            RoundLatency::from_breakdown(events, vec![lane])
        }
        Scheme::Gsfl => {
            let lanes: Vec<Vec<CostBreakdown>> = topo
                .groups()
                .iter()
                .map(|order| costs.sequential_lane(order, batches))
                .collect();
            let totals: Vec<f64> = lanes.iter().map(|l| lane_sum(l)).collect();
            let slowest = argmax(&totals);
            let mut events = vec![distribution()];
            events.extend_from_slice(&lanes[slowest]);
            events.push(aggregation);
            RoundLatency::from_breakdown(events, totals)
        }
        Scheme::Fl => {
            let full = split.full_spec();
            let local = costs.on_client(full, Direction::Forward) + costs.on_client(full, Direction::Backward);
            let lanes: Vec<[CostBreakdown; 3]> = (0..topo.n_clients())
                .map(|k| {
                    [
                        CostBreakdown::new(EventKind::ModelDownlink, Some(k), 0.0, 0.0, costs.down(MessageKind::FullModel)),
                        CostBreakdown::new(EventKind::LocalCompute, Some(k), batches[k] as f64 * local, 0.0, 0.0),
                        CostBreakdown::new(EventKind::ModelUplink, Some(k), 0.0, costs.up(MessageKind::FullModel), 0.0),
                    ]
                })
                .collect();
            let totals: Vec<f64> = lanes.iter().map(|l| lane_sum(l)).collect();
            let slowest = argmax(&totals);
            let mut events = lanes[slowest].to_vec();
            events.push(aggregation);
            RoundLatency::from_breakdown(events, totals)
        }
        Scheme::Cl => {
            let full = split.full_spec();
            let mut events = vec![CostBreakdown::new(
                EventKind::ServerEpoch,
                None,
                batches[0] as f64 * costs.on_server(full),
                0.0,
                0.0,
            )];
            if params.include_data_transfer {
                // every client uploads its share of the samples (features + label) in parallel
                let samples = (batches[0] * batch_size) as u64;
                let bits = samples * (full.input_dim() as u64 + 1) * u64::from(params.bits_per_value);
                let upload = comm_time(bits, params.uplink_bps)? / topo.n_clients() as f64;
                events.push(CostBreakdown::new(EventKind::DataUpload, None, 0.0, upload, 0.0));
            }
            let lane = lane_sum(&events);
            RoundLatency::from_breakdown(events, vec![lane])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split::split_model;

    fn default_split() -> SplitModel {
        split_model(&ModelSpec::default_experiment(16, 4).unwrap(), 2).unwrap()
    }

    #[test]
    fn comm_time_examples() {
        assert_eq!(comm_time(8_000_000, 1e6).unwrap(), 8.0);
        assert_eq!(comm_time(0, 1e6).unwrap(), 0.0);
        // 10_000 params * 32 bits = 320_000 bits; at 2e6 bits/s that is 0.16 s
        assert!((comm_time(10_000 * 32, 2e6).unwrap() - 0.16).abs() < 1e-15);
        assert!(comm_time(1, 0.0).is_err());
        assert!(comm_time(1, -3.0).is_err());
    }

    #[test]
    fn flop_examples() {
        let spec = ModelSpec::new(4, vec![Layer::Dense { in_dim: 4, out_dim: 3 }]).unwrap();
        assert_eq!(flops(&spec, 2, Direction::Forward), 48);
        assert_eq!(flops(&spec, 2, Direction::Backward), 96);
        let relu = ModelSpec::new(5, vec![Layer::Relu]).unwrap();
        assert_eq!(flops(&relu, 3, Direction::Forward), 15);
        assert_eq!(flops(&relu, 3, Direction::Backward), 15);
    }

    #[test]
    fn default_model_flops_per_layer() {
        let split = default_split();
        let spec = split.full_spec();
        // Dense(16,64) ReLU(64) Dense(64,32) ReLU(32) Dense(32,4), batch 8
        let fwd = 2 * 8 * 16 * 64 + 8 * 64 + 2 * 8 * 64 * 32 + 8 * 32 + 2 * 8 * 32 * 4;
        let bwd = 4 * 8 * 16 * 64 + 8 * 64 + 4 * 8 * 64 * 32 + 8 * 32 + 4 * 8 * 32 * 4;
        assert_eq!(flops(spec, 8, Direction::Forward), fwd);
        assert_eq!(flops(spec, 8, Direction::Backward), bwd);
    }

    #[test]
    fn message_sizes() {
        let spec = ModelSpec::mlp(10, &[32, 16], 3).unwrap();
        let split = split_model(&spec, 2).unwrap();
        assert_eq!(message_bits(MessageKind::Smashed, &split, 8, 32), 8448);
        assert_eq!(
            message_bits(MessageKind::Grad, &split, 8, 32),
            message_bits(MessageKind::Smashed, &split, 8, 32) - 8 * 32
        );
        assert_eq!(
            message_bits(MessageKind::FullModel, &split, 8, 32),
            message_bits(MessageKind::ClientModel, &split, 8, 32) + message_bits(MessageKind::ServerModel, &split, 8, 32)
        );
    }

    #[test]
    fn single_group_is_sl_plus_aggregation() {
        let split = default_split();
        let p = LatencyParams::default();
        let batches = vec![4; 10];
        let sl = round_latency(Scheme::Sl, &Topology::new(10, 1).unwrap(), &split, &p, 16, &batches).unwrap();
        let g = round_latency(Scheme::Gsfl, &Topology::new(10, 1).unwrap(), &split, &p, 16, &batches).unwrap();
        assert!((g.total_s - (sl.total_s + p.aggregation_s)).abs() < 1e-12);
    }

    #[test]
    fn totals_equal_breakdown_sums() {
        let split = default_split();
        let p = LatencyParams {
            include_data_transfer: true,
            ..Default::default()
        };
        let topo = Topology::new(7, 3).unwrap();
        let batches = vec![3, 5, 2, 4, 4, 1, 6];
        for scheme in Scheme::ALL {
            let b = if scheme == Scheme::Cl { vec![25] } else { batches.clone() };
            let r = round_latency(scheme, &topo, &split, &p, 8, &b).unwrap();
            let sum: f64 = r.breakdown.iter().map(|c| c.total_s).sum();
            assert!((sum - r.total_s).abs() < 1e-9);
            for c in &r.breakdown {
                assert!(c.compute_s >= 0.0 && c.uplink_s >= 0.0 && c.downlink_s >= 0.0);
                assert!((c.total_s - (c.compute_s + c.uplink_s + c.downlink_s)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn wrong_batch_vector_length() {
        let split = default_split();
        let topo = Topology::new(4, 2).unwrap();
        let p = LatencyParams::default();
        assert!(round_latency(Scheme::Gsfl, &topo, &split, &p, 8, &[1, 2]).is_err());
        assert!(round_latency(Scheme::Cl, &topo, &split, &p, 8, &[1, 2, 3, 4]).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let p = LatencyParams {
            server_flops: 0.0,
            ..LatencyParams::default()
        };
        assert!(p.validate().is_err());
        let p = LatencyParams {
            aggregation_s: -1.0,
            ..LatencyParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn scheme_parsing() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("hfl".parse::<Scheme>().is_err());
    }
}
