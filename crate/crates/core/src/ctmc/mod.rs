//! Exact event-driven simulation of the occupancy process `N(t)`.
//!
//! Closed runs (no arrivals, no departures) serve the time-to-balance
//! studies; open runs track client identities for sojourn statistics; the
//! coupled three-colour particle system lives in [`coupled`].

mod coupled;
mod engine;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use coupled::{simulate_coupled, CoupledSample, CoupledState};

use crate::balance;
use crate::error::{Error, Result};
use crate::model::{rls_accepts, Policy, SystemConfig, SystemState};
use crate::output::{csv_writer, write_comments};
use crate::scalar::Scalar;
use engine::Engine;

/// Seeded generator used by every simulation entry point.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Whether the population is fixed (no arrivals or service completions) or
/// driven by Poisson arrivals and PS departures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Closed,
    Open,
}

impl Regime {
    /// Configurations without arrivals describe closed systems.
    pub fn of(config: &SystemConfig) -> Self {
        if config.is_closed() {
            Regime::Closed
        } else {
            Regime::Open
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Arrival { server: usize },
    /// Arrival at a server already holding `cap` clients.
    DroppedArrival { server: usize },
    Departure { server: usize },
    Migration { from: usize, to: usize },
    /// Resample that did not move (RLS rule failed or destination full).
    Rejected { from: usize, to: usize },
    /// RLO jump whose destination is the current server.
    SelfJump { server: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub arrivals: u64,
    pub dropped_arrivals: u64,
    pub departures: u64,
    pub migrations: u64,
    pub rejected: u64,
    pub self_jumps: u64,
}

impl EventCounts {
    fn tally(&mut self, kind: &EventKind) {
        match kind {
            EventKind::Arrival { .. } => self.arrivals += 1,
            EventKind::DroppedArrival { .. } => self.dropped_arrivals += 1,
            EventKind::Departure { .. } => self.departures += 1,
            EventKind::Migration { .. } => self.migrations += 1,
            EventKind::Rejected { .. } => self.rejected += 1,
            EventKind::SelfJump { .. } => self.self_jumps += 1,
        }
    }
}

/// Snapshots of the occupancy vector on a regular time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub samples: Vec<SystemState>,
    pub event_counts: EventCounts,
    pub seed: u64,
}

impl Trajectory {
    /// Total population at each snapshot.
    pub fn totals(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.samples.iter().map(|s| (s.t, s.total()))
    }

    /// CSV with a `# seed=` comment line, header `t,N_1..N_m`, one row per
    /// snapshot.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write_comments(&mut w, &[("seed", self.seed.to_string())])?;
        let m = self.samples.first().map_or(0, |s| s.m());
        let mut out = csv_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=m).map(|i| format!("N_{i}")));
        out.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.t.to_string()];
            row.extend(s.counts.iter().map(u32::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SojournRecord {
    pub client_id: u64,
    pub arrive_t: f64,
    /// `None` when the client was still present at the horizon.
    pub depart_t: Option<f64>,
    pub entry_server: usize,
}

impl SojournRecord {
    pub fn sojourn(&self) -> Option<f64> {
        self.depart_t.map(|d| d - self.arrive_t)
    }
}

/// CSV with header `client_id,arrive_t,depart_t,sojourn`; censored records
/// leave the last two fields empty.
pub fn write_sojourns_csv<W: Write>(records: &[SojournRecord], seed: u64, mut w: W) -> Result<()> {
    write_comments(&mut w, &[("seed", seed.to_string())])?;
    let mut out = csv_writer(w);
    out.write_record(["client_id", "arrive_t", "depart_t", "sojourn"])?;
    for r in records {
        out.write_record([
            r.client_id.to_string(),
            r.arrive_t.to_string(),
            r.depart_t.map(|d| d.to_string()).unwrap_or_default(),
            r.sojourn().map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Mean of completed sojourns, `None` when nothing completed.
pub fn mean_sojourn(records: &[SojournRecord]) -> Option<f64> {
    let (sum, n) = records
        .iter()
        .filter_map(SojournRecord::sojourn)
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One event from `state`, with the regime implied by `config`.
///
/// Builds a fresh engine, so it is meant for inspection and testing; the
/// `simulate_*` functions drive a persistent engine instead.
pub fn step<R: Rng + ?Sized>(
    state: &SystemState,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<(SystemState, EventRecord)> {
    state.validate(config)?;
    let mut engine = Engine::new(config, Regime::of(config), state.time(), &state.counts);
    let t_next = engine.require_next_time(rng)?;
    let ev = engine.fire(t_next, rng);
    Ok((SystemState::at(engine.time(), engine.counts().to_vec()), ev))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    Balanced,
    EpsBalanced(f64),
    /// Run until the horizon.
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedRun {
    pub trajectory: Trajectory,
    /// First time the stop rule held, or the horizon when censored.
    pub stop_time: f64,
    /// The horizon was reached before the stop rule held.
    pub censored: bool,
}

/// Occupancy histogram with running min and max, updated per migration.
struct Spread {
    hist: Vec<u32>,
    min: usize,
    max: usize,
}

impl Spread {
    fn new(counts: &[u32], n: u64) -> Self {
        let mut hist = vec![0; n as usize + 2];
        for &c in counts {
            hist[c as usize] += 1;
        }
        let min = *counts.iter().min().expect("non-empty") as usize;
        let max = *counts.iter().max().expect("non-empty") as usize;
        Spread { hist, min, max }
    }

    /// A client moved from a server that held `from_before` to one that held
    /// `to_before`.
    fn moved(&mut self, from_before: u32, to_before: u32) {
        let (f, t) = (from_before as usize, to_before as usize);
        self.hist[f] -= 1;
        self.hist[f - 1] += 1;
        self.hist[t] -= 1;
        self.hist[t + 1] += 1;
        self.max = self.max.max(t + 1);
        while self.hist[self.max] == 0 {
            self.max -= 1;
        }
        self.min = self.min.min(f - 1);
        while self.hist[self.min] == 0 {
            self.min += 1;
        }
    }
}

enum Target {
    Balanced,
    Band(u32, u32),
    Never,
}

impl Target {
    fn reached(&self, s: &Spread) -> bool {
        match *self {
            Target::Balanced => s.max - s.min <= 1,
            Target::Band(lo, hi) => s.min >= lo as usize && s.max <= hi as usize,
            Target::Never => false,
        }
    }
}

/// Samples grid points `k * dt` strictly before `until`.
struct Sampler {
    dt: f64,
    next_k: u64,
}

impl Sampler {
    fn new(dt: f64, t0: f64) -> Self {
        Sampler { dt, next_k: (t0 / dt).ceil() as u64 }
    }

    fn emit_before(&mut self, until: f64, counts: &[u32], out: &mut Vec<SystemState>) {
        loop {
            let t = self.next_k as f64 * self.dt;
            if t >= until {
                break;
            }
            out.push(SystemState::at(t, counts.to_vec()));
            self.next_k += 1;
        }
    }

    fn emit_through(&mut self, end: f64, counts: &[u32], out: &mut Vec<SystemState>) {
        self.emit_before(end, counts, out);
        if out.last().is_none_or(|s| s.t < end) {
            out.push(SystemState::at(end, counts.to_vec()));
        }
    }
}

/// Runs a closed system until `stop` first holds (checked after every
/// event) or `horizon` is reached.
pub fn simulate_closed(
    config: &SystemConfig,
    initial: &SystemState,
    stop: StopRule,
    horizon: f64,
    seed: u64,
) -> Result<ClosedRun> {
    if !config.is_closed() {
        return Err(Error::invalid("closed simulation requires zero arrival rates"));
    }
    initial.validate(config)?;
    if !(horizon.is_finite() && horizon >= initial.time()) {
        return Err(Error::invalid(format!("horizon {horizon} must be finite and not before the start")));
    }
    let n = initial.total();
    if n == 0 {
        return Err(Error::Deadlock { t: initial.time() });
    }
    let target = match stop {
        StopRule::Balanced => Target::Balanced,
        StopRule::EpsBalanced(eps) => match balance::eps_band(n, config.m(), eps)? {
            Some((lo, hi)) => Target::Band(lo, hi),
            None => Target::Never,
        },
        StopRule::Horizon => Target::Never,
    };
    let mut rng = rng_from_seed(seed);
    let mut engine = Engine::new(config, Regime::Closed, initial.time(), &initial.counts);
    let mut spread = Spread::new(&initial.counts, n);
    let mut sampler = Sampler::new(config.sample_interval(), initial.time());
    let mut samples = Vec::new();

    let mut reached = target.reached(&spread);
    let mut end = initial.time();
    while !reached {
        let t_next = engine.require_next_time(&mut rng)?;
        if t_next > horizon {
            end = horizon;
            break;
        }
        sampler.emit_before(t_next, engine.counts(), &mut samples);
        let ev = engine.fire(t_next, &mut rng);
        if let EventKind::Migration { from, to } = ev.kind {
            let after = engine.counts();
            spread.moved(after[from] + 1, after[to] - 1);
            reached = target.reached(&spread);
        }
        end = t_next;
    }
    sampler.emit_through(end, engine.counts(), &mut samples);
    Ok(ClosedRun {
        trajectory: Trajectory { samples, event_counts: engine.event_counts(), seed },
        stop_time: end,
        censored: !reached,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenRun {
    pub trajectory: Trajectory,
    pub sojourns: Vec<SojournRecord>,
}

/// Options for [`simulate_open_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpenOptions {
    pub horizon: f64,
    pub warmup: f64,
    /// Keep per-client sojourn records for arrivals after the warm-up.
    pub record_sojourns: bool,
    /// Keep occupancy snapshots at the configured interval.
    pub record_samples: bool,
}

/// Open system from `initial` until `horizon`; sojourns are recorded for
/// exogenous arrivals at or after `warmup`.
pub fn simulate_open(
    config: &SystemConfig,
    initial: &SystemState,
    horizon: f64,
    warmup: f64,
    seed: u64,
) -> Result<OpenRun> {
    simulate_open_with(
        config,
        initial,
        &OpenOptions { horizon, warmup, record_sojourns: true, record_samples: true },
        seed,
    )
}

pub fn simulate_open_with(
    config: &SystemConfig,
    initial: &SystemState,
    opts: &OpenOptions,
    seed: u64,
) -> Result<OpenRun> {
    initial.validate(config)?;
    if !(opts.horizon.is_finite() && opts.horizon > initial.time()) {
        return Err(Error::invalid(format!("horizon {} must be finite and after the start", opts.horizon)));
    }
    if !(opts.warmup >= 0.0 && opts.warmup < opts.horizon) {
        return Err(Error::invalid(format!("warmup {} must lie in [0, horizon)", opts.warmup)));
    }
    let mut rng = rng_from_seed(seed);
    let mut engine = Engine::new(config, Regime::Open, initial.time(), &initial.counts);
    if opts.record_sojourns {
        engine.record_sojourns_from(opts.warmup);
    }
    let mut sampler = Sampler::new(config.sample_interval(), initial.time());
    let mut samples = Vec::new();
    while let Some(t_next) = engine.draw_next_time(&mut rng) {
        if t_next > opts.horizon {
            break;
        }
        if opts.record_samples {
            sampler.emit_before(t_next, engine.counts(), &mut samples);
        }
        engine.fire(t_next, &mut rng);
    }
    if opts.record_samples {
        sampler.emit_through(opts.horizon, engine.counts(), &mut samples);
    }
    let event_counts = engine.event_counts();
    Ok(OpenRun {
        trajectory: Trajectory { samples, event_counts, seed },
        sojourns: engine.into_sojourns(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transition {
    Arrival(usize),
    Departure(usize),
    Migration { from: usize, to: usize },
}

impl Transition {
    /// Occupancy vector after the transition.
    pub fn apply(&self, counts: &[u32]) -> Vec<u32> {
        let mut next = counts.to_vec();
        match *self {
            Transition::Arrival(i) => next[i] += 1,
            Transition::Departure(i) => next[i] -= 1,
            Transition::Migration { from, to } => {
                next[from] -= 1;
                next[to] += 1;
            }
        }
        next
    }
}

/// Non-zero transition rates out of `counts`.
///
/// Arrivals at rate `λ_i` (absent at a full server), departures at
/// `μ_i 1{n_i > 0}` (open regime only), migrations `i → j ≠ i` at rate
/// `β n_i / m` when RLS accepts or `β n_i q_ij` under RLO.
pub fn transition_rates<T: Scalar>(
    counts: &[u32],
    config: &SystemConfig,
    regime: Regime,
) -> Result<Vec<(Transition, T)>> {
    let m = config.m();
    if counts.len() != m {
        return Err(Error::invalid(format!("state has {} servers, config has {m}", counts.len())));
    }
    let mut out = Vec::new();
    if regime == Regime::Open {
        for i in 0..m {
            let full = config.cap().is_some_and(|b| counts[i] >= b);
            if config.lambda()[i] > 0.0 && !full {
                out.push((Transition::Arrival(i), T::of(config.lambda()[i])));
            }
        }
        for i in 0..m {
            if counts[i] > 0 {
                out.push((Transition::Departure(i), T::of(config.mu()[i])));
            }
        }
    }
    let beta = T::of(config.beta());
    if beta == T::zero() {
        return Ok(out);
    }
    let mu: Vec<T> = config.mu().iter().map(|&v| T::of(v)).collect();
    for i in (0..m).filter(|&i| counts[i] > 0) {
        let n_i = T::of_count(counts[i] as u64);
        for j in (0..m).filter(|&j| j != i) {
            let rate = match config.policy() {
                Policy::Rls => {
                    if !rls_accepts(mu[i].clone(), counts[i], mu[j].clone(), counts[j], config.cap())? {
                        continue;
                    }
                    beta.clone() * n_i.clone() / T::of_count(m as u64)
                }
                Policy::Rlo => {
                    let q = config.jump_probability(i, j);
                    if q == 0.0 || config.cap().is_some_and(|b| counts[j] >= b) {
                        continue;
                    }
                    beta.clone() * n_i.clone() * T::of(q)
                }
            };
            out.push((Transition::Migration { from: i, to: j }, rate));
        }
    }
    Ok(out)
}
