//! Event loop shared by every simulation entry point.
//!
//! Events compete at aggregate rates: arrivals at `Σλ`, departures at
//! `Σ μ_i 1{N_i > 0}` and resampling at `β N`. A resample picks a uniform
//! client and then applies the policy rule; rejected RLS attempts are
//! thinned events that leave the state unchanged.
//!
//! Under processor sharing with exponential requirements the next service
//! completion at a busy server is a uniformly chosen resident, so departures
//! remove a uniform client from the server's bag. This shortcut does not carry
//! over to non-exponential service.

use rand::Rng;
use rand_distr::Exp1;

use super::{EventCounts, EventKind, EventRecord, Regime, SojournRecord};
use crate::error::{Error, Result};
use crate::model::{rls_accepts, Policy, SystemConfig};

#[derive(Debug, Clone, Copy)]
struct Resident {
    id: u64,
    server: usize,
    entry: usize,
    arrive_t: f64,
    bag_pos: usize,
}

/// Clients with identity, indexable uniformly overall and per server.
#[derive(Debug, Clone)]
pub(crate) struct Population {
    slots: Vec<Resident>,
    bags: Vec<Vec<usize>>,
}

impl Population {
    fn new(m: usize) -> Self {
        Population { slots: Vec::new(), bags: vec![Vec::new(); m] }
    }

    fn len(&self) -> usize {
        self.slots.len()
    }

    fn insert(&mut self, id: u64, server: usize, arrive_t: f64) {
        let slot = self.slots.len();
        let bag_pos = self.bags[server].len();
        self.bags[server].push(slot);
        self.slots.push(Resident { id, server, entry: server, arrive_t, bag_pos });
    }

    fn detach_from_bag(&mut self, slot: usize) {
        let Resident { server, bag_pos, .. } = self.slots[slot];
        let bag = &mut self.bags[server];
        bag.swap_remove(bag_pos);
        if let Some(&moved) = bag.get(bag_pos) {
            self.slots[moved].bag_pos = bag_pos;
        }
    }

    fn remove(&mut self, slot: usize) -> Resident {
        self.detach_from_bag(slot);
        let gone = self.slots.swap_remove(slot);
        if slot < self.slots.len() {
            let r = self.slots[slot];
            self.bags[r.server][r.bag_pos] = slot;
        }
        gone
    }

    fn relocate(&mut self, slot: usize, to: usize) {
        self.detach_from_bag(slot);
        self.slots[slot].server = to;
        self.slots[slot].bag_pos = self.bags[to].len();
        self.bags[to].push(slot);
    }

    fn resident_of(&self, server: usize, k: usize) -> usize {
        self.bags[server][k]
    }
}

/// Indices of servers with at least one client, with O(1) insert/remove.
#[derive(Debug, Clone)]
struct BusySet {
    list: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl BusySet {
    fn new(m: usize) -> Self {
        BusySet { list: Vec::new(), pos: vec![None; m] }
    }

    fn insert(&mut self, i: usize) {
        if self.pos[i].is_none() {
            self.pos[i] = Some(self.list.len());
            self.list.push(i);
        }
    }

    fn remove(&mut self, i: usize) {
        if let Some(p) = self.pos[i].take() {
            self.list.swap_remove(p);
            if let Some(&moved) = self.list.get(p) {
                self.pos[moved] = Some(p);
            }
        }
    }
}

pub(crate) struct Engine<'c> {
    cfg: &'c SystemConfig,
    regime: Regime,
    t: f64,
    counts: Vec<u32>,
    pop: Population,
    busy: BusySet,
    busy_mu: f64,
    lambda_cdf: Vec<f64>,
    lambda_total: f64,
    uniform_mu: Option<f64>,
    next_id: u64,
    first_exogenous: u64,
    counts_by_kind: EventCounts,
    record_from: Option<f64>,
    sojourns: Vec<SojournRecord>,
}

impl<'c> Engine<'c> {
    pub(crate) fn new(cfg: &'c SystemConfig, regime: Regime, t0: f64, counts: &[u32]) -> Self {
        let m = cfg.m();
        let mut pop = Population::new(m);
        let mut busy = BusySet::new(m);
        let mut next_id = 0;
        for (i, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                pop.insert(next_id, i, t0);
                next_id += 1;
            }
            if c > 0 {
                busy.insert(i);
            }
        }
        let mut acc = 0.0;
        let lambda_cdf: Vec<f64> = cfg
            .lambda()
            .iter()
            .map(|l| {
                acc += l;
                acc
            })
            .collect();
        let lambda_total = match regime {
            Regime::Closed => 0.0,
            Regime::Open => acc,
        };
        let uniform_mu = cfg.is_homogeneous().then(|| cfg.mu()[0]);
        let busy_mu = busy.list.iter().map(|&i| cfg.mu()[i]).sum();
        Engine {
            cfg,
            regime,
            t: t0,
            counts: counts.to_vec(),
            pop,
            busy,
            busy_mu,
            lambda_cdf,
            lambda_total,
            uniform_mu,
            next_id,
            first_exogenous: next_id,
            counts_by_kind: EventCounts::default(),
            record_from: None,
            sojourns: Vec::new(),
        }
    }

    /// Keep sojourn records for exogenous arrivals at or after `t`.
    pub(crate) fn record_sojourns_from(&mut self, t: f64) {
        self.record_from = Some(t);
    }

    pub(crate) fn time(&self) -> f64 {
        self.t
    }

    pub(crate) fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub(crate) fn event_counts(&self) -> EventCounts {
        self.counts_by_kind
    }

    fn departure_rate(&self) -> f64 {
        match (self.regime, self.uniform_mu) {
            (Regime::Closed, _) => 0.0,
            (Regime::Open, Some(mu)) => mu * self.busy.list.len() as f64,
            (Regime::Open, None) => self.busy_mu,
        }
    }

    pub(crate) fn total_rate(&self) -> f64 {
        self.lambda_total + self.departure_rate() + self.cfg.beta() * self.pop.len() as f64
    }

    /// Time of the next event, or `None` when no event can ever fire.
    pub(crate) fn draw_next_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<f64> {
        let rate = self.total_rate();
        if rate <= 0.0 {
            return None;
        }
        let e: f64 = rng.sample(Exp1);
        Some(self.t + e / rate)
    }

    /// Like [`draw_next_time`](Self::draw_next_time) but a silent system is a
    /// deadlock.
    pub(crate) fn require_next_time<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.draw_next_time(rng).ok_or(Error::Deadlock { t: self.t })
    }

    /// Applies the event firing at `t_next`.
    pub(crate) fn fire<R: Rng + ?Sized>(&mut self, t_next: f64, rng: &mut R) -> EventRecord {
        self.t = t_next;
        let dep_rate = self.departure_rate();
        let u = rng.random::<f64>() * (self.lambda_total + dep_rate + self.cfg.beta() * self.pop.len() as f64);
        let kind = if u < self.lambda_total || (self.pop.len() == 0 && dep_rate == 0.0) {
            let server = match self.lambda_cdf.partition_point(|&c| c <= u) {
                i if i < self.cfg.m() => i,
                _ => self.cfg.lambda().iter().rposition(|&l| l > 0.0).unwrap_or(0),
            };
            self.arrive(server)
        } else if u < self.lambda_total + dep_rate && !self.busy.list.is_empty() {
            let server = self.pick_busy(u - self.lambda_total);
            self.depart(server, rng)
        } else {
            self.resample(rng)
        };
        self.counts_by_kind.tally(&kind);
        EventRecord { t: t_next, kind }
    }

    fn pick_busy(&self, mut u: f64) -> usize {
        let list = &self.busy.list;
        if let Some(mu) = self.uniform_mu {
            let k = ((u / mu) as usize).min(list.len() - 1);
            return list[k];
        }
        for &i in list {
            let w = self.cfg.mu()[i];
            if u < w {
                return i;
            }
            u -= w;
        }
        *list.last().expect("busy set is non-empty")
    }

    fn arrive(&mut self, server: usize) -> EventKind {
        if self.cfg.cap().is_some_and(|b| self.counts[server] >= b) {
            return EventKind::DroppedArrival { server };
        }
        self.pop.insert(self.next_id, server, self.t);
        self.next_id += 1;
        self.increment(server);
        EventKind::Arrival { server }
    }

    fn depart<R: Rng + ?Sized>(&mut self, server: usize, rng: &mut R) -> EventKind {
        let k = rng.random_range(0..self.counts[server] as usize);
        let slot = self.pop.resident_of(server, k);
        let gone = self.pop.remove(slot);
        self.decrement(server);
        if self.is_tracked(&gone) {
            self.sojourns.push(SojournRecord {
                client_id: gone.id,
                arrive_t: gone.arrive_t,
                depart_t: Some(self.t),
                entry_server: gone.entry,
            });
        }
        EventKind::Departure { server }
    }

    fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> EventKind {
        let slot = rng.random_range(0..self.pop.len());
        let from = self.pop.slots[slot].server;
        let m = self.cfg.m();
        let (to, accept) = match self.cfg.policy() {
            Policy::Rls => {
                let to = rng.random_range(0..m);
                let mu = self.cfg.mu();
                let ok = rls_accepts(mu[from], self.counts[from], mu[to], self.counts[to], self.cfg.cap())
                    .expect("source server holds the resampling client");
                (to, ok)
            }
            Policy::Rlo => {
                let to = self.cfg.sample_jump(from, rng);
                let full = self.cfg.cap().is_some_and(|b| self.counts[to] >= b);
                (to, !full)
            }
        };
        if to == from && self.cfg.policy() == Policy::Rlo {
            return EventKind::SelfJump { server: from };
        }
        if !accept {
            return EventKind::Rejected { from, to };
        }
        self.pop.relocate(slot, to);
        self.decrement(from);
        self.increment(to);
        EventKind::Migration { from, to }
    }

    fn increment(&mut self, i: usize) {
        self.counts[i] += 1;
        if self.counts[i] == 1 {
            self.busy.insert(i);
            if self.uniform_mu.is_none() {
                self.busy_mu += self.cfg.mu()[i];
            }
        }
    }

    fn decrement(&mut self, i: usize) {
        self.counts[i] -= 1;
        if self.counts[i] == 0 {
            self.busy.remove(i);
            if self.uniform_mu.is_none() {
                self.busy_mu = if self.busy.list.is_empty() { 0.0 } else { self.busy_mu - self.cfg.mu()[i] };
            }
        }
    }

    fn is_tracked(&self, r: &Resident) -> bool {
        r.id >= self.first_exogenous && self.record_from.is_some_and(|w| r.arrive_t >= w)
    }

    /// Completed sojourn records in departure order, followed by records of
    /// tracked clients still present (no departure time), by client id.
    pub(crate) fn into_sojourns(mut self) -> Vec<SojournRecord> {
        let mut open: Vec<SojournRecord> = self
            .pop
            .slots
            .iter()
            .filter(|r| self.is_tracked(r))
            .map(|r| SojournRecord { client_id: r.id, arrive_t: r.arrive_t, depart_t: None, entry_server: r.entry })
            .collect();
        open.sort_by_key(|r| r.client_id);
        self.sojourns.extend(open);
        self.sojourns
    }
}
