//! Deterministic discrete-event simulation of points on a line exchanging
//! classical and quantum signals at speed c = 1.
//!
//! Classical payloads are copied to every agent along their path (unless a
//! handler absorbs them or a jam extent cuts them off). Quantum payloads are
//! opaque handles into a [`QuantumStore`] with exactly one owner at any
//! simulated instant; emitting a handle you do not own, or using it after it
//! was consumed, is a hard [`SimError::NoCloneViolation`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::qstate::{
    self, BellOutcome, MeasBasis, PauliCorrection, PureRegister, QstateError,
};

pub type AgentId = usize;

/// Absolute tolerance for the light-cone equation and simultaneity checks.
pub const EPSILON_T: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no-cloning violation: {0}")]
    NoCloneViolation(String),
    #[error("causality violation: {0}")]
    CausalityViolation(String),
    #[error("quantum state error: {0}")]
    Qstate(#[from] QstateError),
    #[error("unknown quantum handle {0:?}")]
    UnknownHandle(HandleId),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn sign(&self) -> f64 {
        match self {
            Direction::Left => -1.0,
            Direction::Right => 1.0,
        }
    }

    pub fn reversed(&self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

/// Which of Alice's flanking stations, `A0` (left) or `A1` (right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Station {
    A0,
    A1,
}

impl Station {
    pub fn from_route(bit: u8) -> Station {
        if bit == 0 { Station::A0 } else { Station::A1 }
    }

    /// Direction of travel from the tag toward this station.
    pub fn direction_from_tag(&self) -> Direction {
        match self {
            Station::A0 => Direction::Left,
            Station::A1 => Direction::Right,
        }
    }
}

/// Classical message bodies exchanged by the protocols and the attacks.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum MsgBody {
    /// Scheme I routing instruction from A1.
    RouteBit(u8),
    /// Scheme II index `a_i`, sent from A0 alongside the qubit.
    PairIndex(u32),
    /// Scheme II index `b_i` from A1.
    RouteIndex(u32),
    /// Scheme III / V basis trit from A1.
    BasisTrit(u8),
    /// Scheme IV / VI command from A1: measurement axis, plus the VI branch
    /// bits when present.
    BasisCommand {
        axis: [f64; 3],
        branch: Option<BranchBits>,
    },
    /// A measurement outcome broadcast toward the stations.
    OutcomeReport(u8),
    /// Eve-internal: Bell outcome plus the pair label used at E0.
    TeleportData { outcome: BellOutcome, pair: u32 },
    /// Eve-internal: raw measurement outcome and the basis it was taken in.
    RelayedOutcome { bit: u8, axis: [f64; 3] },
}

/// Scheme VI branch bits: `measure == (b_i == 0)`, `route == c_i`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BranchBits {
    pub measure: bool,
    pub route: u8,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Payload {
    Classical(MsgBody),
    Quantum(HandleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct HandleId(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Owner {
    Agent(AgentId),
    InFlight,
    Consumed,
}

struct Slot {
    reg: u64,
    qubit: usize,
    owner: Owner,
    label: Option<(u32, u32)>,
}

/// Owner- and linearity-tracked storage for all quantum registers in a run.
#[derive(Default)]
pub struct QuantumStore {
    regs: HashMap<u64, PureRegister>,
    slots: HashMap<HandleId, Slot>,
    next_reg: u64,
    next_handle: u64,
}

impl QuantumStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Installs a register owned by `owner`; returns one handle per qubit.
    pub fn insert_register(&mut self, reg: PureRegister, owner: AgentId) -> Vec<HandleId> {
        let reg_id = self.next_reg;
        self.next_reg += 1;
        let n = reg.num_qubits();
        self.regs.insert(reg_id, reg);
        (0..n)
            .map(|qubit| {
                let id = HandleId(self.next_handle);
                self.next_handle += 1;
                self.slots.insert(id, Slot { reg: reg_id, qubit, owner: Owner::Agent(owner), label: None });
                id
            })
            .collect()
    }

    /// A fresh singlet with one half at each owner, both halves labelled.
    pub fn insert_singlet(
        &mut self,
        owner0: AgentId,
        owner1: AgentId,
        label: (u32, u32),
    ) -> (HandleId, HandleId) {
        let handles = self.insert_register(qstate::make_singlet(), owner0);
        let (h0, h1) = (handles[0], handles[1]);
        self.slots.get_mut(&h1).unwrap().owner = Owner::Agent(owner1);
        self.slots.get_mut(&h0).unwrap().label = Some(label);
        self.slots.get_mut(&h1).unwrap().label = Some(label);
        (h0, h1)
    }

    pub fn owner(&self, h: HandleId) -> Result<Owner, SimError> {
        Ok(self.slot(h)?.owner)
    }

    pub fn label(&self, h: HandleId) -> Result<Option<(u32, u32)>, SimError> {
        Ok(self.slot(h)?.label)
    }

    fn slot(&self, h: HandleId) -> Result<&Slot, SimError> {
        self.slots.get(&h).ok_or(SimError::UnknownHandle(h))
    }

    fn live_slot(&self, h: HandleId) -> Result<&Slot, SimError> {
        let slot = self.slot(h)?;
        if slot.owner == Owner::Consumed {
            return Err(SimError::NoCloneViolation(format!("handle {h:?} already consumed")));
        }
        Ok(slot)
    }

    fn set_owner(&mut self, h: HandleId, owner: Owner) {
        self.slots.get_mut(&h).unwrap().owner = owner;
    }

    /// Transfers ownership from `agent` to in-flight; the linearity gate for
    /// every quantum emission.
    fn take_for_flight(&mut self, h: HandleId, agent: AgentId) -> Result<(), SimError> {
        let slot = self.live_slot(h)?;
        if slot.owner != Owner::Agent(agent) {
            return Err(SimError::NoCloneViolation(format!(
                "agent {agent} emitted handle {h:?} owned by {:?}",
                slot.owner
            )));
        }
        self.set_owner(h, Owner::InFlight);
        Ok(())
    }

    fn land(&mut self, h: HandleId, agent: AgentId) -> Result<(), SimError> {
        let slot = self.live_slot(h)?;
        if slot.owner != Owner::InFlight {
            return Err(SimError::NoCloneViolation(format!(
                "handle {h:?} delivered while owned by {:?}",
                slot.owner
            )));
        }
        self.set_owner(h, Owner::Agent(agent));
        Ok(())
    }

    /// Measures the handle's qubit, factoring it out of its register.
    pub fn measure<R: Rng>(
        &mut self,
        h: HandleId,
        basis: &MeasBasis,
        rng: &mut R,
    ) -> Result<u8, SimError> {
        let slot = self.live_slot(h)?;
        let (reg_id, qubit) = (slot.reg, slot.qubit);
        let reg = self.regs.remove(&reg_id).expect("slot points at live register");
        let n = reg.num_qubits();
        let (outcome, post) = qstate::measure_qubit(reg, qubit, basis, rng)?;
        if n > 1 {
            self.regs.insert(reg_id, post);
        }
        self.retire(&[h], reg_id, &[qubit]);
        Ok(outcome)
    }

    /// Joint Bell measurement of two handles, merging their registers first
    /// when they differ.
    pub fn bell_measure<R: Rng>(
        &mut self,
        h_a: HandleId,
        h_b: HandleId,
        rng: &mut R,
    ) -> Result<BellOutcome, SimError> {
        let reg_a = self.live_slot(h_a)?.reg;
        let (reg_b, mut q_b) = {
            let s = self.live_slot(h_b)?;
            (s.reg, s.qubit)
        };
        let reg_id = if reg_a == reg_b {
            reg_a
        } else {
            let left = self.regs.remove(&reg_a).unwrap();
            let offset = left.num_qubits();
            let right = self.regs.remove(&reg_b).unwrap();
            let merged = left.tensor(right)?;
            self.regs.insert(reg_a, merged);
            for slot in self.slots.values_mut() {
                if slot.reg == reg_b {
                    slot.reg = reg_a;
                    slot.qubit += offset;
                }
            }
            q_b += offset;
            reg_a
        };
        let q_a = self.slot(h_a)?.qubit;
        let reg = self.regs.remove(&reg_id).unwrap();
        let (outcome, post) = qstate::bell_measure(reg, q_a, q_b, rng)?;
        if let Some(post) = post {
            self.regs.insert(reg_id, post);
        }
        self.retire(&[h_a, h_b], reg_id, &[q_a, q_b]);
        Ok(outcome)
    }

    /// Consumes `handles` and reindexes the surviving qubits of `reg_id`
    /// after `removed` qubit positions were factored out.
    fn retire(&mut self, handles: &[HandleId], reg_id: u64, removed: &[usize]) {
        for h in handles {
            self.set_owner(*h, Owner::Consumed);
        }
        for slot in self.slots.values_mut() {
            if slot.reg == reg_id && slot.owner != Owner::Consumed {
                let shift = removed.iter().filter(|r| **r < slot.qubit).count();
                slot.qubit -= shift;
            }
        }
    }

    pub fn apply_correction(&mut self, h: HandleId, p: PauliCorrection) -> Result<(), SimError> {
        let slot = self.live_slot(h)?;
        let (reg_id, qubit) = (slot.reg, slot.qubit);
        let reg = self.regs.remove(&reg_id).unwrap();
        let reg = qstate::apply_pauli(reg, qubit, p)?;
        self.regs.insert(reg_id, reg);
        Ok(())
    }

    /// Pass/fail projection of the handle's qubit onto a single-qubit
    /// `target`; consumes the handle.
    pub fn projective_test<R: Rng>(
        &mut self,
        h: HandleId,
        target: &PureRegister,
        rng: &mut R,
    ) -> Result<bool, SimError> {
        let basis = target_basis(target)?;
        Ok(self.measure(h, &basis, rng)? == 0)
    }

    /// `<psi| P_target |psi>` for the handle's qubit, without consuming it.
    pub fn peek_projection_prob(
        &self,
        h: HandleId,
        target: &PureRegister,
    ) -> Result<f64, SimError> {
        let slot = self.live_slot(h)?;
        let reg = self.regs.get(&slot.reg).unwrap();
        let basis = target_basis(target)?;
        let (e0, _) = basis.eigenstates();
        Ok(project_prob(reg, slot.qubit, &e0))
    }

    /// Traces the qubit out by measuring it in a fixed basis and dropping the
    /// outcome, so entangled partners stay well-defined.
    pub fn discard<R: Rng>(&mut self, h: HandleId, rng: &mut R) -> Result<(), SimError> {
        self.measure(h, &MeasBasis::computational(), rng)?;
        Ok(())
    }

    /// Debug sweep: every handle is either consumed or has exactly one owner
    /// and points into a live register.
    pub fn check_integrity(&self) -> Result<(), SimError> {
        for (h, slot) in &self.slots {
            if slot.owner != Owner::Consumed && !self.regs.contains_key(&slot.reg) {
                return Err(SimError::NoCloneViolation(format!(
                    "live handle {h:?} points at a dropped register"
                )));
            }
        }
        Ok(())
    }
}

/// Measurement basis whose outcome 0 projects exactly onto `target`.
fn target_basis(target: &PureRegister) -> Result<MeasBasis, SimError> {
    if target.num_qubits() != 1 {
        return Err(SimError::Config("projective target must be a single qubit".into()));
    }
    let mut axis = target.bloch_vector();
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    for a in &mut axis {
        *a /= norm;
    }
    Ok(MeasBasis::new(axis)?)
}

fn project_prob(reg: &PureRegister, qubit: usize, e0: &PureRegister) -> f64 {
    // Born probability of finding `qubit` in e0, computed by projecting and
    // summing the residual norm.
    let n = reg.num_qubits();
    let shift = n - 1 - qubit;
    let dim_rest = 1 << (n - 1);
    let mut p = 0.0;
    for rest in 0..dim_rest {
        let high = rest >> shift;
        let low = rest & ((1 << shift) - 1);
        let mut amp = num_complex::Complex64::new(0.0, 0.0);
        for b in 0..2usize {
            let full = (high << (shift + 1)) | (b << shift) | low;
            amp += e0.amplitudes()[b].conj() * reg.amplitudes()[full];
        }
        p += amp.norm_sqr();
    }
    p
}

/// A classical or quantum message in flight, with its emission worldline.
#[derive(Debug, Clone)]
pub struct Signal {
    pub emit_time: f64,
    pub emit_pos: f64,
    pub direction: Direction,
    pub payload: Payload,
    pub source: AgentId,
    pub round: u32,
    /// Classical propagation extent `[left, right]`; agents outside never
    /// receive the signal (Eve jamming her own internal traffic).
    pub jam: Option<(f64, f64)>,
}

/// One record of a signal reaching an agent.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Delivery {
    pub time: f64,
    pub position: f64,
    pub agent: AgentId,
    pub direction: Direction,
    pub round: u32,
    pub payload: Payload,
    pub source: AgentId,
    pub emit_time: f64,
    pub emit_pos: f64,
}

impl Delivery {
    pub fn classical(&self) -> Option<&MsgBody> {
        match &self.payload {
            Payload::Classical(m) => Some(m),
            Payload::Quantum(_) => None,
        }
    }

    pub fn quantum(&self) -> Option<HandleId> {
        match &self.payload {
            Payload::Quantum(h) => Some(*h),
            Payload::Classical(_) => None,
        }
    }

    fn summary(&self) -> String {
        match &self.payload {
            Payload::Classical(m) => format!("{m:?}"),
            Payload::Quantum(h) => format!("qubit {h:?}"),
        }
    }
}

/// Full record of a run: every delivery in processing order, plus handler
/// notes (malformed rounds, excess inputs).
#[derive(Debug, Default, serde::Serialize)]
pub struct Transcript {
    pub deliveries: Vec<Delivery>,
    pub notes: Vec<(String, f64, String)>,
    pub final_time: f64,
}

impl Transcript {
    /// Line-oriented text form: `time position direction kind summary`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.deliveries {
            let kind = match &d.payload {
                Payload::Classical(_) => "classical",
                Payload::Quantum(_) => "quantum",
            };
            out.push_str(&format!(
                "{:.9} {:.9} {:?} {} {}\n",
                d.time,
                d.position,
                d.direction,
                kind,
                d.summary()
            ));
        }
        out
    }
}

enum Action {
    Delivery { signal: Signal, to: AgentId },
    Emission { from: AgentId, signal_template: SignalTemplate },
}

struct SignalTemplate {
    direction: Direction,
    payload: Payload,
    round: u32,
    jam: Option<(f64, f64)>,
}

struct Queued {
    time: f64,
    pos: f64,
    seq: u64,
    action: Action,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the earliest event
        other
            .time
            .total_cmp(&self.time)
            .then(other.pos.total_cmp(&self.pos))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Agent callback. Handlers run inside the single-threaded event loop and
/// interact with the world only through the [`Ctx`].
pub trait Handler {
    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, delivery: &Delivery) -> Result<(), SimError>;
}

/// No-op handler: observes classical traffic, keeps quantum deliveries.
pub struct Sink;

impl Handler for Sink {
    fn on_deliver(&mut self, _ctx: &mut Ctx<'_>, _delivery: &Delivery) -> Result<(), SimError> {
        Ok(())
    }
}

struct AgentEntry {
    pos: f64,
    handler: Option<Box<dyn Handler>>,
}

/// Handler-side view of the simulation during one delivery.
pub struct Ctx<'a> {
    sim: &'a mut Sim,
    agent: AgentId,
    time: f64,
    absorb: bool,
}

impl Ctx<'_> {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn agent(&self) -> AgentId {
        self.agent
    }

    pub fn position(&self) -> f64 {
        self.sim.agents[self.agent].pos
    }

    pub fn store(&mut self) -> &mut QuantumStore {
        &mut self.sim.store
    }

    /// Stops a classical signal from propagating past this agent.
    pub fn absorb(&mut self) {
        self.absorb = true;
    }

    /// Emits at the current instant (processing time is zero).
    pub fn emit(&mut self, direction: Direction, round: u32, payload: Payload) -> Result<(), SimError> {
        self.emit_at(self.time, direction, round, payload, None)
    }

    pub fn emit_jammed(
        &mut self,
        direction: Direction,
        round: u32,
        payload: Payload,
        extent: (f64, f64),
    ) -> Result<(), SimError> {
        self.emit_at(self.time, direction, round, payload, Some(extent))
    }

    /// Schedules an emission from this agent at a (present or future) time.
    pub fn emit_at(
        &mut self,
        time: f64,
        direction: Direction,
        round: u32,
        payload: Payload,
        jam: Option<(f64, f64)>,
    ) -> Result<(), SimError> {
        if time < self.time - EPSILON_T {
            return Err(SimError::CausalityViolation(format!(
                "agent {} emitting at {time} before current time {}",
                self.agent, self.time
            )));
        }
        self.sim.push_emission(self.agent, time, direction, round, payload, jam);
        Ok(())
    }

    /// Appends a structured note to the transcript (malformed round, excess
    /// input, diagnostics).
    pub fn note(&mut self, kind: &str, detail: String) {
        self.sim.notes.push((kind.to_string(), self.time, detail));
    }
}

/// Single-threaded scheduler over stationary agents on the line.
pub struct Sim {
    queue: BinaryHeap<Queued>,
    agents: Vec<AgentEntry>,
    pub store: QuantumStore,
    deliveries: Vec<Delivery>,
    notes: Vec<(String, f64, String)>,
    seq: u64,
    time: f64,
}

impl Default for Sim {
    fn default() -> Self {
        Self::new()
    }
}

impl Sim {
    pub fn new() -> Self {
        Sim {
            queue: BinaryHeap::new(),
            agents: Vec::new(),
            store: QuantumStore::new(),
            deliveries: Vec::new(),
            notes: Vec::new(),
            seq: 0,
            time: 0.0,
        }
    }

    pub fn add_agent(&mut self, pos: f64, handler: Box<dyn Handler>) -> AgentId {
        assert!(pos.is_finite(), "agent position must be finite");
        self.agents.push(AgentEntry { pos, handler: Some(handler) });
        self.agents.len() - 1
    }

    pub fn agent_position(&self, id: AgentId) -> f64 {
        self.agents[id].pos
    }

    /// Pre-run or handler-driven emission scheduling.
    pub fn schedule_emission(
        &mut self,
        from: AgentId,
        time: f64,
        direction: Direction,
        round: u32,
        payload: Payload,
    ) {
        self.push_emission(from, time, direction, round, payload, None);
    }

    fn push_emission(
        &mut self,
        from: AgentId,
        time: f64,
        direction: Direction,
        round: u32,
        payload: Payload,
        jam: Option<(f64, f64)>,
    ) {
        let pos = self.agents[from].pos;
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Queued {
            time,
            pos,
            seq,
            action: Action::Emission {
                from,
                signal_template: SignalTemplate { direction, payload, round, jam },
            },
        });
    }

    /// First agent strictly beyond `pos` in `direction`.
    pub fn next_interceptor(&self, pos: f64, direction: Direction) -> Option<(AgentId, f64)> {
        let mut best: Option<(AgentId, f64)> = None;
        for (id, agent) in self.agents.iter().enumerate() {
            let delta = (agent.pos - pos) * direction.sign();
            if delta > EPSILON_T {
                match best {
                    Some((_, d)) if d <= delta => {}
                    _ => best = Some((id, delta)),
                }
            }
        }
        best
    }

    fn schedule_hop(&mut self, signal: Signal, from_pos: f64, time: f64) -> Result<(), SimError> {
        if let Some((to, dist)) = self.next_interceptor(from_pos, signal.direction) {
            let to_pos = self.agents[to].pos;
            if let Some((left, right)) = signal.jam {
                if to_pos < left - EPSILON_T || to_pos > right + EPSILON_T {
                    return Ok(()); // jammed: never reaches this agent
                }
            }
            let seq = self.seq;
            self.seq += 1;
            self.queue.push(Queued {
                time: time + dist,
                pos: to_pos,
                seq,
                action: Action::Delivery { signal, to },
            });
        }
        Ok(())
    }

    /// Processes all events with arrival time <= `until` in deterministic
    /// (time, position, sequence) order.
    pub fn run(&mut self, until: f64) -> Result<(), SimError> {
        while let Some(next) = self.queue.peek() {
            if next.time > until {
                break;
            }
            let Queued { time, action, .. } = self.queue.pop().unwrap();
            debug_assert!(time >= self.time - EPSILON_T, "time went backwards");
            self.time = self.time.max(time);
            match action {
                Action::Emission { from, signal_template } => {
                    let SignalTemplate { direction, payload, round, jam } = signal_template;
                    if let Payload::Quantum(h) = payload {
                        self.store.take_for_flight(h, from)?;
                    }
                    let pos = self.agents[from].pos;
                    let signal = Signal {
                        emit_time: time,
                        emit_pos: pos,
                        direction,
                        payload,
                        source: from,
                        round,
                        jam,
                    };
                    self.schedule_hop(signal, pos, time)?;
                }
                Action::Delivery { signal, to } => {
                    self.deliver(signal, to, time)?;
                }
            }
        }
        #[cfg(debug_assertions)]
        self.store.check_integrity()?;
        Ok(())
    }

    fn deliver(&mut self, signal: Signal, to: AgentId, time: f64) -> Result<(), SimError> {
        let pos = self.agents[to].pos;
        // light-cone equation, asserted on every delivery
        let flight = (pos - signal.emit_pos).abs();
        let elapsed = time - signal.emit_time;
        if (flight - elapsed).abs() > EPSILON_T {
            return Err(SimError::CausalityViolation(format!(
                "delivery at ({time}, {pos}) violates light cone from ({}, {})",
                signal.emit_time, signal.emit_pos
            )));
        }
        if let Payload::Quantum(h) = signal.payload {
            self.store.land(h, to)?;
        }
        let delivery = Delivery {
            time,
            position: pos,
            agent: to,
            direction: signal.direction,
            round: signal.round,
            payload: signal.payload.clone(),
            source: signal.source,
            emit_time: signal.emit_time,
            emit_pos: signal.emit_pos,
        };
        self.deliveries.push(delivery.clone());
        let mut handler = self.agents[to].handler.take().expect("handler re-entrancy");
        let mut ctx = Ctx { sim: self, agent: to, time, absorb: false };
        let result = handler.on_deliver(&mut ctx, &delivery);
        let absorb = ctx.absorb;
        self.agents[to].handler = Some(handler);
        result?;
        // classical signals keep propagating unless absorbed
        if matches!(signal.payload, Payload::Classical(_)) && !absorb {
            self.schedule_hop(signal, pos, time)?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> (Transcript, QuantumStore) {
        let transcript = Transcript {
            deliveries: self.deliveries,
            notes: self.notes,
            final_time: self.time,
        };
        (transcript, self.store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::PureRegister;
    use crate::rng::component_rng;

    fn line(positions: &[f64]) -> Sim {
        let mut sim = Sim::new();
        for p in positions {
            sim.add_agent(*p, Box::new(Sink));
        }
        sim
    }

    #[test]
    fn classical_signal_reaches_every_agent_in_order() {
        let mut sim = line(&[0.0, 2.0, 5.0, 8.0, 10.0]);
        assert_eq!(sim.next_interceptor(0.0, Direction::Right), Some((1, 2.0)));
        sim.schedule_emission(0, 0.0, Direction::Right, 0, Payload::Classical(MsgBody::RouteBit(1)));
        sim.run(100.0).unwrap();
        let (transcript, _) = sim.into_outcome();
        let times: Vec<f64> = transcript.deliveries.iter().map(|d| d.time).collect();
        let positions: Vec<f64> = transcript.deliveries.iter().map(|d| d.position).collect();
        assert_eq!(times, vec![2.0, 5.0, 8.0, 10.0]);
        assert_eq!(positions, vec![2.0, 5.0, 8.0, 10.0]);
    }

    #[test]
    fn jammed_classical_signal_stops_at_extent() {
        let mut sim = line(&[0.0, 2.0, 5.0, 8.0, 10.0]);
        sim.push_emission(
            1,
            0.0,
            Direction::Right,
            0,
            Payload::Classical(MsgBody::RelayedOutcome { bit: 0, axis: [0.0, 0.0, 1.0] }),
            Some((2.0, 8.0)),
        );
        sim.run(100.0).unwrap();
        let (transcript, _) = sim.into_outcome();
        let positions: Vec<f64> = transcript.deliveries.iter().map(|d| d.position).collect();
        assert_eq!(positions, vec![5.0, 8.0]);
    }

    #[test]
    fn quantum_signal_is_absorbed_by_first_agent() {
        let mut sim = line(&[0.0, 5.0, 10.0]);
        let h = sim.store.insert_register(PureRegister::ket0(), 0)[0];
        sim.schedule_emission(0, 0.0, Direction::Right, 0, Payload::Quantum(h));
        sim.run(100.0).unwrap();
        let (transcript, store) = sim.into_outcome();
        assert_eq!(transcript.deliveries.len(), 1);
        assert_eq!(transcript.deliveries[0].time, 5.0);
        assert_eq!(store.owner(h).unwrap(), Owner::Agent(1));
    }

    #[test]
    fn emitting_a_handle_twice_is_a_no_clone_violation() {
        let mut sim = line(&[0.0, 5.0, 10.0]);
        let h = sim.store.insert_register(PureRegister::ket0(), 0)[0];
        sim.schedule_emission(0, 0.0, Direction::Right, 0, Payload::Quantum(h));
        sim.schedule_emission(0, 0.0, Direction::Right, 0, Payload::Quantum(h));
        let err = sim.run(100.0).unwrap_err();
        assert!(matches!(err, SimError::NoCloneViolation(_)), "{err}");
    }

    #[test]
    fn emitting_an_unowned_handle_fails() {
        let mut sim = line(&[0.0, 5.0]);
        let h = sim.store.insert_register(PureRegister::ket0(), 1)[0];
        sim.schedule_emission(0, 0.0, Direction::Right, 0, Payload::Quantum(h));
        let err = sim.run(10.0).unwrap_err();
        assert!(matches!(err, SimError::NoCloneViolation(_)));
    }

    #[test]
    fn measured_handle_cannot_be_measured_again() {
        let mut store = QuantumStore::new();
        let mut rng = component_rng(1, "store");
        let h = store.insert_register(PureRegister::ket0(), 0)[0];
        store.measure(h, &MeasBasis::computational(), &mut rng).unwrap();
        let err = store.measure(h, &MeasBasis::computational(), &mut rng).unwrap_err();
        assert!(matches!(err, SimError::NoCloneViolation(_)));
    }

    #[test]
    fn discarding_half_a_singlet_leaves_partner_maximally_mixed() {
        let mut rng = component_rng(2, "store");
        let n = 10_000;
        let mut zeros = 0u32;
        for _ in 0..n {
            let mut store = QuantumStore::new();
            let (h0, h1) = store.insert_singlet(0, 1, (0, 0));
            store.discard(h0, &mut rng).unwrap();
            let o = store.measure(h1, &MeasBasis::diagonal(), &mut rng).unwrap();
            zeros += (o == 0) as u32;
        }
        let f = zeros as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.02, "frequency {f}");
    }

    #[test]
    fn store_teleportation_round_trip() {
        let mut rng = component_rng(3, "store");
        for _ in 0..50 {
            let mut store = QuantumStore::new();
            let psi = crate::qstate::sample_uniform_bloch(&mut rng);
            let h_psi = store.insert_register(psi.clone(), 0)[0];
            let (h0, h1) = store.insert_singlet(0, 1, (0, 0));
            let k = store.bell_measure(h_psi, h0, &mut rng).unwrap();
            store.apply_correction(h1, crate::qstate::correction_for(k)).unwrap();
            let p = store.peek_projection_prob(h1, &psi).unwrap();
            assert!((p - 1.0).abs() < 1e-9, "projection prob {p}");
            assert!(store.projective_test(h1, &psi, &mut rng).unwrap());
        }
    }

    #[test]
    fn empty_queue_gives_empty_transcript() {
        let mut sim = line(&[0.0, 5.0]);
        sim.run(10.0).unwrap();
        let (transcript, _) = sim.into_outcome();
        assert!(transcript.deliveries.is_empty());
    }

    #[test]
    fn transcripts_are_deterministic() {
        let build = || {
            let mut sim = line(&[0.0, 2.0, 7.0]);
            sim.schedule_emission(0, 0.5, Direction::Right, 0, Payload::Classical(MsgBody::RouteBit(0)));
            sim.schedule_emission(2, 0.5, Direction::Left, 1, Payload::Classical(MsgBody::BasisTrit(2)));
            sim.run(50.0).unwrap();
            let (transcript, _) = sim.into_outcome();
            transcript.to_text()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn causality_holds_on_every_delivery() {
        let mut sim = line(&[0.0, 3.5, 9.25]);
        sim.schedule_emission(0, 1.0, Direction::Right, 0, Payload::Classical(MsgBody::RouteBit(0)));
        sim.run(100.0).unwrap();
        let (transcript, _) = sim.into_outcome();
        for d in &transcript.deliveries {
            assert!(((d.position - d.emit_pos).abs() - (d.time - d.emit_time)).abs() <= EPSILON_T);
        }
    }
}
