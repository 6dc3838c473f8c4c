//! Eve's strategies: baseline spoofs the verifier must catch, and the
//! teleportation attacks that defeat schemes I-III while failing against
//! IV-VI.
//!
//! Eve operates exactly two laboratories, E0 between A0 and the tag and E1
//! between the tag and A1. Pre-shared entanglement is installed before t = 0.
//! All Eve-internal classical traffic is jammed to the interval [e0, e1] so
//! it can never reach a station.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::qstate::{
    self, basis_action, correction_for, BasisAction, BellOutcome, MeasBasis, PureRegister,
};
use crate::schemes::{scheme_iii_basis, scheme_v_basis, SchemeConfig, SchemeId};
use crate::worldline::{
    Ctx, Delivery, Direction, Handler, HandleId, MsgBody, Payload, Sim, SimError, Station,
};

/// Strategy selector. String forms match the CLI flags.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum AdversaryKind {
    /// Eve present but passive; the honest control condition.
    Passive,
    /// Tag switched off, Eve does nothing: the baseline all attacks beat.
    TagOffSilent,
    /// Intercept the tag's outputs and re-emit them later (tag stays on).
    RecordReplay { delay: f64 },
    /// Hold the qubit at E0 until the routing signal arrives, then forward.
    StoreAndWait,
    /// Measure immediately in a guessed basis and fabricate outcomes.
    GuessMeasure,
    /// The routing-scheme teleportation attack (schemes I and II).
    TeleportRouting,
    /// The measurement-scheme teleportation attack (schemes III-VI).
    TeleportedMeasurement,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 7] = [
        AdversaryKind::Passive,
        AdversaryKind::TagOffSilent,
        AdversaryKind::RecordReplay { delay: 1.0 },
        AdversaryKind::StoreAndWait,
        AdversaryKind::GuessMeasure,
        AdversaryKind::TeleportRouting,
        AdversaryKind::TeleportedMeasurement,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AdversaryKind::Passive => "none",
            AdversaryKind::TagOffSilent => "tag_off_silent",
            AdversaryKind::RecordReplay { .. } => "record_replay",
            AdversaryKind::StoreAndWait => "store_and_wait",
            AdversaryKind::GuessMeasure => "guess_measure",
            AdversaryKind::TeleportRouting => "teleport_I_II",
            AdversaryKind::TeleportedMeasurement => "teleport_III_style",
        }
    }

    /// Whether the honest tag stays powered for this strategy. Spoofing
    /// strategies run against a switched-off tag; record-and-replay
    /// intercepts a live tag's outputs.
    pub fn tag_on(&self) -> bool {
        matches!(self, AdversaryKind::Passive | AdversaryKind::RecordReplay { .. })
    }

    pub fn applicable_to(&self, scheme: SchemeId) -> bool {
        match self {
            AdversaryKind::Passive
            | AdversaryKind::TagOffSilent
            | AdversaryKind::RecordReplay { .. } => true,
            AdversaryKind::StoreAndWait | AdversaryKind::TeleportRouting => {
                matches!(scheme, SchemeId::I | SchemeId::II)
            }
            AdversaryKind::GuessMeasure | AdversaryKind::TeleportedMeasurement => {
                scheme.broadcasts_outcomes()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    pub e0: f64,
    pub e1: f64,
}

impl AdversaryConfig {
    pub fn validate(&self, scheme: &SchemeConfig) -> Result<(), SimError> {
        let g = &scheme.geometry;
        if !(g.a0 < self.e0 && self.e0 < g.t_plus && g.t_plus < self.e1 && self.e1 < g.a1) {
            return Err(SimError::Config(format!(
                "a0 < e0 < t_plus < e1 < a1 required, got e0={}, e1={}",
                self.e0, self.e1
            )));
        }
        if !self.kind.applicable_to(scheme.id) {
            return Err(SimError::Config(format!(
                "strategy {} is not applicable to scheme {}",
                self.kind.name(),
                scheme.id
            )));
        }
        Ok(())
    }
}

/// Classical flip rule combining raw outcome, measurement basis, and the
/// teleportation correction. When the correction preserves the basis the
/// combination is exact; when it does not, no flip rule exists and the raw
/// outcome goes out unchanged. That residue is exactly what the verifier
/// catches in schemes IV-VI.
pub fn infer_report(raw: u8, basis: &MeasBasis, k: BellOutcome) -> u8 {
    match basis_action(correction_for(k), basis) {
        BasisAction::PreservedSame | BasisAction::NotPreserved => raw,
        BasisAction::PreservedFlipped => 1 - raw,
    }
}

/// Eve's probability of reporting 0 for a round with state `psi`, commanded
/// `basis`, and realized Bell outcome `k`.
pub fn report_zero_prob(psi: &PureRegister, basis: &MeasBasis, k: BellOutcome) -> f64 {
    let rotated = qstate::apply_pauli(psi.clone(), 0, correction_for(k)).expect("single qubit");
    let raw0 = qstate::prob_outcome0(&rotated, basis);
    if infer_report(0, basis, k) == 0 { raw0 } else { 1.0 - raw0 }
}

/// Per-round records for the measured-inference diagnostic.
#[derive(Debug, Clone, Copy)]
pub struct InferenceRecord {
    pub round: u32,
    pub bell: BellOutcome,
    pub basis: MeasBasis,
}

/// Mutable state shared by Eve's two sites.
pub struct EveShared {
    scheme: SchemeConfig,
    cfg: AdversaryConfig,
    rng: ChaCha12Rng,
    /// Routing attack: singlet halves by (round, pair index).
    halves_e0: HashMap<(u32, u32), HandleId>,
    halves_e1: HashMap<(u32, u32), HandleId>,
    /// Routing attack, E0 side: kept teleportation data and pair index.
    bell_data: HashMap<u32, (BellOutcome, u32)>,
    pair_index: HashMap<u32, u32>,
    /// Routing attack, E0 side: signal qubit awaiting its pair index.
    pending_psi: HashMap<u32, HandleId>,
    route_b: HashMap<u32, u32>,
    arrived_halves: HashMap<u32, Vec<HandleId>>,
    /// Measurement attack: raw outcome measured at E1 before the
    /// teleportation data arrive.
    raw_outcome: HashMap<u32, (u8, MeasBasis)>,
    /// Measurement attack, scheme VI redirect rounds: route bit awaiting the
    /// teleportation data at E1.
    pending_route: HashMap<u32, u8>,
    /// Store-and-wait: the held qubit and scheme II pair index.
    stored_qubit: HashMap<u32, HandleId>,
    /// Guess-and-measure: guessed basis and raw outcome per round.
    guessed: HashMap<u32, (MeasBasis, u8)>,
    /// Diagnostic trail for the teleported-measurement attack.
    pub inference: Vec<InferenceRecord>,
}

impl EveShared {
    fn d_e0_tag(&self) -> f64 {
        self.scheme.geometry.t_plus - self.cfg.e0
    }

    fn jam_extent(&self) -> (f64, f64) {
        (self.cfg.e0, self.cfg.e1)
    }

    fn guess_basis(&mut self) -> MeasBasis {
        match self.scheme.id {
            SchemeId::III => scheme_iii_basis(self.rng.gen_range(0..3)),
            SchemeId::V => scheme_v_basis(self.rng.gen_range(0..3)),
            _ => qstate::sample_hemisphere_basis(&mut self.rng),
        }
    }
}

enum Site {
    E0,
    E1,
}

/// One of Eve's two laboratories; both share the [`EveShared`] state.
pub struct EveSite {
    site: Site,
    shared: Rc<RefCell<EveShared>>,
}

/// Installs Eve's agents (and any pre-shared entanglement) into a simulation.
/// Returns the shared state for post-run diagnostics.
pub fn install_adversary(
    sim: &mut Sim,
    scheme: &SchemeConfig,
    cfg: &AdversaryConfig,
    rng: ChaCha12Rng,
) -> Result<Rc<RefCell<EveShared>>, SimError> {
    cfg.validate(scheme)?;
    let shared = Rc::new(RefCell::new(EveShared {
        scheme: scheme.clone(),
        cfg: *cfg,
        rng,
        halves_e0: HashMap::new(),
        halves_e1: HashMap::new(),
        bell_data: HashMap::new(),
        pair_index: HashMap::new(),
        pending_psi: HashMap::new(),
        route_b: HashMap::new(),
        arrived_halves: HashMap::new(),
        raw_outcome: HashMap::new(),
        pending_route: HashMap::new(),
        stored_qubit: HashMap::new(),
        guessed: HashMap::new(),
        inference: Vec::new(),
    }));
    let e0 = sim.add_agent(cfg.e0, Box::new(EveSite { site: Site::E0, shared: shared.clone() }));
    let e1 = sim.add_agent(cfg.e1, Box::new(EveSite { site: Site::E1, shared: shared.clone() }));

    // pre-shared labelled singlets, arranged before the protocol clock starts
    let per_round = match cfg.kind {
        AdversaryKind::TeleportRouting => scheme.m,
        AdversaryKind::TeleportedMeasurement => 1,
        _ => 0,
    };
    if per_round > 0 {
        let mut state = shared.borrow_mut();
        for round in 0..scheme.rounds {
            for j in 0..per_round {
                let (h0, h1) = sim.store.insert_singlet(e0, e1, (round, j));
                state.halves_e0.insert((round, j), h0);
                state.halves_e1.insert((round, j), h1);
            }
        }
    }
    Ok(shared)
}

impl EveSite {
    fn passthrough(&self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        if let Some(h) = d.quantum() {
            ctx.emit(d.direction, d.round, Payload::Quantum(h))?;
        }
        Ok(())
    }
}

impl Handler for EveSite {
    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        let kind = self.shared.borrow().cfg.kind;
        match kind {
            AdversaryKind::Passive | AdversaryKind::TagOffSilent => self.passthrough(ctx, d),
            AdversaryKind::RecordReplay { delay } => self.record_replay(ctx, d, delay),
            AdversaryKind::StoreAndWait => self.store_and_wait(ctx, d),
            AdversaryKind::GuessMeasure => self.guess_measure(ctx, d),
            AdversaryKind::TeleportRouting => self.teleport_routing(ctx, d),
            AdversaryKind::TeleportedMeasurement => self.teleported_measurement(ctx, d),
        }
    }
}

impl EveSite {
    /// Intercepts everything leaving the tag; classical outputs are replayed
    /// after `delay`, quantum outputs are destroyed (they cannot be copied).
    fn record_replay(&mut self, ctx: &mut Ctx<'_>, d: &Delivery, delay: f64) -> Result<(), SimError> {
        let outbound = match self.site {
            Site::E0 => d.direction == Direction::Left,
            Site::E1 => d.direction == Direction::Right,
        };
        if !outbound {
            return self.passthrough(ctx, d);
        }
        match &d.payload {
            Payload::Classical(MsgBody::OutcomeReport(bit)) => {
                ctx.absorb();
                ctx.emit_at(
                    d.time + delay,
                    d.direction,
                    d.round,
                    Payload::Classical(MsgBody::OutcomeReport(*bit)),
                    None,
                )?;
            }
            Payload::Quantum(h) => {
                // no-cloning: the qubit itself is held and re-emitted late
                ctx.emit_at(d.time + delay, d.direction, d.round, Payload::Quantum(*h), None)?;
            }
            Payload::Classical(_) => {}
        }
        Ok(())
    }

    /// Holds the qubit at E0 until the routing signal from A1 arrives, then
    /// forwards it; on time only when the route points back at A0.
    fn store_and_wait(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        if matches!(self.site, Site::E1) {
            return self.passthrough(ctx, d);
        }
        let mut state = self.shared.borrow_mut();
        match &d.payload {
            Payload::Quantum(h) if d.direction == Direction::Right => {
                state.stored_qubit.insert(d.round, *h);
            }
            Payload::Quantum(h) => {
                drop(state);
                ctx.emit(d.direction, d.round, Payload::Quantum(*h))?;
            }
            Payload::Classical(MsgBody::PairIndex(a)) => {
                state.pair_index.insert(d.round, *a);
            }
            Payload::Classical(m @ (MsgBody::RouteBit(_) | MsgBody::RouteIndex(_)))
                if d.direction == Direction::Left =>
            {
                let b = match m {
                    MsgBody::RouteBit(bit) => *bit as u32,
                    MsgBody::RouteIndex(b) => *b,
                    _ => unreachable!(),
                };
                let a = state.pair_index.get(&d.round).copied().unwrap_or(0);
                let station = state.scheme.route(a, b);
                if let Some(h) = state.stored_qubit.remove(&d.round) {
                    drop(state);
                    ctx.emit(station.direction_from_tag(), d.round, Payload::Quantum(h))?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Measures immediately in a guessed basis and reports outcomes timed to
    /// look honest; statistics, not timing, give this away.
    fn guess_measure(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        if matches!(self.site, Site::E1) {
            return self.passthrough(ctx, d);
        }
        let mut state = self.shared.borrow_mut();
        match &d.payload {
            Payload::Quantum(h) if d.direction == Direction::Right => {
                let basis = state.guess_basis();
                let state_ref = &mut *state;
                let outcome = ctx.store().measure(*h, &basis, &mut state_ref.rng)?;
                state_ref.guessed.insert(d.round, (basis, outcome));
                let lead = state_ref.d_e0_tag();
                drop(state);
                // toward A1 now (passes the dead tag and E1); toward A0 after
                // a delay so it arrives at the honest moment
                ctx.emit(Direction::Right, d.round, Payload::Classical(MsgBody::OutcomeReport(outcome)))?;
                ctx.emit_at(
                    d.time + 2.0 * lead,
                    Direction::Left,
                    d.round,
                    Payload::Classical(MsgBody::OutcomeReport(outcome)),
                    None,
                )?;
            }
            Payload::Classical(MsgBody::BasisCommand { branch: Some(branch), .. })
                if d.direction == Direction::Left && !branch.measure =>
            {
                // redirect round: re-prepare the collapsed eigenstate and
                // forward it (late when routed toward A1)
                let station = Station::from_route(branch.route);
                if let Some((basis, outcome)) = state.guessed.get(&d.round).copied() {
                    let (e0, e1) = basis.eigenstates();
                    let collapsed = if outcome == 0 { e0 } else { e1 };
                    let me = ctx.agent();
                    let h = ctx.store().insert_register(collapsed, me)[0];
                    drop(state);
                    ctx.emit(station.direction_from_tag(), d.round, Payload::Quantum(h))?;
                }
            }
            Payload::Quantum(h) => {
                drop(state);
                ctx.emit(d.direction, d.round, Payload::Quantum(*h))?;
            }
            _ => {}
        }
        Ok(())
    }

    /// The routing-scheme teleportation attack: Bell-measure at E0 against
    /// the labelled half, relay the teleportation data, forward or keep
    /// halves at E1 by f(j, b), and complete the correction at whichever site
    /// the routing function selects.
    fn teleport_routing(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        match self.site {
            Site::E0 => self.teleport_routing_e0(ctx, d),
            Site::E1 => self.teleport_routing_e1(ctx, d),
        }
    }

    fn teleport_routing_e0(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        let mut state = self.shared.borrow_mut();
        let round = d.round;
        match &d.payload {
            Payload::Classical(MsgBody::PairIndex(a)) if d.direction == Direction::Right => {
                state.pair_index.insert(round, *a);
                drop(state);
                self.try_bell_e0(ctx, round)?;
            }
            Payload::Quantum(h) if d.direction == Direction::Right => {
                state.pending_psi.insert(round, *h);
                drop(state);
                self.try_bell_e0(ctx, round)?;
            }
            Payload::Quantum(h) if d.direction == Direction::Left => {
                // a forwarded half coming back from E1
                state.arrived_halves.entry(round).or_default().push(*h);
                drop(state);
                self.try_finish_e0(ctx, round)?;
            }
            Payload::Classical(MsgBody::RouteBit(b)) if d.direction == Direction::Left => {
                state.route_b.insert(round, *b as u32);
                drop(state);
                self.try_finish_e0(ctx, round)?;
            }
            Payload::Classical(MsgBody::RouteIndex(b)) if d.direction == Direction::Left => {
                state.route_b.insert(round, *b);
                drop(state);
                self.try_finish_e0(ctx, round)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Teleports the round's signal qubit onto the half labelled (round, a)
    /// once both the qubit and (for two-index routing) its pair index are in.
    fn try_bell_e0(&mut self, ctx: &mut Ctx<'_>, round: u32) -> Result<(), SimError> {
        let mut state = self.shared.borrow_mut();
        let needs_index = state.scheme.id == SchemeId::II;
        if needs_index && !state.pair_index.contains_key(&round) {
            return Ok(());
        }
        let Some(h) = state.pending_psi.remove(&round) else { return Ok(()) };
        let a = state.pair_index.get(&round).copied().unwrap_or(0);
        let partner = state
            .halves_e0
            .remove(&(round, a))
            .ok_or_else(|| SimError::Config(format!("no singlet supply for round {round}")))?;
        let state_ref = &mut *state;
        let k = ctx.store().bell_measure(h, partner, &mut state_ref.rng)?;
        state_ref.bell_data.insert(round, (k, a));
        // unused halves on this side are traced out
        let leftover: Vec<HandleId> = state_ref
            .halves_e0
            .iter()
            .filter(|((r, _), _)| *r == round)
            .map(|(_, h)| *h)
            .collect();
        for h in &leftover {
            ctx.store().discard(*h, &mut state_ref.rng)?;
        }
        state_ref.halves_e0.retain(|(r, _), _| *r != round);
        let extent = state_ref.jam_extent();
        drop(state);
        ctx.emit_jammed(
            Direction::Right,
            round,
            Payload::Classical(MsgBody::TeleportData { outcome: k, pair: a }),
            extent,
        )?;
        self.try_finish_e0(ctx, round)
    }

    /// Completes the E0 side of a routing-attack round once the route index
    /// and all forwarded halves are in: correct the half labelled a and send
    /// it to A0, or discard everything when the round routes to A1.
    fn try_finish_e0(&mut self, ctx: &mut Ctx<'_>, round: u32) -> Result<(), SimError> {
        let mut state = self.shared.borrow_mut();
        let state_ref = &mut *state;
        let Some(b) = state_ref.route_b.get(&round).copied() else { return Ok(()) };
        let Some((k, a)) = state_ref.bell_data.get(&round).copied() else { return Ok(()) };
        let expected: usize = (0..state_ref.scheme.m)
            .filter(|j| state_ref.scheme.f_table[*j as usize][b as usize] == 0)
            .count();
        let arrived = state_ref.arrived_halves.get(&round).map_or(0, |v| v.len());
        if arrived < expected {
            return Ok(());
        }
        let halves = state_ref.arrived_halves.remove(&round).unwrap_or_default();
        let deliver_here = state_ref.scheme.f_table[a as usize][b as usize] == 0;
        let mut to_send = None;
        for h in halves {
            let label = ctx.store().label(h)?;
            if deliver_here && label == Some((round, a)) {
                ctx.store().apply_correction(h, correction_for(k))?;
                to_send = Some(h);
            } else {
                ctx.store().discard(h, &mut state_ref.rng)?;
            }
        }
        drop(state);
        if let Some(h) = to_send {
            ctx.emit(Direction::Left, round, Payload::Quantum(h))?;
        }
        Ok(())
    }

    fn teleport_routing_e1(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        let mut state = self.shared.borrow_mut();
        let round = d.round;
        match &d.payload {
            Payload::Classical(m @ (MsgBody::RouteBit(_) | MsgBody::RouteIndex(_)))
                if d.direction == Direction::Left =>
            {
                let b = match m {
                    MsgBody::RouteBit(bit) => *bit as u32,
                    MsgBody::RouteIndex(b) => *b,
                    _ => unreachable!(),
                };
                state.route_b.insert(round, b);
                // forward every half with f(j, b) = 0 toward A0 right away,
                // on distinct degrees of freedom (labels); keep the rest
                let m = state.scheme.m;
                let mut forward = Vec::new();
                for j in 0..m {
                    if state.scheme.f_table[j as usize][b as usize] == 0 {
                        if let Some(h) = state.halves_e1.remove(&(round, j)) {
                            forward.push(h);
                        }
                    }
                }
                drop(state);
                for h in forward {
                    ctx.emit(Direction::Left, round, Payload::Quantum(h))?;
                }
            }
            Payload::Classical(MsgBody::TeleportData { outcome, pair }) => {
                let b = state.route_b.get(&round).copied().ok_or_else(|| {
                    SimError::Config(format!("teleport data before route index in round {round}"))
                })?;
                let deliver_here = state.scheme.f_table[*pair as usize][b as usize] == 1;
                let kept: Vec<(u32, HandleId)> = state
                    .halves_e1
                    .iter()
                    .filter(|((r, _), _)| *r == round)
                    .map(|((_, j), h)| (*j, *h))
                    .collect();
                state.halves_e1.retain(|(r, _), _| *r != round);
                let state_ref = &mut *state;
                let mut to_send = None;
                for (j, h) in kept {
                    if deliver_here && j == *pair {
                        ctx.store().apply_correction(h, correction_for(*outcome))?;
                        to_send = Some(h);
                    } else {
                        ctx.store().discard(h, &mut state_ref.rng)?;
                    }
                }
                drop(state);
                if let Some(h) = to_send {
                    ctx.emit(Direction::Right, round, Payload::Quantum(h))?;
                }
            }
            Payload::Quantum(h) => {
                // Eve's own corrected qubit en route to A1 passes nothing,
                // but a passthrough keeps the strategy physical if it does
                drop(state);
                ctx.emit(d.direction, d.round, Payload::Quantum(*h))?;
            }
            _ => {}
        }
        Ok(())
    }

    /// The measurement-scheme teleportation attack: Bell-measure at E0,
    /// measure the partner half in the commanded basis at E1, and combine the
    /// two classical records at each site into the reported outcome.
    fn teleported_measurement(&mut self, ctx: &mut Ctx<'_>, d: &Delivery) -> Result<(), SimError> {
        let round = d.round;
        match self.site {
            Site::E0 => {
                let mut state = self.shared.borrow_mut();
                match &d.payload {
                    Payload::Quantum(h) if d.direction == Direction::Right => {
                        let partner = state.halves_e0.remove(&(round, 0)).ok_or_else(|| {
                            SimError::Config(format!("no singlet supply for round {round}"))
                        })?;
                        let state_ref = &mut *state;
                        let k = ctx.store().bell_measure(*h, partner, &mut state_ref.rng)?;
                        state_ref.bell_data.insert(round, (k, 0));
                        let extent = state_ref.jam_extent();
                        drop(state);
                        ctx.emit_jammed(
                            Direction::Right,
                            round,
                            Payload::Classical(MsgBody::TeleportData { outcome: k, pair: 0 }),
                            extent,
                        )?;
                    }
                    Payload::Quantum(h) if d.direction == Direction::Left => {
                        // scheme VI redirect round routed to A0: the raw half
                        // arrives here; complete the teleportation and pass on
                        let (k, _) = state.bell_data.get(&round).copied().ok_or_else(|| {
                            SimError::Config(format!("half returned before Bell data in round {round}"))
                        })?;
                        drop(state);
                        ctx.store().apply_correction(*h, correction_for(k))?;
                        ctx.emit(Direction::Left, round, Payload::Quantum(*h))?;
                    }
                    Payload::Classical(MsgBody::RelayedOutcome { bit, axis }) => {
                        let (k, _) = state.bell_data.get(&round).copied().ok_or_else(|| {
                            SimError::Config(format!("relay before Bell data in round {round}"))
                        })?;
                        let basis = MeasBasis::new(*axis)?;
                        let report = infer_report(*bit, &basis, k);
                        drop(state);
                        ctx.emit(Direction::Left, round, Payload::Classical(MsgBody::OutcomeReport(report)))?;
                    }
                    _ => {}
                }
            }
            Site::E1 => {
                let mut state = self.shared.borrow_mut();
                match &d.payload {
                    Payload::Classical(msg @ (MsgBody::BasisTrit(_) | MsgBody::BasisCommand { .. }))
                        if d.direction == Direction::Left =>
                    {
                        let (basis, measure, route) = match msg {
                            MsgBody::BasisTrit(c) => {
                                let basis = if state.scheme.id == SchemeId::III {
                                    scheme_iii_basis(*c)
                                } else {
                                    scheme_v_basis(*c)
                                };
                                (Some(basis), true, 0)
                            }
                            MsgBody::BasisCommand { axis, branch } => match branch {
                                Some(b) if !b.measure => (None, false, b.route),
                                _ => (Some(MeasBasis::new(*axis)?), true, 0),
                            },
                            _ => unreachable!(),
                        };
                        if measure {
                            let basis = basis.unwrap();
                            let half = state.halves_e1.remove(&(round, 0)).ok_or_else(|| {
                                SimError::Config(format!("no singlet half for round {round}"))
                            })?;
                            let state_ref = &mut *state;
                            let bit = ctx.store().measure(half, &basis, &mut state_ref.rng)?;
                            state_ref.raw_outcome.insert(round, (bit, basis));
                            let extent = state_ref.jam_extent();
                            drop(state);
                            ctx.emit_jammed(
                                Direction::Left,
                                round,
                                Payload::Classical(MsgBody::RelayedOutcome { bit, axis: basis.axis() }),
                                extent,
                            )?;
                        } else if route == 0 {
                            // redirect toward A0: send the raw half now; E0
                            // holds the teleportation data and completes it
                            let half = state.halves_e1.remove(&(round, 0)).ok_or_else(|| {
                                SimError::Config(format!("no singlet half for round {round}"))
                            })?;
                            drop(state);
                            ctx.emit(Direction::Left, round, Payload::Quantum(half))?;
                        } else {
                            // redirect toward A1: the correction must wait
                            // for the teleportation data to arrive here
                            state.pending_route.insert(round, route);
                        }
                    }
                    Payload::Classical(MsgBody::TeleportData { outcome: k, .. }) => {
                        if state.pending_route.remove(&round).is_some() {
                            let half = state.halves_e1.remove(&(round, 0)).ok_or_else(|| {
                                SimError::Config(format!("no singlet half for round {round}"))
                            })?;
                            drop(state);
                            ctx.store().apply_correction(half, correction_for(*k))?;
                            ctx.emit(Direction::Right, round, Payload::Quantum(half))?;
                        } else if let Some((bit, basis)) = state.raw_outcome.get(&round).copied() {
                            let report = infer_report(bit, &basis, *k);
                            state.inference.push(InferenceRecord { round, bell: *k, basis });
                            drop(state);
                            ctx.emit(Direction::Right, round, Payload::Classical(MsgBody::OutcomeReport(report)))?;
                        }
                    }
                    Payload::Quantum(h) => {
                        drop(state);
                        ctx.emit(d.direction, d.round, Payload::Quantum(*h))?;
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
