//! Tagging schemes I-VI: Alice's emission schedules, the honest tag, and the
//! per-round expectations the verifier checks against.
//!
//! All schemes share the same shape: a qubit from A0 and a classical
//! instruction from A1, timed so both arrive at the tag point simultaneously;
//! the tag either reroutes the qubit or measures it and broadcasts the
//! outcome. Expected arrival times at the stations follow from c = 1
//! arithmetic on the configured geometry.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::qstate::{self, MeasBasis, PureRegister};
use crate::worldline::{
    AgentId, BranchBits, Ctx, Delivery, Direction, Handler, HandleId, MsgBody, Payload, Sim,
    SimError, Station, EPSILON_T,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SchemeId {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] =
        [SchemeId::I, SchemeId::II, SchemeId::III, SchemeId::IV, SchemeId::V, SchemeId::VI];

    /// Schemes whose tag output is a classical outcome broadcast.
    pub fn broadcasts_outcomes(&self) -> bool {
        matches!(self, SchemeId::III | SchemeId::IV | SchemeId::V | SchemeId::VI)
    }
}

impl std::str::FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(SchemeId::I),
            "II" | "2" => Ok(SchemeId::II),
            "III" | "3" => Ok(SchemeId::III),
            "IV" | "4" => Ok(SchemeId::IV),
            "V" | "5" => Ok(SchemeId::V),
            "VI" | "6" => Ok(SchemeId::VI),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

impl std::fmt::Display for SchemeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SchemeId::I => "I",
            SchemeId::II => "II",
            SchemeId::III => "III",
            SchemeId::IV => "IV",
            SchemeId::V => "V",
            SchemeId::VI => "VI",
        };
        f.write_str(s)
    }
}

/// Station and tag positions on the line, in light-seconds.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Geometry {
    pub a0: f64,
    pub t_plus: f64,
    pub a1: f64,
}

impl Geometry {
    pub fn new(a0: f64, t_plus: f64, a1: f64) -> Result<Self, SimError> {
        if !(a0.is_finite() && t_plus.is_finite() && a1.is_finite()) {
            return Err(SimError::Config("geometry positions must be finite".into()));
        }
        if !(a0 < t_plus && t_plus < a1) {
            return Err(SimError::Config(format!("a0 < t_plus < a1 required, got {a0}, {t_plus}, {a1}")));
        }
        Ok(Self { a0, t_plus, a1 })
    }

    /// Distance from the tag to A0.
    pub fn d0(&self) -> f64 {
        self.t_plus - self.a0
    }

    /// Distance from the tag to A1.
    pub fn d1(&self) -> f64 {
        self.a1 - self.t_plus
    }

    pub fn span(&self) -> f64 {
        self.a1 - self.a0
    }

    pub fn station_pos(&self, s: Station) -> f64 {
        match s {
            Station::A0 => self.a0,
            Station::A1 => self.a1,
        }
    }

    pub fn station_dist(&self, s: Station) -> f64 {
        match s {
            Station::A0 => self.d0(),
            Station::A1 => self.d1(),
        }
    }
}

/// Full parameterization of a tagging session.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SchemeConfig {
    pub id: SchemeId,
    pub geometry: Geometry,
    pub rounds: u32,
    /// Spacing between consecutive nominal tag arrivals; chosen so round i's
    /// outputs clear both stations before round i+1's inputs are emitted.
    pub round_period: f64,
    /// Session window Delta-t that all rounds must fit in.
    pub session_window: f64,
    /// Scheme II parameters; scheme I maps onto m = 1, n = 2, f(0, b) = b.
    pub m: u32,
    pub n: u32,
    /// Routing function as an m x n bit table.
    pub f_table: Vec<Vec<u8>>,
    pub epsilon_t: f64,
}

impl SchemeConfig {
    pub fn new(id: SchemeId, geometry: Geometry, rounds: u32) -> Self {
        let round_period = 2.0 * geometry.span() + 1.0;
        let (m, n, f_table) = match id {
            SchemeId::I => (1, 2, vec![vec![0, 1]]),
            // default: XOR of parities with m = n = 2
            SchemeId::II => (2, 2, xor_table(2, 2)),
            _ => (0, 0, Vec::new()),
        };
        SchemeConfig {
            id,
            geometry,
            rounds,
            round_period,
            session_window: rounds as f64 * round_period + 2.0 * geometry.span() + 1.0,
            m,
            n,
            f_table,
            epsilon_t: EPSILON_T,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        Geometry::new(self.geometry.a0, self.geometry.t_plus, self.geometry.a1)?;
        if self.rounds < 1 {
            return Err(SimError::Config("at least one round required".into()));
        }
        if self.rounds as f64 * self.round_period > self.session_window {
            return Err(SimError::Config("N * round_period exceeds the session window".into()));
        }
        if matches!(self.id, SchemeId::I | SchemeId::II) {
            if self.f_table.len() != self.m as usize
                || self.f_table.iter().any(|row| row.len() != self.n as usize)
            {
                return Err(SimError::Config(format!(
                    "f table must be {}x{}",
                    self.m, self.n
                )));
            }
            if self.f_table.iter().flatten().any(|b| *b > 1) {
                return Err(SimError::Config("f table entries must be bits".into()));
            }
        }
        Ok(())
    }

    /// Nominal arrival time of round `i`'s inputs at the tag.
    pub fn t_star(&self, round: u32) -> f64 {
        let start = self.geometry.d0().max(self.geometry.d1());
        start + round as f64 * self.round_period
    }

    /// Replaces the routing table, updating m and n to its shape.
    pub fn set_f_table(&mut self, table: Vec<Vec<u8>>) {
        self.m = table.len() as u32;
        self.n = table.first().map_or(0, |row| row.len()) as u32;
        self.f_table = table;
    }

    pub fn route(&self, a: u32, b: u32) -> Station {
        Station::from_route(self.f_table[a as usize][b as usize])
    }
}

pub fn xor_table(m: u32, n: u32) -> Vec<Vec<u8>> {
    (0..m)
        .map(|a| (0..n).map(|b| ((a + b) % 2) as u8).collect())
        .collect()
}

/// The six scheme III states: eigenstates of B0, B1, B2.
pub fn scheme_iii_states() -> Vec<PureRegister> {
    basis_eigenstate_list(&[MeasBasis::computational(), MeasBasis::diagonal(), MeasBasis::circular()])
}

pub fn scheme_iii_basis(trit: u8) -> MeasBasis {
    match trit {
        0 => MeasBasis::computational(),
        1 => MeasBasis::diagonal(),
        _ => MeasBasis::circular(),
    }
}

/// Scheme V bases B'0, B'1, B'2: z axis plus two axes tilted by 60 degrees
/// into the xz and yz planes. Their eigenstates are exactly the scheme's
/// six-state list.
pub fn scheme_v_basis(trit: u8) -> MeasBasis {
    let (s, c) = ((PI / 3.0).sin(), (PI / 3.0).cos());
    let axis = match trit {
        0 => [0.0, 0.0, 1.0],
        1 => [s, 0.0, c],
        _ => [0.0, s, c],
    };
    MeasBasis::new(axis).expect("unit axis")
}

pub fn scheme_v_states() -> Vec<PureRegister> {
    basis_eigenstate_list(&[scheme_v_basis(0), scheme_v_basis(1), scheme_v_basis(2)])
}

fn basis_eigenstate_list(bases: &[MeasBasis]) -> Vec<PureRegister> {
    bases
        .iter()
        .flat_map(|b| {
            let (e0, e1) = b.eigenstates();
            [e0, e1]
        })
        .collect()
}

/// What a station should see for one round.
#[derive(Debug, Clone)]
pub struct ExpectedRecord {
    pub round: u32,
    pub station: Station,
    pub time: f64,
    pub check: ExpectedCheck,
}

#[derive(Debug, Clone)]
pub enum ExpectedCheck {
    /// A qubit delivery that must pass projection onto the original state.
    Projective { target: PureRegister },
    /// A classical outcome report with the given Born probability of 0.
    OutcomeReport { p0: f64 },
}

/// One round of Alice's schedule.
#[derive(Debug, Clone)]
pub struct RoundPlan {
    pub round: u32,
    pub t_star: f64,
    pub psi: PureRegister,
    pub a0_classical: Vec<MsgBody>,
    pub a1_classical: Vec<MsgBody>,
    /// Routing destination, for schemes I/II and VI redirect rounds.
    pub route: Option<Station>,
    /// Commanded measurement basis, for schemes III-VI measure rounds.
    pub basis: Option<MeasBasis>,
}

/// Samples Alice's randomness for a whole session and derives the per-round
/// expectations.
pub fn plan_rounds<R: Rng>(
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<(Vec<RoundPlan>, Vec<ExpectedRecord>), SimError> {
    cfg.validate()?;
    let mut plans = Vec::with_capacity(cfg.rounds as usize);
    let mut expected = Vec::new();
    for round in 0..cfg.rounds {
        let t_star = cfg.t_star(round);
        let plan = match cfg.id {
            SchemeId::I => {
                let psi = qstate::sample_uniform_bloch(rng);
                let a: u8 = rng.gen_range(0..2);
                RoundPlan {
                    round,
                    t_star,
                    psi,
                    a0_classical: vec![],
                    a1_classical: vec![MsgBody::RouteBit(a)],
                    route: Some(Station::from_route(a)),
                    basis: None,
                }
            }
            SchemeId::II => {
                let psi = qstate::sample_uniform_bloch(rng);
                let a: u32 = rng.gen_range(0..cfg.m);
                let b: u32 = rng.gen_range(0..cfg.n);
                RoundPlan {
                    round,
                    t_star,
                    psi,
                    a0_classical: vec![MsgBody::PairIndex(a)],
                    a1_classical: vec![MsgBody::RouteIndex(b)],
                    route: Some(cfg.route(a, b)),
                    basis: None,
                }
            }
            SchemeId::III => {
                let states = scheme_iii_states();
                let psi = states[rng.gen_range(0..states.len())].clone();
                let c: u8 = rng.gen_range(0..3);
                RoundPlan {
                    round,
                    t_star,
                    psi,
                    a0_classical: vec![],
                    a1_classical: vec![MsgBody::BasisTrit(c)],
                    route: None,
                    basis: Some(scheme_iii_basis(c)),
                }
            }
            SchemeId::IV => {
                let psi = qstate::sample_uniform_bloch(rng);
                let basis = qstate::sample_hemisphere_basis(rng);
                RoundPlan {
                    round,
                    t_star,
                    psi,
                    a0_classical: vec![],
                    a1_classical: vec![MsgBody::BasisCommand { axis: basis.axis(), branch: None }],
                    route: None,
                    basis: Some(basis),
                }
            }
            SchemeId::V => {
                let states = scheme_v_states();
                let psi = states[rng.gen_range(0..states.len())].clone();
                let c: u8 = rng.gen_range(0..3);
                RoundPlan {
                    round,
                    t_star,
                    psi,
                    a0_classical: vec![],
                    a1_classical: vec![MsgBody::BasisTrit(c)],
                    route: None,
                    basis: Some(scheme_v_basis(c)),
                }
            }
            SchemeId::VI => {
                let psi = qstate::sample_uniform_bloch(rng);
                let basis = qstate::sample_hemisphere_basis(rng);
                let b: u8 = rng.gen_range(0..2);
                let c: u8 = rng.gen_range(0..2);
                RoundPlan {
                    round,
                    t_star,
                    psi,
                    a0_classical: vec![],
                    a1_classical: vec![MsgBody::BasisCommand {
                        axis: basis.axis(),
                        branch: Some(BranchBits { measure: b == 0, route: c }),
                    }],
                    route: if b == 1 { Some(Station::from_route(c)) } else { None },
                    basis: if b == 0 { Some(basis) } else { None },
                }
            }
        };
        expected.extend(expectations_for(cfg, &plan));
        plans.push(plan);
    }
    Ok((plans, expected))
}

fn expectations_for(cfg: &SchemeConfig, plan: &RoundPlan) -> Vec<ExpectedRecord> {
    let g = &cfg.geometry;
    match (&plan.route, &plan.basis) {
        (Some(station), None) => vec![ExpectedRecord {
            round: plan.round,
            station: *station,
            time: plan.t_star + g.station_dist(*station),
            check: ExpectedCheck::Projective { target: plan.psi.clone() },
        }],
        (None, Some(basis)) => {
            let p0 = qstate::prob_outcome0(&plan.psi, basis);
            [Station::A0, Station::A1]
                .into_iter()
                .map(|station| ExpectedRecord {
                    round: plan.round,
                    station,
                    time: plan.t_star + g.station_dist(station),
                    check: ExpectedCheck::OutcomeReport { p0 },
                })
                .collect()
        }
        _ => unreachable!("round plan has exactly one of route/basis"),
    }
}

/// Installs Alice's emission schedule into a simulation: qubit registers are
/// created at A0 and every signal is timed for simultaneous arrival at t_+.
pub fn install_protocol(
    sim: &mut Sim,
    cfg: &SchemeConfig,
    plans: &[RoundPlan],
    a0: AgentId,
    a1: AgentId,
) {
    let g = &cfg.geometry;
    for plan in plans {
        let t0 = plan.t_star - g.d0();
        let t1 = plan.t_star - g.d1();
        let handle = sim.store.insert_register(plan.psi.clone(), a0)[0];
        sim.schedule_emission(a0, t0, Direction::Right, plan.round, Payload::Quantum(handle));
        for msg in &plan.a0_classical {
            sim.schedule_emission(a0, t0, Direction::Right, plan.round, Payload::Classical(msg.clone()));
        }
        for msg in &plan.a1_classical {
            sim.schedule_emission(a1, t1, Direction::Left, plan.round, Payload::Classical(msg.clone()));
        }
    }
}

/// Inputs buffered at the tag while a round's simultaneous partner is
/// awaited.
#[derive(Default)]
struct RoundInputs {
    qubit: Option<(f64, HandleId)>,
    classical: Vec<(f64, MsgBody)>,
}

/// The honest tag. When switched off it is a pure pass-through.
pub struct TagHandler {
    on: bool,
    scheme: SchemeConfig,
    rng: ChaCha12Rng,
    pending: HashMap<u32, RoundInputs>,
    completed: HashSet<u32>,
}

impl TagHandler {
    pub fn new(on: bool, scheme: SchemeConfig, rng: ChaCha12Rng) -> Self {
        TagHandler { on, scheme, rng, pending: HashMap::new(), completed: HashSet::new() }
    }

    fn classical_arity(&self) -> usize {
        match self.scheme.id {
            SchemeId::II => 2,
            _ => 1,
        }
    }

    fn try_execute(&mut self, ctx: &mut Ctx<'_>, round: u32) -> Result<(), SimError> {
        let ready = {
            let inputs = self.pending.get(&round).expect("round just buffered");
            inputs.qubit.is_some() && inputs.classical.len() >= self.classical_arity()
        };
        if !ready {
            return Ok(());
        }
        let inputs = self.pending.remove(&round).unwrap();
        self.completed.insert(round);
        let (t_q, handle) = inputs.qubit.unwrap();
        let eps = self.scheme.epsilon_t;
        if inputs.classical.iter().any(|(t, _)| (t - t_q).abs() > eps) {
            ctx.note("malformed-round", format!("round {round}: inputs not simultaneous"));
            return Ok(());
        }

        let find = |pred: fn(&MsgBody) -> bool| {
            inputs.classical.iter().map(|(_, m)| m).find(|m| pred(m))
        };
        match self.scheme.id {
            SchemeId::I => {
                let Some(MsgBody::RouteBit(a)) = find(|m| matches!(m, MsgBody::RouteBit(_))) else {
                    ctx.note("malformed-round", format!("round {round}: missing route bit"));
                    return Ok(());
                };
                let station = Station::from_route(*a);
                ctx.emit(station.direction_from_tag(), round, Payload::Quantum(handle))?;
            }
            SchemeId::II => {
                let a = match find(|m| matches!(m, MsgBody::PairIndex(_))) {
                    Some(MsgBody::PairIndex(a)) => *a,
                    _ => {
                        ctx.note("malformed-round", format!("round {round}: missing pair index"));
                        return Ok(());
                    }
                };
                let b = match find(|m| matches!(m, MsgBody::RouteIndex(_))) {
                    Some(MsgBody::RouteIndex(b)) => *b,
                    _ => {
                        ctx.note("malformed-round", format!("round {round}: missing route index"));
                        return Ok(());
                    }
                };
                let station = self.scheme.route(a, b);
                ctx.emit(station.direction_from_tag(), round, Payload::Quantum(handle))?;
            }
            SchemeId::III | SchemeId::V => {
                let Some(MsgBody::BasisTrit(c)) = find(|m| matches!(m, MsgBody::BasisTrit(_)))
                else {
                    ctx.note("malformed-round", format!("round {round}: missing basis trit"));
                    return Ok(());
                };
                let basis = if self.scheme.id == SchemeId::III {
                    scheme_iii_basis(*c)
                } else {
                    scheme_v_basis(*c)
                };
                let outcome = ctx.store().measure(handle, &basis, &mut self.rng)?;
                self.broadcast_outcome(ctx, round, outcome)?;
            }
            SchemeId::IV | SchemeId::VI => {
                let Some(MsgBody::BasisCommand { axis, branch }) =
                    find(|m| matches!(m, MsgBody::BasisCommand { .. }))
                else {
                    ctx.note("malformed-round", format!("round {round}: missing basis command"));
                    return Ok(());
                };
                if let Some(branch) = branch {
                    if !branch.measure {
                        let station = Station::from_route(branch.route);
                        ctx.emit(station.direction_from_tag(), round, Payload::Quantum(handle))?;
                        return Ok(());
                    }
                }
                let basis = MeasBasis::new(*axis)?;
                let outcome = ctx.store().measure(handle, &basis, &mut self.rng)?;
                self.broadcast_outcome(ctx, round, outcome)?;
            }
        }
        Ok(())
    }

    fn broadcast_outcome(&self, ctx: &mut Ctx<'_>, round: u32, outcome: u8) -> Result<(), SimError> {
        for dir in [Direction::Left, Direction::Right] {
            ctx.emit(dir, round, Payload::Classical(MsgBody::OutcomeReport(outcome)))?;
        }
        Ok(())
    }
}

impl Handler for TagHandler {
    fn on_deliver(&mut self, ctx: &mut Ctx<'_>, delivery: &Delivery) -> Result<(), SimError> {
        if !self.on {
            // switched off: signals propagate unmodified straight through
            if let Some(h) = delivery.quantum() {
                ctx.emit(delivery.direction, delivery.round, Payload::Quantum(h))?;
            }
            return Ok(());
        }
        let round = delivery.round;
        let is_input = match &delivery.payload {
            Payload::Quantum(_) => true,
            Payload::Classical(m) => matches!(
                m,
                MsgBody::RouteBit(_)
                    | MsgBody::PairIndex(_)
                    | MsgBody::RouteIndex(_)
                    | MsgBody::BasisTrit(_)
                    | MsgBody::BasisCommand { .. }
            ),
        };
        if !is_input {
            // tag outputs or Eve traffic passing through: not protocol input
            return Ok(());
        }
        if self.completed.contains(&round) {
            ctx.note("excess-input", format!("round {round}: input after execution"));
            return Ok(());
        }
        let entry = self.pending.entry(round).or_default();
        match &delivery.payload {
            Payload::Quantum(h) => {
                if entry.qubit.is_some() {
                    ctx.note("excess-input", format!("round {round}: second qubit"));
                    return Ok(());
                }
                entry.qubit = Some((delivery.time, *h));
            }
            Payload::Classical(m) => {
                entry.classical.push((delivery.time, m.clone()));
            }
        }
        self.try_execute(ctx, round)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::component_rng;

    fn geom() -> Geometry {
        Geometry::new(0.0, 5.0, 10.0).unwrap()
    }

    #[test]
    fn geometry_validation() {
        assert!(Geometry::new(5.0, 5.0, 10.0).is_err());
        assert!(Geometry::new(0.0, 11.0, 10.0).is_err());
        let g = geom();
        assert_eq!(g.d0(), 5.0);
        assert_eq!(g.d1(), 5.0);
    }

    #[test]
    fn emission_times_give_simultaneous_arrival() {
        let cfg = SchemeConfig::new(SchemeId::I, Geometry::new(0.0, 5.0, 10.0).unwrap(), 3);
        let mut rng = component_rng(11, "alice");
        let (plans, _) = plan_rounds(&cfg, &mut rng).unwrap();
        for plan in &plans {
            let t0 = plan.t_star - cfg.geometry.d0();
            let t1 = plan.t_star - cfg.geometry.d1();
            assert!((t0 + cfg.geometry.d0() - (t1 + cfg.geometry.d1())).abs() < EPSILON_T);
            assert!(t0 >= 0.0 && t1 >= 0.0);
        }
        // first round with this symmetric geometry: both stations emit at t = 0
        assert!((plans[0].t_star - 5.0).abs() < EPSILON_T);
    }

    #[test]
    fn asymmetric_geometry_keeps_pairwise_simultaneity() {
        let cfg = SchemeConfig::new(SchemeId::III, Geometry::new(-1.0, 2.5, 11.0).unwrap(), 5);
        let mut rng = component_rng(12, "alice");
        let (plans, expected) = plan_rounds(&cfg, &mut rng).unwrap();
        assert_eq!(plans.len(), 5);
        // every scheme III round expects a report at both stations
        assert_eq!(expected.len(), 10);
        for rec in &expected {
            let plan = &plans[rec.round as usize];
            let d = cfg.geometry.station_dist(rec.station);
            assert!((rec.time - (plan.t_star + d)).abs() < EPSILON_T);
        }
    }

    #[test]
    fn scheme_i_expectation_is_projective_at_routed_station() {
        let cfg = SchemeConfig::new(SchemeId::I, geom(), 20);
        let mut rng = component_rng(13, "alice");
        let (plans, expected) = plan_rounds(&cfg, &mut rng).unwrap();
        assert_eq!(expected.len(), 20);
        for (plan, rec) in plans.iter().zip(&expected) {
            assert_eq!(plan.route.unwrap(), rec.station);
            assert!(matches!(rec.check, ExpectedCheck::Projective { .. }));
            if rec.station == Station::A1 {
                assert!((rec.time - (plan.t_star + 5.0)).abs() < EPSILON_T);
            }
        }
    }

    #[test]
    fn scheme_iii_predicted_probabilities_match_born_rule() {
        // |+> measured in B0 has p0 = 1/2; eigenstates give 0 or 1
        let cfg = SchemeConfig::new(SchemeId::III, geom(), 400);
        let mut rng = component_rng(14, "alice");
        let (plans, expected) = plan_rounds(&cfg, &mut rng).unwrap();
        let mut seen_half = false;
        let mut seen_det = false;
        for rec in &expected {
            let ExpectedCheck::OutcomeReport { p0 } = rec.check else { panic!() };
            let plan = &plans[rec.round as usize];
            let oracle = qstate::prob_outcome0(&plan.psi, plan.basis.as_ref().unwrap());
            assert!((p0 - oracle).abs() < 1e-12);
            if (p0 - 0.5).abs() < 1e-9 {
                seen_half = true;
            }
            if p0 < 1e-9 || p0 > 1.0 - 1e-9 {
                seen_det = true;
            }
        }
        assert!(seen_half && seen_det);
    }

    #[test]
    fn scheme_vi_has_both_branches_for_modest_n() {
        let cfg = SchemeConfig::new(SchemeId::VI, geom(), 16);
        let mut rng = component_rng(15, "alice");
        let (plans, _) = plan_rounds(&cfg, &mut rng).unwrap();
        assert!(plans.iter().any(|p| p.route.is_some()));
        assert!(plans.iter().any(|p| p.basis.is_some()));
    }

    #[test]
    fn scheme_ii_default_table_is_xor() {
        let cfg = SchemeConfig::new(SchemeId::II, geom(), 1);
        assert_eq!(cfg.f_table, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(cfg.route(0, 0), Station::A0);
        assert_eq!(cfg.route(1, 0), Station::A1);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = SchemeConfig::new(SchemeId::II, geom(), 4);
        cfg.f_table = vec![vec![0, 1]];
        assert!(cfg.validate().is_err());
        let mut cfg = SchemeConfig::new(SchemeId::I, geom(), 4);
        cfg.session_window = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn scheme_v_state_list_matches_paper_amplitudes() {
        use num_complex::Complex64;
        let states = scheme_v_states();
        let c6 = (PI / 6.0).cos();
        let s6 = (PI / 6.0).sin();
        let expect = [
            PureRegister::ket0(),
            PureRegister::ket1(),
            PureRegister::single(Complex64::new(c6, 0.0), Complex64::new(s6, 0.0)).unwrap(),
            PureRegister::single(Complex64::new(s6, 0.0), Complex64::new(-c6, 0.0)).unwrap(),
            PureRegister::single(Complex64::new(c6, 0.0), Complex64::new(0.0, s6)).unwrap(),
            PureRegister::single(Complex64::new(s6, 0.0), Complex64::new(0.0, -c6)).unwrap(),
        ];
        for (got, want) in states.iter().zip(&expect) {
            let f = qstate::fidelity(got, want).unwrap();
            assert!((f - 1.0).abs() < 1e-9, "fidelity {f}");
        }
    }
}
