//! Minimal state-vector quantum core.
//!
//! Registers hold 1-3 qubits as raw complex amplitude vectors. Operations
//! consume their input register and return the successor; measured qubits are
//! factored out so a register never grows past what a protocol round needs
//! (one signal qubit plus one singlet). Global phase is only ever quotiented
//! out through [`fidelity`].

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Tolerance for algebraic identities (normalization, orthogonality, axis
/// comparisons). Statistical checks use their own Monte-Carlo tolerances.
pub const TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum QstateError {
    #[error("qubit index {index} out of range for {num_qubits}-qubit register")]
    IndexOutOfRange { index: usize, num_qubits: usize },
    #[error("register dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("amplitude vector of length {0} is not a 1-3 qubit register")]
    BadDimension(usize),
    #[error("amplitudes are not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("non-finite amplitude component")]
    NonFinite,
    #[error("bloch axis has norm {0}, expected 1")]
    BadAxis(f64),
}

/// Normalized pure state of 1-3 qubits.
///
/// Qubit 0 is the leftmost tensor factor, so basis index `b` assigns qubit
/// `q` the bit `(b >> (n - 1 - q)) & 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureRegister {
    amps: Vec<Complex64>,
}

impl PureRegister {
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, QstateError> {
        if !matches!(amps.len(), 2 | 4 | 8) {
            return Err(QstateError::BadDimension(amps.len()));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(QstateError::NonFinite);
        }
        let norm2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > TOL {
            return Err(QstateError::NotNormalized(norm2));
        }
        Ok(Self { amps })
    }

    /// Single-qubit state `alpha|0> + beta|1>`, normalized by the caller.
    pub fn single(alpha: Complex64, beta: Complex64) -> Result<Self, QstateError> {
        Self::from_amplitudes(vec![alpha, beta])
    }

    pub fn ket0() -> Self {
        Self { amps: vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)] }
    }

    pub fn ket1() -> Self {
        Self { amps: vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)] }
    }

    pub fn num_qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn tensor(self, other: PureRegister) -> Result<PureRegister, QstateError> {
        let dim = self.amps.len() * other.amps.len();
        if dim > 8 {
            return Err(QstateError::BadDimension(dim));
        }
        let mut amps = Vec::with_capacity(dim);
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(PureRegister { amps })
    }

    /// Bloch vector of a single-qubit register.
    pub fn bloch_vector(&self) -> [f64; 3] {
        debug_assert_eq!(self.num_qubits(), 1);
        let a = self.amps[0];
        let b = self.amps[1];
        let ab = a.conj() * b;
        [2.0 * ab.re, 2.0 * ab.im, a.norm_sqr() - b.norm_sqr()]
    }

    /// Debugging dump: one `(re,im)` pair per amplitude.
    pub fn to_debug_string(&self) -> String {
        let parts: Vec<String> = self
            .amps
            .iter()
            .map(|a| format!("({:.12},{:.12})", a.re, a.im))
            .collect();
        format!("[{}]", parts.join(" "))
    }

    fn renormalize(&mut self) {
        let norm: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for a in &mut self.amps {
            *a /= norm;
        }
    }

    #[cfg(debug_assertions)]
    fn debug_check_norm(&self) {
        let norm2: f64 = self.amps.iter().map(|a| a.norm_sqr()).sum();
        debug_assert!(
            (norm2 - 1.0).abs() <= 1e-6,
            "register norm drifted: {norm2}"
        );
    }

    #[cfg(not(debug_assertions))]
    fn debug_check_norm(&self) {}
}

/// Two-outcome measurement basis, identified by its Bloch axis. Outcome 0 is
/// the `+axis` eigenstate, outcome 1 the `-axis` eigenstate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasBasis {
    axis: [f64; 3],
}

impl MeasBasis {
    pub fn new(axis: [f64; 3]) -> Result<Self, QstateError> {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > TOL {
            return Err(QstateError::BadAxis(norm));
        }
        Ok(Self { axis })
    }

    /// `B0 = (|0>, |1>)`, the z axis.
    pub fn computational() -> Self {
        Self { axis: [0.0, 0.0, 1.0] }
    }

    /// `B1 = (|+>, |->)`, the x axis.
    pub fn diagonal() -> Self {
        Self { axis: [1.0, 0.0, 0.0] }
    }

    /// `B2 = (|i>, |-i>)`, the y axis.
    pub fn circular() -> Self {
        Self { axis: [0.0, 1.0, 0.0] }
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    /// Eigenstates `(e0, e1)` of the axis, `e0` for outcome 0.
    pub fn eigenstates(&self) -> (PureRegister, PureRegister) {
        let [x, y, z] = self.axis;
        let theta = z.clamp(-1.0, 1.0).acos();
        let phi = y.atan2(x);
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let phase = Complex64::new(0.0, phi).exp();
        let e0 = PureRegister {
            amps: vec![Complex64::new(c, 0.0), phase * s],
        };
        let e1 = PureRegister {
            amps: vec![Complex64::new(s, 0.0), -phase * c],
        };
        (e0, e1)
    }

    /// Basis whose axis is the negation of this one: same unordered pair of
    /// states, outcomes swapped.
    pub fn flipped(&self) -> Self {
        Self { axis: [-self.axis[0], -self.axis[1], -self.axis[2]] }
    }
}

/// Outcome of a Bell measurement: which of the four Bell states was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BellOutcome {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 4] = [
        BellOutcome::PhiPlus,
        BellOutcome::PhiMinus,
        BellOutcome::PsiPlus,
        BellOutcome::PsiMinus,
    ];

    /// Two classical bits identifying the outcome: (parity, phase).
    pub fn bits(&self) -> (u8, u8) {
        match self {
            BellOutcome::PhiPlus => (0, 0),
            BellOutcome::PhiMinus => (0, 1),
            BellOutcome::PsiPlus => (1, 0),
            BellOutcome::PsiMinus => (1, 1),
        }
    }

    /// Amplitudes of the Bell state over two qubits.
    fn amplitudes(&self) -> [Complex64; 4] {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        match self {
            BellOutcome::PhiPlus => [h, z, z, h],
            BellOutcome::PhiMinus => [h, z, z, -h],
            BellOutcome::PsiPlus => [z, h, h, z],
            BellOutcome::PsiMinus => [z, h, -h, z],
        }
    }
}

/// Teleportation completion unitary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PauliCorrection {
    I,
    X,
    Z,
    XZ,
}

impl PauliCorrection {
    pub const ALL: [PauliCorrection; 4] = [
        PauliCorrection::I,
        PauliCorrection::X,
        PauliCorrection::Z,
        PauliCorrection::XZ,
    ];
}

/// How conjugation by a Pauli acts on a measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisAction {
    /// Same ordered basis: outcomes carry over unchanged.
    PreservedSame,
    /// Same unordered basis with the two outcomes swapped.
    PreservedFlipped,
    /// A different basis altogether.
    NotPreserved,
}

/// State drawn from the uniform distribution on the Bloch sphere.
pub fn sample_uniform_bloch<R: Rng>(rng: &mut R) -> PureRegister {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let theta = z.acos();
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let phase = Complex64::new(0.0, phi).exp();
    PureRegister {
        amps: vec![Complex64::new(c, 0.0), phase * s],
    }
}

/// Uniform measurement basis restricted to the hemisphere with nonnegative z
/// (ties broken toward nonnegative x, then y), so that antipodal axes are
/// identified.
pub fn sample_hemisphere_basis<R: Rng>(rng: &mut R) -> MeasBasis {
    let mut axis = sample_uniform_bloch(rng).bloch_vector();
    // bloch_vector of a sampled state is unit up to rounding
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    for a in &mut axis {
        *a /= norm;
    }
    let flip = axis[2] < -TOL
        || (axis[2].abs() <= TOL && (axis[0] < -TOL || (axis[0].abs() <= TOL && axis[1] < 0.0)));
    if flip {
        for a in &mut axis {
            *a = -*a;
        }
    }
    MeasBasis { axis }
}

/// The two-qubit singlet `(|01> - |10>)/sqrt(2)`.
pub fn make_singlet() -> PureRegister {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    PureRegister { amps: vec![z, h, -h, z] }
}

/// Born probability of outcome 0 when measuring a single-qubit register in
/// `basis`.
pub fn prob_outcome0(reg: &PureRegister, basis: &MeasBasis) -> f64 {
    debug_assert_eq!(reg.num_qubits(), 1);
    let (e0, _) = basis.eigenstates();
    inner(&e0, reg).norm_sqr()
}

fn inner(a: &PureRegister, b: &PureRegister) -> Complex64 {
    a.amps
        .iter()
        .zip(&b.amps)
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// `|<a|b>|²`.
pub fn fidelity(a: &PureRegister, b: &PureRegister) -> Result<f64, QstateError> {
    if a.amps.len() != b.amps.len() {
        return Err(QstateError::DimensionMismatch { left: a.amps.len(), right: b.amps.len() });
    }
    Ok(inner(a, b).norm_sqr())
}

/// Projects qubit `index` onto the eigenstates of `basis` and factors it out.
///
/// For a one-qubit register the state collapses in place to the observed
/// eigenstate instead.
pub fn measure_qubit<R: Rng>(
    reg: PureRegister,
    index: usize,
    basis: &MeasBasis,
    rng: &mut R,
) -> Result<(u8, PureRegister), QstateError> {
    let n = reg.num_qubits();
    if index >= n {
        return Err(QstateError::IndexOutOfRange { index, num_qubits: n });
    }
    let (e0, e1) = basis.eigenstates();
    let proj0 = project_out(&reg, index, &e0);
    let p0: f64 = proj0.iter().map(|a| a.norm_sqr()).sum();
    let outcome = if rng.gen::<f64>() < p0 { 0u8 } else { 1u8 };
    if n == 1 {
        let post = if outcome == 0 { e0 } else { e1 };
        return Ok((outcome, post));
    }
    let mut post = PureRegister {
        amps: if outcome == 0 { proj0 } else { project_out(&reg, index, &e1) },
    };
    post.renormalize();
    post.debug_check_norm();
    Ok((outcome, post))
}

/// Residual amplitudes over the remaining qubits after projecting qubit
/// `index` onto the single-qubit state `eig` (unnormalized).
fn project_out(reg: &PureRegister, index: usize, eig: &PureRegister) -> Vec<Complex64> {
    let n = reg.num_qubits();
    let shift = n - 1 - index; // bit position of `index` within a basis index
    let dim_rest = 1 << (n - 1);
    let mut out = vec![Complex64::new(0.0, 0.0); dim_rest];
    for (rest, slot) in out.iter_mut().enumerate() {
        let high = rest >> shift;
        let low = rest & ((1 << shift) - 1);
        for b in 0..2usize {
            let full = (high << (shift + 1)) | (b << shift) | low;
            *slot += eig.amps[b].conj() * reg.amps[full];
        }
    }
    out
}

/// Joint projective measurement of qubits `(q_a, q_b)` in the Bell basis.
/// Both qubits are factored out; `None` is returned when they were the whole
/// register.
pub fn bell_measure<R: Rng>(
    reg: PureRegister,
    q_a: usize,
    q_b: usize,
    rng: &mut R,
) -> Result<(BellOutcome, Option<PureRegister>), QstateError> {
    let n = reg.num_qubits();
    if q_a >= n {
        return Err(QstateError::IndexOutOfRange { index: q_a, num_qubits: n });
    }
    if q_b >= n || q_a == q_b {
        return Err(QstateError::IndexOutOfRange { index: q_b, num_qubits: n });
    }
    let mut residuals: Vec<Vec<Complex64>> = Vec::with_capacity(4);
    let mut probs = [0.0f64; 4];
    for (k, outcome) in BellOutcome::ALL.iter().enumerate() {
        let res = project_pair(&reg, q_a, q_b, &outcome.amplitudes());
        probs[k] = res.iter().map(|a| a.norm_sqr()).sum();
        residuals.push(res);
    }
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    let mut chosen = 3;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if draw < acc {
            chosen = k;
            break;
        }
    }
    let outcome = BellOutcome::ALL[chosen];
    if n == 2 {
        return Ok((outcome, None));
    }
    let mut post = PureRegister { amps: residuals.swap_remove(chosen) };
    post.renormalize();
    post.debug_check_norm();
    Ok((outcome, Some(post)))
}

/// Residual amplitudes after projecting qubits `(q_a, q_b)` onto the
/// two-qubit state `pair` (unnormalized). `pair` is indexed as
/// `2*bit(q_a) + bit(q_b)`.
fn project_pair(
    reg: &PureRegister,
    q_a: usize,
    q_b: usize,
    pair: &[Complex64; 4],
) -> Vec<Complex64> {
    let n = reg.num_qubits();
    let dim_rest = 1 << (n - 2);
    let mut out = vec![Complex64::new(0.0, 0.0); dim_rest];
    let rest_positions: Vec<usize> = (0..n).filter(|q| *q != q_a && *q != q_b).collect();
    for full in 0..reg.amps.len() {
        let bit = |q: usize| (full >> (n - 1 - q)) & 1;
        let mut rest = 0usize;
        for (ri, q) in rest_positions.iter().enumerate() {
            rest |= bit(*q) << (rest_positions.len() - 1 - ri);
        }
        let pk = 2 * bit(q_a) + bit(q_b);
        out[rest] += pair[pk].conj() * reg.amps[full];
    }
    out
}

/// The Pauli completing teleportation over a singlet for Bell outcome `k`.
///
/// The table is tied to the conventions of [`make_singlet`] and
/// [`BellOutcome::amplitudes`]; tests re-derive it by brute force so it
/// cannot drift silently.
pub fn correction_for(k: BellOutcome) -> PauliCorrection {
    match k {
        BellOutcome::PsiMinus => PauliCorrection::I,
        BellOutcome::PhiMinus => PauliCorrection::X,
        BellOutcome::PsiPlus => PauliCorrection::Z,
        BellOutcome::PhiPlus => PauliCorrection::XZ,
    }
}

/// Applies a Pauli correction to qubit `index`.
pub fn apply_pauli(
    reg: PureRegister,
    index: usize,
    p: PauliCorrection,
) -> Result<PureRegister, QstateError> {
    let n = reg.num_qubits();
    if index >= n {
        return Err(QstateError::IndexOutOfRange { index, num_qubits: n });
    }
    let shift = n - 1 - index;
    let mut amps = reg.amps;
    // Z first, then X, so the XZ tag is the operator product X·Z.
    if matches!(p, PauliCorrection::Z | PauliCorrection::XZ) {
        for (i, a) in amps.iter_mut().enumerate() {
            if (i >> shift) & 1 == 1 {
                *a = -*a;
            }
        }
    }
    if matches!(p, PauliCorrection::X | PauliCorrection::XZ) {
        for i in 0..amps.len() {
            if (i >> shift) & 1 == 0 {
                amps.swap(i, i | (1 << shift));
            }
        }
    }
    let reg = PureRegister { amps };
    reg.debug_check_norm();
    Ok(reg)
}

/// Action of conjugation by `p` on the Bloch axis of `basis`: Paulis are π
/// rotations, so an axis either maps to itself, to its negation, or away.
pub fn basis_action(p: PauliCorrection, basis: &MeasBasis) -> BasisAction {
    let rotated = conjugate_axis(p, basis.axis);
    let dot: f64 = rotated
        .iter()
        .zip(&basis.axis)
        .map(|(a, b)| a * b)
        .sum();
    if (dot - 1.0).abs() <= TOL {
        BasisAction::PreservedSame
    } else if (dot + 1.0).abs() <= TOL {
        BasisAction::PreservedFlipped
    } else {
        BasisAction::NotPreserved
    }
}

/// Bloch-sphere rotation implemented by conjugation with a Pauli.
pub fn conjugate_axis(p: PauliCorrection, axis: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = axis;
    match p {
        PauliCorrection::I => [x, y, z],
        PauliCorrection::X => [x, -y, -z],
        PauliCorrection::Z => [-x, -y, z],
        // XZ is proportional to Y
        PauliCorrection::XZ => [-x, y, -z],
    }
}

/// Pass/fail projection onto `target`; passes with probability
/// `|<target|reg>|²`. Consumes the register.
pub fn projective_test<R: Rng>(
    reg: PureRegister,
    target: &PureRegister,
    rng: &mut R,
) -> Result<bool, QstateError> {
    let p = fidelity(&reg, target)?;
    Ok(rng.gen::<f64>() < p)
}
