//! Base sequences, binding free energies and the one-step transition law.
//!
//! Sites are 1-based throughout: a molecule of `M` bases has edges (pairs of
//! consecutive bases) `1..=M-1`, and the walk lives on `{1, ..., M}` with `M`
//! absorbing. Index 0 is reserved for the empty free-energy sum `g(0) = 0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::sigmoid;

/// A nucleotide. The declaration order `A < T < C < G` is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Base {
    A,
    T,
    C,
    G,
}

impl Base {
    pub const ALL: [Base; 4] = [Base::A, Base::T, Base::C, Base::G];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Base {
        Base::ALL[i]
    }

    pub fn as_char(self) -> char {
        match self {
            Base::A => 'A',
            Base::T => 'T',
            Base::C => 'C',
            Base::G => 'G',
        }
    }
}

impl TryFrom<char> for Base {
    type Error = Error;

    fn try_from(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'A' => Ok(Base::A),
            'T' => Ok(Base::T),
            'C' => Ok(Base::C),
            'G' => Ok(Base::G),
            _ => Err(Error::InvalidBase(c)),
        }
    }
}

impl fmt::Display for Base {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// One strand of the molecule, `b_1 .. b_M` with `M >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BaseSequence(Vec<Base>);

impl BaseSequence {
    pub fn new(bases: Vec<Base>) -> Result<Self> {
        if bases.len() < 2 {
            return Err(Error::SequenceTooShort(bases.len()));
        }
        Ok(BaseSequence(bases))
    }

    /// Number of bases `M` (the killing site).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Base at 1-based site `x`.
    pub fn at(&self, x: usize) -> Base {
        self.0[x - 1]
    }

    pub fn bases(&self) -> &[Base] {
        &self.0
    }

    pub fn into_bases(self) -> Vec<Base> {
        self.0
    }
}

impl FromStr for BaseSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bases = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(Base::try_from)
            .collect::<Result<Vec<_>>>()?;
        BaseSequence::new(bases)
    }
}

impl fmt::Display for BaseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl Serialize for BaseSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BaseSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Nearest-neighbour binding free energies `g0(a, c)` in units of `k_B T`.
/// Rows and columns follow the `A, T, C, G` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyTable {
    g0: [[f64; 4]; 4],
}

/// Room-temperature DNA binding free energies.
#[allow(clippy::approx_constant)]
pub const STANDARD_G0: [[f64; 4]; 4] = [
    [1.78, 1.55, 2.52, 2.22],
    [1.06, 1.78, 2.28, 2.54],
    [2.54, 2.22, 3.14, 3.85],
    [2.28, 2.52, 3.90, 3.14],
];

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable::standard()
    }
}

impl EnergyTable {
    pub fn new(g0: [[f64; 4]; 4]) -> Result<Self> {
        if g0.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "g0",
                reason: "all 16 entries must be finite".into(),
            });
        }
        Ok(EnergyTable { g0 })
    }

    pub fn standard() -> Self {
        EnergyTable { g0: STANDARD_G0 }
    }

    /// Every entry equal to `value`. No pair of bases can be told apart.
    pub fn constant(value: f64) -> Self {
        EnergyTable { g0: [[value; 4]; 4] }
    }

    #[inline]
    pub fn get(&self, a: Base, c: Base) -> f64 {
        self.g0[a.index()][c.index()]
    }

    pub fn set(&mut self, a: Base, c: Base, value: f64) {
        self.g0[a.index()][c.index()] = value;
    }

    pub fn rows(&self) -> &[[f64; 4]; 4] {
        &self.g0
    }

    /// Distinct entries, sorted in decreasing order.
    pub fn distinct_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.g0.iter().flatten().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        v
    }

    /// Check that `g0(a, .)` and `g0(., a)` are injective for every base `a`.
    /// Two entries collide when they differ by at most `tolerance`.
    pub fn check_injectivity(&self, tolerance: f64) -> InjectivityReport {
        let mut violations = Vec::new();
        for fixed in Base::ALL {
            for side in [Side::FirstFixed, Side::SecondFixed] {
                let entry = |free: Base| match side {
                    Side::FirstFixed => self.get(fixed, free),
                    Side::SecondFixed => self.get(free, fixed),
                };
                let mut collisions = Vec::new();
                for (i, &u) in Base::ALL.iter().enumerate() {
                    for &v in &Base::ALL[i + 1..] {
                        if (entry(u) - entry(v)).abs() <= tolerance {
                            collisions.push((u, v));
                        }
                    }
                }
                if !collisions.is_empty() {
                    violations.push(InjectivityViolation {
                        fixed,
                        side,
                        collisions,
                    });
                }
            }
        }
        InjectivityReport { violations }
    }
}

/// Which argument of `g0` is held fixed in an injectivity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `g0(fixed, .)`: a row of the table.
    FirstFixed,
    /// `g0(., fixed)`: a column of the table.
    SecondFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityViolation {
    pub fixed: Base,
    pub side: Side,
    /// Pairs of free-argument bases that map to the same energy.
    pub collisions: Vec<(Base, Base)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityReport {
    pub violations: Vec<InjectivityViolation>,
}

impl InjectivityReport {
    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Per-site stretch work `g1` for sites `1..=M-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ForceField(Vec<f64>);

impl ForceField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "g1",
                reason: "entries must be finite".into(),
            });
        }
        Ok(ForceField(values))
    }

    /// Constant work `g1` on a molecule of `m` bases.
    pub fn constant(m: usize, g1: f64) -> Self {
        ForceField(vec![g1; m.saturating_sub(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Work at 1-based site `x`.
    #[inline]
    pub fn at(&self, x: usize) -> f64 {
        self.0[x - 1]
    }

    pub fn set(&mut self, x: usize, value: f64) {
        self.0[x - 1] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Inverse temperature.
    pub beta: f64,
    /// Continuous-time rate scale `r`.
    pub rate_scale: f64,
}

impl ModelParams {
    pub fn new(beta: f64, rate_scale: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be positive and finite, got {beta}"),
            });
        }
        if !(rate_scale > 0.0 && rate_scale.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "r",
                reason: format!("must be positive and finite, got {rate_scale}"),
            });
        }
        Ok(ModelParams { beta, rate_scale })
    }
}

/// Everything about the physics except the hidden sequence: the table, the
/// applied force profile and the thermal parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub table: EnergyTable,
    pub force: ForceField,
    pub params: ModelParams,
}

impl Model {
    /// Number of bases `M` implied by the force profile.
    pub fn sites(&self) -> usize {
        self.force.len() + 1
    }

    /// `g0(a, c) - g1(x)`.
    pub fn delta_g(&self, x: usize, a: Base, c: Base) -> f64 {
        self.table.get(a, c) - self.force.at(x)
    }
}

/// Probability of opening one more pair when the local free-energy increment is `dg`.
#[inline]
pub fn hop_probability(dg: f64, beta: f64) -> f64 {
    sigmoid(-beta * dg)
}

/// A molecule: its sequence together with the model acting on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub seq: BaseSequence,
    pub model: Model,
}

impl Environment {
    pub fn new(seq: BaseSequence, table: EnergyTable, force: ForceField, params: ModelParams) -> Result<Self> {
        if force.len() != seq.len() - 1 {
            return Err(Error::LengthMismatch {
                what: "g1",
                expected: seq.len() - 1,
                got: force.len(),
            });
        }
        Ok(Environment {
            seq,
            model: Model { table, force, params },
        })
    }

    /// Standard table, constant force.
    pub fn with_constant_force(seq: BaseSequence, g1: f64, beta: f64, rate_scale: f64) -> Result<Self> {
        let m = seq.len();
        Environment::new(
            seq,
            EnergyTable::standard(),
            ForceField::constant(m, g1),
            ModelParams::new(beta, rate_scale)?,
        )
    }

    /// Number of bases `M`.
    pub fn sites(&self) -> usize {
        self.seq.len()
    }

    pub fn table(&self) -> &EnergyTable {
        &self.model.table
    }

    pub fn params(&self) -> ModelParams {
        self.model.params
    }

    fn check_edge(&self, x: usize) -> Result<()> {
        let hi = self.sites() - 1;
        if x < 1 || x > hi {
            return Err(Error::IndexOutOfRange {
                what: "site",
                index: x,
                lo: 1,
                hi,
            });
        }
        Ok(())
    }

    /// `g0(a, c) - g1(x)` for arbitrary bases at site `x`.
    pub fn delta_g(&self, x: usize, a: Base, c: Base) -> Result<f64> {
        self.check_edge(x)?;
        Ok(self.model.delta_g(x, a, c))
    }

    /// `g0(b_x, b_{x+1})`.
    pub fn binding_energy(&self, x: usize) -> f64 {
        self.model.table.get(self.seq.at(x), self.seq.at(x + 1))
    }

    /// `g(0) = 0, g(1), ..., g(M-1)`.
    pub fn free_energy_profile(&self) -> Vec<f64> {
        self.landscape().free_energy_profile()
    }

    /// Continuous-time `(forward, backward)` rates out of site `x`.
    pub fn transition_rates(&self, x: usize) -> Result<(f64, f64)> {
        self.check_edge(x)?;
        Ok(self.landscape().rates(x))
    }

    /// The per-site energies that drive the walk.
    pub fn landscape(&self) -> Landscape {
        let m = self.sites();
        let energies = (1..m).map(|x| self.binding_energy(x)).collect();
        Landscape {
            energies,
            force: self.model.force.values().to_vec(),
            params: self.model.params,
        }
    }
}

/// Per-site binding energies `g0(x)` and stretch work `g1(x)` for `x = 1..=M-1`,
/// without base identities. This is all the walk needs to move.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    energies: Vec<f64>,
    force: Vec<f64>,
    params: ModelParams,
}

impl Landscape {
    pub fn new(energies: Vec<f64>, force: ForceField, params: ModelParams) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::SequenceTooShort(energies.len() + 1));
        }
        if energies.len() != force.len() {
            return Err(Error::LengthMismatch {
                what: "g1",
                expected: energies.len(),
                got: force.len(),
            });
        }
        if energies.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "energies",
                reason: "entries must be finite".into(),
            });
        }
        Ok(Landscape {
            energies,
            force: force.0,
            params,
        })
    }

    /// Number of sites `M`.
    pub fn sites(&self) -> usize {
        self.energies.len() + 1
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    /// `g0(x)`.
    #[inline]
    pub fn energy(&self, x: usize) -> f64 {
        self.energies[x - 1]
    }

    /// `g1(x)`.
    #[inline]
    pub fn force(&self, x: usize) -> f64 {
        self.force[x - 1]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn forces(&self) -> &[f64] {
        &self.force
    }

    /// Free-energy increment `g0(x) - g1(x)`.
    #[inline]
    pub fn delta(&self, x: usize) -> f64 {
        self.energies[x - 1] - self.force[x - 1]
    }

    /// Discrete-time probability of stepping from `x` to `x + 1`; `p_1 = 1`.
    #[inline]
    pub fn forward_probability(&self, x: usize) -> f64 {
        if x == 1 {
            1.0
        } else {
            hop_probability(self.delta(x), self.params.beta)
        }
    }

    /// Continuous-time `(forward, backward)` rates out of `x`. Site 1 never closes.
    pub fn rates(&self, x: usize) -> (f64, f64) {
        let ModelParams { beta, rate_scale } = self.params;
        let forward = rate_scale * (-beta * self.energy(x)).exp();
        let backward = if x == 1 {
            0.0
        } else {
            rate_scale * (-beta * self.force(x)).exp()
        };
        (forward, backward)
    }

    pub fn free_energy_profile(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.sites());
        g.push(0.0);
        let mut acc = 0.0;
        for x in 1..self.sites() {
            acc += self.delta(x);
            g.push(acc);
        }
        g
    }

    /// Same energies under a different force profile.
    pub fn with_force(&self, force: &ForceField) -> Result<Landscape> {
        Landscape::new(self.energies.clone(), force.clone(), self.params)
    }
}

/// `g1` given either as one number for every site or as a per-site list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ForceSpec {
    Constant(f64),
    PerSite(Vec<f64>),
}

/// JSON form of an [`Environment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentDoc {
    pub sequence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<[[f64; 4]; 4]>,
    pub beta: f64,
    pub r: f64,
    pub g1: ForceSpec,
}

impl EnvironmentDoc {
    pub fn into_environment(self) -> Result<Environment> {
        let seq: BaseSequence = self.sequence.parse()?;
        let table = match self.g0 {
            Some(g0) => EnergyTable::new(g0)?,
            None => EnergyTable::standard(),
        };
        let force = match self.g1 {
            ForceSpec::Constant(v) => ForceField::new(vec![v; seq.len() - 1])?,
            ForceSpec::PerSite(v) => ForceField::new(v)?,
        };
        Environment::new(seq, table, force, ModelParams::new(self.beta, self.r)?)
    }

    pub fn from_environment(env: &Environment) -> Self {
        let force = env.model.force.values();
        let g1 = if force.windows(2).all(|w| w[0] == w[1]) && !force.is_empty() {
            ForceSpec::Constant(force[0])
        } else {
            ForceSpec::PerSite(force.to_vec())
        };
        EnvironmentDoc {
            sequence: env.seq.to_string(),
            g0: Some(*env.model.table.rows()),
            beta: env.model.params.beta,
            r: env.model.params.rate_scale,
            g1,
        }
    }
}

impl Environment {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnvironmentDoc =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("environment: {e}")))?;
        doc.into_environment()
    }
}
