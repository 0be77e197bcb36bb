//! Scenario description: system, reservoirs, grids, tolerances.
//!
//! Everything downstream works in internal units `hbar = k_B = 1` with
//! energies measured in a reference energy (the first diagonal entry of the
//! system energy matrix) and times in its inverse. [`validate_scenario`]
//! checks every structural invariant, performs that normalization, and is
//! the only way to obtain a [`ValidatedScenario`].

use crate::linalg;
use crate::{C64, CMatrix};
use serde::{Deserialize, Serialize};

/// Particle statistics of the system and its reservoirs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

/// Reservoir spectral density family.
///
/// `Ohmic` lives on `[0, inf)` with an exponential cutoff,
/// `J(w) = eta * w * exp(-w/omega_c)`; `Lorentzian` lives on the full line,
/// `J(e) = strength * width^2 / (e^2 + width^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SpectralDensityModel {
    Ohmic { eta: f64, omega_c: f64 },
    Lorentzian { strength: f64, width: f64 },
}

impl SpectralDensityModel {
    /// The interval outside which the density is identically zero
    /// (`None` bound = unbounded side).
    pub fn support(&self) -> (Option<f64>, Option<f64>) {
        match self {
            SpectralDensityModel::Ohmic { .. } => (Some(0.0), None),
            SpectralDensityModel::Lorentzian { .. } => (None, None),
        }
    }

    /// Pointwise value `J(omega)`; zero outside the support.
    pub fn eval(&self, omega: f64) -> f64 {
        match *self {
            SpectralDensityModel::Ohmic { eta, omega_c } => {
                if omega > 0.0 {
                    eta * omega * (-omega / omega_c).exp()
                } else {
                    0.0
                }
            }
            SpectralDensityModel::Lorentzian { strength, width } => {
                strength * width * width / (omega * omega + width * width)
            }
        }
    }

    /// Rescales every energy-like parameter by `1/e_ref`.
    fn normalized(&self, e_ref: f64) -> Self {
        match *self {
            SpectralDensityModel::Ohmic { eta, omega_c } => {
                SpectralDensityModel::Ohmic { eta, omega_c: omega_c / e_ref }
            }
            SpectralDensityModel::Lorentzian { strength, width } => SpectralDensityModel::Lorentzian {
                strength: strength / e_ref,
                width: width / e_ref,
            },
        }
    }
}

/// Critical Ohmic coupling: a localized (undamped) mode exists for
/// `eta > omega_s / omega_c`.
pub fn ohmic_critical_coupling(omega_s: f64, omega_c: f64) -> f64 {
    omega_s / omega_c
}

/// Complex number encoded as `[re, im]` in config files.
pub type ComplexDef = [f64; 2];
/// Complex matrix encoded row-major in config files.
pub type ComplexMatrixDef = Vec<Vec<ComplexDef>>;

fn matrix_from_def(def: &ComplexMatrixDef) -> Option<CMatrix> {
    let n = def.len();
    if n == 0 || def.iter().any(|row| row.len() != n) {
        return None;
    }
    Some(CMatrix::from_fn(n, n, |i, j| C64::new(def[i][j][0], def[i][j][1])))
}

fn matrix_to_def(m: &CMatrix) -> ComplexMatrixDef {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// How a reservoir attaches to the system levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CouplingStructure {
    /// Every level couples identically; no level mixing through the bath.
    #[default]
    LevelDiagonal,
    /// Explicit Hermitian weight matrix. Only scalar multiples of the
    /// identity are accepted (they fold into the spectral density scale);
    /// anything else is rejected during validation.
    FullMatrix { weights: ComplexMatrixDef },
}

/// One thermal reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub temperature: f64,
    #[serde(default)]
    pub chemical_potential: f64,
    pub spectral_density: SpectralDensityModel,
    #[serde(default)]
    pub coupling: CouplingStructure,
}

/// Initial reduced state of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// Gaussian state described by its one-particle occupation matrix
    /// `n_ij = <a_j^dag a_i>` (Hermitian; eigenvalues in `[0,1]` for fermions).
    Occupation { matrix: ComplexMatrixDef },
    /// Arbitrary single-mode state described by its Fock-basis density
    /// matrix `rho_lm` (bosonic, dimension-1 systems only).
    FockMatrix { matrix: ComplexMatrixDef },
}

/// The system: levels, statistics, and initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub statistics: Statistics,
    /// Hermitian level-space energy matrix, `[[re, im], ...]` rows.
    pub energy_matrix: ComplexMatrixDef,
    pub initial_state: InitialState,
}

/// Uniform time grid for the Volterra solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    #[serde(default)]
    pub t0: f64,
    pub t_max: f64,
    pub dt: f64,
}

impl TimeGrid {
    /// Number of steps; the grid has `n_steps() + 1` points.
    pub fn n_steps(&self) -> usize {
        ((self.t_max - self.t0) / self.dt).round() as usize
    }

    /// Grid points `t0 + k dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps()).map(|k| self.t0 + k as f64 * self.dt).collect()
    }
}

/// Frequency grid used for sampled steady-state output arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_points: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid { omega_min: 0.0, omega_max: 20.0, n_points: 801 }
    }
}

impl FrequencyGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points.max(2);
        let h = (self.omega_max - self.omega_min) / (n - 1) as f64;
        (0..n).map(|k| self.omega_min + k as f64 * h).collect()
    }
}

/// Numerical tolerances. Every downstream module reads these rather than
/// hardcoding its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Late-time norm below which `u` counts as decayed.
    pub steady_state_tol: f64,
    /// Absolute/relative target for adaptive quadrature.
    pub quadrature_tol: f64,
    /// Residual target for the renormalized (T, mu) solve.
    pub newton_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { steady_state_tol: 1e-3, quadrature_tol: 1e-10, newton_tol: 1e-12 }
    }
}

/// Fock-space truncation for explicit density-matrix construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Truncation {
    /// Highest Fock state kept. `None` = choose from the occupation level.
    pub n_max: Option<usize>,
}

/// Complete scenario description as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub system: SystemSpec,
    #[serde(default)]
    pub reservoirs: Vec<ReservoirSpec>,
    pub time_grid: TimeGrid,
    #[serde(default)]
    pub frequency_grid: FrequencyGrid,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub truncation: Truncation,
}

pub const SCHEMA_VERSION: u32 = 1;

/// A single structural problem found during validation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValidationError {
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    UnsupportedSchemaVersion(u32),
    #[error("energy matrix must be square, nonempty, and finite")]
    BadEnergyMatrix,
    #[error("energy matrix is not Hermitian (residual {residual:.3e})")]
    NonHermitianEnergyMatrix { residual: f64 },
    #[error("bosonic level frequencies must be positive (min eigenvalue {0:.6e})")]
    NonPositiveBosonicFrequency(f64),
    #[error("spectral density parameter {name} must be strictly positive and finite, got {value}")]
    NegativeSpectralDensity { name: &'static str, value: f64 },
    #[error("reservoir {index} temperature must be >= 0 and finite, got {value}")]
    NegativeTemperature { index: usize, value: f64 },
    #[error("reservoir {index} is bosonic and must have zero chemical potential, got {value}")]
    BosonicNonzeroMu { index: usize, value: f64 },
    #[error(
        "reservoir {index}: {reason} (bosonic systems pair with Ohmic densities on [0,inf), fermionic with Lorentzian on the full line)"
    )]
    IncompatibleSpectralDensity { index: usize, reason: String },
    #[error("fermionic occupation eigenvalue {0:.6e} lies outside [0, 1]")]
    FermionOccupationOutOfRange(f64),
    #[error("occupation matrix must be Hermitian and positive semidefinite (violation {0:.3e})")]
    BadOccupationMatrix(f64),
    #[error("initial-state matrix dimension does not match the energy matrix")]
    DimensionMismatch,
    #[error("Fock-basis initial data requires a single-mode bosonic system")]
    FockStateUnsupported,
    #[error("Fock density matrix invalid: {0}")]
    BadFockCoefficients(String),
    #[error("unsupported coupling structure: only level-diagonal couplings (or scalar multiples of the identity) are implemented")]
    UnsupportedCoupling,
    #[error("bad grid: {0}")]
    BadGrid(String),
    #[error("tolerance {name} must be strictly positive and finite, got {value}")]
    BadTolerance { name: &'static str, value: f64 },
}

/// Every violated invariant found in a config, reported together.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl std::fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "scenario validation failed with {} error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

/// Initial state after validation, in matrix form.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStateData {
    /// One-particle occupation matrix of a Gaussian state.
    Occupation(CMatrix),
    /// Single-mode Fock-basis density matrix `rho_lm`.
    FockMatrix(CMatrix),
}

impl InitialStateData {
    /// One-particle occupation matrix `<a_j^dag a_i>` implied by the state.
    pub fn occupation_matrix(&self) -> CMatrix {
        match self {
            InitialStateData::Occupation(n) => n.clone(),
            InitialStateData::FockMatrix(rho) => {
                let nbar: f64 = (0..rho.nrows()).map(|l| l as f64 * rho[(l, l)].re).sum();
                CMatrix::from_element(1, 1, C64::new(nbar, 0.0))
            }
        }
    }

    /// Whether the state is Gaussian (occupation-specified).
    pub fn is_gaussian(&self) -> bool {
        matches!(self, InitialStateData::Occupation(_))
    }
}

/// One reservoir in internal units, with the coupling weight folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedReservoir {
    pub temperature: f64,
    pub chemical_potential: f64,
    pub spectral_density: SpectralDensityModel,
    /// Scalar coupling weight multiplying the spectral density.
    pub coupling_scale: f64,
}

/// A scenario that passed validation, expressed in internal units
/// (`hbar = k_B = 1`, energies in units of the reference energy).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScenario {
    statistics: Statistics,
    energy: CMatrix,
    initial: InitialStateData,
    reservoirs: Vec<ValidatedReservoir>,
    time_grid: TimeGrid,
    frequency_grid: FrequencyGrid,
    tolerances: Tolerances,
    truncation: Truncation,
    reference_energy: f64,
}

impl ValidatedScenario {
    pub fn statistics(&self) -> Statistics {
        self.statistics
    }
    /// Hermitian level-space energy matrix in internal units.
    pub fn energy(&self) -> &CMatrix {
        &self.energy
    }
    pub fn dim(&self) -> usize {
        self.energy.nrows()
    }
    pub fn initial_state(&self) -> &InitialStateData {
        &self.initial
    }
    pub fn reservoirs(&self) -> &[ValidatedReservoir] {
        &self.reservoirs
    }
    pub fn time_grid(&self) -> TimeGrid {
        self.time_grid
    }
    pub fn frequency_grid(&self) -> FrequencyGrid {
        self.frequency_grid
    }
    pub fn tolerances(&self) -> Tolerances {
        self.tolerances
    }
    pub fn truncation(&self) -> Truncation {
        self.truncation
    }
    /// The physical energy that equals 1 in internal units.
    pub fn reference_energy(&self) -> f64 {
        self.reference_energy
    }

    /// Coupling ratio `eta / eta_c` for a single-mode Ohmic setting, when
    /// the scenario has exactly one Ohmic reservoir.
    pub fn eta_over_etac(&self) -> Option<f64> {
        if self.dim() != 1 || self.reservoirs.len() != 1 {
            return None;
        }
        match self.reservoirs[0].spectral_density {
            SpectralDensityModel::Ohmic { eta, omega_c } => {
                let omega_s = self.energy[(0, 0)].re;
                let eta_eff = eta * self.reservoirs[0].coupling_scale;
                Some(eta_eff / ohmic_critical_coupling(omega_s, omega_c))
            }
            _ => None,
        }
    }

    /// Re-expresses the scenario as a config in internal units. Validating
    /// the result reproduces `self` exactly (normalization is idempotent).
    pub fn normalized_config(&self) -> ScenarioConfig {
        self.config_scaled(1.0)
    }

    /// Restores the original physical units (inverse of the normalization).
    pub fn to_physical(&self) -> ScenarioConfig {
        self.config_scaled(self.reference_energy)
    }

    fn config_scaled(&self, e_ref: f64) -> ScenarioConfig {
        let energy = self.energy.map(|z| z * C64::new(e_ref, 0.0));
        let initial_state = match &self.initial {
            InitialStateData::Occupation(n) => InitialState::Occupation { matrix: matrix_to_def(n) },
            InitialStateData::FockMatrix(r) => InitialState::FockMatrix { matrix: matrix_to_def(r) },
        };
        let reservoirs = self
            .reservoirs
            .iter()
            .map(|r| ReservoirSpec {
                temperature: r.temperature * e_ref,
                chemical_potential: r.chemical_potential * e_ref,
                spectral_density: match r.spectral_density {
                    SpectralDensityModel::Ohmic { eta, omega_c } => SpectralDensityModel::Ohmic {
                        eta: eta * r.coupling_scale,
                        omega_c: omega_c * e_ref,
                    },
                    SpectralDensityModel::Lorentzian { strength, width } => {
                        SpectralDensityModel::Lorentzian {
                            strength: strength * r.coupling_scale * e_ref,
                            width: width * e_ref,
                        }
                    }
                },
                coupling: CouplingStructure::LevelDiagonal,
            })
            .collect();
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            system: SystemSpec {
                statistics: self.statistics,
                energy_matrix: matrix_to_def(&energy),
                initial_state,
            },
            reservoirs,
            time_grid: TimeGrid {
                t0: self.time_grid.t0 / e_ref,
                t_max: self.time_grid.t_max / e_ref,
                dt: self.time_grid.dt / e_ref,
            },
            frequency_grid: FrequencyGrid {
                omega_min: self.frequency_grid.omega_min * e_ref,
                omega_max: self.frequency_grid.omega_max * e_ref,
                n_points: self.frequency_grid.n_points,
            },
            tolerances: self.tolerances,
            truncation: self.truncation,
        }
    }
}

const HERMITICITY_TOL: f64 = 1e-12;

fn finite_matrix(def: &ComplexMatrixDef) -> bool {
    def.iter().flatten().all(|z| z[0].is_finite() && z[1].is_finite())
}

/// Checks every invariant of a scenario config and normalizes it to internal
/// units. All violations are collected; the scenario is only usable if none
/// were found. Validation is idempotent: validating
/// [`ValidatedScenario::normalized_config`] returns an identical scenario.
pub fn validate_scenario(config: &ScenarioConfig) -> Result<ValidatedScenario, ValidationErrors> {
    let mut errors = Vec::new();

    if config.schema_version != SCHEMA_VERSION {
        errors.push(ValidationError::UnsupportedSchemaVersion(config.schema_version));
    }

    // --- energy matrix ---
    let energy = if finite_matrix(&config.system.energy_matrix) {
        matrix_from_def(&config.system.energy_matrix)
    } else {
        None
    };
    let energy = match energy {
        Some(e) => e,
        None => {
            errors.push(ValidationError::BadEnergyMatrix);
            return Err(ValidationErrors(errors));
        }
    };
    let dim = energy.nrows();
    let scale = energy.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1.0);
    let herm_res = linalg::hermiticity_residual(&energy);
    if herm_res > HERMITICITY_TOL * scale {
        errors.push(ValidationError::NonHermitianEnergyMatrix { residual: herm_res });
    }
    let statistics = config.system.statistics;
    if statistics == Statistics::Bosonic {
        let (vals, _) = linalg::hermitian_eigen(&energy);
        if let Some(&min) = vals.first() {
            if min <= 0.0 {
                errors.push(ValidationError::NonPositiveBosonicFrequency(min));
            }
        }
    }

    // --- reference energy ---
    let e00 = energy[(0, 0)].re.abs();
    let e_ref = if e00 > 0.0 { e00 } else { 1.0 };

    // --- initial state ---
    let initial = match &config.system.initial_state {
        InitialState::Occupation { matrix } => {
            match matrix_from_def(matrix).filter(|_| finite_matrix(matrix)) {
                Some(n) if n.nrows() == dim => {
                    let herm = linalg::hermiticity_residual(&n);
                    let nscale = n.iter().map(|z| z.norm()).fold(0.0_f64, f64::max).max(1.0);
                    if herm > HERMITICITY_TOL * nscale {
                        errors.push(ValidationError::BadOccupationMatrix(herm));
                    } else {
                        let (vals, _) = linalg::hermitian_eigen(&n);
                        for &v in &vals {
                            if v < -1e-12 * nscale {
                                errors.push(ValidationError::BadOccupationMatrix(v));
                            } else if statistics == Statistics::Fermionic && v > 1.0 + 1e-12 {
                                errors.push(ValidationError::FermionOccupationOutOfRange(v));
                            }
                        }
                    }
                    Some(InitialStateData::Occupation(n))
                }
                Some(_) => {
                    errors.push(ValidationError::DimensionMismatch);
                    None
                }
                None => {
                    errors.push(ValidationError::BadOccupationMatrix(f64::NAN));
                    None
                }
            }
        }
        InitialState::FockMatrix { matrix } => {
            if dim != 1 || statistics != Statistics::Bosonic {
                errors.push(ValidationError::FockStateUnsupported);
                None
            } else {
                match matrix_from_def(matrix).filter(|_| finite_matrix(matrix)) {
                    Some(rho) => {
                        let herm = linalg::hermiticity_residual(&rho);
                        let tr: f64 = (0..rho.nrows()).map(|l| rho[(l, l)].re).sum();
                        if herm > 1e-10 {
                            errors.push(ValidationError::BadFockCoefficients(format!(
                                "not Hermitian (residual {herm:.3e})"
                            )));
                        }
                        if (tr - 1.0).abs() > 1e-8 {
                            errors.push(ValidationError::BadFockCoefficients(format!(
                                "trace is {tr:.12}, expected 1"
                            )));
                        }
                        let (vals, _) = linalg::hermitian_eigen(&rho);
                        if let Some(&min) = vals.first() {
                            if min < -1e-10 {
                                errors.push(ValidationError::BadFockCoefficients(format!(
                                    "negative eigenvalue {min:.3e}"
                                )));
                            }
                        }
                        Some(InitialStateData::FockMatrix(rho))
                    }
                    None => {
                        errors.push(ValidationError::BadFockCoefficients("not a finite square matrix".into()));
                        None
                    }
                }
            }
        }
    };

    // --- reservoirs ---
    let mut reservoirs = Vec::with_capacity(config.reservoirs.len());
    for (index, r) in config.reservoirs.iter().enumerate() {
        if !(r.temperature >= 0.0 && r.temperature.is_finite()) {
            errors.push(ValidationError::NegativeTemperature { index, value: r.temperature });
        }
        match r.spectral_density {
            SpectralDensityModel::Ohmic { eta, omega_c } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    errors.push(ValidationError::NegativeSpectralDensity { name: "eta", value: eta });
                }
                if !(omega_c > 0.0 && omega_c.is_finite()) {
                    errors.push(ValidationError::NegativeSpectralDensity { name: "omega_c", value: omega_c });
                }
                if statistics == Statistics::Fermionic {
                    errors.push(ValidationError::IncompatibleSpectralDensity {
                        index,
                        reason: "fermionic system with Ohmic density".into(),
                    });
                }
            }
            SpectralDensityModel::Lorentzian { strength, width } => {
                if !(strength > 0.0 && strength.is_finite()) {
                    errors.push(ValidationError::NegativeSpectralDensity { name: "strength", value: strength });
                }
                if !(width > 0.0 && width.is_finite()) {
                    errors.push(ValidationError::NegativeSpectralDensity { name: "width", value: width });
                }
                if statistics == Statistics::Bosonic {
                    errors.push(ValidationError::IncompatibleSpectralDensity {
                        index,
                        reason: "bosonic system with full-line Lorentzian density".into(),
                    });
                }
            }
        }
        if statistics == Statistics::Bosonic && r.chemical_potential != 0.0 {
            errors.push(ValidationError::BosonicNonzeroMu { index, value: r.chemical_potential });
        }
        let coupling_scale = match &r.coupling {
            CouplingStructure::LevelDiagonal => 1.0,
            CouplingStructure::FullMatrix { weights } => {
                match matrix_from_def(weights).filter(|_| finite_matrix(weights)) {
                    Some(w) if w.nrows() == dim => {
                        let c = w[(0, 0)];
                        let id_scaled = CMatrix::identity(dim, dim) * c;
                        if c.im.abs() > 1e-12 || c.re <= 0.0 || (w - id_scaled).norm() > 1e-12 * c.norm().max(1.0) {
                            errors.push(ValidationError::UnsupportedCoupling);
                            1.0
                        } else {
                            c.re
                        }
                    }
                    _ => {
                        errors.push(ValidationError::UnsupportedCoupling);
                        1.0
                    }
                }
            }
        };
        reservoirs.push(ValidatedReservoir {
            temperature: r.temperature / e_ref,
            chemical_potential: r.chemical_potential / e_ref,
            spectral_density: r.spectral_density.normalized(e_ref),
            coupling_scale,
        });
    }

    // --- grids ---
    let tg = config.time_grid;
    if !(tg.dt > 0.0 && tg.dt.is_finite() && tg.t_max.is_finite() && tg.t0.is_finite()) {
        errors.push(ValidationError::BadGrid(format!("dt must be positive and finite, got {}", tg.dt)));
    } else if tg.t_max <= tg.t0 {
        errors.push(ValidationError::BadGrid(format!("t_max {} must exceed t0 {}", tg.t_max, tg.t0)));
    } else if tg.n_steps() < 4 {
        errors.push(ValidationError::BadGrid(format!(
            "grid has only {} steps; at least 4 are required",
            tg.n_steps()
        )));
    }
    let fg = config.frequency_grid;
    if !(fg.omega_max > fg.omega_min && fg.omega_min.is_finite() && fg.omega_max.is_finite()) {
        errors.push(ValidationError::BadGrid(format!(
            "frequency grid [{}, {}] is empty or not finite",
            fg.omega_min, fg.omega_max
        )));
    }
    if fg.n_points < 2 {
        errors.push(ValidationError::BadGrid(format!("frequency grid needs >= 2 points, got {}", fg.n_points)));
    }

    // --- tolerances ---
    let tol = config.tolerances;
    for (name, value) in [
        ("steady_state_tol", tol.steady_state_tol),
        ("quadrature_tol", tol.quadrature_tol),
        ("newton_tol", tol.newton_tol),
    ] {
        if !(value > 0.0 && value.is_finite()) {
            errors.push(ValidationError::BadTolerance { name, value });
        }
    }

    if !errors.is_empty() {
        return Err(ValidationErrors(errors));
    }

    Ok(ValidatedScenario {
        statistics,
        energy: energy.map(|z| z / C64::new(e_ref, 0.0)),
        initial: initial.expect("initial state present when no errors"),
        reservoirs,
        time_grid: TimeGrid { t0: tg.t0 * e_ref, t_max: tg.t_max * e_ref, dt: tg.dt * e_ref },
        frequency_grid: FrequencyGrid {
            omega_min: fg.omega_min / e_ref,
            omega_max: fg.omega_max / e_ref,
            n_points: fg.n_points,
        },
        tolerances: tol,
        truncation: config.truncation,
        reference_energy: e_ref,
    })
}

// ---------------------------------------------------------------------------
// Convenience constructors for the standard scenario families.
// ---------------------------------------------------------------------------

impl ScenarioConfig {
    /// Single bosonic mode `omega_s` coupled to one Ohmic reservoir at
    /// temperature `t0_temperature`, starting from a Gaussian state with
    /// occupation `n0`.
    pub fn single_mode_ohmic(
        omega_s: f64,
        eta: f64,
        omega_c: f64,
        t0_temperature: f64,
        n0: f64,
        time_grid: TimeGrid,
    ) -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            system: SystemSpec {
                statistics: Statistics::Bosonic,
                energy_matrix: vec![vec![[omega_s, 0.0]]],
                initial_state: InitialState::Occupation { matrix: vec![vec![[n0, 0.0]]] },
            },
            reservoirs: vec![ReservoirSpec {
                temperature: t0_temperature,
                chemical_potential: 0.0,
                spectral_density: SpectralDensityModel::Ohmic { eta, omega_c },
                coupling: CouplingStructure::LevelDiagonal,
            }],
            time_grid,
            frequency_grid: FrequencyGrid::default(),
            tolerances: Tolerances::default(),
            truncation: Truncation::default(),
        }
    }

    /// Two fermionic levels (`eps`) coupled to two Lorentzian leads, each
    /// lead carrying half of the total strength `gamma_total`, starting empty.
    /// This is the standard two-lead transistor configuration.
    pub fn two_level_two_lead(
        eps: [f64; 2],
        gamma_total: f64,
        width: f64,
        lead_temperatures: [f64; 2],
        lead_potentials: [f64; 2],
        time_grid: TimeGrid,
    ) -> Self {
        let zero = [0.0, 0.0];
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            system: SystemSpec {
                statistics: Statistics::Fermionic,
                energy_matrix: vec![vec![[eps[0], 0.0], zero], vec![zero, [eps[1], 0.0]]],
                initial_state: InitialState::Occupation {
                    matrix: vec![vec![zero, zero], vec![zero, zero]],
                },
            },
            reservoirs: (0..2)
                .map(|a| ReservoirSpec {
                    temperature: lead_temperatures[a],
                    chemical_potential: lead_potentials[a],
                    spectral_density: SpectralDensityModel::Lorentzian {
                        strength: gamma_total / 2.0,
                        width,
                    },
                    coupling: CouplingStructure::LevelDiagonal,
                })
                .collect(),
            time_grid,
            frequency_grid: FrequencyGrid { omega_min: -20.0, omega_max: 20.0, n_points: 801 },
            tolerances: Tolerances::default(),
            truncation: Truncation::default(),
        }
    }
}
