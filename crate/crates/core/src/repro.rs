//! Reproduction number from the next-generation matrix.
//!
//! The infection subsystem has 25 states ordered as five blocks
//! (E, I^SC1, I^SC2, I^C1, I^C2), each holding the five age groups. Its
//! Jacobian at the disease-free state splits into a transmission part `T`
//! (new infections only) and a transition part `Σ`; the next-generation
//! matrix is `K = -T Σ^-1` and R is its spectral radius.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{
    CompartmentState, ContactMatrix, EpidemicParameters, PopulationCensus, Trajectory, AGE_GROUPS,
};

pub const SUBSYSTEM_DIM: usize = 5 * AGE_GROUPS;

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 10_000;

const E: usize = 0;
const SC1: usize = 1;
const SC2: usize = 2;
const C1: usize = 3;
const C2: usize = 4;

fn at(block: usize, group: usize) -> usize {
    block * AGE_GROUPS + group
}

/// `T` and `Σ` of the linearised infection subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct InfectionSubsystemMatrices {
    pub transmission: DMatrix<f64>,
    pub transition: DMatrix<f64>,
}

impl InfectionSubsystemMatrices {
    /// Builds `T` and `Σ` with susceptibles fixed at `susceptible`
    /// (the census for the basic reproduction number).
    pub fn new(
        params: &EpidemicParameters,
        c: &ContactMatrix,
        census: &PopulationCensus,
        susceptible: &[f64; AGE_GROUPS],
    ) -> Result<Self> {
        census.validate()?;
        let n = SUBSYSTEM_DIM;
        let mut t = DMatrix::zeros(n, n);
        for i in 0..AGE_GROUPS {
            for j in 0..AGE_GROUPS {
                let v = params.beta * susceptible[i] * c.0[i][j] / census.0[j];
                t[(at(E, i), at(SC1, j))] = v;
                t[(at(E, i), at(SC2, j))] = v;
            }
        }

        let kappa = params.kappa();
        let gamma_c = params.gamma_c();
        let mut sigma = DMatrix::zeros(n, n);
        for i in 0..AGE_GROUPS {
            sigma[(at(E, i), at(E, i))] = -kappa;
            sigma[(at(SC1, i), at(E, i))] = params.rho[i] * kappa;
            sigma[(at(SC1, i), at(SC1, i))] = -gamma_c;
            sigma[(at(SC2, i), at(E, i))] = (1.0 - params.rho[i]) * kappa;
            sigma[(at(SC2, i), at(SC2, i))] = -params.gamma_r();
            sigma[(at(C1, i), at(SC1, i))] = params.rho_prime[i] * gamma_c;
            sigma[(at(C1, i), at(C1, i))] = -params.nu();
            sigma[(at(C2, i), at(SC1, i))] = (1.0 - params.rho_prime[i]) * gamma_c;
            sigma[(at(C2, i), at(C2, i))] = -params.gamma_rc();
        }
        Ok(Self {
            transmission: t,
            transition: sigma,
        })
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        &self.transmission + &self.transition
    }

    /// `-T Σ^-1`, computed by solving `Σ^T X^T = -T^T` rather than inverting.
    pub fn next_generation(&self) -> Result<DMatrix<f64>> {
        let lu = self.transition.transpose().lu();
        let rhs = -self.transmission.transpose();
        let xt = lu.solve(&rhs).ok_or_else(|| Error::Numeric {
            message: "transition matrix is singular".into(),
            residual: f64::NAN,
        })?;
        Ok(xt.transpose())
    }
}

/// Next-generation matrix at the disease-free state (`S_i = N_i`).
pub fn build_next_generation_matrix(
    params: &EpidemicParameters,
    c: &ContactMatrix,
    census: &PopulationCensus,
) -> Result<DMatrix<f64>> {
    InfectionSubsystemMatrices::new(params, c, census, &census.0)?.next_generation()
}

/// Power iteration from a positive start vector. Only meaningful for
/// matrices whose dominant eigenvalue is real, nonnegative and unique in
/// modulus; fails with the last residual otherwise.
pub fn power_iteration(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let y = m * &x;
        let lambda = y.norm();
        if lambda == 0.0 {
            return Ok(0.0);
        }
        residual = (&y - lambda * &x).norm() / lambda;
        x = y / lambda;
        if residual <= tol {
            return Ok(lambda);
        }
    }
    Err(Error::Numeric {
        message: format!("power iteration did not converge in {max_iter} iterations"),
        residual,
    })
}

/// Largest eigenvalue modulus.
///
/// Nonnegative matrices go through power iteration; anything else, or a
/// power iteration that stalls, falls back to a dense Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::structural(format!(
            "spectral radius of non-square {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("matrix has non-finite entries"));
    }
    if m.iter().all(|v| *v >= 0.0) {
        if let Ok(r) = power_iteration(m, POWER_TOLERANCE, POWER_MAX_ITERATIONS) {
            return Ok(r);
        }
    }
    dense_spectral_radius(m)
}

fn dense_spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or(
        Error::Numeric {
            message: "dense eigensolver did not converge".into(),
            residual: f64::NAN,
        },
    )?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Basic reproduction number for one contact matrix.
pub fn reproduction_number(
    params: &EpidemicParameters,
    c: &ContactMatrix,
    census: &PopulationCensus,
) -> Result<f64> {
    spectral_radius(&build_next_generation_matrix(params, c, census)?)
}

/// Which susceptible population the next-generation matrix uses.
#[derive(Debug, Clone, Copy)]
pub enum ReproductionMode<'a> {
    /// `S_i = N_i` every day.
    Basic,
    /// `S_i(t)` read from a trajectory; days outside it are an error.
    Effective(&'a Trajectory),
}

/// R for every day of `days`, with `matrix_for_day` giving that day's
/// contact matrix.
pub fn r_trajectory<F>(
    params: &EpidemicParameters,
    census: &PopulationCensus,
    days: std::ops::Range<usize>,
    mode: ReproductionMode<'_>,
    mut matrix_for_day: F,
) -> Result<Vec<(usize, f64)>>
where
    F: FnMut(usize) -> Result<ContactMatrix>,
{
    let mut out = Vec::with_capacity(days.len());
    for day in days {
        let c = matrix_for_day(day)?;
        let s = match mode {
            ReproductionMode::Basic => census.0,
            ReproductionMode::Effective(traj) => traj
                .at(day)
                .map(|st: &CompartmentState| st.s)
                .ok_or_else(|| Error::validation(format!("trajectory does not cover day {day}")))?,
        };
        let k = InfectionSubsystemMatrices::new(params, &c, census, &s)?.next_generation()?;
        out.push((day, spectral_radius(&k)?));
    }
    Ok(out)
}
