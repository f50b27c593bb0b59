use super::{CompartmentState, ContactMatrix, EpidemicParameters, PopulationCensus, AGE_GROUPS};
use crate::error::{Error, Result};

/// Share of the initially infected assigned to each age group.
pub const SEED_SPLIT: [f64; AGE_GROUPS] = [0.1, 0.4, 0.35, 0.1, 0.05];

/// `beta * C[i][j] / N[j]`, precomputed for one contact matrix so the
/// right-hand side is a single 5x5 mat-vec.
#[derive(Debug, Clone, Copy)]
pub struct TransmissionKernel([[f64; AGE_GROUPS]; AGE_GROUPS]);

impl TransmissionKernel {
    pub fn new(beta: f64, c: &ContactMatrix, census: &PopulationCensus) -> Result<Self> {
        census.validate()?;
        let mut k = [[0.0; AGE_GROUPS]; AGE_GROUPS];
        for (i, row) in k.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = beta * c.0[i][j] / census.0[j];
            }
        }
        Ok(Self(k))
    }
}

/// Rates of the eight compartments for a fixed transmission kernel.
pub fn rates(
    state: &CompartmentState,
    params: &EpidemicParameters,
    kernel: &TransmissionKernel,
) -> CompartmentState {
    let kappa = params.kappa();
    let gamma_c = params.gamma_c();
    let gamma_r = params.gamma_r();
    let gamma_rc = params.gamma_rc();
    let nu = params.nu();

    let mut infectious = [0.0; AGE_GROUPS];
    for (j, v) in infectious.iter_mut().enumerate() {
        *v = state.i_sc1[j] + state.i_sc2[j];
    }

    let mut out = CompartmentState::default();
    for i in 0..AGE_GROUPS {
        let pressure: f64 = kernel.0[i]
            .iter()
            .zip(&infectious)
            .map(|(k, inf)| k * inf)
            .sum();
        let infections = state.s[i] * pressure;
        let onset = kappa * state.e[i];
        let to_clinic = gamma_c * state.i_sc1[i];
        let recover_sc = gamma_r * state.i_sc2[i];
        let die = nu * state.i_c1[i];
        let recover_c = gamma_rc * state.i_c2[i];

        out.s[i] = -infections;
        out.e[i] = infections - onset;
        out.i_sc1[i] = params.rho[i] * onset - to_clinic;
        out.i_sc2[i] = (1.0 - params.rho[i]) * onset - recover_sc;
        out.i_c1[i] = params.rho_prime[i] * to_clinic - die;
        out.i_c2[i] = (1.0 - params.rho_prime[i]) * to_clinic - recover_c;
        out.r[i] = recover_c + recover_sc;
        out.d[i] = die;
    }
    out
}

/// Right-hand side of the SEI4RD system for contact matrix `c`.
pub fn derivative(
    state: &CompartmentState,
    params: &EpidemicParameters,
    c: &ContactMatrix,
    census: &PopulationCensus,
) -> Result<CompartmentState> {
    let kernel = TransmissionKernel::new(params.beta, c, census)?;
    Ok(rates(state, params, &kernel))
}

/// One classical fourth-order Runge-Kutta step of size `dt` from time `t`.
pub fn rk4_step<F>(state: &CompartmentState, t: f64, dt: f64, mut field: F) -> CompartmentState
where
    F: FnMut(f64, &CompartmentState) -> CompartmentState,
{
    let k1 = field(t, state);
    let k2 = field(t + 0.5 * dt, &state.add_scaled(&k1, 0.5 * dt));
    let k3 = field(t + 0.5 * dt, &state.add_scaled(&k2, 0.5 * dt));
    let k4 = field(t + dt, &state.add_scaled(&k3, dt));
    let mut out = *state;
    out = out.add_scaled(&k1, dt / 6.0);
    out = out.add_scaled(&k2, dt / 3.0);
    out = out.add_scaled(&k3, dt / 3.0);
    out.add_scaled(&k4, dt / 6.0)
}

/// Seeds `N_in` infected people (rounded to a whole count) across groups and
/// into E, I^SC1 and I^SC2; everyone else is susceptible.
pub fn initialize_state(
    params: &EpidemicParameters,
    census: &PopulationCensus,
) -> Result<CompartmentState> {
    census.validate()?;
    if !params.n_in.is_finite() || params.n_in < 0.0 {
        return Err(Error::validation(format!("N_in = {} invalid", params.n_in)));
    }
    let n_in = params.n_in.round();
    let mut state = CompartmentState::default();
    for i in 0..AGE_GROUPS {
        let seeded = SEED_SPLIT[i] * n_in;
        state.e[i] = seeded / 3.0;
        state.i_sc1[i] = params.rho[i] * seeded * 2.0 / 3.0;
        state.i_sc2[i] = (1.0 - params.rho[i]) * seeded * 2.0 / 3.0;
        let s = census.0[i] - (state.e[i] + state.i_sc1[i] + state.i_sc2[i]);
        if s < 0.0 {
            return Err(Error::validation(format!(
                "seeding {seeded} infected exceeds population {} of group {}",
                census.0[i],
                i + 1
            )));
        }
        state.s[i] = s;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn census() -> PopulationCensus {
        PopulationCensus([1.0e6, 2.0e6, 1.5e6, 1.0e6, 0.4e6])
    }

    fn contacts() -> ContactMatrix {
        let mut m = [[0.0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = 1.0 + ((i * 3 + j * 7) % 5) as f64;
            }
        }
        ContactMatrix(m)
    }

    fn infected_state() -> CompartmentState {
        let p = EpidemicParameters::england_may_posterior_mean();
        let mut s = initialize_state(&p, &census()).unwrap();
        s.i_c1 = [3.0, 4.0, 5.0, 6.0, 7.0];
        s.i_c2 = [1.0, 2.0, 3.0, 4.0, 5.0];
        s
    }

    #[test]
    fn disease_free_rates_vanish() {
        let p = EpidemicParameters::england_may_posterior_mean();
        let s = CompartmentState {
            s: census().0,
            ..Default::default()
        };
        let r = derivative(&s, &p, &contacts(), &census()).unwrap();
        assert!(r.to_flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn no_transmission_when_beta_zero() {
        let mut p = EpidemicParameters::england_may_posterior_mean();
        p.beta = 0.0;
        let s = infected_state();
        let r = derivative(&s, &p, &contacts(), &census()).unwrap();
        for i in 0..5 {
            assert_eq!(r.s[i], 0.0);
            assert!((r.e[i] + p.kappa() * s.e[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rates_sum_to_zero() {
        let p = EpidemicParameters::england_may_posterior_mean();
        let r = derivative(&infected_state(), &p, &contacts(), &census()).unwrap();
        let per_group = r.group_totals();
        for v in per_group {
            assert!(v.abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn zero_population_is_structural() {
        let p = EpidemicParameters::england_may_posterior_mean();
        let bad = PopulationCensus([1.0, 0.0, 1.0, 1.0, 1.0]);
        let err = derivative(&infected_state(), &p, &contacts(), &bad).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn rk4_zero_field_is_identity() {
        let s = infected_state();
        let out = rk4_step(&s, 0.0, 0.1, |_, _| CompartmentState::default());
        assert_eq!(out, s);
    }

    #[test]
    fn rk4_exponential_decay() {
        // Only dE/dt = -kappa E is active.
        let kappa = 0.5;
        let s = CompartmentState {
            e: [100.0, 0.0, 0.0, 0.0, 0.0],
            ..Default::default()
        };
        let out = rk4_step(&s, 0.0, 0.1, |_, x| CompartmentState {
            e: x.e.map(|v| -kappa * v),
            ..Default::default()
        });
        let exact = 100.0 * (-0.05f64).exp();
        assert!((out.e[0] - exact).abs() / exact < 1e-6);
        assert!((out.e[0] - 95.1229).abs() < 1e-4);
    }

    #[test]
    fn seeding_split() {
        let mut p = EpidemicParameters::england_may_posterior_mean();
        p.n_in = 300.0;
        p.rho[1] = 0.05;
        let s = initialize_state(&p, &census()).unwrap();
        let seeds: Vec<f64> = (0..5).map(|i| s.e[i] + s.i_sc1[i] + s.i_sc2[i]).collect();
        let expected = [30.0, 120.0, 105.0, 30.0, 15.0];
        for (a, b) in seeds.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((s.e[1] - 40.0).abs() < 1e-12);
        assert!((s.i_sc1[1] - 4.0).abs() < 1e-12);
        assert!((s.i_sc2[1] - 76.0).abs() < 1e-12);
        for (tot, n) in s.group_totals().iter().zip(census().0) {
            assert!((tot - n).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_seed_is_fully_susceptible() {
        let mut p = EpidemicParameters::england_may_posterior_mean();
        p.n_in = 0.0;
        let s = initialize_state(&p, &census()).unwrap();
        assert_eq!(s.s, census().0);
        assert_eq!(s.total(), census().total());
    }

    #[test]
    fn oversized_seed_rejected() {
        let mut p = EpidemicParameters::england_may_posterior_mean();
        p.n_in = 1000.0;
        let tiny = PopulationCensus([10.0, 10.0, 10.0, 10.0, 10.0]);
        assert!(matches!(
            initialize_state(&p, &tiny),
            Err(Error::Validation(_))
        ));
    }
}
